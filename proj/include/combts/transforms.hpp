#pragma once

#include "combts/ops.hpp"

#include <cmath>
#include <string>
#include <utility>
#include <vector>

namespace combts {

// ---------------------------------------------------------------------------
// RevIN
// ---------------------------------------------------------------------------

/// Per-(batch, variate) lookback statistics kept for inversion.
struct RevinState {
    Tensor4 mean; // (B, N, 1, 1)
    Tensor4 std;  // (B, N, 1, 1), sqrt(var + eps)
    double eps = 1e-5;
};

/// Normalize each (b, n) lookback window: (x - mean) / sqrt(var + eps).
inline std::pair<Tensor4, RevinState> revin_forward(const Tensor4& x, double eps = 1e-5) {
    const Shape s = x.shape();
    if (s.l == 0) {
        throw DimensionError("revin_forward: empty lookback");
    }
    RevinState st{Tensor4(Shape{s.b, s.c, 1, 1}), Tensor4(Shape{s.b, s.c, 1, 1}), eps};
    Tensor4 y(s);
    const auto T = static_cast<double>(s.l);
    for (std::size_t b = 0; b < s.b; ++b) {
        for (std::size_t n = 0; n < s.c; ++n) {
            double m = 0.0;
            for (std::size_t t = 0; t < s.l; ++t) {
                for (std::size_t d = 0; d < s.d; ++d) {
                    m += x.at(b, n, t, d);
                }
            }
            m /= T * static_cast<double>(s.d);
            double v = 0.0;
            for (std::size_t t = 0; t < s.l; ++t) {
                for (std::size_t d = 0; d < s.d; ++d) {
                    const double e = x.at(b, n, t, d) - m;
                    v += e * e;
                }
            }
            v /= T * static_cast<double>(s.d);
            const double sd = std::sqrt(v + eps);
            st.mean.at(b, n, 0, 0) = m;
            st.std.at(b, n, 0, 0) = sd;
            for (std::size_t t = 0; t < s.l; ++t) {
                for (std::size_t d = 0; d < s.d; ++d) {
                    y.at(b, n, t, d) = (x.at(b, n, t, d) - m) / sd;
                }
            }
        }
    }
    return {std::move(y), std::move(st)};
}

namespace detail {
inline void check_revin_state(const Shape& y, const RevinState& st) {
    if (st.mean.shape().b != y.b || st.mean.shape().c != y.c) {
        throw DimensionError("revin_invert: prediction " + y.str() + " does not match stored statistics " +
                             st.mean.shape().str());
    }
}
} // namespace detail

/// y * std + mean per (b, n). Differentiable in y.
inline Var revin_invert(const Var& y, const RevinState& st) {
    detail::check_revin_state(y->shape(), st);
    return add(mul(y, constant(st.std)), constant(st.mean));
}

inline Tensor4 revin_invert(const Tensor4& y, const RevinState& st) {
    return revin_invert(constant(y), st)->value;
}

// ---------------------------------------------------------------------------
// Trend-seasonal decomposition
// ---------------------------------------------------------------------------

/// T x T operator of a centered moving average with edge-replicate padding.
inline Tensor4 moving_average_matrix(std::size_t T, std::size_t kernel) {
    if (kernel == 0 || kernel % 2 == 0) {
        throw ParameterError("moving-average kernel must be odd, got " + std::to_string(kernel));
    }
    if (kernel > 2 * T - 1) {
        throw ParameterError("moving-average kernel " + std::to_string(kernel) + " exceeds 2T-1 for T = " +
                             std::to_string(T));
    }
    Tensor4 m(Shape{1, 1, T, T});
    const auto half = static_cast<std::ptrdiff_t>(kernel / 2);
    const double w = 1.0 / static_cast<double>(kernel);
    const auto last = static_cast<std::ptrdiff_t>(T) - 1;
    for (std::size_t t = 0; t < T; ++t) {
        for (std::ptrdiff_t j = -half; j <= half; ++j) {
            const auto src = std::clamp(static_cast<std::ptrdiff_t>(t) + j, std::ptrdiff_t{0}, last);
            m.at(0, 0, t, static_cast<std::size_t>(src)) += w;
        }
    }
    return m;
}

struct DecompositionOutput {
    Tensor4 trend;
    Tensor4 seasonal;
};

struct DecompositionVars {
    Var trend;
    Var seasonal;
};

/// Moving-average trend along the token axis; seasonal = x - trend.
inline DecompositionVars trend_seasonal(const Var& x, std::size_t kernel) {
    const Var op = constant(moving_average_matrix(x->shape().l, kernel));
    Var trend = matmul(op, x);
    Var seasonal = sub(x, trend);
    return {std::move(trend), std::move(seasonal)};
}

inline DecompositionOutput trend_seasonal(const Tensor4& x, std::size_t kernel) {
    auto r = trend_seasonal(constant(x), kernel);
    return {r.trend->value, r.seasonal->value};
}

// ---------------------------------------------------------------------------
// Multi-scale downsampling
// ---------------------------------------------------------------------------

/// Averaging operator (1,1,T/f,T). When T is not a multiple of f the oldest
/// T mod f steps are dropped so pooling stays aligned with the most recent
/// observation.
inline Tensor4 avg_pool_matrix(std::size_t T, std::size_t factor) {
    const std::size_t out = T / factor;
    const std::size_t offset = T - out * factor;
    Tensor4 m(Shape{1, 1, out, T});
    const double w = 1.0 / static_cast<double>(factor);
    for (std::size_t o = 0; o < out; ++o) {
        for (std::size_t j = 0; j < factor; ++j) {
            m.at(0, 0, o, offset + o * factor + j) = w;
        }
    }
    return m;
}

/// Token lengths of each scale, scale 0 first.
inline std::vector<std::size_t> multiscale_lengths(std::size_t T, std::size_t levels, std::size_t factor) {
    if (factor < 2) {
        throw ParameterError("downsampling factor must be >= 2, got " + std::to_string(factor));
    }
    std::vector<std::size_t> lens{T};
    for (std::size_t i = 0; i < levels; ++i) {
        const std::size_t next = lens.back() / factor;
        if (next == 0) {
            throw ParameterError("downsampling T = " + std::to_string(T) + " by " + std::to_string(factor) +
                                 " over " + std::to_string(levels) + " levels leaves an empty scale");
        }
        lens.push_back(next);
    }
    return lens;
}

/// Non-overlapping average pooling along the token axis, levels + 1 outputs.
inline std::vector<Var> multiscale_downsample(const Var& x, std::size_t levels, std::size_t factor) {
    const auto lens = multiscale_lengths(x->shape().l, levels, factor);
    std::vector<Var> scales{x};
    for (std::size_t i = 1; i < lens.size(); ++i) {
        scales.push_back(matmul(constant(avg_pool_matrix(lens[i - 1], factor)), scales.back()));
    }
    return scales;
}

inline std::vector<Tensor4> multiscale_downsample(const Tensor4& x, std::size_t levels, std::size_t factor) {
    std::vector<Tensor4> out;
    for (const auto& v : multiscale_downsample(constant(x), levels, factor)) {
        out.push_back(v->value);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Residual cycle
// ---------------------------------------------------------------------------

/// Learnable periodic pattern Q of shape (1, 1, W, N), indexed by absolute
/// time modulo W.
struct CycleBuffer {
    Var q;
    std::size_t cycle_len = 0;

    static CycleBuffer zeros(std::size_t cycle_len, std::size_t variates) {
        if (cycle_len == 0) {
            throw ParameterError("cycle length must be >= 1");
        }
        return {parameter(Tensor4(Shape{1, 1, cycle_len, variates})), cycle_len};
    }
};

constexpr std::size_t cycle_phase(std::size_t t, std::size_t cycle_len) noexcept { return t % cycle_len; }

/// out[b, n, t] = Q[(starts[b] + offset + t) mod W, n], shape (B, N, len, 1).
inline Var cycle_gather(const CycleBuffer& buf, const std::vector<std::size_t>& starts, std::size_t offset,
                        std::size_t len) {
    const Shape qs = buf.q->shape();
    const std::size_t W = buf.cycle_len;
    const std::size_t N = qs.d;
    const std::size_t B = starts.size();
    Tensor4 y(Shape{B, N, len, 1});
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t n = 0; n < N; ++n) {
            for (std::size_t t = 0; t < len; ++t) {
                y.at(b, n, t, 0) = buf.q->value.at(0, 0, cycle_phase(starts[b] + offset + t, W), n);
            }
        }
    }
    return make_node(std::move(y), {buf.q}, [starts, offset, len, W, N](Node& node) {
        auto& g = node.parents[0]->ensure_grad();
        for (std::size_t b = 0; b < starts.size(); ++b) {
            for (std::size_t n = 0; n < N; ++n) {
                for (std::size_t t = 0; t < len; ++t) {
                    g.at(0, 0, cycle_phase(starts[b] + offset + t, W), n) += node.grad.at(b, n, t, 0);
                }
            }
        }
    });
}

inline void check_cycle(const Var& x, const CycleBuffer& buf, const std::vector<std::size_t>& starts) {
    if (x->shape().b != starts.size() || x->shape().c != buf.q->shape().d || x->shape().d != 1) {
        throw DimensionError("cycle: input " + x->shape().str() + " does not match " +
                             std::to_string(starts.size()) + " windows of " +
                             std::to_string(buf.q->shape().d) + " variates");
    }
}

/// Residual after removing the cycle: x[b,n,t] - Q[(t0+t) mod W, n].
inline Var cycle_forward(const Var& x, const CycleBuffer& buf, const std::vector<std::size_t>& starts) {
    check_cycle(x, buf, starts);
    return sub(x, cycle_gather(buf, starts, 0, x->shape().l));
}

/// Add back the cycle over the horizon that begins `lookback` steps after each start.
inline Var cycle_invert(const Var& y_res, const CycleBuffer& buf, const std::vector<std::size_t>& starts,
                        std::size_t lookback) {
    check_cycle(y_res, buf, starts);
    return add(y_res, cycle_gather(buf, starts, lookback, y_res->shape().l));
}

} // namespace combts
