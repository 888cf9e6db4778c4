#pragma once

#include "combts/autodiff.hpp"
#include "combts/rng.hpp"

#include <array>
#include <cmath>
#include <numbers>

namespace combts {

namespace detail {

inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    auto da = a.dims();
    auto db = b.dims();
    std::array<std::size_t, 4> out{};
    for (int i = 0; i < 4; ++i) {
        if (da[i] == db[i] || db[i] == 1) {
            out[i] = da[i];
        } else if (da[i] == 1) {
            out[i] = db[i];
        } else {
            throw DimensionError(std::string(op) + ": shapes " + a.str() + " and " + b.str() +
                                 " are not broadcast-compatible");
        }
    }
    return Shape::from(out);
}

/// Element strides of `s` when read as if it had extents `out` (0 on broadcast axes).
inline std::array<std::size_t, 4> broadcast_strides(const Shape& s, const Shape& out) {
    auto d = s.dims();
    auto o = out.dims();
    std::array<std::size_t, 4> st{d[1] * d[2] * d[3], d[2] * d[3], d[3], 1};
    for (int i = 0; i < 4; ++i) {
        if (d[i] == 1 && o[i] != 1) {
            st[i] = 0;
        }
    }
    return st;
}

/// Visit every output index with the matching offsets into two broadcast inputs.
template <class F>
void for_each_broadcast(const Shape& out, const std::array<std::size_t, 4>& sa,
                        const std::array<std::size_t, 4>& sb, F&& f) {
    std::size_t oi = 0;
    for (std::size_t i0 = 0; i0 < out.b; ++i0) {
        for (std::size_t i1 = 0; i1 < out.c; ++i1) {
            for (std::size_t i2 = 0; i2 < out.l; ++i2) {
                std::size_t ai = i0 * sa[0] + i1 * sa[1] + i2 * sa[2];
                std::size_t bi = i0 * sb[0] + i1 * sb[1] + i2 * sb[2];
                for (std::size_t i3 = 0; i3 < out.d; ++i3, ++oi, ai += sa[3], bi += sb[3]) {
                    f(oi, ai, bi);
                }
            }
        }
    }
}

/// Shared driver for elementwise binary ops. `fwd(a, b)` gives the value and
/// `bwd(a, b, g, ga, gb)` accumulates local gradients.
template <class Fwd, class Bwd>
Var binary_op(const Var& a, const Var& b, const char* name, Fwd fwd, Bwd bwd) {
    const Shape out = broadcast_shape(a->shape(), b->shape(), name);
    const auto sa = broadcast_strides(a->shape(), out);
    const auto sb = broadcast_strides(b->shape(), out);
    Tensor4 y(out);
    const auto& av = a->value;
    const auto& bv = b->value;
    for_each_broadcast(out, sa, sb,
                       [&](std::size_t o, std::size_t i, std::size_t j) { y[o] = fwd(av[i], bv[j]); });
    return make_node(std::move(y), {a, b}, [out, sa, sb, bwd](Node& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        Tensor4* ga = pa.requires_grad ? &pa.ensure_grad() : nullptr;
        Tensor4* gb = pb.requires_grad ? &pb.ensure_grad() : nullptr;
        const auto& va = pa.value;
        const auto& vb = pb.value;
        for_each_broadcast(out, sa, sb, [&](std::size_t o, std::size_t i, std::size_t j) {
            double da = 0.0;
            double db = 0.0;
            bwd(va[i], vb[j], n.grad[o], da, db);
            if (ga) {
                (*ga)[i] += da;
            }
            if (gb) {
                (*gb)[j] += db;
            }
        });
    });
}

inline void accumulate(Node& parent, const Tensor4& g) {
    if (!parent.requires_grad) {
        return;
    }
    auto& pg = parent.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
        pg[i] += g[i];
    }
}

} // namespace detail

inline Var add(const Var& a, const Var& b) {
    return detail::binary_op(
        a, b, "add", [](double x, double y) { return x + y; },
        [](double, double, double g, double& da, double& db) {
            da = g;
            db = g;
        });
}

inline Var sub(const Var& a, const Var& b) {
    return detail::binary_op(
        a, b, "sub", [](double x, double y) { return x - y; },
        [](double, double, double g, double& da, double& db) {
            da = g;
            db = -g;
        });
}

inline Var mul(const Var& a, const Var& b) {
    return detail::binary_op(
        a, b, "mul", [](double x, double y) { return x * y; },
        [](double x, double y, double g, double& da, double& db) {
            da = g * y;
            db = g * x;
        });
}

inline Var div(const Var& a, const Var& b) {
    return detail::binary_op(
        a, b, "div", [](double x, double y) { return x / y; },
        [](double x, double y, double g, double& da, double& db) {
            da = g / y;
            db = -g * x / (y * y);
        });
}

inline Var scale(const Var& x, double s) {
    Tensor4 y = x->value;
    for (auto& v : y.vec()) {
        v *= s;
    }
    return make_node(std::move(y), {x}, [s](Node& n) {
        auto& g = n.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += s * n.grad[i];
        }
    });
}

/// Batched matrix product over the trailing two axes; the two leading axes
/// broadcast. (…, m, k) x (…, k, n) -> (…, m, n).
inline Var matmul(const Var& a, const Var& b) {
    const Shape sa = a->shape();
    const Shape sb = b->shape();
    auto bad = [&] {
        return DimensionError("matmul: shapes " + sa.str() + " and " + sb.str() + " are incompatible");
    };
    if (sa.d != sb.l) {
        throw bad();
    }
    const auto lead = [&](std::size_t x, std::size_t y) {
        if (x == y || y == 1) {
            return x;
        }
        if (x == 1) {
            return y;
        }
        throw bad();
    };
    const std::size_t B = lead(sa.b, sb.b);
    const std::size_t C = lead(sa.c, sb.c);
    const std::size_t m = sa.l;
    const std::size_t k = sa.d;
    const std::size_t n = sb.d;
    const Shape out{B, C, m, n};
    Tensor4 y(out);
    auto offset_a = [sa, m, k](std::size_t bi, std::size_t ci) {
        return ((sa.b == 1 ? 0 : bi) * sa.c + (sa.c == 1 ? 0 : ci)) * m * k;
    };
    auto offset_b = [sb, k, n](std::size_t bi, std::size_t ci) {
        return ((sb.b == 1 ? 0 : bi) * sb.c + (sb.c == 1 ? 0 : ci)) * k * n;
    };
    {
        const double* av = a->value.data().data();
        const double* bv = b->value.data().data();
        double* yv = y.data().data();
        for (std::size_t bi = 0; bi < B; ++bi) {
            for (std::size_t ci = 0; ci < C; ++ci) {
                const double* A = av + offset_a(bi, ci);
                const double* Bm = bv + offset_b(bi, ci);
                double* Y = yv + (bi * C + ci) * m * n;
                for (std::size_t i = 0; i < m; ++i) {
                    double* yrow = Y + i * n;
                    for (std::size_t p = 0; p < k; ++p) {
                        const double aip = A[i * k + p];
                        const double* brow = Bm + p * n;
                        for (std::size_t j = 0; j < n; ++j) {
                            yrow[j] += aip * brow[j];
                        }
                    }
                }
            }
        }
    }
    return make_node(std::move(y), {a, b}, [B, C, m, k, n, offset_a, offset_b](Node& node) {
        auto& pa = *node.parents[0];
        auto& pb = *node.parents[1];
        const double* av = pa.value.data().data();
        const double* bv = pb.value.data().data();
        double* ga = pa.requires_grad ? pa.ensure_grad().data().data() : nullptr;
        double* gb = pb.requires_grad ? pb.ensure_grad().data().data() : nullptr;
        const double* gy = node.grad.data().data();
        for (std::size_t bi = 0; bi < B; ++bi) {
            for (std::size_t ci = 0; ci < C; ++ci) {
                const double* G = gy + (bi * C + ci) * m * n;
                const std::size_t oa = offset_a(bi, ci);
                const std::size_t ob = offset_b(bi, ci);
                if (ga) {
                    // dA = dY * B^T
                    for (std::size_t i = 0; i < m; ++i) {
                        for (std::size_t p = 0; p < k; ++p) {
                            double s = 0.0;
                            const double* brow = bv + ob + p * n;
                            const double* grow = G + i * n;
                            for (std::size_t j = 0; j < n; ++j) {
                                s += grow[j] * brow[j];
                            }
                            ga[oa + i * k + p] += s;
                        }
                    }
                }
                if (gb) {
                    // dB = A^T * dY
                    for (std::size_t i = 0; i < m; ++i) {
                        const double* grow = G + i * n;
                        for (std::size_t p = 0; p < k; ++p) {
                            const double aip = av[oa + i * k + p];
                            double* gbrow = gb + ob + p * n;
                            for (std::size_t j = 0; j < n; ++j) {
                                gbrow[j] += aip * grow[j];
                            }
                        }
                    }
                }
            }
        }
    });
}

/// Reorder axes: output axis i is input axis perm[i].
inline Tensor4 permute(const Tensor4& x, const std::array<int, 4>& perm) {
    const auto in = x.shape().dims();
    std::array<std::size_t, 4> od{};
    for (int i = 0; i < 4; ++i) {
        od[i] = in[static_cast<std::size_t>(perm[i])];
    }
    const std::array<std::size_t, 4> ist{in[1] * in[2] * in[3], in[2] * in[3], in[3], 1};
    std::array<std::size_t, 4> st{};
    for (int i = 0; i < 4; ++i) {
        st[i] = ist[static_cast<std::size_t>(perm[i])];
    }
    Tensor4 y(Shape::from(od));
    std::size_t o = 0;
    for (std::size_t i0 = 0; i0 < od[0]; ++i0) {
        for (std::size_t i1 = 0; i1 < od[1]; ++i1) {
            for (std::size_t i2 = 0; i2 < od[2]; ++i2) {
                std::size_t base = i0 * st[0] + i1 * st[1] + i2 * st[2];
                for (std::size_t i3 = 0; i3 < od[3]; ++i3, ++o) {
                    y[o] = x[base + i3 * st[3]];
                }
            }
        }
    }
    return y;
}

inline std::array<int, 4> inverse_perm(const std::array<int, 4>& perm) {
    std::array<int, 4> inv{};
    for (int i = 0; i < 4; ++i) {
        inv[static_cast<std::size_t>(perm[i])] = i;
    }
    return inv;
}

inline Var permute(const Var& x, const std::array<int, 4>& perm) {
    return make_node(permute(x->value, perm), {x}, [perm](Node& n) {
        detail::accumulate(*n.parents[0], permute(n.grad, inverse_perm(perm)));
    });
}

inline Var reshape(const Var& x, Shape s) {
    return make_node(x->value.reshaped(s), {x}, [](Node& n) {
        auto& p = *n.parents[0];
        detail::accumulate(p, n.grad.reshaped(p.shape()));
    });
}

/// Exact GELU: x * Phi(x).
inline Var gelu(const Var& x) {
    Tensor4 y = x->value;
    for (auto& v : y.vec()) {
        v = 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2));
    }
    return make_node(std::move(y), {x}, [](Node& n) {
        auto& p = *n.parents[0];
        auto& g = p.ensure_grad();
        constexpr double inv_sqrt_2pi = 0.3989422804014327;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double v = p.value[i];
            const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
            g[i] += n.grad[i] * (cdf + v * pdf);
        }
    });
}

namespace detail {

/// Iterate over all 1-D slices along `axis`, giving (base offset, stride, length).
template <class F>
void for_each_slice(const Shape& s, int axis, F&& f) {
    const auto d = s.dims();
    const std::array<std::size_t, 4> st{d[1] * d[2] * d[3], d[2] * d[3], d[3], 1};
    const auto ax = static_cast<std::size_t>(axis);
    std::array<std::size_t, 4> idx{};
    const std::size_t len = d[ax];
    const std::size_t stride = st[ax];
    for (idx[0] = 0; idx[0] < (ax == 0 ? 1 : d[0]); ++idx[0]) {
        for (idx[1] = 0; idx[1] < (ax == 1 ? 1 : d[1]); ++idx[1]) {
            for (idx[2] = 0; idx[2] < (ax == 2 ? 1 : d[2]); ++idx[2]) {
                for (idx[3] = 0; idx[3] < (ax == 3 ? 1 : d[3]); ++idx[3]) {
                    const std::size_t base = idx[0] * st[0] + idx[1] * st[1] + idx[2] * st[2] + idx[3];
                    f(base, stride, len);
                }
            }
        }
    }
}

inline void check_axis(int axis) {
    if (axis < 0 || axis > 3) {
        throw ParameterError("axis must be in [0, 3], got " + std::to_string(axis));
    }
}

} // namespace detail

/// Numerically stable softmax along `axis` (max subtracted per slice).
inline Var softmax(const Var& x, int axis) {
    detail::check_axis(axis);
    Tensor4 y(x->shape());
    const auto& xv = x->value;
    detail::for_each_slice(x->shape(), axis, [&](std::size_t base, std::size_t st, std::size_t len) {
        double mx = xv[base];
        for (std::size_t i = 1; i < len; ++i) {
            mx = std::max(mx, xv[base + i * st]);
        }
        double sum = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
            const double e = std::exp(xv[base + i * st] - mx);
            y[base + i * st] = e;
            sum += e;
        }
        for (std::size_t i = 0; i < len; ++i) {
            y[base + i * st] /= sum;
        }
    });
    return make_node(std::move(y), {x}, [axis](Node& n) {
        auto& g = n.parents[0]->ensure_grad();
        const auto& yv = n.value;
        detail::for_each_slice(n.shape(), axis, [&](std::size_t base, std::size_t st, std::size_t len) {
            double dot = 0.0;
            for (std::size_t i = 0; i < len; ++i) {
                dot += n.grad[base + i * st] * yv[base + i * st];
            }
            for (std::size_t i = 0; i < len; ++i) {
                const std::size_t k = base + i * st;
                g[k] += yv[k] * (n.grad[k] - dot);
            }
        });
    });
}

/// Normalize each (b, c, l) feature vector to zero mean / unit variance, then
/// apply the per-feature affine `gamma`, `beta` of shape (1,1,1,D).
inline Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5) {
    const Shape s = x->shape();
    const Shape ps{1, 1, 1, s.d};
    if (!(gamma->shape() == ps) || !(beta->shape() == ps)) {
        throw DimensionError("layer_norm: gamma/beta must be " + ps.str() + ", input " + s.str());
    }
    const std::size_t rows = s.b * s.c * s.l;
    const std::size_t D = s.d;
    Tensor4 xhat(s);
    std::vector<double> inv_std(rows);
    Tensor4 y(s);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x->value.data().data() + r * D;
        double mean = 0.0;
        for (std::size_t j = 0; j < D; ++j) {
            mean += xr[j];
        }
        mean /= static_cast<double>(D);
        double var = 0.0;
        for (std::size_t j = 0; j < D; ++j) {
            var += (xr[j] - mean) * (xr[j] - mean);
        }
        var /= static_cast<double>(D);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < D; ++j) {
            const double h = (xr[j] - mean) * inv_std[r];
            xhat[r * D + j] = h;
            y[r * D + j] = h * gamma->value[j] + beta->value[j];
        }
    }
    return make_node(std::move(y), {x, gamma, beta},
                     [xhat = std::move(xhat), inv_std = std::move(inv_std), rows, D](Node& n) {
                         auto& px = *n.parents[0];
                         auto& pg = *n.parents[1];
                         auto& pb = *n.parents[2];
                         for (std::size_t r = 0; r < rows; ++r) {
                             const double* g = n.grad.data().data() + r * D;
                             const double* h = xhat.data().data() + r * D;
                             if (pg.requires_grad || pb.requires_grad) {
                                 auto& gg = pg.ensure_grad();
                                 auto& gb = pb.ensure_grad();
                                 for (std::size_t j = 0; j < D; ++j) {
                                     gg[j] += g[j] * h[j];
                                     gb[j] += g[j];
                                 }
                             }
                             if (px.requires_grad) {
                                 auto& gx = px.ensure_grad();
                                 double s1 = 0.0;
                                 double s2 = 0.0;
                                 for (std::size_t j = 0; j < D; ++j) {
                                     const double gh = g[j] * pg.value[j];
                                     s1 += gh;
                                     s2 += gh * h[j];
                                 }
                                 const double invD = 1.0 / static_cast<double>(D);
                                 for (std::size_t j = 0; j < D; ++j) {
                                     const double gh = g[j] * pg.value[j];
                                     gx[r * D + j] += inv_std[r] * (gh - invD * s1 - h[j] * invD * s2);
                                 }
                             }
                         }
                     });
}

/// Inverted dropout. Identity when not training or p == 0.
inline Var dropout(const Var& x, double p, Rng& rng, bool training) {
    if (!(p >= 0.0 && p < 1.0)) {
        throw ParameterError("dropout probability must lie in [0, 1), got " + std::to_string(p));
    }
    if (!training || p == 0.0) {
        return x;
    }
    Tensor4 mask(x->shape());
    const double keep_scale = 1.0 / (1.0 - p);
    for (auto& m : mask.vec()) {
        m = rng.uniform() < p ? 0.0 : keep_scale;
    }
    return mul(x, constant(std::move(mask)));
}

inline Var sum(const Var& x) {
    double s = 0.0;
    for (double v : x->value.vec()) {
        s += v;
    }
    return make_node(Tensor4::scalar(s), {x}, [](Node& n) {
        auto& g = n.parents[0]->ensure_grad();
        const double up = n.grad[0];
        for (auto& v : g.vec()) {
            v += up;
        }
    });
}

inline Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x->value.size())); }

namespace detail {
inline void require_same(const Shape& a, const Shape& b, const char* what) {
    if (!(a == b)) {
        throw DimensionError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
    }
}
} // namespace detail

/// Mean squared error over all elements.
inline double mse(const Tensor4& pred, const Tensor4& target) {
    detail::require_same(pred.shape(), target.shape(), "mse");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double e = pred[i] - target[i];
        s += e * e;
    }
    return s / static_cast<double>(pred.size());
}

/// Mean absolute error over all elements.
inline double mae(const Tensor4& pred, const Tensor4& target) {
    detail::require_same(pred.shape(), target.shape(), "mae");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        s += std::abs(pred[i] - target[i]);
    }
    return s / static_cast<double>(pred.size());
}

inline Var mse_loss(const Var& pred, const Tensor4& target) {
    detail::require_same(pred->shape(), target.shape(), "mse_loss");
    return make_node(Tensor4::scalar(mse(pred->value, target)), {pred}, [target](Node& n) {
        auto& p = *n.parents[0];
        auto& g = p.ensure_grad();
        const double k = 2.0 * n.grad[0] / static_cast<double>(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += k * (p.value[i] - target[i]);
        }
    });
}

inline Var mae_loss(const Var& pred, const Tensor4& target) {
    detail::require_same(pred->shape(), target.shape(), "mae_loss");
    return make_node(Tensor4::scalar(mae(pred->value, target)), {pred}, [target](Node& n) {
        auto& p = *n.parents[0];
        auto& g = p.ensure_grad();
        const double k = n.grad[0] / static_cast<double>(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double e = p.value[i] - target[i];
            g[i] += k * (e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0));
        }
    });
}

} // namespace combts
