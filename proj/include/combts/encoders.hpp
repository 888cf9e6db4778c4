#pragma once

#include "combts/dft.hpp"
#include "combts/layers.hpp"

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace combts {

enum class EncoderKind { transformer, mlp, identity, spectral };

inline constexpr std::array<EncoderKind, 4> all_encoder_kinds{EncoderKind::transformer, EncoderKind::mlp,
                                                              EncoderKind::identity, EncoderKind::spectral};

inline const char* to_string(EncoderKind k) {
    switch (k) {
    case EncoderKind::transformer: return "transformer";
    case EncoderKind::mlp: return "mlp";
    case EncoderKind::identity: return "identity";
    case EncoderKind::spectral: return "spectral";
    }
    return "?";
}

inline std::optional<EncoderKind> parse_encoder_kind(std::string_view s) {
    for (auto k : all_encoder_kinds) {
        if (s == to_string(k)) {
            return k;
        }
    }
    return std::nullopt;
}

/// Which latent axis carries the tokens that attention / mixing runs over.
enum class TokenAxis { L, C };

inline const char* to_string(TokenAxis a) { return a == TokenAxis::L ? "L" : "C"; }

/// Temporal tokens when there is more than one, else the variate axis.
inline TokenAxis choose_token_axis(const Shape& latent) { return latent.l > 1 ? TokenAxis::L : TokenAxis::C; }

struct EncoderSpec {
    EncoderKind kind = EncoderKind::identity;
    std::size_t layers = 1;
    std::size_t heads = 0; // 0: 8 when D >= 64, else 1
    std::size_t d_ff = 0;  // 0: 2 * D
    double dropout = 0.1;
};

/// Move the token axis to position 2. Swapping C and L is its own inverse.
inline Var tokens_to_l(const Var& z, TokenAxis axis) {
    return axis == TokenAxis::L ? z : permute(z, {0, 2, 1, 3});
}

// ---------------------------------------------------------------------------
// Spectral filter
// ---------------------------------------------------------------------------

/// Real circular filter along axis 2: y = Re(IDFT(H * DFT(x))) with
/// H_k = M_k for k <= n/2 and H_k = conj(M_{n-k}) above, where the multipliers
/// M are (re, im) parameters of shape (1,1,1,n/2+1) shared over other axes.
inline Var spectral_filter(const Var& x, const Var& m_re, const Var& m_im) {
    const Shape s = x->shape();
    const std::size_t n = s.l;
    const std::size_t F = n / 2 + 1;
    if (m_re->shape() != Shape{1, 1, 1, F} || m_im->shape() != Shape{1, 1, 1, F}) {
        throw DimensionError("spectral_filter: multipliers must be (1,1,1," + std::to_string(F) + ") for length " +
                             std::to_string(n));
    }
    auto multiplier = [n, F](const Tensor4& re, const Tensor4& im, std::size_t k) {
        return k < F ? cplx(re[k], im[k]) : std::conj(cplx(re[n - k], im[n - k]));
    };
    auto plan = std::make_shared<DftPlan>(n);
    Tensor4 y(s);
    std::vector<cplx> buf(n);
    std::vector<cplx> spec(n);
    for (std::size_t b = 0; b < s.b; ++b) {
        for (std::size_t c = 0; c < s.c; ++c) {
            for (std::size_t d = 0; d < s.d; ++d) {
                for (std::size_t t = 0; t < n; ++t) {
                    buf[t] = x->value.at(b, c, t, d);
                }
                plan->transform(buf, spec, false);
                for (std::size_t k = 0; k < n; ++k) {
                    spec[k] *= multiplier(m_re->value, m_im->value, k);
                }
                plan->transform(spec, buf, true);
                for (std::size_t t = 0; t < n; ++t) {
                    y.at(b, c, t, d) = buf[t].real();
                }
            }
        }
    }
    return make_node(std::move(y), {x, m_re, m_im}, [plan, multiplier, n, F](Node& node) {
        auto& px = *node.parents[0];
        auto& pre = *node.parents[1];
        auto& pim = *node.parents[2];
        const Shape xs = px.shape();
        std::vector<cplx> xb(n), xf(n), gb(n), gf(n), tmp(n);
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t b = 0; b < xs.b; ++b) {
            for (std::size_t c = 0; c < xs.c; ++c) {
                for (std::size_t d = 0; d < xs.d; ++d) {
                    for (std::size_t t = 0; t < n; ++t) {
                        gb[t] = node.grad.at(b, c, t, d);
                    }
                    plan->transform(gb, gf, false);
                    if (pre.requires_grad || pim.requires_grad) {
                        for (std::size_t t = 0; t < n; ++t) {
                            xb[t] = px.value.at(b, c, t, d);
                        }
                        plan->transform(xb, xf, false);
                        auto& gre = pre.ensure_grad();
                        auto& gim = pim.ensure_grad();
                        for (std::size_t k = 0; k < n; ++k) {
                            const cplx a = xf[k] * std::conj(gf[k]) * inv_n;
                            const double d_re = a.real();
                            const double d_im = -a.imag();
                            if (k < F) {
                                gre[k] += d_re;
                                gim[k] += d_im;
                            } else {
                                gre[n - k] += d_re;
                                gim[n - k] -= d_im;
                            }
                        }
                    }
                    if (px.requires_grad) {
                        auto& gx = px.ensure_grad();
                        for (std::size_t k = 0; k < n; ++k) {
                            tmp[k] = std::conj(multiplier(pre.value, pim.value, k)) * gf[k];
                        }
                        plan->transform(tmp, gb, true);
                        for (std::size_t t = 0; t < n; ++t) {
                            gx.at(b, c, t, d) += gb[t].real();
                        }
                    }
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Blocks
// ---------------------------------------------------------------------------

struct AttentionBlock {
    LayerNormParams norm1;
    Linear wq, wk, wv, wo;
    LayerNormParams norm2;
    Linear ff1, ff2;
};

struct MixerBlock {
    LayerNormParams norm1;
    Linear token1, token2;
    LayerNormParams norm2;
    Linear feat1, feat2;
};

struct SpectralBlock {
    Var m_re;
    Var m_im;
};

/// Multi-head self-attention over axis 2 of z (B, X, Lt, D).
inline Var self_attention(const Var& z, const AttentionBlock& blk, std::size_t heads) {
    const Shape s = z->shape();
    const std::size_t dh = s.d / heads;
    const Shape split{s.b * s.c, s.l, heads, dh};
    auto to_heads = [&](const Var& v) { return permute(reshape(v, split), {0, 2, 1, 3}); };
    Var q = to_heads(blk.wq(z));
    Var k = to_heads(blk.wk(z));
    Var v = to_heads(blk.wv(z));
    Var scores = scale(matmul(q, permute(k, {0, 1, 3, 2})), 1.0 / std::sqrt(static_cast<double>(dh)));
    Var attn = softmax(scores, 3);
    Var out = permute(matmul(attn, v), {0, 2, 1, 3});
    return blk.wo(reshape(out, s));
}

/// The modeling stage: a shape-preserving map (B,C,L,D) -> (B,C,L,D).
class Encoder {
public:
    Encoder(const EncoderSpec& spec, const Shape& latent, ParamStore& store, const std::string& prefix = "encoder")
        : spec_(spec), latent_(latent), axis_(choose_token_axis(latent)) {
        if (spec_.kind != EncoderKind::identity && spec_.layers == 0) {
            throw ParameterError(std::string("encoder '") + to_string(spec_.kind) + "' needs at least one layer");
        }
        if (spec_.dropout < 0.0 || spec_.dropout >= 1.0) {
            throw ParameterError("encoder dropout must lie in [0, 1)");
        }
        const std::size_t D = latent.d;
        const std::size_t n_tok = axis_ == TokenAxis::L ? latent.l : latent.c;
        const std::size_t before = store.element_count();
        switch (spec_.kind) {
        case EncoderKind::identity: break;
        case EncoderKind::transformer: {
            heads_ = spec_.heads != 0 ? spec_.heads : (D >= 64 ? 8 : 1);
            if (D % heads_ != 0) {
                throw ParameterError("transformer heads (" + std::to_string(heads_) + ") must divide D (" +
                                     std::to_string(D) + ")");
            }
            const std::size_t dff = spec_.d_ff != 0 ? spec_.d_ff : 2 * D;
            for (std::size_t i = 0; i < spec_.layers; ++i) {
                const std::string p = prefix + ".attn" + std::to_string(i);
                AttentionBlock blk;
                blk.norm1 = LayerNormParams::create(store, p + ".norm1", D);
                blk.wq = Linear::create(store, p + ".wq", D, D);
                blk.wk = Linear::create(store, p + ".wk", D, D);
                blk.wv = Linear::create(store, p + ".wv", D, D);
                blk.wo = Linear::create(store, p + ".wo", D, D);
                blk.norm2 = LayerNormParams::create(store, p + ".norm2", D);
                blk.ff1 = Linear::create(store, p + ".ff1", D, dff);
                blk.ff2 = Linear::create(store, p + ".ff2", dff, D);
                attn_.push_back(std::move(blk));
            }
            break;
        }
        case EncoderKind::mlp: {
            const std::size_t dff = spec_.d_ff != 0 ? spec_.d_ff : 2 * D;
            for (std::size_t i = 0; i < spec_.layers; ++i) {
                const std::string p = prefix + ".mixer" + std::to_string(i);
                MixerBlock blk;
                blk.norm1 = LayerNormParams::create(store, p + ".norm1", D);
                blk.token1 = Linear::create(store, p + ".token1", n_tok, 2 * n_tok);
                blk.token2 = Linear::create(store, p + ".token2", 2 * n_tok, n_tok);
                blk.norm2 = LayerNormParams::create(store, p + ".norm2", D);
                blk.feat1 = Linear::create(store, p + ".feat1", D, dff);
                blk.feat2 = Linear::create(store, p + ".feat2", dff, D);
                mixer_.push_back(std::move(blk));
            }
            break;
        }
        case EncoderKind::spectral: {
            const std::size_t F = n_tok / 2 + 1;
            for (std::size_t i = 0; i < spec_.layers; ++i) {
                const std::string p = prefix + ".spectral" + std::to_string(i);
                spectral_.push_back({store.filled(p + ".re", Shape{1, 1, 1, F}, 1.0),
                                     store.filled(p + ".im", Shape{1, 1, 1, F}, 0.0)});
            }
            break;
        }
        }
        param_count_ = store.element_count() - before;
    }

    const EncoderSpec& spec() const noexcept { return spec_; }
    TokenAxis token_axis() const noexcept { return axis_; }
    std::size_t heads() const noexcept { return heads_; }
    std::size_t parameter_count() const noexcept { return param_count_; }
    std::vector<MixerBlock>& mixer_blocks() noexcept { return mixer_; }
    std::vector<SpectralBlock>& spectral_blocks() noexcept { return spectral_; }

    Var forward(const Var& z, const ForwardContext& ctx) const {
        const Shape s = z->shape();
        if (s.c != latent_.c || s.l != latent_.l || s.d != latent_.d) {
            throw DimensionError(std::string("encoder '") + to_string(spec_.kind) + "' built for latent " +
                                 latent_.str() + ", got " + s.str());
        }
        switch (spec_.kind) {
        case EncoderKind::identity: return z;
        case EncoderKind::transformer: return forward_transformer(z, ctx);
        case EncoderKind::mlp: return forward_mlp(z, ctx);
        case EncoderKind::spectral: return forward_spectral(z);
        }
        return z;
    }

private:
    Var drop(const Var& v, const ForwardContext& ctx) const {
        if (!ctx.training || spec_.dropout == 0.0) {
            return v;
        }
        if (ctx.rng == nullptr) {
            throw ParameterError("training-mode forward with dropout needs a generator");
        }
        return dropout(v, spec_.dropout, *ctx.rng, true);
    }

    // Pre-norm blocks: h = z + drop(MHA(LN(z))); out = h + drop(FF(LN(h))).
    Var forward_transformer(const Var& z, const ForwardContext& ctx) const {
        Var h = tokens_to_l(z, axis_);
        for (const auto& blk : attn_) {
            h = add(h, drop(self_attention(blk.norm1(h), blk, heads_), ctx));
            h = add(h, drop(blk.ff2(gelu(blk.ff1(blk.norm2(h)))), ctx));
        }
        return tokens_to_l(h, axis_);
    }

    Var forward_mlp(const Var& z, const ForwardContext& ctx) const {
        Var h = tokens_to_l(z, axis_);
        for (const auto& blk : mixer_) {
            // token mixing runs over axis 2, so move it last and back
            Var t = permute(blk.norm1(h), {0, 1, 3, 2});
            t = blk.token2(gelu(blk.token1(t)));
            h = add(h, drop(permute(t, {0, 1, 3, 2}), ctx));
            h = add(h, drop(blk.feat2(gelu(blk.feat1(blk.norm2(h)))), ctx));
        }
        return tokens_to_l(h, axis_);
    }

    // out = (z + filter(z)) / 2, so unit multipliers give the identity.
    Var forward_spectral(const Var& z) const {
        Var h = tokens_to_l(z, axis_);
        for (const auto& blk : spectral_) {
            h = scale(add(h, spectral_filter(h, blk.m_re, blk.m_im)), 0.5);
        }
        return tokens_to_l(h, axis_);
    }

    EncoderSpec spec_;
    Shape latent_;
    TokenAxis axis_;
    std::size_t heads_ = 1;
    std::vector<AttentionBlock> attn_;
    std::vector<MixerBlock> mixer_;
    std::vector<SpectralBlock> spectral_;
    std::size_t param_count_ = 0;
};

} // namespace combts
