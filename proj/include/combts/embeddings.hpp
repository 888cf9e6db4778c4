#pragma once

#include "combts/layers.hpp"

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace combts {

enum class EmbeddingKind { point, patch, variate, identity, time_as_feature, channel_as_feature };

inline constexpr std::array<EmbeddingKind, 6> all_embedding_kinds{
    EmbeddingKind::point,    EmbeddingKind::patch,           EmbeddingKind::variate,
    EmbeddingKind::identity, EmbeddingKind::time_as_feature, EmbeddingKind::channel_as_feature};

inline const char* to_string(EmbeddingKind k) {
    switch (k) {
    case EmbeddingKind::point: return "point";
    case EmbeddingKind::patch: return "patch";
    case EmbeddingKind::variate: return "variate";
    case EmbeddingKind::identity: return "identity";
    case EmbeddingKind::time_as_feature: return "time_as_feature";
    case EmbeddingKind::channel_as_feature: return "channel_as_feature";
    }
    return "?";
}

inline std::optional<EmbeddingKind> parse_embedding_kind(std::string_view s) {
    for (auto k : all_embedding_kinds) {
        if (s == to_string(k)) {
            return k;
        }
    }
    return std::nullopt;
}

struct EmbeddingSpec {
    EmbeddingKind kind = EmbeddingKind::patch;
    std::size_t d_model = 0;
    std::size_t patch_len = 16;
    std::size_t stride = 8;

    bool uses_d_model() const {
        return kind == EmbeddingKind::point || kind == EmbeddingKind::patch || kind == EmbeddingKind::variate;
    }

    void validate() const {
        if (uses_d_model() && d_model == 0) {
            throw ParameterError(std::string("embedding '") + to_string(kind) + "' requires a latent dim D >= 1");
        }
        if (kind == EmbeddingKind::patch && (stride == 0 || patch_len < stride)) {
            throw ParameterError("patch embedding requires patch_len >= stride >= 1, got patch_len = " +
                                 std::to_string(patch_len) + ", stride = " + std::to_string(stride));
        }
    }
};

inline std::size_t patch_count(std::size_t T, std::size_t stride) { return (T + stride - 1) / stride; }

/// Replicate-pad the end of each series with its last value and cut it into
/// ceil(T/S) patches of length patch_len: (B,N,T,1) -> (B,N,ceil(T/S),patch_len).
inline Var unfold_patches(const Var& x, std::size_t patch_len, std::size_t stride) {
    const Shape s = x->shape();
    if (s.d != 1) {
        throw DimensionError("unfold_patches expects (B,N,T,1), got " + s.str());
    }
    if (stride == 0 || patch_len < stride) {
        throw ParameterError("unfold_patches requires patch_len >= stride >= 1");
    }
    const std::size_t T = s.l;
    const std::size_t L = patch_count(T, stride);
    Tensor4 y(Shape{s.b, s.c, L, patch_len});
    auto src_index = [T, stride](std::size_t p, std::size_t j) { return std::min(p * stride + j, T - 1); };
    for (std::size_t b = 0; b < s.b; ++b) {
        for (std::size_t n = 0; n < s.c; ++n) {
            for (std::size_t p = 0; p < L; ++p) {
                for (std::size_t j = 0; j < patch_len; ++j) {
                    y.at(b, n, p, j) = x->value.at(b, n, src_index(p, j), 0);
                }
            }
        }
    }
    return make_node(std::move(y), {x}, [src_index, L, patch_len](Node& node) {
        auto& g = node.parents[0]->ensure_grad();
        const Shape gs = g.shape();
        for (std::size_t b = 0; b < gs.b; ++b) {
            for (std::size_t n = 0; n < gs.c; ++n) {
                for (std::size_t p = 0; p < L; ++p) {
                    for (std::size_t j = 0; j < patch_len; ++j) {
                        g.at(b, n, src_index(p, j), 0) += node.grad.at(b, n, p, j);
                    }
                }
            }
        }
    });
}

/// (B,N,T,1) -> (B,N,1,T).
inline Var time_as_feature(const Var& x) { return permute(x, {0, 1, 3, 2}); }
inline Var time_as_feature_inverse(const Var& z) { return permute(z, {0, 1, 3, 2}); }

/// (B,N,T,1) -> (B,1,T,N).
inline Var channel_as_feature(const Var& x) { return permute(x, {0, 3, 2, 1}); }
inline Var channel_as_feature_inverse(const Var& z) { return permute(z, {0, 3, 2, 1}); }

/// The data-view stage: maps (B,N,T,1) onto the (B,C,L,D) latent interface.
/// Weights are shared across variates.
class Embedding {
public:
    Embedding(const EmbeddingSpec& spec, std::size_t lookback, std::size_t variates, ParamStore& store,
              const std::string& prefix = "embedding")
        : spec_(spec), lookback_(lookback), variates_(variates) {
        spec_.validate();
        if (lookback == 0 || variates == 0) {
            throw ParameterError("embedding needs positive lookback and variate count");
        }
        const std::size_t before = store.element_count();
        switch (spec_.kind) {
        case EmbeddingKind::point: proj_ = Linear::create(store, prefix + ".point", 1, spec_.d_model); break;
        case EmbeddingKind::patch:
            proj_ = Linear::create(store, prefix + ".patch", spec_.patch_len, spec_.d_model);
            break;
        case EmbeddingKind::variate:
            proj_ = Linear::create(store, prefix + ".variate", lookback, spec_.d_model);
            break;
        default: break;
        }
        param_count_ = store.element_count() - before;
    }

    const EmbeddingSpec& spec() const noexcept { return spec_; }
    std::size_t parameter_count() const noexcept { return param_count_; }
    const Linear& projection() const noexcept { return proj_; }

    /// Latent (C, L, D) for a batch of B.
    Shape output_shape(std::size_t B) const {
        const std::size_t T = lookback_;
        const std::size_t N = variates_;
        switch (spec_.kind) {
        case EmbeddingKind::point: return {B, N, T, spec_.d_model};
        case EmbeddingKind::patch: return {B, N, patch_count(T, spec_.stride), spec_.d_model};
        case EmbeddingKind::variate: return {B, N, 1, spec_.d_model};
        case EmbeddingKind::identity: return {B, N, T, 1};
        case EmbeddingKind::time_as_feature: return {B, N, 1, T};
        case EmbeddingKind::channel_as_feature: return {B, 1, T, N};
        }
        return {};
    }

    Var forward(const Var& x) const {
        const Shape s = x->shape();
        if (s.c != variates_ || s.l != lookback_ || s.d != 1) {
            throw DimensionError(std::string("embedding '") + to_string(spec_.kind) + "' built for (B," +
                                 std::to_string(variates_) + "," + std::to_string(lookback_) +
                                 ",1), got " + s.str());
        }
        switch (spec_.kind) {
        case EmbeddingKind::point: return proj_(x);
        case EmbeddingKind::patch: return proj_(unfold_patches(x, spec_.patch_len, spec_.stride));
        case EmbeddingKind::variate: return proj_(time_as_feature(x));
        case EmbeddingKind::identity: return x;
        case EmbeddingKind::time_as_feature: return time_as_feature(x);
        case EmbeddingKind::channel_as_feature: return channel_as_feature(x);
        }
        return x;
    }

private:
    EmbeddingSpec spec_;
    std::size_t lookback_;
    std::size_t variates_;
    Linear proj_;
    std::size_t param_count_ = 0;
};

} // namespace combts
