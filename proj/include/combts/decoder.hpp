#pragma once

#include "combts/layers.hpp"

#include <string>

namespace combts {

struct DecoderSpec {
    std::size_t horizon = 96;
};

/// How a latent (C, L, D) is mapped back to N variates.
enum class FlattenPolicy {
    per_variate, // C == N: flatten (L, D) per variate, shared L*D -> P map
    per_feature  // C == 1, D == N: shared L -> P map per feature slot
};

/// Shared linear head: (B,C,L,D) -> (B,N,P,1) with weights shared across variates.
class Decoder {
public:
    Decoder(const DecoderSpec& spec, const Shape& latent, std::size_t variates, ParamStore& store,
            const std::string& prefix = "decoder")
        : spec_(spec), latent_(latent), variates_(variates) {
        if (spec.horizon == 0) {
            throw ParameterError("decoder horizon must be >= 1");
        }
        if (latent.c == variates) {
            policy_ = FlattenPolicy::per_variate;
            head_ = Linear::create(store, prefix + ".head", latent.l * latent.d, spec.horizon);
        } else if (latent.c == 1 && latent.d == variates) {
            policy_ = FlattenPolicy::per_feature;
            head_ = Linear::create(store, prefix + ".head", latent.l, spec.horizon);
        } else {
            throw ConfigError("decoder cannot map latent " + latent.str() + " back to " + std::to_string(variates) +
                              " variates");
        }
    }

    FlattenPolicy policy() const noexcept { return policy_; }
    const Linear& head() const noexcept { return head_; }
    std::size_t parameter_count() const { return head_.weight->value.size() + head_.bias->value.size(); }

    Var forward(const Var& z) const {
        const Shape s = z->shape();
        if (s.c != latent_.c || s.l != latent_.l || s.d != latent_.d) {
            throw DimensionError("decoder built for latent " + latent_.str() + ", got " + s.str());
        }
        Var flat = policy_ == FlattenPolicy::per_variate ? reshape(z, Shape{s.b, s.c, 1, s.l * s.d})
                                                         : permute(z, {0, 3, 1, 2});
        return permute(head_(flat), {0, 1, 3, 2});
    }

private:
    DecoderSpec spec_;
    Shape latent_;
    std::size_t variates_;
    FlattenPolicy policy_ = FlattenPolicy::per_variate;
    Linear head_;
};

} // namespace combts
