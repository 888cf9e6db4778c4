#pragma once

#include "combts/autodiff.hpp"

#include <cmath>
#include <utility>
#include <vector>

namespace combts {

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<Tensor4> m;
    std::vector<Tensor4> v;
    long step = 0;
};

/// One bias-corrected Adam update of `params` from their accumulated grads.
/// Throws DivergedError before touching anything if a gradient is non-finite.
inline void adam_step(const std::vector<Var>& params, AdamState& state, const AdamOptions& opt) {
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p->shape());
            state.v.emplace_back(p->shape());
        }
    }
    if (state.m.size() != params.size()) {
        throw DimensionError("adam_step: optimizer state holds " + std::to_string(state.m.size()) +
                             " slots for " + std::to_string(params.size()) + " parameters");
    }
    for (const auto& p : params) {
        if (!p->ensure_grad().all_finite()) {
            throw DivergedError("non-finite gradient encountered in optimizer step");
        }
    }
    ++state.step;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& value = params[k]->value;
        const auto& g = params[k]->grad;
        auto& m = state.m[k];
        auto& v = state.v[k];
        for (std::size_t i = 0; i < value.size(); ++i) {
            m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
            v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            value[i] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
        }
    }
}

} // namespace combts
