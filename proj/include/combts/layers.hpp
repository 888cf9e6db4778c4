#pragma once

#include "combts/ops.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace combts {

/// Run-local parameter registry. Parameters are drawn from the run's
/// generator in registration order, so a seed fixes every initial value.
class ParamStore {
public:
    explicit ParamStore(Rng& rng) : rng_(&rng) {}

    /// Uniform in +-sqrt(1 / fan_in).
    Var uniform(const std::string& name, Shape shape, std::size_t fan_in) {
        const double bound = std::sqrt(1.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
        Tensor4 t(shape);
        for (auto& v : t.vec()) {
            v = rng_->uniform(-bound, bound);
        }
        return add_param(name, std::move(t));
    }

    Var filled(const std::string& name, Shape shape, double value) {
        return add_param(name, Tensor4(shape, value));
    }

    const std::vector<Var>& params() const noexcept { return params_; }
    const std::vector<std::string>& names() const noexcept { return names_; }

    std::size_t element_count() const noexcept {
        std::size_t n = 0;
        for (const auto& p : params_) {
            n += p->value.size();
        }
        return n;
    }

    std::vector<Tensor4> snapshot() const {
        std::vector<Tensor4> out;
        out.reserve(params_.size());
        for (const auto& p : params_) {
            out.push_back(p->value);
        }
        return out;
    }

    void restore(const std::vector<Tensor4>& snap) {
        if (snap.size() != params_.size()) {
            throw DimensionError("restore: snapshot has " + std::to_string(snap.size()) + " tensors, store has " +
                                 std::to_string(params_.size()));
        }
        for (std::size_t i = 0; i < snap.size(); ++i) {
            params_[i]->value = snap[i];
        }
    }

private:
    Var add_param(const std::string& name, Tensor4 t) {
        auto p = parameter(std::move(t));
        params_.push_back(p);
        names_.push_back(name);
        return p;
    }

    Rng* rng_;
    std::vector<Var> params_;
    std::vector<std::string> names_;
};

/// Affine map over the feature axis: x (…, in) -> (…, out).
struct Linear {
    Var weight; // (1, 1, in, out)
    Var bias;   // (1, 1, 1, out)

    static Linear create(ParamStore& store, const std::string& name, std::size_t in, std::size_t out) {
        Linear lin;
        lin.weight = store.uniform(name + ".weight", Shape{1, 1, in, out}, in);
        lin.bias = store.uniform(name + ".bias", Shape{1, 1, 1, out}, in);
        return lin;
    }

    std::size_t in_features() const { return weight->shape().l; }
    std::size_t out_features() const { return weight->shape().d; }

    Var operator()(const Var& x) const { return add(matmul(x, weight), bias); }
};

struct LayerNormParams {
    Var gamma;
    Var beta;

    static LayerNormParams create(ParamStore& store, const std::string& name, std::size_t d) {
        return {store.filled(name + ".gamma", Shape{1, 1, 1, d}, 1.0),
                store.filled(name + ".beta", Shape{1, 1, 1, d}, 0.0)};
    }

    Var operator()(const Var& x) const { return layer_norm(x, gamma, beta, 1e-5); }
};

/// Mode flags for one forward pass.
struct ForwardContext {
    bool training = false;
    Rng* rng = nullptr;
};

} // namespace combts
