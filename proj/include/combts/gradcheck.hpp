#pragma once

#include "combts/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace combts {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_param = 0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    std::size_t checked = 0;
};

/// Compare the reverse-mode gradient of the scalar `f` against central
/// differences (f(p+h) - f(p-h)) / 2h, element by element over `params`.
///
/// The relative error of one element is |a - n| / max(|a|, |n|, floor); the
/// floor keeps elements whose true gradient is ~0 from dividing by noise.
/// `f` must rebuild its graph from the current parameter values on each call.
inline GradCheckResult grad_check(const std::function<Var()>& f, const std::vector<Var>& params,
                                  double h = 1e-5, double floor = 1e-6) {
    zero_grads(params);
    Var loss = f();
    backward(loss);
    std::vector<Tensor4> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) {
        analytic.push_back(p->grad);
    }
    loss.reset();

    GradCheckResult res;
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& val = params[k]->value;
        for (std::size_t i = 0; i < val.size(); ++i) {
            const double orig = val[i];
            val[i] = orig + h;
            const double fp = f()->value.item();
            val[i] = orig - h;
            const double fm = f()->value.item();
            val[i] = orig;
            const double num = (fp - fm) / (2.0 * h);
            const double ana = analytic[k][i];
            const double denom = std::max({std::abs(ana), std::abs(num), floor});
            const double rel = std::abs(ana - num) / denom;
            ++res.checked;
            if (rel >= res.max_rel_error) {
                res.max_rel_error = rel;
                res.worst_param = k;
                res.worst_index = i;
                res.analytic = ana;
                res.numeric = num;
            }
        }
    }
    return res;
}

} // namespace combts
