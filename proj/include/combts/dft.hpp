#pragma once

#include "combts/error.hpp"

#include <complex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace combts {

using cplx = std::complex<double>;

/// Twiddle table for naive O(n^2) transforms of one length.
///
/// Forward: X_k = sum_t x_t e^{-2 pi i k t / n}.
/// Inverse: x_t = (1/n) sum_k X_k e^{+2 pi i k t / n}.
/// Twiddles are indexed by (k t) mod n, which keeps the round-trip error near
/// machine precision for the lengths used here.
class DftPlan {
public:
    explicit DftPlan(std::size_t n) : n_(n), w_(n) {
        if (n == 0) {
            throw ParameterError("dft: length must be >= 1");
        }
        for (std::size_t j = 0; j < n; ++j) {
            const double a = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
            w_[j] = cplx(std::cos(a), -std::sin(a));
        }
    }

    std::size_t size() const noexcept { return n_; }

    void transform(std::span<const cplx> x, std::span<cplx> out, bool inverse) const {
        if (x.size() != n_ || out.size() != n_) {
            throw DimensionError("dft: plan length " + std::to_string(n_) + ", got " + std::to_string(x.size()));
        }
        for (std::size_t k = 0; k < n_; ++k) {
            cplx acc(0.0, 0.0);
            std::size_t idx = 0;
            for (std::size_t t = 0; t < n_; ++t) {
                acc += x[t] * (inverse ? std::conj(w_[idx]) : w_[idx]);
                idx += k;
                if (idx >= n_) {
                    idx -= n_;
                }
            }
            out[k] = inverse ? acc / static_cast<double>(n_) : acc;
        }
    }

private:
    std::size_t n_;
    std::vector<cplx> w_;
};

inline std::vector<cplx> dft(std::span<const cplx> x, bool inverse = false) {
    DftPlan plan(x.size());
    std::vector<cplx> out(x.size());
    plan.transform(x, out, inverse);
    return out;
}

inline std::vector<cplx> dft(std::span<const double> x, bool inverse = false) {
    std::vector<cplx> c(x.begin(), x.end());
    return dft(std::span<const cplx>(c), inverse);
}

} // namespace combts
