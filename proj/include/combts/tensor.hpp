#pragma once

#include "combts/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace combts {

/// Extents of a rank-4 tensor laid out as (batch, channel, token, feature).
struct Shape {
    std::size_t b = 1;
    std::size_t c = 1;
    std::size_t l = 1;
    std::size_t d = 1;

    constexpr std::size_t size() const noexcept { return b * c * l * d; }
    constexpr std::array<std::size_t, 4> dims() const noexcept { return {b, c, l, d}; }
    static constexpr Shape from(const std::array<std::size_t, 4>& a) noexcept {
        return {a[0], a[1], a[2], a[3]};
    }
    constexpr bool operator==(const Shape&) const = default;

    std::string str() const {
        std::ostringstream os;
        os << '(' << b << ',' << c << ',' << l << ',' << d << ')';
        return os.str();
    }
};

/// Dense row-major rank-4 array of doubles.
class Tensor4 {
public:
    Tensor4() = default;
    explicit Tensor4(Shape shape, double fill = 0.0) : shape_(shape), data_(shape.size(), fill) {}
    Tensor4(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
        if (data_.size() != shape_.size()) {
            throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_.str());
        }
    }

    static Tensor4 zeros(Shape s) { return Tensor4(s, 0.0); }
    static Tensor4 scalar(double v) { return Tensor4(Shape{}, v); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::vector<double>& vec() noexcept { return data_; }
    const std::vector<double>& vec() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    std::size_t index(std::size_t b, std::size_t c, std::size_t l, std::size_t d) const noexcept {
        return ((b * shape_.c + c) * shape_.l + l) * shape_.d + d;
    }
    double& at(std::size_t b, std::size_t c, std::size_t l, std::size_t d) noexcept {
        return data_[index(b, c, l, d)];
    }
    double at(std::size_t b, std::size_t c, std::size_t l, std::size_t d) const noexcept {
        return data_[index(b, c, l, d)];
    }

    double item() const {
        if (data_.size() != 1) {
            throw DimensionError("item() on tensor of shape " + shape_.str());
        }
        return data_[0];
    }

    bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    /// Throws NonFiniteError naming `what` when any element is NaN or infinite.
    void require_finite(const char* what) const {
        if (!all_finite()) {
            throw NonFiniteError(std::string("non-finite value produced by ") + what);
        }
    }

    void fill(double v) noexcept { std::fill(data_.begin(), data_.end(), v); }

    /// Same data, new extents with the same element count.
    Tensor4 reshaped(Shape s) const {
        if (s.size() != shape_.size()) {
            throw DimensionError("cannot reshape " + shape_.str() + " to " + s.str());
        }
        return Tensor4(s, data_);
    }

private:
    Shape shape_{0, 0, 0, 0};
    std::vector<double> data_;
};

inline double max_abs_diff(const Tensor4& a, const Tensor4& b) {
    if (!(a.shape() == b.shape())) {
        throw DimensionError("shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

} // namespace combts
