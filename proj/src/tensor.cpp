#include "resinsort/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace resinsort {

std::size_t shape_volume(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream out;
    out << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << 'x';
        out << shape[i];
    }
    out << ')';
    return out.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), values_(shape_volume(shape_), fill) {
    for (auto e : shape_) {
        if (e == 0) throw DimensionError("tensor extent must be positive, got " + shape_to_string(shape_));
    }
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
    if (shape_volume(shape_) != values_.size()) {
        throw DimensionError("tensor shape " + shape_to_string(shape_) + " holds " +
                             std::to_string(shape_volume(shape_)) + " values, got " +
                             std::to_string(values_.size()));
    }
}

std::span<double> Tensor::grad() {
    if (grad_.size() != values_.size()) grad_.assign(values_.size(), 0.0);
    return grad_;
}

void Tensor::zero_grad() { grad_.assign(values_.size(), 0.0); }

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_volume(shape) != values_.size()) {
        throw DimensionError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
    }
    return Tensor(std::move(shape), values_);
}

void Tensor::fill(double value) noexcept { std::fill(values_.begin(), values_.end(), value); }

bool Tensor::all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(what) + ": shape " + shape_to_string(a.shape()) + " != " +
                             shape_to_string(b.shape()));
    }
}

}  // namespace resinsort
