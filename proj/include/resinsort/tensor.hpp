#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace resinsort {

/// Raised when tensor extents or vector lengths disagree.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<std::size_t>;

std::size_t shape_volume(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major array of doubles with an optional gradient buffer.
///
/// Images and feature maps are rank 3 in height x width x channel order,
/// convolution filters are rank 4 (count x kh x kw x in_channels).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return values_.size(); }
    std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }
    double* data() noexcept { return values_.data(); }
    const double* data() const noexcept { return values_.data(); }

    double& operator[](std::size_t i) noexcept { return values_[i]; }
    double operator[](std::size_t i) const noexcept { return values_[i]; }

    // rank-3 (h, w, c) accessors
    double& at(std::size_t h, std::size_t w, std::size_t c) noexcept {
        return values_[(h * shape_[1] + w) * shape_[2] + c];
    }
    double at(std::size_t h, std::size_t w, std::size_t c) const noexcept {
        return values_[(h * shape_[1] + w) * shape_[2] + c];
    }

    bool has_grad() const noexcept { return !grad_.empty(); }
    /// Allocates a zeroed gradient buffer if none exists.
    std::span<double> grad();
    std::span<const double> grad() const noexcept { return grad_; }
    void zero_grad();
    void drop_grad() noexcept { grad_.clear(); }

    /// Same values, new shape of equal volume.
    Tensor reshaped(Shape shape) const;

    void fill(double value) noexcept;
    bool all_finite() const noexcept;

    friend bool operator==(const Tensor& a, const Tensor& b) noexcept {
        return a.shape_ == b.shape_ && a.values_ == b.values_;
    }

private:
    Shape shape_;
    std::vector<double> values_;
    std::vector<double> grad_;
};

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace resinsort
