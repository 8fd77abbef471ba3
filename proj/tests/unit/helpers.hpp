#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "resinsort/random.hpp"
#include "resinsort/tensor.hpp"

namespace rs_test {

inline resinsort::Tensor random_tensor(const resinsort::Shape& shape, resinsort::Rng& rng, double lo = -1.0,
                                       double hi = 1.0) {
    resinsort::Tensor t(shape);
    for (auto& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

/// Central differences of f with respect to every element of `x`, step eps.
inline std::vector<double> numeric_gradient(const std::function<double()>& f, std::span<double> x, double eps = 1e-3) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + eps;
        const double up = f();
        x[i] = keep - eps;
        const double down = f();
        x[i] = keep;
        g[i] = (up - down) / (2.0 * eps);
    }
    return g;
}

/// ||a - b|| / (||a|| + ||b||), zero when both vanish.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double denom = std::sqrt(na) + std::sqrt(nb);
    return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

/// Sum of weights * values, the scalar used to pull gradients through an op.
inline double weighted_sum(const resinsort::Tensor& t, const resinsort::Tensor& w) {
    double s = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) s += t[i] * w[i];
    return s;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("resinsort_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace rs_test
