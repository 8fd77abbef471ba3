#include "resinsort/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "resinsort/tensor.hpp"

namespace resinsort {

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

EigenDecomposition symmetric_eigen(const Matrix& input, double tolerance, std::size_t max_sweeps) {
    if (input.rows != input.cols) throw DimensionError("eigendecomposition needs a square matrix");
    const std::size_t n = input.rows;
    Matrix a = input;
    Matrix v = Matrix::identity(n);

    double frob = 0.0;
    for (double x : a.data) frob += x * x;
    frob = std::sqrt(frob);
    const double threshold = tolerance * (frob > 0.0 ? frob : 1.0);

    auto off_norm = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) s += 2.0 * a(i, j) * a(i, j);
        }
        return std::sqrt(s);
    };

    for (std::size_t sweep = 0; sweep < max_sweeps && off_norm() > threshold; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

    EigenDecomposition out;
    for (auto k : order) {
        out.values.push_back(a(k, k));
        std::vector<double> vec(n);
        std::size_t big = 0;
        for (std::size_t i = 0; i < n; ++i) {
            vec[i] = v(i, k);
            if (std::abs(vec[i]) > std::abs(vec[big])) big = i;
        }
        if (vec[big] < 0.0) {
            for (auto& x : vec) x = -x;
        }
        out.vectors.push_back(std::move(vec));
    }
    return out;
}

Matrix cholesky(const Matrix& a) {
    if (a.rows != a.cols) throw DimensionError("cholesky needs a square matrix");
    const std::size_t n = a.rows;
    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = a(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (!(d > 0.0)) throw std::domain_error("matrix is not positive definite");
        l(j, j) = std::sqrt(d);
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / l(j, j);
        }
    }
    return l;
}

}  // namespace resinsort
