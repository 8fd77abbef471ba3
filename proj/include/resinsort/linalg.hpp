#pragma once

#include <cstddef>
#include <vector>

namespace resinsort {

/// Dense row-major matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    static Matrix identity(std::size_t n);

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

struct EigenDecomposition {
    std::vector<double> values;          // descending
    std::vector<std::vector<double>> vectors;  // vectors[k] pairs with values[k], unit norm
};

/// Cyclic Jacobi rotations until the off-diagonal mass falls below
/// tolerance * ||A||_F. Each eigenvector is signed so that its
/// largest-magnitude component is positive (first such index on ties).
EigenDecomposition symmetric_eigen(const Matrix& a, double tolerance = 1e-12, std::size_t max_sweeps = 100);

/// Lower-triangular L with A = L L^T. Throws std::domain_error if A is not
/// positive definite.
Matrix cholesky(const Matrix& a);

}  // namespace resinsort
