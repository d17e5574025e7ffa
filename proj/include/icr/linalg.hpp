#pragma once
// Minimal dense row-major matrix. Heavy lifting goes through icr::kernels;
// the QR used for random orthonormal bases is delegated to Eigen.

#include <cstddef>
#include <vector>

#include "icr/rng.hpp"

namespace icr {

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    double* row(std::size_t r) { return data.data() + r * cols; }
    const double* row(std::size_t r) const { return data.data() + r * cols; }

    static Matrix identity(std::size_t n);
    Matrix transpose() const;
    bool operator==(const Matrix&) const = default;
};

// Q factor of the QR decomposition of a seeded Gaussian n x n matrix, with the
// sign convention diag(R) > 0 so the result is a Haar-distributed orthogonal matrix.
Matrix random_orthogonal(std::size_t n, Rng& rng);

// Largest |(A^T A - I)_{ij}|; used to validate orthonormal bases.
double orthonormality_error(const Matrix& A);

}  // namespace icr
