#include "icr/linalg.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace icr {

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::transpose() const {
    Matrix t(cols, rows);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) t(c, r) = (*this)(r, c);
    return t;
}

Matrix random_orthogonal(std::size_t n, Rng& rng) {
    Eigen::MatrixXd g(n, n);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) g(r, c) = rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd rr = qr.matrixQR().triangularView<Eigen::Upper>();
    Matrix out(n, n);
    for (std::size_t c = 0; c < n; ++c) {
        const double s = rr(c, c) < 0.0 ? -1.0 : 1.0;
        for (std::size_t r = 0; r < n; ++r) out(r, c) = s * q(r, c);
    }
    return out;
}

double orthonormality_error(const Matrix& A) {
    double worst = 0.0;
    for (std::size_t i = 0; i < A.cols; ++i) {
        for (std::size_t j = i; j < A.cols; ++j) {
            double s = 0.0;
            for (std::size_t r = 0; r < A.rows; ++r) s += A(r, i) * A(r, j);
            worst = std::max(worst, std::abs(s - (i == j ? 1.0 : 0.0)));
        }
    }
    return worst;
}

}  // namespace icr
