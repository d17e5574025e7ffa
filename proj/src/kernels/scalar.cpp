#include "icr/kernels.hpp"

#include <cmath>

namespace icr::kernels {
namespace {

double dot_ref(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy_ref(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemv_ref(const double* A, std::size_t rows, std::size_t cols, const double* x, double* y) {
    for (std::size_t r = 0; r < rows; ++r) y[r] = dot_ref(A + r * cols, x, cols);
}

void gemv_t_ref(const double* A, std::size_t rows, std::size_t cols, const double* x, double* y) {
    for (std::size_t c = 0; c < cols; ++c) y[c] = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        if (x[r] != 0.0) axpy_ref(x[r], A + r * cols, y, cols);
    }
}

void rank1_ref(double* A, std::size_t rows, std::size_t cols, double alpha, const double* u,
               const double* v) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double s = alpha * u[r];
        if (s != 0.0) axpy_ref(s, v, A + r * cols, cols);
    }
}

void square_ref(const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] * x[i];
}

void adam_ref(double* param, const double* grad, double* m1, double* m2, std::size_t n, double lr,
              double beta1, double beta2, double bias1, double bias2, double eps) {
    for (std::size_t i = 0; i < n; ++i) {
        m1[i] = beta1 * m1[i] + (1.0 - beta1) * grad[i];
        m2[i] = beta2 * m2[i] + (1.0 - beta2) * grad[i] * grad[i];
        const double mhat = m1[i] / bias1;
        const double vhat = m2[i] / bias2;
        param[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

}  // namespace

const KernelTable& scalar_kernels() {
    static const KernelTable table{"scalar", dot_ref,   axpy_ref,   gemv_ref,
                                   gemv_t_ref, rank1_ref, square_ref, adam_ref};
    return table;
}

}  // namespace icr::kernels
