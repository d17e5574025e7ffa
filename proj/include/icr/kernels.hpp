#pragma once
// Dense double-precision kernels used by the MLP and attention inner loops.
//
// Every kernel has a scalar reference implementation. On x86-64 an AVX2/FMA
// variant is compiled into a separate translation unit and selected at runtime
// when the CPU reports both features. Set ICR_KERNELS=scalar to force the
// reference path (useful when bisecting numerical differences).

#include <cstddef>
#include <string_view>

namespace icr::kernels {

struct KernelTable {
    std::string_view name;

    // sum_i a[i] * b[i]
    double (*dot)(const double* a, const double* b, std::size_t n);
    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // y = A x, A is rows x cols row-major
    void (*gemv)(const double* A, std::size_t rows, std::size_t cols, const double* x, double* y);
    // y = A^T x, A is rows x cols row-major, y has cols entries
    void (*gemv_t)(const double* A, std::size_t rows, std::size_t cols, const double* x, double* y);
    // A += alpha * u v^T, A is rows x cols row-major
    void (*rank1)(double* A, std::size_t rows, std::size_t cols, double alpha, const double* u,
                  const double* v);
    // y[i] = x[i]^2
    void (*square)(const double* x, double* y, std::size_t n);
    // Adam moment update and parameter step over n entries.
    void (*adam_step)(double* param, const double* grad, double* m1, double* m2, std::size_t n,
                      double lr, double beta1, double beta2, double bias1, double bias2, double eps);
};

const KernelTable& scalar_kernels();

// nullptr when the build or the CPU lacks AVX2+FMA.
const KernelTable* avx2_kernels();

// Kernel table chosen once per process (CPU detection plus ICR_KERNELS override).
const KernelTable& active();

// Overrides the process-wide selection; used by tests and benchmarks.
void set_active(const KernelTable& table);

}  // namespace icr::kernels
