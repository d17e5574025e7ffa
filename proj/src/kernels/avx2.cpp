// AVX2 + FMA variants. This file is compiled with -mavx2 -mfma and must only be
// entered after the runtime check in dispatch.cpp succeeds.
#include "icr/kernels.hpp"

#include <immintrin.h>

#include <cmath>

namespace icr::kernels {
namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    }
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vy = _mm256_loadu_pd(y + i);
        vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
        _mm256_storeu_pd(y + i, vy);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void gemv_avx2(const double* A, std::size_t rows, std::size_t cols, const double* x, double* y) {
    std::size_t r = 0;
    // Four rows at a time share the loads of x.
    for (; r + 4 <= rows; r += 4) {
        const double* a0 = A + r * cols;
        const double* a1 = a0 + cols;
        const double* a2 = a1 + cols;
        const double* a3 = a2 + cols;
        __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
        __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
        std::size_t c = 0;
        for (; c + 4 <= cols; c += 4) {
            const __m256d vx = _mm256_loadu_pd(x + c);
            s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a0 + c), vx, s0);
            s1 = _mm256_fmadd_pd(_mm256_loadu_pd(a1 + c), vx, s1);
            s2 = _mm256_fmadd_pd(_mm256_loadu_pd(a2 + c), vx, s2);
            s3 = _mm256_fmadd_pd(_mm256_loadu_pd(a3 + c), vx, s3);
        }
        double t0 = hsum(s0), t1 = hsum(s1), t2 = hsum(s2), t3 = hsum(s3);
        for (; c < cols; ++c) {
            t0 += a0[c] * x[c];
            t1 += a1[c] * x[c];
            t2 += a2[c] * x[c];
            t3 += a3[c] * x[c];
        }
        y[r] = t0;
        y[r + 1] = t1;
        y[r + 2] = t2;
        y[r + 3] = t3;
    }
    for (; r < rows; ++r) y[r] = dot_avx2(A + r * cols, x, cols);
}

void gemv_t_avx2(const double* A, std::size_t rows, std::size_t cols, const double* x, double* y) {
    for (std::size_t c = 0; c < cols; ++c) y[c] = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        if (x[r] != 0.0) axpy_avx2(x[r], A + r * cols, y, cols);
    }
}

void rank1_avx2(double* A, std::size_t rows, std::size_t cols, double alpha, const double* u,
                const double* v) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double s = alpha * u[r];
        if (s != 0.0) axpy_avx2(s, v, A + r * cols, cols);
    }
}

void square_avx2(const double* x, double* y, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d v = _mm256_loadu_pd(x + i);
        _mm256_storeu_pd(y + i, _mm256_mul_pd(v, v));
    }
    for (; i < n; ++i) y[i] = x[i] * x[i];
}

void adam_avx2(double* param, const double* grad, double* m1, double* m2, std::size_t n, double lr,
               double beta1, double beta2, double bias1, double bias2, double eps) {
    const __m256d b1 = _mm256_set1_pd(beta1), nb1 = _mm256_set1_pd(1.0 - beta1);
    const __m256d b2 = _mm256_set1_pd(beta2), nb2 = _mm256_set1_pd(1.0 - beta2);
    const __m256d ib1 = _mm256_set1_pd(1.0 / bias1), ib2 = _mm256_set1_pd(1.0 / bias2);
    const __m256d vlr = _mm256_set1_pd(lr), veps = _mm256_set1_pd(eps);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d g = _mm256_loadu_pd(grad + i);
        __m256d a = _mm256_loadu_pd(m1 + i);
        __m256d b = _mm256_loadu_pd(m2 + i);
        a = _mm256_add_pd(_mm256_mul_pd(b1, a), _mm256_mul_pd(nb1, g));
        b = _mm256_add_pd(_mm256_mul_pd(b2, b), _mm256_mul_pd(nb2, _mm256_mul_pd(g, g)));
        _mm256_storeu_pd(m1 + i, a);
        _mm256_storeu_pd(m2 + i, b);
        const __m256d mhat = _mm256_mul_pd(a, ib1);
        const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(_mm256_mul_pd(b, ib2)), veps);
        __m256d p = _mm256_loadu_pd(param + i);
        p = _mm256_sub_pd(p, _mm256_div_pd(_mm256_mul_pd(vlr, mhat), denom));
        _mm256_storeu_pd(param + i, p);
    }
    for (; i < n; ++i) {
        m1[i] = beta1 * m1[i] + (1.0 - beta1) * grad[i];
        m2[i] = beta2 * m2[i] + (1.0 - beta2) * grad[i] * grad[i];
        param[i] -= lr * (m1[i] / bias1) / (std::sqrt(m2[i] / bias2) + eps);
    }
}

}  // namespace

const KernelTable& avx2_table() {
    static const KernelTable table{"avx2", dot_avx2,    axpy_avx2,   gemv_avx2,
                                   gemv_t_avx2, rank1_avx2, square_avx2, adam_avx2};
    return table;
}

}  // namespace icr::kernels
