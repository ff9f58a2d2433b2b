// AVX2 backend. Compiled with -mavx2 only; callers must check
// avx2_supported() before dispatching here.
//
// Vectorization is across output columns (8 per lane group) while the k loop
// stays sequential, so each C element accumulates in the same order as the
// scalar reference. Multiplies and adds are separate instructions; combined
// with -ffp-contract=off this makes every backend bit-identical.

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include "kgqa/kernels.hpp"
#include "kgqa/kernels_ref.hpp"

namespace kgqa::kernels {

namespace {

void gemm_nn_impl(int m, int k, int n, const float* A, const float* B, float* C,
                  bool accumulate) {
    const int n8 = n & ~7;
    for (int i = 0; i < m; ++i) {
        float* c = C + size_t(i) * n;
        if (!accumulate) {
            for (int j = 0; j < n; ++j) c[j] = 0.0f;
        }
        const float* arow = A + size_t(i) * k;
        for (int kk = 0; kk < k; ++kk) {
            const float a = arow[kk];
            const float* b = B + size_t(kk) * n;
            const __m256 av = _mm256_set1_ps(a);
            int j = 0;
            for (; j < n8; j += 8) {
                __m256 cv = _mm256_loadu_ps(c + j);
                __m256 bv = _mm256_loadu_ps(b + j);
                cv = _mm256_add_ps(cv, _mm256_mul_ps(av, bv));
                _mm256_storeu_ps(c + j, cv);
            }
            for (; j < n; ++j) c[j] += a * b[j];
        }
    }
}

void gemm_nn(int m, int k, int n, const float* A, const float* B, float* C) {
    gemm_nn_impl(m, k, n, A, B, C, false);
}
void gemm_nn_acc(int m, int k, int n, const float* A, const float* B, float* C) {
    gemm_nn_impl(m, k, n, A, B, C, true);
}

void add(size_t n, const float* a, const float* b, float* out) {
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(size_t n, const float* a, const float* b, float* out) {
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul(size_t n, const float* a, const float* b, float* out) {
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void axpy(size_t n, float alpha, const float* x, float* y) {
    const __m256 av = _mm256_set1_ps(alpha);
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 yv = _mm256_loadu_ps(y + i);
        yv = _mm256_add_ps(yv, _mm256_mul_ps(av, _mm256_loadu_ps(x + i)));
        _mm256_storeu_ps(y + i, yv);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale(size_t n, float alpha, const float* x, float* out) {
    const __m256 av = _mm256_set1_ps(alpha);
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_mul_ps(av, _mm256_loadu_ps(x + i)));
    for (; i < n; ++i) out[i] = alpha * x[i];
}

}  // namespace

const Ops& avx2_ops() {
    static const Ops ops{"avx2", gemm_nn, gemm_nn_acc, add, sub, mul, axpy, scale};
    return ops;
}

}  // namespace kgqa::kernels

#endif  // x86_64
