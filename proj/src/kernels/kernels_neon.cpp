// NEON backend (aarch64). Same output-column vectorization and operation
// order as the scalar reference; vmulq/vaddq are kept separate (no fused
// multiply-add) so results stay bit-identical across backends.

#if defined(__aarch64__)

#include <arm_neon.h>

#include "kgqa/kernels.hpp"

namespace kgqa::kernels {

namespace {

void gemm_nn_impl(int m, int k, int n, const float* A, const float* B, float* C,
                  bool accumulate) {
    const int n4 = n & ~3;
    for (int i = 0; i < m; ++i) {
        float* c = C + size_t(i) * n;
        if (!accumulate) {
            for (int j = 0; j < n; ++j) c[j] = 0.0f;
        }
        const float* arow = A + size_t(i) * k;
        for (int kk = 0; kk < k; ++kk) {
            const float a = arow[kk];
            const float* b = B + size_t(kk) * n;
            const float32x4_t av = vdupq_n_f32(a);
            int j = 0;
            for (; j < n4; j += 4) {
                float32x4_t cv = vld1q_f32(c + j);
                cv = vaddq_f32(cv, vmulq_f32(av, vld1q_f32(b + j)));
                vst1q_f32(c + j, cv);
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
    for (; i + 4 <= n; i += 4) vst1q_f32(out + i, vaddq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(size_t n, const float* a, const float* b, float* out) {
    size_t i = 0;
    for (; i + 4 <= n; i += 4) vst1q_f32(out + i, vsubq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul(size_t n, const float* a, const float* b, float* out) {
    size_t i = 0;
    for (; i + 4 <= n; i += 4) vst1q_f32(out + i, vmulq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void axpy(size_t n, float alpha, const float* x, float* y) {
    const float32x4_t av = vdupq_n_f32(alpha);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        float32x4_t yv = vld1q_f32(y + i);
        yv = vaddq_f32(yv, vmulq_f32(av, vld1q_f32(x + i)));
        vst1q_f32(y + i, yv);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale(size_t n, float alpha, const float* x, float* out) {
    const float32x4_t av = vdupq_n_f32(alpha);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) vst1q_f32(out + i, vmulq_f32(av, vld1q_f32(x + i)));
    for (; i < n; ++i) out[i] = alpha * x[i];
}

}  // namespace

const Ops& neon_ops() {
    static const Ops ops{"neon", gemm_nn, gemm_nn_acc, add, sub, mul, axpy, scale};
    return ops;
}

}  // namespace kgqa::kernels

#endif  // aarch64
