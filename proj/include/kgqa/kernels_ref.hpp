#pragma once

#include <cstddef>

namespace kgqa::kernels {

// Reference loops, shared by the f32 scalar backend and the f64 checking path.
// gemm runs i-k-j with a row accumulator so each C element sees a plain
// sequential  c += a*b  chain; SIMD backends replicate exactly this order.

template <typename T>
void gemm_nn_ref(int m, int k, int n, const T* A, const T* B, T* C, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        T* c = C + size_t(i) * n;
        if (!accumulate) {
            for (int j = 0; j < n; ++j) c[j] = T(0);
        }
        const T* arow = A + size_t(i) * k;
        for (int kk = 0; kk < k; ++kk) {
            const T a = arow[kk];
            const T* b = B + size_t(kk) * n;
            for (int j = 0; j < n; ++j) c[j] += a * b[j];
        }
    }
}

template <typename T>
void add_ref(size_t n, const T* a, const T* b, T* out) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void sub_ref(size_t n, const T* a, const T* b, T* out) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

template <typename T>
void mul_ref(size_t n, const T* a, const T* b, T* out) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
void axpy_ref(size_t n, T alpha, const T* x, T* y) {
    for (size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void scale_ref(size_t n, T alpha, const T* x, T* out) {
    for (size_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}

}  // namespace kgqa::kernels
