#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace kgqa::kernels {

// Hot inner loops for f32. Every backend must produce bit-identical results:
// the SIMD variants vectorize across independent output elements and keep the
// per-element operation order of the scalar reference (the build disables FP
// contraction). Equivalence is enforced by tests/test_kernels.cpp.
struct Ops {
    const char* name;
    // C = A[m x k] * B[k x n], C overwritten
    void (*gemm_nn)(int m, int k, int n, const float* A, const float* B, float* C);
    // C += A * B
    void (*gemm_nn_acc)(int m, int k, int n, const float* A, const float* B, float* C);
    void (*add)(size_t n, const float* a, const float* b, float* out);
    void (*sub)(size_t n, const float* a, const float* b, float* out);
    void (*mul)(size_t n, const float* a, const float* b, float* out);
    void (*axpy)(size_t n, float alpha, const float* x, float* y);  // y += alpha*x
    void (*scale)(size_t n, float alpha, const float* x, float* out);
};

const Ops& scalar_ops();
bool avx2_supported();
#if defined(__x86_64__) || defined(_M_X64)
const Ops& avx2_ops();
#endif
#if defined(__aarch64__)
const Ops& neon_ops();
#endif

// Active backend: best available, overridable with KGQA_KERNELS=scalar|avx2|neon.
const Ops& active_ops();
// Test hook; pass nullptr to restore automatic selection.
void force_backend(const char* name);
// All backends usable on this machine (for equivalence tests).
std::vector<const Ops*> available_backends();

}  // namespace kgqa::kernels
