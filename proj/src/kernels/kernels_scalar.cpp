#include "kgqa/kernels.hpp"
#include "kgqa/kernels_ref.hpp"

namespace kgqa::kernels {

namespace {

void gemm_nn(int m, int k, int n, const float* A, const float* B, float* C) {
    gemm_nn_ref(m, k, n, A, B, C, false);
}
void gemm_nn_acc(int m, int k, int n, const float* A, const float* B, float* C) {
    gemm_nn_ref(m, k, n, A, B, C, true);
}
void add(size_t n, const float* a, const float* b, float* out) { add_ref(n, a, b, out); }
void sub(size_t n, const float* a, const float* b, float* out) { sub_ref(n, a, b, out); }
void mul(size_t n, const float* a, const float* b, float* out) { mul_ref(n, a, b, out); }
void axpy(size_t n, float alpha, const float* x, float* y) { axpy_ref(n, alpha, x, y); }
void scale(size_t n, float alpha, const float* x, float* out) { scale_ref(n, alpha, x, out); }

}  // namespace

const Ops& scalar_ops() {
    static const Ops ops{"scalar", gemm_nn, gemm_nn_acc, add, sub, mul, axpy, scale};
    return ops;
}

}  // namespace kgqa::kernels
