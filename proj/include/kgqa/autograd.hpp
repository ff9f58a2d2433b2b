#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "kgqa/common.hpp"
#include "kgqa/kernels.hpp"
#include "kgqa/kernels_ref.hpp"
#include "kgqa/tensor.hpp"

namespace kgqa {

template <typename T>
struct ParamT {
    std::string name;
    TensorT<T> value;
    TensorT<T> grad;
    bool trainable = true;

    ParamT() = default;
    ParamT(std::string n, TensorT<T> v)
        : name(std::move(n)), value(std::move(v)), grad(value.rows, value.cols) {}
};

using Param = ParamT<float>;

inline constexpr double kLayerNormEps = 1e-5;
// gelu(x) = 0.5 x (1 + tanh(c0 (x + c1 x^3)))
inline constexpr double kGeluC0 = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double kGeluC1 = 0.044715;
// Additive mask value for padded attention keys. exp(x - max) underflows to
// exactly 0 for masked entries, which makes padding invariance bit-exact.
inline constexpr double kMaskFill = -1e9;

namespace ops {

template <typename T>
void gemm(const TensorT<T>& a, const TensorT<T>& b, TensorT<T>& c, bool acc) {
    if constexpr (std::is_same_v<T, float>) {
        auto& k = kernels::active_ops();
        (acc ? k.gemm_nn_acc : k.gemm_nn)(a.rows, a.cols, b.cols, a.data.data(), b.data.data(),
                                          c.data.data());
    } else {
        kernels::gemm_nn_ref(a.rows, a.cols, b.cols, a.data.data(), b.data.data(), c.data.data(),
                             acc);
    }
}

template <typename T>
void add(const TensorT<T>& a, const TensorT<T>& b, TensorT<T>& out) {
    if constexpr (std::is_same_v<T, float>)
        kernels::active_ops().add(a.numel(), a.data.data(), b.data.data(), out.data.data());
    else
        kernels::add_ref(a.numel(), a.data.data(), b.data.data(), out.data.data());
}

template <typename T>
void axpy(T alpha, const TensorT<T>& x, TensorT<T>& y) {
    if constexpr (std::is_same_v<T, float>)
        kernels::active_ops().axpy(x.numel(), alpha, x.data.data(), y.data.data());
    else
        kernels::axpy_ref(x.numel(), alpha, x.data.data(), y.data.data());
}

template <typename T>
TensorT<T> transposed(const TensorT<T>& a) {
    TensorT<T> out(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) out.at(j, i) = a.at(i, j);
    return out;
}

}  // namespace ops

// Reverse-mode tape over dense matrices. Nodes are appended in forward order,
// which is a valid topological order, so backward() is a single reverse sweep.
// Forward values are deterministic; every reduction in forward and backward
// runs in a fixed ascending-index order.
template <typename T>
class GraphT {
public:
    using Id = int32_t;

    GraphT() { nodes_.reserve(256); }

    Id constant(TensorT<T> v) { return push(std::move(v), false, nullptr); }

    Id param(ParamT<T>& p) {
        Id id = push(p.value, true, &p);  // copies; tape owns its values
        return id;
    }

    const TensorT<T>& value(Id id) const { return nodes_[id].value; }
    TensorT<T>& grad(Id id) { return nodes_[id].grad; }
    bool needs_grad(Id id) const { return nodes_[id].needs_grad; }
    size_t size() const { return nodes_.size(); }

    // ---- primitives ----

    Id matmul(Id a, Id b) {
        auto &A = val(a), &B = val(b);
        require(A.cols == B.rows, "matmul: inner dims differ, ", shape_str(A), " vs ",
                shape_str(B));
        TensorT<T> out(A.rows, B.cols);
        ops::gemm(A, B, out, false);
        Id r = push(std::move(out), any_grad({a, b}), nullptr);
        if (nodes_[r].needs_grad)
            nodes_[r].back = [this, a, b, r] {
                auto& g = grad(r);
                if (needs_grad(a)) {
                    TensorT<T> bt = ops::transposed(val(b));
                    ops::gemm(g, bt, grad(a), true);
                }
                if (needs_grad(b)) {
                    TensorT<T> at = ops::transposed(val(a));
                    ops::gemm(at, g, grad(b), true);
                }
            };
        return r;
    }

    Id add(Id a, Id b) {
        auto &A = val(a), &B = val(b);
        require(A.same_shape(B), "add: shape mismatch, ", shape_str(A), " vs ", shape_str(B));
        TensorT<T> out(A.rows, A.cols);
        ops::add(A, B, out);
        Id r = push(std::move(out), any_grad({a, b}), nullptr);
        if (nodes_[r].needs_grad)
            nodes_[r].back = [this, a, b, r] {
                if (needs_grad(a)) ops::axpy(T(1), grad(r), grad(a));
                if (needs_grad(b)) ops::axpy(T(1), grad(r), grad(b));
            };
        return r;
    }

    // a[m x n] + row[1 x n] broadcast over rows (bias add)
    Id add_rowvec(Id a, Id rv) {
        auto &A = val(a), &R = val(rv);
        require(R.rows == 1 && R.cols == A.cols, "add_rowvec: want 1x", A.cols, ", got ",
                shape_str(R));
        TensorT<T> out(A.rows, A.cols);
        for (int i = 0; i < A.rows; ++i)
            for (int j = 0; j < A.cols; ++j) out.at(i, j) = A.at(i, j) + R.at(0, j);
        Id r = push(std::move(out), any_grad({a, rv}), nullptr);
        if (nodes_[r].needs_grad)
            nodes_[r].back = [this, a, rv, r] {
                auto& g = grad(r);
                if (needs_grad(a)) ops::axpy(T(1), g, grad(a));
                if (needs_grad(rv)) {
                    auto& gr = grad(rv);
                    for (int i = 0; i < g.rows; ++i)
                        for (int j = 0; j < g.cols; ++j) gr.at(0, j) += g.at(i, j);
                }
            };
        return r;
    }

    Id mul_scalar(Id a, T s) {
        auto& A = val(a);
        TensorT<T> out(A.rows, A.cols);
        if constexpr (std::is_same_v<T, float>)
            kernels::active_ops().scale(A.numel(), s, A.data.data(), out.data.data());
        else
            kernels::scale_ref(A.numel(), s, A.data.data(), out.data.data());
        Id r = push(std::move(out), any_grad({a}), nullptr);
        if (nodes_[r].needs_grad)
            nodes_[r].back = [this, a, s, r] { ops::axpy(s, grad(r), grad(a)); };
        return r;
    }

    Id hadamard(Id a, Id b) {
        auto &A = val(a), &B = val(b);
        require(A.same_shape(B), "hadamard: shape mismatch, ", shape_str(A), " vs ", shape_str(B));
        TensorT<T> out(A.rows, A.cols);
        if constexpr (std::is_same_v<T, float>)
            kernels::active_ops().mul(A.numel(), A.data.data(), B.data.data(), out.data.data());
        else
            kernels::mul_ref(A.numel(), A.data.data(), B.data.data(), out.data.data());
        Id r = push(std::move(out), any_grad({a, b}), nullptr);
        if (nodes_[r].needs_grad)
            nodes_[r].back = [this, a, b, r] {
                auto& g = grad(r);
                if (needs_grad(a))
                    for (size_t i = 0; i < g.numel(); ++i)
                        grad(a).data[i] += g.data[i] * val(b).data[i];
                if (needs_grad(b))
                    for (size_t i = 0; i < g.numel(); ++i)
                        grad(b).data[i] += g.data[i] * val(a).data[i];
            };
        return r;
    }

    Id concat_cols(const std::vector<Id>& parts) {
        require(!parts.empty(), "concat_cols: empty input");
        int rows = val(parts[0]).rows, cols = 0;
        for (Id p : parts) {
            require(val(p).rows == rows, "concat_cols: row mismatch, ", shape_str(val(p)),
                    " vs ", rows, " rows");
            cols += val(p).cols;
        }
        TensorT<T> out(rows, cols);
        int off = 0;
        for (Id p : parts) {
            auto& P = val(p);
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < P.cols; ++j) out.at(i, off + j) = P.at(i, j);
            off += P.cols;
        }
        bool ng = false;
        for (Id p : parts) ng = ng || needs_grad(p);
        Id r = push(std::move(out), ng, nullptr);
        if (ng)
            nodes_[r].back = [this, parts, r] {
                auto& g = grad(r);
                int off = 0;
                for (Id p : parts) {
                    auto& P = val(p);
                    if (needs_grad(p)) {
                        auto& gp = grad(p);
                        for (int i = 0; i < g.rows; ++i)
                            for (int j = 0; j < P.cols; ++j) gp.at(i, j) += g.at(i, off + j);
                    }
                    off += P.cols;
                }
            };
        return r;
    }

    Id concat_rows(const std::vector<Id>& parts) {
        require(!parts.empty(), "concat_rows: empty input");
        int cols = val(parts[0]).cols, rows = 0;
        for (Id p : parts) {
            require(val(p).cols == cols, "concat_rows: col mismatch, ", shape_str(val(p)),
                    " vs ", cols, " cols");
            rows += val(p).rows;
        }
        TensorT<T> out(rows, cols);
        int off = 0;
        for (Id p : parts) {
            auto& P = val(p);
            for (int i = 0; i < P.rows; ++i)
                for (int j = 0; j < cols; ++j) out.at(off + i, j) = P.at(i, j);
            off += P.rows;
        }
        bool ng = false;
        for (Id p : parts) ng = ng || needs_grad(p);
        Id r = push(std::move(out), ng, nullptr);
        if (ng)
            nodes_[r].back = [this, parts, r] {
                auto& g = grad(r);
                int off = 0;
                for (Id p : parts) {
                    auto& P = val(p);
                    if (needs_grad(p)) {
                        auto& gp = grad(p);
                        for (int i = 0; i < P.rows; ++i)
                            for (int j = 0; j < g.cols; ++j) gp.at(i, j) += g.at(off + i, j);
                    }
                    off += P.rows;
                }
            };
        return r;
    }

    Id slice_cols(Id a, int c0, int w) {
        auto& A = val(a);
        require(c0 >= 0 && w > 0 && c0 + w <= A.cols, "slice_cols: [", c0, ",", c0 + w,
                ") out of range for ", shape_str(A));
        TensorT<T> out(A.rows, w);
        for (int i = 0; i < A.rows; ++i)
            for (int j = 0; j < w; ++j) out.at(i, j) = A.at(i, c0 + j);
        Id r = push(std::move(out), any_grad({a}), nullptr);
        if (nodes_[r].needs_grad)
            nodes_[r].back = [this, a, c0, w, r] {
                auto& g = grad(r);
                auto& ga = grad(a);
                for (int i = 0; i < g.rows; ++i)
                    for (int j = 0; j < w; ++j) ga.at(i, c0 + j) += g.at(i, j);
            };
        return r;
    }

    Id slice_rows(Id a, int r0, int h) {
        auto& A = val(a);
        require(r0 >= 0 && h > 0 && r0 + h <= A.rows, "slice_rows: [", r0, ",", r0 + h,
                ") out of range for ", shape_str(A));
        TensorT<T> out(h, A.cols);
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < A.cols; ++j) out.at(i, j) = A.at(r0 + i, j);
        Id r = push(std::move(out), any_grad({a}), nullptr);
        if (nodes_[r].needs_grad)
            nodes_[r].back = [this, a, r0, h, r] {
                auto& g = grad(r);
                auto& ga = grad(a);
                for (int i = 0; i < h; ++i)
                    for (int j = 0; j < g.cols; ++j) ga.at(r0 + i, j) += g.at(i, j);
            };
        return r;
    }

    Id transpose(Id a) {
        Id r = push(ops::transposed(val(a)), any_grad({a}), nullptr);
        if (nodes_[r].needs_grad)
            nodes_[r].back = [this, a, r] {
                TensorT<T> gt = ops::transposed(grad(r));
                ops::axpy(T(1), gt, grad(a));
            };
        return r;
    }

    // out = a with row `row` replaced by src (1 x cols). Untouched rows are
    // copied bit-exactly; the fusion pass-through rule depends on this.
    Id replace_row(Id a, Id src, int row) {
        auto &A = val(a), &S = val(src);
        require(S.rows == 1 && S.cols == A.cols, "replace_row: want 1x", A.cols, ", got ",
                shape_str(S));
        require(row >= 0 && row < A.rows, "replace_row: row ", row, " out of range for ",
                shape_str(A));
        TensorT<T> out = A;
        for (int j = 0; j < A.cols; ++j) out.at(row, j) = S.at(0, j);
        Id r = push(std::move(out), any_grad({a, src}), nullptr);
        if (nodes_[r].needs_grad)
            nodes_[r].back = [this, a, src, row, r] {
                auto& g = grad(r);
                if (needs_grad(a)) {
                    auto& ga = grad(a);
                    for (int i = 0; i < g.rows; ++i) {
                        if (i == row) continue;
                        for (int j = 0; j < g.cols; ++j) ga.at(i, j) += g.at(i, j);
                    }
                }
                if (needs_grad(src)) {
                    auto& gs = grad(src);
                    for (int j = 0; j < g.cols; ++j) gs.at(0, j) += g.at(row, j);
                }
            };
        return r;
    }

    Id row_softmax(Id a) {
        auto& A = val(a);
        TensorT<T> out(A.rows, A.cols);
        for (int i = 0; i < A.rows; ++i) {
            T mx = A.at(i, 0);
            for (int j = 1; j < A.cols; ++j) mx = std::max(mx, A.at(i, j));
            T sum = T(0);
            for (int j = 0; j < A.cols; ++j) {
                T e = std::exp(A.at(i, j) - mx);
                out.at(i, j) = e;
                sum += e;
            }
            T inv = T(1) / sum;
            for (int j = 0; j < A.cols; ++j) out.at(i, j) *= inv;
        }
        Id r = push(std::move(out), any_grad({a}), nullptr);
        if (nodes_[r].needs_grad)
            nodes_[r].back = [this, a, r] {
                auto& g = grad(r);
                auto& y = val(r);
                auto& ga = grad(a);
                for (int i = 0; i < g.rows; ++i) {
                    T dot = T(0);
                    for (int j = 0; j < g.cols; ++j) dot += g.at(i, j) * y.at(i, j);
                    for (int j = 0; j < g.cols; ++j)
                        ga.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
                }
            };
        return r;
    }

    // keep[j] == 0 -> column j set to `fill` in every row (pre-softmax key mask)
    Id masked_fill_cols(Id a, std::vector<uint8_t> keep, T fill) {
        auto& A = val(a);
        require(int(keep.size()) == A.cols, "masked_fill_cols: mask length ", keep.size(),
                " vs cols ", A.cols);
        TensorT<T> out = A;
        for (int i = 0; i < A.rows; ++i)
            for (int j = 0; j < A.cols; ++j)
                if (!keep[j]) out.at(i, j) = fill;
        Id r = push(std::move(out), any_grad({a}), nullptr);
        if (nodes_[r].needs_grad)
            nodes_[r].back = [this, a, keep = std::move(keep), r] {
                auto& g = grad(r);
                auto& ga = grad(a);
                for (int i = 0; i < g.rows; ++i)
                    for (int j = 0; j < g.cols; ++j)
                        if (keep[j]) ga.at(i, j) += g.at(i, j);
            };
        return r;
    }

    Id layer_norm(Id x, Id gamma, Id beta) {
        auto &X = val(x), &G = val(gamma), &B = val(beta);
        require(G.rows == 1 && G.cols == X.cols && B.rows == 1 && B.cols == X.cols,
                "layer_norm: affine params want 1x", X.cols, ", got ", shape_str(G), " and ",
                shape_str(B));
        const int n = X.cols;
        TensorT<T> out(X.rows, n);
        TensorT<T> norm(X.rows, n);      // (x - mean) / std, pre-affine
        TensorT<T> inv_std(X.rows, 1);
        for (int i = 0; i < X.rows; ++i) {
            T mean = T(0);
            for (int j = 0; j < n; ++j) mean += X.at(i, j);
            mean /= T(n);
            T var = T(0);
            for (int j = 0; j < n; ++j) {
                T d = X.at(i, j) - mean;
                var += d * d;
            }
            var /= T(n);
            T inv = T(1) / std::sqrt(var + T(kLayerNormEps));
            inv_std.at(i, 0) = inv;
            for (int j = 0; j < n; ++j) {
                T y = (X.at(i, j) - mean) * inv;
                norm.at(i, j) = y;
                out.at(i, j) = y * G.at(0, j) + B.at(0, j);
            }
        }
        Id r = push(std::move(out), any_grad({x, gamma, beta}), nullptr);
        if (nodes_[r].needs_grad)
            nodes_[r].back = [this, x, gamma, beta, r, norm = std::move(norm),
                              inv_std = std::move(inv_std)] {
                auto& g = grad(r);
                auto& G = val(gamma);
                const int n = g.cols;
                if (needs_grad(gamma) || needs_grad(beta)) {
                    for (int i = 0; i < g.rows; ++i)
                        for (int j = 0; j < n; ++j) {
                            if (needs_grad(gamma)) grad(gamma).at(0, j) += g.at(i, j) * norm.at(i, j);
                            if (needs_grad(beta)) grad(beta).at(0, j) += g.at(i, j);
                        }
                }
                if (needs_grad(x)) {
                    auto& gx = grad(x);
                    for (int i = 0; i < g.rows; ++i) {
                        T sum_d = T(0), sum_dy = T(0);
                        for (int j = 0; j < n; ++j) {
                            T d = g.at(i, j) * G.at(0, j);
                            sum_d += d;
                            sum_dy += d * norm.at(i, j);
                        }
                        T inv = inv_std.at(i, 0);
                        for (int j = 0; j < n; ++j) {
                            T d = g.at(i, j) * G.at(0, j);
                            gx.at(i, j) +=
                                inv * (d - sum_d / T(n) - norm.at(i, j) * sum_dy / T(n));
                        }
                    }
                }
            };
        return r;
    }

    Id gelu(Id a) {
        auto& A = val(a);
        TensorT<T> out(A.rows, A.cols);
        for (size_t i = 0; i < A.numel(); ++i) {
            T x = A.data[i];
            T u = T(kGeluC0) * (x + T(kGeluC1) * x * x * x);
            out.data[i] = T(0.5) * x * (T(1) + std::tanh(u));
        }
        Id r = push(std::move(out), any_grad({a}), nullptr);
        if (nodes_[r].needs_grad)
            nodes_[r].back = [this, a, r] {
                auto& g = grad(r);
                auto& A = val(a);
                auto& ga = grad(a);
                for (size_t i = 0; i < A.numel(); ++i) {
                    T x = A.data[i];
                    T u = T(kGeluC0) * (x + T(kGeluC1) * x * x * x);
                    T t = std::tanh(u);
                    T du = T(kGeluC0) * (T(1) + T(3) * T(kGeluC1) * x * x);
                    T d = T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * du;
                    ga.data[i] += g.data[i] * d;
                }
            };
        return r;
    }

    // Inverted dropout with an explicit 0/1 mask: out = x * mask / (1 - rate).
    Id dropout(Id a, std::vector<uint8_t> mask, T rate) {
        auto& A = val(a);
        require(rate >= T(0) && rate < T(1), "dropout: rate ", double(rate), " out of [0,1)");
        require(mask.size() == A.numel(), "dropout: mask size ", mask.size(), " vs ", A.numel());
        const T keep_inv = T(1) / (T(1) - rate);
        TensorT<T> out(A.rows, A.cols);
        for (size_t i = 0; i < A.numel(); ++i)
            out.data[i] = mask[i] ? A.data[i] * keep_inv : T(0);
        Id r = push(std::move(out), any_grad({a}), nullptr);
        if (nodes_[r].needs_grad)
            nodes_[r].back = [this, a, r, mask = std::move(mask), keep_inv] {
                auto& g = grad(r);
                auto& ga = grad(a);
                for (size_t i = 0; i < g.numel(); ++i)
                    if (mask[i]) ga.data[i] += g.data[i] * keep_inv;
            };
        return r;
    }

    // Embedding lookup / row gather. Backward scatter-adds in ascending index
    // order (deterministic).
    Id gather_rows(Id table, std::vector<int32_t> ids) {
        auto& Tb = val(table);
        for (size_t i = 0; i < ids.size(); ++i)
            require(ids[i] >= 0 && ids[i] < Tb.rows, "gather_rows: id ", ids[i], " at position ",
                    i, " out of range for ", shape_str(Tb));
        TensorT<T> out(int(ids.size()), Tb.cols);
        for (size_t i = 0; i < ids.size(); ++i)
            for (int j = 0; j < Tb.cols; ++j) out.at(int(i), j) = Tb.at(ids[i], j);
        Id r = push(std::move(out), any_grad({table}), nullptr);
        if (nodes_[r].needs_grad)
            nodes_[r].back = [this, table, r, ids = std::move(ids)] {
                auto& g = grad(r);
                auto& gt = grad(table);
                for (size_t i = 0; i < ids.size(); ++i)
                    for (int j = 0; j < g.cols; ++j) gt.at(ids[i], j) += g.at(int(i), j);
            };
        return r;
    }

    // Softmax over contiguous segments of a column vector. `seg` must be
    // non-decreasing; each segment normalizes to 1.
    Id segment_softmax(Id logits, std::vector<int32_t> seg, int nseg) {
        auto& L = val(logits);
        require(L.cols == 1, "segment_softmax: want column vector, got ", shape_str(L));
        require(int(seg.size()) == L.rows, "segment_softmax: seg size ", seg.size(), " vs rows ",
                L.rows);
        TensorT<T> out(L.rows, 1);
        int b = 0;
        while (b < L.rows) {
            int e = b;
            while (e < L.rows && seg[e] == seg[b]) ++e;
            T mx = L.at(b, 0);
            for (int i = b + 1; i < e; ++i) mx = std::max(mx, L.at(i, 0));
            T sum = T(0);
            for (int i = b; i < e; ++i) {
                T v = std::exp(L.at(i, 0) - mx);
                out.at(i, 0) = v;
                sum += v;
            }
            T inv = T(1) / sum;
            for (int i = b; i < e; ++i) out.at(i, 0) *= inv;
            b = e;
        }
        (void)nseg;
        Id r = push(std::move(out), any_grad({logits}), nullptr);
        if (nodes_[r].needs_grad)
            nodes_[r].back = [this, logits, r, seg = std::move(seg)] {
                auto& g = grad(r);
                auto& y = val(r);
                auto& gl = grad(logits);
                int b = 0;
                while (b < g.rows) {
                    int e = b;
                    while (e < g.rows && seg[e] == seg[b]) ++e;
                    T dot = T(0);
                    for (int i = b; i < e; ++i) dot += g.at(i, 0) * y.at(i, 0);
                    for (int i = b; i < e; ++i)
                        gl.at(i, 0) += y.at(i, 0) * (g.at(i, 0) - dot);
                    b = e;
                }
            };
        return r;
    }

    // Sum rows into their segment slot: out[s] = sum of rows with seg == s.
    Id segment_sum(Id rows, std::vector<int32_t> seg, int nseg) {
        auto& R = val(rows);
        require(int(seg.size()) == R.rows, "segment_sum: seg size ", seg.size(), " vs rows ",
                R.rows);
        TensorT<T> out(nseg, R.cols);
        for (int i = 0; i < R.rows; ++i) {
            require(seg[i] >= 0 && seg[i] < nseg, "segment_sum: segment ", seg[i],
                    " out of range ", nseg);
            for (int j = 0; j < R.cols; ++j) out.at(seg[i], j) += R.at(i, j);
        }
        Id r = push(std::move(out), any_grad({rows}), nullptr);
        if (nodes_[r].needs_grad)
            nodes_[r].back = [this, rows, r, seg = std::move(seg)] {
                auto& g = grad(r);
                auto& gr = grad(rows);
                for (int i = 0; i < gr.rows; ++i)
                    for (int j = 0; j < g.cols; ++j) gr.at(i, j) += g.at(seg[i], j);
            };
        return r;
    }

    // rows[i, :] * s[i]
    Id scale_rows(Id rows, Id s) {
        auto &R = val(rows), &S = val(s);
        require(S.cols == 1 && S.rows == R.rows, "scale_rows: want ", R.rows, "x1, got ",
                shape_str(S));
        TensorT<T> out(R.rows, R.cols);
        for (int i = 0; i < R.rows; ++i)
            for (int j = 0; j < R.cols; ++j) out.at(i, j) = R.at(i, j) * S.at(i, 0);
        Id r = push(std::move(out), any_grad({rows, s}), nullptr);
        if (nodes_[r].needs_grad)
            nodes_[r].back = [this, rows, s, r] {
                auto& g = grad(r);
                auto &R = val(rows), &S = val(s);
                if (needs_grad(rows)) {
                    auto& gr = grad(rows);
                    for (int i = 0; i < g.rows; ++i)
                        for (int j = 0; j < g.cols; ++j) gr.at(i, j) += g.at(i, j) * S.at(i, 0);
                }
                if (needs_grad(s)) {
                    auto& gs = grad(s);
                    for (int i = 0; i < g.rows; ++i) {
                        T dot = T(0);
                        for (int j = 0; j < g.cols; ++j) dot += g.at(i, j) * R.at(i, j);
                        gs.at(i, 0) += dot;
                    }
                }
            };
        return r;
    }

    Id row_sum(Id a) {
        auto& A = val(a);
        TensorT<T> out(A.rows, 1);
        for (int i = 0; i < A.rows; ++i) {
            T s = T(0);
            for (int j = 0; j < A.cols; ++j) s += A.at(i, j);
            out.at(i, 0) = s;
        }
        Id r = push(std::move(out), any_grad({a}), nullptr);
        if (nodes_[r].needs_grad)
            nodes_[r].back = [this, a, r] {
                auto& g = grad(r);
                auto& ga = grad(a);
                for (int i = 0; i < ga.rows; ++i)
                    for (int j = 0; j < ga.cols; ++j) ga.at(i, j) += g.at(i, 0);
            };
        return r;
    }

    Id sum_all(Id a) {
        auto& A = val(a);
        T s = T(0);
        for (size_t i = 0; i < A.numel(); ++i) s += A.data[i];
        TensorT<T> out(1, 1);
        out.at(0, 0) = s;
        Id r = push(std::move(out), any_grad({a}), nullptr);
        if (nodes_[r].needs_grad)
            nodes_[r].back = [this, a, r] {
                auto& ga = grad(a);
                T g = grad(r).at(0, 0);
                for (size_t i = 0; i < ga.numel(); ++i) ga.data[i] += g;
            };
        return r;
    }

    Id stack_scalars(const std::vector<Id>& xs) {
        require(!xs.empty(), "stack_scalars: empty input");
        TensorT<T> out(1, int(xs.size()));
        bool ng = false;
        for (size_t i = 0; i < xs.size(); ++i) {
            auto& X = val(xs[i]);
            require(X.rows == 1 && X.cols == 1, "stack_scalars: element ", i, " has shape ",
                    shape_str(X));
            out.at(0, int(i)) = X.at(0, 0);
            ng = ng || needs_grad(xs[i]);
        }
        Id r = push(std::move(out), ng, nullptr);
        if (ng)
            nodes_[r].back = [this, xs, r] {
                auto& g = grad(r);
                for (size_t i = 0; i < xs.size(); ++i)
                    if (needs_grad(xs[i])) grad(xs[i]).at(0, 0) += g.at(0, int(i));
            };
        return r;
    }

    // Stable softmax cross-entropy over a [1 x K] logit row.
    Id cross_entropy(Id logits, int label) {
        auto& L = val(logits);
        require(L.rows == 1 && L.cols >= 1, "cross_entropy: want 1xK logits, got ", shape_str(L));
        require(label >= 0 && label < L.cols, "cross_entropy: label ", label, " out of range ",
                L.cols);
        T mx = L.at(0, 0);
        for (int j = 1; j < L.cols; ++j) mx = std::max(mx, L.at(0, j));
        T sum = T(0);
        std::vector<T> probs(L.cols);
        for (int j = 0; j < L.cols; ++j) {
            probs[j] = std::exp(L.at(0, j) - mx);
            sum += probs[j];
        }
        for (auto& p : probs) p /= sum;
        TensorT<T> out(1, 1);
        out.at(0, 0) = std::log(sum) + mx - L.at(0, label);
        Id r = push(std::move(out), any_grad({logits}), nullptr);
        if (nodes_[r].needs_grad)
            nodes_[r].back = [this, logits, label, r, probs = std::move(probs)] {
                T g = grad(r).at(0, 0);
                auto& gl = grad(logits);
                for (int j = 0; j < gl.cols; ++j)
                    gl.at(0, j) += g * (probs[j] - (j == label ? T(1) : T(0)));
            };
        return r;
    }

    // ---- backward ----

    // Single reverse sweep. With accumulate_into_params (the default) every
    // parameter node then adds its grad into ParamT::grad; parameters not
    // touched by the graph keep their current (zero) grad. Pass false when
    // running backward on worker threads and call flush_param_grads() from
    // the owning thread in a fixed order.
    void backward(Id loss, bool accumulate_into_params = true) {
        require(!backward_done_, "backward: called twice without reset");
        auto& L = val(loss);
        require(L.rows == 1 && L.cols == 1, "backward: loss must be scalar, got ", shape_str(L));
        require(nodes_[loss].needs_grad, "backward: loss does not depend on any parameter");
        backward_done_ = true;
        for (auto& n : nodes_)
            if (n.needs_grad) n.grad = TensorT<T>(n.value.rows, n.value.cols);
        nodes_[loss].grad.at(0, 0) = T(1);
        for (Id i = Id(nodes_.size()) - 1; i >= 0; --i) {
            auto& n = nodes_[i];
            if (!n.needs_grad) continue;
            if (n.back) n.back();
        }
        if (accumulate_into_params) flush_param_grads();
    }

    // Adds every parameter leaf's grad into its ParamT::grad, in node
    // creation order (deterministic).
    void flush_param_grads() {
        require(backward_done_, "flush_param_grads: backward has not run");
        for (auto& n : nodes_)
            if (n.param && n.needs_grad) ops::axpy(T(1), n.grad, n.param->grad);
    }

    void reset() {
        nodes_.clear();
        backward_done_ = false;
    }

private:
    struct Node {
        TensorT<T> value;
        TensorT<T> grad;
        bool needs_grad = false;
        ParamT<T>* param = nullptr;
        std::function<void()> back;
    };

    const TensorT<T>& val(Id id) const { return nodes_[id].value; }

    bool any_grad(std::initializer_list<Id> ids) const {
        for (Id i : ids)
            if (nodes_[i].needs_grad) return true;
        return false;
    }

    Id push(TensorT<T> v, bool needs, ParamT<T>* p) {
        Node n;
        n.value = std::move(v);
        n.needs_grad = needs;
        n.param = p;
        nodes_.push_back(std::move(n));
        return Id(nodes_.size()) - 1;
    }

    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

using Graph = GraphT<float>;

// Deterministic dropout mask for one call site. Seed combination is
// counter-based so evaluation order never matters.
inline std::vector<uint8_t> make_dropout_mask(size_t n, double rate, uint64_t seed) {
    std::vector<uint8_t> mask(n);
    Rng rng(mix64(seed, 0x6d61736bull));
    for (size_t i = 0; i < n; ++i) mask[i] = rng.uniform() >= rate ? 1 : 0;
    return mask;
}

}  // namespace kgqa
