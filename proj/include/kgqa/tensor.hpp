#pragma once

#include <cstddef>
#include <vector>

#include "kgqa/common.hpp"
#include "kgqa/rng.hpp"

namespace kgqa {

// Dense row-major matrix. Everything the model computes on is 2-D: sequences
// are [T x d], tables [V x d], per-edge data [E x d], scalars [1 x 1].
template <typename T>
struct TensorT {
    int rows = 0;
    int cols = 0;
    std::vector<T> data;

    TensorT() = default;
    TensorT(int r, int c) : rows(r), cols(c), data(size_t(r) * size_t(c), T(0)) {
        require(r >= 0 && c >= 0, "tensor: negative shape ", r, "x", c);
    }

    static TensorT zeros(int r, int c) { return TensorT(r, c); }

    static TensorT full(int r, int c, T v) {
        TensorT t(r, c);
        for (auto& x : t.data) x = v;
        return t;
    }

    static TensorT randn(int r, int c, T stddev, Rng& rng) {
        TensorT t(r, c);
        for (auto& x : t.data) x = T(rng.normal()) * stddev;
        return t;
    }

    size_t numel() const { return data.size(); }
    bool same_shape(const TensorT& o) const { return rows == o.rows && cols == o.cols; }

    T& at(int r, int c) { return data[size_t(r) * cols + c]; }
    const T& at(int r, int c) const { return data[size_t(r) * cols + c]; }

    T* row(int r) { return data.data() + size_t(r) * cols; }
    const T* row(int r) const { return data.data() + size_t(r) * cols; }

    void fill(T v) {
        for (auto& x : data) x = v;
    }

    template <typename U>
    TensorT<U> cast() const {
        TensorT<U> out;
        out.rows = rows;
        out.cols = cols;
        out.data.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = U(data[i]);
        return out;
    }
};

using Tensor = TensorT<float>;

template <typename T>
inline std::string shape_str(const TensorT<T>& t) {
    return cat(t.rows, "x", t.cols);
}

}  // namespace kgqa
