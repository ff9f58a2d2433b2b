#pragma once

#include <deque>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgqa/autograd.hpp"
#include "kgqa/common.hpp"
#include "kgqa/tensor.hpp"

namespace kgqa {

// Owns model parameters in creation order (which is also checkpoint manifest
// order). Deque keeps addresses stable so graphs can hold ParamT pointers.
template <typename T>
class ParamStoreT {
public:
    ParamT<T>& add(const std::string& name, TensorT<T> value, bool trainable = true) {
        require(!index_.count(name), "params: duplicate name '", name, "'");
        params_.emplace_back(name, std::move(value));
        params_.back().trainable = trainable;
        index_[name] = params_.size() - 1;
        return params_.back();
    }

    ParamT<T>* find(const std::string& name) {
        auto it = index_.find(name);
        return it == index_.end() ? nullptr : &params_[it->second];
    }

    ParamT<T>& get(const std::string& name) {
        ParamT<T>* p = find(name);
        require(p != nullptr, "params: unknown name '", name, "'");
        return *p;
    }

    void zero_grads() {
        for (auto& p : params_) p.grad.fill(T(0));
    }

    size_t size() const { return params_.size(); }
    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

private:
    std::deque<ParamT<T>> params_;
    std::unordered_map<std::string, size_t> index_;
};

using ParamStore = ParamStoreT<float>;

// Checkpoint directory layout: manifest.json (array of
// {name, shape, dtype:"f32", byte_offset, byte_length}) plus weights.bin,
// the concatenated row-major little-endian f32 payloads in manifest order.
// save_checkpoint stages to a temp directory that is renamed into place;
// write_checkpoint_files writes into the directory as-is.
void save_checkpoint(const std::string& dir, const ParamStore& store);
void write_checkpoint_files(const std::string& dir, const ParamStore& store);

// Loads into an existing store; every tensor must match by name and shape.
// On mismatch the error names the first offending tensor.
void load_checkpoint(const std::string& dir, ParamStore& store);

// Raw read: name -> tensor, in manifest order.
std::vector<std::pair<std::string, Tensor>> read_checkpoint(const std::string& dir);

}  // namespace kgqa
