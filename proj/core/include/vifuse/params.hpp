#pragma once

#include <string>
#include <vector>

#include "vifuse/tensor.hpp"

namespace vifuse {

// A trainable leaf with a stable path like "mth.hia.attn_high.wq.weight" and
// an optimizer group ("backbone", "fusion_head" or "seg_head").
template <typename T>
struct Param {
    std::string path;
    std::string group;
    Tensor<T> tensor;
};

// Ordered registry of model parameters; registration order is the canonical
// order for optimizer state and checkpoints.
template <typename T>
class ParamStore {
public:
    Tensor<T> add(const std::string& path, const std::string& group, Tensor<T> t);

    const std::vector<Param<T>>& items() const { return items_; }
    std::vector<Param<T>>& items() { return items_; }
    size_t size() const { return items_.size(); }

    const Param<T>* find(const std::string& path) const;
    Param<T>* find(const std::string& path);

    int64_t value_count() const;
    void clear_grads();

    // Concatenated gradients in registration order, zeros for untouched
    // parameters; empty group string selects every parameter.
    std::vector<T> flat_grad(const std::string& group = "") const;

    std::vector<std::vector<T>> snapshot() const;
    void restore(const std::vector<std::vector<T>>& values);

private:
    std::vector<Param<T>> items_;
};

// He-style uniform init, bound sqrt(6 / fan_in).
template <typename T>
Tensor<T> kaiming_uniform(Rng& rng, const Shape& shape, int64_t fan_in);

// Glorot uniform init, bound sqrt(6 / (fan_in + fan_out)).
template <typename T>
Tensor<T> xavier_uniform(Rng& rng, const Shape& shape, int64_t fan_in, int64_t fan_out);

}  // namespace vifuse
