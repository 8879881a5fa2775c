#pragma once

#include <functional>
#include <memory>
#include <utility>

#include "vifuse/common.hpp"

namespace vifuse {

template <typename T>
class Tape;

// Dense row-major tensor. Shape convention for images is N x C x H x W.
template <typename T>
struct TensorImpl {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // empty until a gradient is accumulated
    bool requires_grad = false;
    int64_t node = -1;  // index on `tape`, -1 for leaves and constants
    Tape<T>* tape = nullptr;
};

// Cheap shared handle; copies alias the same storage.
template <typename T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorImpl<T>> impl) : impl_(std::move(impl)) {}

    static Tensor zeros(const Shape& shape) {
        auto impl = std::make_shared<TensorImpl<T>>();
        impl->shape = shape;
        impl->value.assign(static_cast<size_t>(vifuse::numel(shape)), T(0));
        return Tensor(std::move(impl));
    }

    static Tensor full(const Shape& shape, T v) {
        Tensor t = zeros(shape);
        for (T& x : t.impl_->value) x = v;
        return t;
    }

    static Tensor scalar(T v) { return full({1}, v); }

    static Tensor from_data(const Shape& shape, std::vector<T> data) {
        check(static_cast<int64_t>(data.size()) == vifuse::numel(shape),
              "tensor: data size " + std::to_string(data.size()) +
                  " does not match shape " + shape_str(shape));
        auto impl = std::make_shared<TensorImpl<T>>();
        impl->shape = shape;
        impl->value = std::move(data);
        return Tensor(std::move(impl));
    }

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int64_t ndim() const { return static_cast<int64_t>(impl_->shape.size()); }
    int64_t dim(int64_t i) const { return impl_->shape[static_cast<size_t>(i)]; }
    int64_t numel() const { return static_cast<int64_t>(impl_->value.size()); }

    const std::vector<T>& value() const { return impl_->value; }
    std::vector<T>& value() { return impl_->value; }
    const T* data() const { return impl_->value.data(); }
    T* data() { return impl_->value.data(); }

    T item() const {
        check(numel() == 1, "tensor: item() on non-scalar shape " + shape_str(shape()));
        return impl_->value[0];
    }

    // Empty until backward() has reached this tensor.
    const std::vector<T>& grad() const { return impl_->grad; }
    void clear_grad() { impl_->grad.clear(); }

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool flag = true) {
        impl_->requires_grad = flag;
        return *this;
    }

    const std::shared_ptr<TensorImpl<T>>& impl() const { return impl_; }

private:
    std::shared_ptr<TensorImpl<T>> impl_;
};

// Gradient tape for one forward pass. Ops record backward closures on the
// active tape; backward() replays them in reverse. A tape can be consumed
// once, then discarded.
template <typename T>
class Tape {
public:
    // Makes the tape active for the current thread while in scope.
    class Scope {
    public:
        explicit Scope(Tape& t) : prev_(active_slot()) { active_slot() = &t; }
        ~Scope() { active_slot() = prev_; }
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

    private:
        Tape* prev_;
    };

    static Tape* active() { return active_slot(); }

    int64_t add_node(std::function<void()> back) {
        nodes_.push_back(std::move(back));
        return static_cast<int64_t>(nodes_.size()) - 1;
    }

    size_t size() const { return nodes_.size(); }

    // Seeds d(loss)/d(loss) = 1 and runs recorded closures newest-first.
    // Tensors never reached keep an empty grad, which reads as zero.
    void backward(const Tensor<T>& loss);

private:
    static Tape*& active_slot() {
        thread_local Tape* slot = nullptr;
        return slot;
    }

    std::vector<std::function<void()>> nodes_;
    bool consumed_ = false;
};

namespace detail {

// True when ops must record a backward closure for this input.
template <typename T>
bool tracked(const Tensor<T>& t) {
    Tape<T>* tape = Tape<T>::active();
    if (!tape || !t.defined()) return false;
    if (t.requires_grad()) return true;
    return t.impl()->node >= 0 && t.impl()->tape == tape;
}

template <typename T>
void accum_grad(TensorImpl<T>& impl, const T* g, int64_t n) {
    if (impl.grad.empty()) impl.grad.assign(impl.value.size(), T(0));
    T* dst = impl.grad.data();
    for (int64_t i = 0; i < n; ++i) dst[i] += g[i];
}

// Registers `out` as the result of a recorded op.
template <typename T>
void record(Tensor<T>& out, std::function<void()> back) {
    Tape<T>* tape = Tape<T>::active();
    out.impl()->tape = tape;
    out.impl()->node = tape->add_node(std::move(back));
}

}  // namespace detail

}  // namespace vifuse
