#include "vifuse/params.hpp"

#include <cmath>

namespace vifuse {

template <typename T>
Tensor<T> ParamStore<T>::add(const std::string& path, const std::string& group,
                             Tensor<T> t) {
    check(find(path) == nullptr, "params: duplicate path " + path);
    t.set_requires_grad(true);
    items_.push_back(Param<T>{path, group, t});
    return t;
}

template <typename T>
const Param<T>* ParamStore<T>::find(const std::string& path) const {
    for (const auto& p : items_)
        if (p.path == path) return &p;
    return nullptr;
}

template <typename T>
Param<T>* ParamStore<T>::find(const std::string& path) {
    for (auto& p : items_)
        if (p.path == path) return &p;
    return nullptr;
}

template <typename T>
int64_t ParamStore<T>::value_count() const {
    int64_t n = 0;
    for (const auto& p : items_) n += p.tensor.numel();
    return n;
}

template <typename T>
void ParamStore<T>::clear_grads() {
    for (auto& p : items_) p.tensor.clear_grad();
}

template <typename T>
std::vector<T> ParamStore<T>::flat_grad(const std::string& group) const {
    std::vector<T> out;
    for (const auto& p : items_) {
        if (!group.empty() && p.group != group) continue;
        const auto& g = p.tensor.grad();
        if (g.empty())
            out.insert(out.end(), static_cast<size_t>(p.tensor.numel()), T(0));
        else
            out.insert(out.end(), g.begin(), g.end());
    }
    return out;
}

template <typename T>
std::vector<std::vector<T>> ParamStore<T>::snapshot() const {
    std::vector<std::vector<T>> out;
    out.reserve(items_.size());
    for (const auto& p : items_) out.push_back(p.tensor.value());
    return out;
}

template <typename T>
void ParamStore<T>::restore(const std::vector<std::vector<T>>& values) {
    check(values.size() == items_.size(), "params: restore size mismatch");
    for (size_t i = 0; i < items_.size(); ++i) {
        check(values[i].size() == items_[i].tensor.value().size(),
              "params: restore shape mismatch at " + items_[i].path);
        items_[i].tensor.value() = values[i];
    }
}

template <typename T>
Tensor<T> kaiming_uniform(Rng& rng, const Shape& shape, int64_t fan_in) {
    check(fan_in > 0, "init: bad fan_in");
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Tensor<T> t = Tensor<T>::zeros(shape);
    for (int64_t i = 0; i < t.numel(); ++i)
        t.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
    return t;
}

template <typename T>
Tensor<T> xavier_uniform(Rng& rng, const Shape& shape, int64_t fan_in, int64_t fan_out) {
    check(fan_in > 0 && fan_out > 0, "init: bad fan");
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor<T> t = Tensor<T>::zeros(shape);
    for (int64_t i = 0; i < t.numel(); ++i)
        t.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
    return t;
}

template class ParamStore<float>;
template class ParamStore<double>;
template Tensor<float> kaiming_uniform<float>(Rng&, const Shape&, int64_t);
template Tensor<double> kaiming_uniform<double>(Rng&, const Shape&, int64_t);
template Tensor<float> xavier_uniform<float>(Rng&, const Shape&, int64_t, int64_t);
template Tensor<double> xavier_uniform<double>(Rng&, const Shape&, int64_t, int64_t);

}  // namespace vifuse
