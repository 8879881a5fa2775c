#include <cmath>

#include "vifuse/ops.hpp"

namespace vifuse {

namespace {

// Factors a shape into (outer, axis length, inner) around `axis`, so element
// (o, s, i) lives at (o * S + s) * inner + i.
template <typename T>
void axis_extents(const Tensor<T>& x, int64_t axis, int64_t& outer, int64_t& S,
                  int64_t& inner) {
    check(axis >= 0 && axis < x.ndim(),
          "softmax: axis " + std::to_string(axis) + " out of range for shape " +
              shape_str(x.shape()));
    outer = 1;
    inner = 1;
    for (int64_t d = 0; d < axis; ++d) outer *= x.dim(d);
    S = x.dim(axis);
    for (int64_t d = axis + 1; d < x.ndim(); ++d) inner *= x.dim(d);
}

}  // namespace

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    T acc = T(0);
    for (int64_t i = 0; i < x.numel(); ++i) acc += x.data()[i];
    Tensor<T> out = Tensor<T>::scalar(acc);
    if (detail::tracked(x)) {
        auto xi = x.impl();
        auto oi = out.impl();
        detail::record(out, [xi, oi]() {
            if (oi->grad.empty()) return;
            const T g = oi->grad[0];
            if (xi->grad.empty()) xi->grad.assign(xi->value.size(), T(0));
            for (T& v : xi->grad) v += g;
        });
    }
    return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
    const int64_t n = x.numel();
    check(n > 0, "mean: empty tensor");
    T acc = T(0);
    for (int64_t i = 0; i < n; ++i) acc += x.data()[i];
    // Divide (not multiply by 1/n) so a map of exact ones averages to exactly 1.
    Tensor<T> out = Tensor<T>::scalar(acc / static_cast<T>(n));
    if (detail::tracked(x)) {
        auto xi = x.impl();
        auto oi = out.impl();
        detail::record(out, [xi, oi, n]() {
            if (oi->grad.empty()) return;
            const T g = oi->grad[0] / static_cast<T>(n);
            if (xi->grad.empty()) xi->grad.assign(xi->value.size(), T(0));
            for (T& v : xi->grad) v += g;
        });
    }
    return out;
}

template <typename T>
Tensor<T> channel_sum(const Tensor<T>& x) {
    check(x.ndim() == 4, "channel_sum: expected NCHW, got " + shape_str(x.shape()));
    const int64_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    Tensor<T> out = Tensor<T>::zeros({C});
    const T* xv = x.data();
    T* ov = out.data();
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            const T* p = xv + (n * C + c) * HW;
            T acc = T(0);
            for (int64_t i = 0; i < HW; ++i) acc += p[i];
            ov[c] += acc;
        }
    if (detail::tracked(x)) {
        auto xi = x.impl();
        auto oi = out.impl();
        detail::record(out, [xi, oi, N, C, HW]() {
            if (oi->grad.empty()) return;
            if (xi->grad.empty()) xi->grad.assign(xi->value.size(), T(0));
            for (int64_t n = 0; n < N; ++n)
                for (int64_t c = 0; c < C; ++c) {
                    const T g = oi->grad[c];
                    T* p = xi->grad.data() + (n * C + c) * HW;
                    for (int64_t i = 0; i < HW; ++i) p[i] += g;
                }
        });
    }
    return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int64_t axis) {
    int64_t outer, S, inner;
    axis_extents(x, axis, outer, S, inner);
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    const T* xv = x.data();
    T* ov = out.data();
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t i = 0; i < inner; ++i) {
            const int64_t base = o * S * inner + i;
            T mx = xv[base];
            for (int64_t s = 1; s < S; ++s) mx = std::max(mx, xv[base + s * inner]);
            T z = T(0);
            for (int64_t s = 0; s < S; ++s) {
                const T e = std::exp(xv[base + s * inner] - mx);
                ov[base + s * inner] = e;
                z += e;
            }
            const T invz = T(1) / z;
            for (int64_t s = 0; s < S; ++s) ov[base + s * inner] *= invz;
        }
    if (detail::tracked(x)) {
        auto xi = x.impl();
        auto oi = out.impl();
        detail::record(out, [xi, oi, outer, S, inner]() {
            if (oi->grad.empty()) return;
            if (xi->grad.empty()) xi->grad.assign(xi->value.size(), T(0));
            const T* y = oi->value.data();
            const T* g = oi->grad.data();
            for (int64_t o = 0; o < outer; ++o)
                for (int64_t i = 0; i < inner; ++i) {
                    const int64_t base = o * S * inner + i;
                    T dot = T(0);
                    for (int64_t s = 0; s < S; ++s)
                        dot += g[base + s * inner] * y[base + s * inner];
                    for (int64_t s = 0; s < S; ++s) {
                        const int64_t k = base + s * inner;
                        xi->grad[k] += y[k] * (g[k] - dot);
                    }
                }
        });
    }
    return out;
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x, int64_t axis) {
    int64_t outer, S, inner;
    axis_extents(x, axis, outer, S, inner);
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    const T* xv = x.data();
    T* ov = out.data();
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t i = 0; i < inner; ++i) {
            const int64_t base = o * S * inner + i;
            T mx = xv[base];
            for (int64_t s = 1; s < S; ++s) mx = std::max(mx, xv[base + s * inner]);
            T z = T(0);
            for (int64_t s = 0; s < S; ++s) z += std::exp(xv[base + s * inner] - mx);
            const T lz = mx + std::log(z);
            for (int64_t s = 0; s < S; ++s)
                ov[base + s * inner] = xv[base + s * inner] - lz;
        }
    if (detail::tracked(x)) {
        auto xi = x.impl();
        auto oi = out.impl();
        detail::record(out, [xi, oi, outer, S, inner]() {
            if (oi->grad.empty()) return;
            if (xi->grad.empty()) xi->grad.assign(xi->value.size(), T(0));
            const T* y = oi->value.data();
            const T* g = oi->grad.data();
            for (int64_t o = 0; o < outer; ++o)
                for (int64_t i = 0; i < inner; ++i) {
                    const int64_t base = o * S * inner + i;
                    T gsum = T(0);
                    for (int64_t s = 0; s < S; ++s) gsum += g[base + s * inner];
                    for (int64_t s = 0; s < S; ++s) {
                        const int64_t k = base + s * inner;
                        xi->grad[k] += g[k] - std::exp(y[k]) * gsum;
                    }
                }
        });
    }
    return out;
}

#define VIFUSE_INST_RED(fn)                           \
    template Tensor<float> fn<float>(const Tensor<float>&); \
    template Tensor<double> fn<double>(const Tensor<double>&);

VIFUSE_INST_RED(sum)
VIFUSE_INST_RED(mean)
VIFUSE_INST_RED(channel_sum)
template Tensor<float> softmax<float>(const Tensor<float>&, int64_t);
template Tensor<double> softmax<double>(const Tensor<double>&, int64_t);
template Tensor<float> log_softmax<float>(const Tensor<float>&, int64_t);
template Tensor<double> log_softmax<double>(const Tensor<double>&, int64_t);

}  // namespace vifuse
