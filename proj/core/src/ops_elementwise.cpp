#include <cmath>

#include "vifuse/ops.hpp"

namespace vifuse {

namespace {

template <typename T, typename Fwd, typename Dx>
Tensor<T> unary_op(const Tensor<T>& x, Fwd fwd, Dx dx) {
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    const T* xv = x.data();
    T* ov = out.data();
    const int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) ov[i] = fwd(xv[i]);
    if (detail::tracked(x)) {
        auto xi = x.impl();
        auto oi = out.impl();
        detail::record(out, [xi, oi, dx, n]() {
            if (oi->grad.empty()) return;
            if (xi->grad.empty()) xi->grad.assign(xi->value.size(), T(0));
            for (int64_t i = 0; i < n; ++i)
                xi->grad[i] += oi->grad[i] * dx(xi->value[i], oi->value[i]);
        });
    }
    return out;
}

template <typename T, typename Fwd, typename Da, typename Db>
Tensor<T> binary_op(const char* name, const Tensor<T>& a, const Tensor<T>& b,
                    Fwd fwd, Da da, Db db) {
    check(a.shape() == b.shape(), std::string(name) + ": shape mismatch " +
                                      shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const T* av = a.data();
    const T* bv = b.data();
    T* ov = out.data();
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) ov[i] = fwd(av[i], bv[i]);
    const bool ta = detail::tracked(a);
    const bool tb = detail::tracked(b);
    if (ta || tb) {
        auto ai = a.impl();
        auto bi = b.impl();
        auto oi = out.impl();
        detail::record(out, [ai, bi, oi, da, db, ta, tb, n]() {
            if (oi->grad.empty()) return;
            const T* g = oi->grad.data();
            if (ta) {
                if (ai->grad.empty()) ai->grad.assign(ai->value.size(), T(0));
                for (int64_t i = 0; i < n; ++i)
                    ai->grad[i] += g[i] * da(ai->value[i], bi->value[i]);
            }
            if (tb) {
                if (bi->grad.empty()) bi->grad.assign(bi->value.size(), T(0));
                for (int64_t i = 0; i < n; ++i)
                    bi->grad[i] += g[i] * db(ai->value[i], bi->value[i]);
            }
        });
    }
    return out;
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return binary_op(
        "add", a, b, [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
        [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return binary_op(
        "sub", a, b, [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
        [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return binary_op(
        "mul", a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; },
        [](T x, T) { return x; });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
    return binary_op(
        "div", a, b, [](T x, T y) { return x / y; }, [](T, T y) { return T(1) / y; },
        [](T x, T y) { return -x / (y * y); });
}

template <typename T>
Tensor<T> maximum(const Tensor<T>& a, const Tensor<T>& b) {
    return binary_op(
        "maximum", a, b, [](T x, T y) { return x >= y ? x : y; },
        [](T x, T y) { return x >= y ? T(1) : T(0); },
        [](T x, T y) { return x >= y ? T(0) : T(1); });
}

template <typename T>
Tensor<T> affine(const Tensor<T>& x, T scale, T shift) {
    return unary_op(
        x, [scale, shift](T v) { return scale * v + shift; },
        [scale](T, T) { return scale; });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
    return unary_op(
        x, [](T v) { return v < T(0) ? -v : v; },
        [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
    return unary_op(
        x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
    return unary_op(
        x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
    return unary_op(
        x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    return unary_op(
        x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
        [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    return unary_op(
        x, [](T v) { return v > T(0) ? v : T(0); },
        [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    constexpr T inv_sqrt2 = T(0.70710678118654752440);
    constexpr T inv_sqrt2pi = T(0.39894228040143267794);
    return unary_op(
        x,
        [=](T v) { return T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2)); },
        [=](T v, T) {
            const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
            const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
            return cdf + v * pdf;
        });
}

template <typename T>
Tensor<T> pow_scalar(const Tensor<T>& x, T p) {
    return unary_op(
        x, [p](T v) { return std::pow(v, p); },
        [p](T v, T) { return p * std::pow(v, p - T(1)); });
}

#define VIFUSE_INST_BIN(fn)                                                     \
    template Tensor<float> fn<float>(const Tensor<float>&, const Tensor<float>&); \
    template Tensor<double> fn<double>(const Tensor<double>&, const Tensor<double>&);
#define VIFUSE_INST_UN(fn)                            \
    template Tensor<float> fn<float>(const Tensor<float>&); \
    template Tensor<double> fn<double>(const Tensor<double>&);

VIFUSE_INST_BIN(add)
VIFUSE_INST_BIN(sub)
VIFUSE_INST_BIN(mul)
VIFUSE_INST_BIN(div)
VIFUSE_INST_BIN(maximum)
VIFUSE_INST_UN(abs)
VIFUSE_INST_UN(exp)
VIFUSE_INST_UN(log)
VIFUSE_INST_UN(tanh)
VIFUSE_INST_UN(sigmoid)
VIFUSE_INST_UN(relu)
VIFUSE_INST_UN(gelu)
template Tensor<float> affine<float>(const Tensor<float>&, float, float);
template Tensor<double> affine<double>(const Tensor<double>&, double, double);
template Tensor<float> pow_scalar<float>(const Tensor<float>&, float);
template Tensor<double> pow_scalar<double>(const Tensor<double>&, double);

}  // namespace vifuse
