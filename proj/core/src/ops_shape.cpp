#include <algorithm>

#include "vifuse/ops.hpp"

namespace vifuse {

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, const Shape& shape) {
    check(numel(shape) == x.numel(), "reshape: cannot view " + shape_str(x.shape()) +
                                         " as " + shape_str(shape));
    Tensor<T> out = Tensor<T>::from_data(shape, x.value());
    if (detail::tracked(x)) {
        auto xi = x.impl();
        auto oi = out.impl();
        detail::record(out, [xi, oi]() {
            if (oi->grad.empty()) return;
            detail::accum_grad(*xi, oi->grad.data(), static_cast<int64_t>(oi->grad.size()));
        });
    }
    return out;
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int64_t>& dims) {
    const int64_t nd = x.ndim();
    check(static_cast<int64_t>(dims.size()) == nd,
          "permute: got " + std::to_string(dims.size()) + " dims for shape " +
              shape_str(x.shape()));
    std::vector<bool> seen(static_cast<size_t>(nd), false);
    for (int64_t d : dims) {
        check(d >= 0 && d < nd && !seen[static_cast<size_t>(d)],
              "permute: invalid axis order");
        seen[static_cast<size_t>(d)] = true;
    }
    Shape oshape(static_cast<size_t>(nd));
    std::vector<int64_t> istr(static_cast<size_t>(nd), 1);
    for (int64_t d = nd - 2; d >= 0; --d)
        istr[static_cast<size_t>(d)] = istr[static_cast<size_t>(d) + 1] * x.dim(d + 1);
    // src_str[k]: stride in x of the axis that becomes output axis k
    std::vector<int64_t> src_str(static_cast<size_t>(nd));
    for (int64_t k = 0; k < nd; ++k) {
        oshape[static_cast<size_t>(k)] = x.dim(dims[static_cast<size_t>(k)]);
        src_str[static_cast<size_t>(k)] = istr[static_cast<size_t>(dims[static_cast<size_t>(k)])];
    }

    const int64_t n = x.numel();
    auto walk = [nd, n, oshape, src_str](auto&& visit) {
        std::vector<int64_t> coord(static_cast<size_t>(nd), 0);
        int64_t src = 0;
        for (int64_t o = 0; o < n; ++o) {
            visit(o, src);
            for (int64_t k = nd - 1; k >= 0; --k) {
                auto uk = static_cast<size_t>(k);
                ++coord[uk];
                src += src_str[uk];
                if (coord[uk] < oshape[uk]) break;
                src -= src_str[uk] * oshape[uk];
                coord[uk] = 0;
            }
        }
    };

    Tensor<T> out = Tensor<T>::zeros(oshape);
    const T* xv = x.data();
    T* ov = out.data();
    walk([&](int64_t o, int64_t src) { ov[o] = xv[src]; });
    if (detail::tracked(x)) {
        auto xi = x.impl();
        auto oi = out.impl();
        detail::record(out, [xi, oi, walk]() {
            if (oi->grad.empty()) return;
            if (xi->grad.empty()) xi->grad.assign(xi->value.size(), T(0));
            const T* g = oi->grad.data();
            T* dst = xi->grad.data();
            walk([&](int64_t o, int64_t src) { dst[src] += g[o]; });
        });
    }
    return out;
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int64_t axis) {
    check(!parts.empty(), "concat: no inputs");
    const Tensor<T>& first = parts.front();
    const int64_t nd = first.ndim();
    check(axis >= 0 && axis < nd, "concat: axis out of range");
    Shape oshape = first.shape();
    oshape[static_cast<size_t>(axis)] = 0;
    for (const Tensor<T>& p : parts) {
        check(p.ndim() == nd, "concat: rank mismatch");
        for (int64_t d = 0; d < nd; ++d)
            check(d == axis || p.dim(d) == first.dim(d),
                  "concat: shape mismatch " + shape_str(p.shape()) + " vs " +
                      shape_str(first.shape()));
        oshape[static_cast<size_t>(axis)] += p.dim(axis);
    }

    int64_t outer = 1, inner = 1;
    for (int64_t d = 0; d < axis; ++d) outer *= first.dim(d);
    for (int64_t d = axis + 1; d < nd; ++d) inner *= first.dim(d);
    const int64_t out_block = oshape[static_cast<size_t>(axis)] * inner;

    Tensor<T> out = Tensor<T>::zeros(oshape);
    T* ov = out.data();
    int64_t off = 0;
    for (const Tensor<T>& p : parts) {
        const int64_t blk = p.dim(axis) * inner;
        const T* pv = p.data();
        for (int64_t o = 0; o < outer; ++o)
            std::copy(pv + o * blk, pv + (o + 1) * blk, ov + o * out_block + off);
        off += blk;
    }

    bool any = false;
    std::vector<bool> tp(parts.size());
    for (size_t i = 0; i < parts.size(); ++i) {
        tp[i] = detail::tracked(parts[i]);
        any = any || tp[i];
    }
    if (any) {
        std::vector<std::shared_ptr<TensorImpl<T>>> impls;
        std::vector<int64_t> blks;
        for (const Tensor<T>& p : parts) {
            impls.push_back(p.impl());
            blks.push_back(p.dim(axis) * inner);
        }
        auto oi = out.impl();
        detail::record(out, [impls, blks, tp, oi, outer, out_block]() {
            if (oi->grad.empty()) return;
            const T* g = oi->grad.data();
            int64_t off2 = 0;
            for (size_t i = 0; i < impls.size(); ++i) {
                const int64_t blk = blks[i];
                if (tp[i]) {
                    auto& xi = *impls[i];
                    if (xi.grad.empty()) xi.grad.assign(xi.value.size(), T(0));
                    for (int64_t o = 0; o < outer; ++o) {
                        const T* src = g + o * out_block + off2;
                        T* dst = xi.grad.data() + o * blk;
                        for (int64_t j = 0; j < blk; ++j) dst[j] += src[j];
                    }
                }
                off2 += blk;
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int64_t axis, int64_t start, int64_t len) {
    const int64_t nd = x.ndim();
    check(axis >= 0 && axis < nd, "slice: axis out of range");
    check(start >= 0 && len > 0 && start + len <= x.dim(axis),
          "slice: range [" + std::to_string(start) + ", " + std::to_string(start + len) +
              ") out of bounds for axis size " + std::to_string(x.dim(axis)));
    int64_t outer = 1, inner = 1;
    for (int64_t d = 0; d < axis; ++d) outer *= x.dim(d);
    for (int64_t d = axis + 1; d < nd; ++d) inner *= x.dim(d);
    const int64_t in_block = x.dim(axis) * inner;
    const int64_t out_block = len * inner;

    Shape oshape = x.shape();
    oshape[static_cast<size_t>(axis)] = len;
    Tensor<T> out = Tensor<T>::zeros(oshape);
    const T* xv = x.data();
    T* ov = out.data();
    for (int64_t o = 0; o < outer; ++o)
        std::copy(xv + o * in_block + start * inner, xv + o * in_block + (start + len) * inner,
                  ov + o * out_block);

    if (detail::tracked(x)) {
        auto xi = x.impl();
        auto oi = out.impl();
        detail::record(out, [xi, oi, outer, inner, in_block, out_block, start]() {
            if (oi->grad.empty()) return;
            if (xi->grad.empty()) xi->grad.assign(xi->value.size(), T(0));
            const T* g = oi->grad.data();
            for (int64_t o = 0; o < outer; ++o) {
                T* dst = xi->grad.data() + o * in_block + start * inner;
                const T* src = g + o * out_block;
                for (int64_t j = 0; j < out_block; ++j) dst[j] += src[j];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> detach(const Tensor<T>& x) {
    return Tensor<T>::from_data(x.shape(), x.value());
}

template <typename T>
Tensor<T> replicate_pad(const Tensor<T>& x, int64_t pad) {
    check(x.ndim() == 4, "replicate_pad: expected NCHW, got " + shape_str(x.shape()));
    check(pad >= 0, "replicate_pad: negative pad");
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t Ho = H + 2 * pad, Wo = W + 2 * pad;
    Tensor<T> out = Tensor<T>::zeros({N, C, Ho, Wo});
    const T* xv = x.data();
    T* ov = out.data();
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const T* src = xv + nc * H * W;
        T* dst = ov + nc * Ho * Wo;
        for (int64_t y = 0; y < Ho; ++y) {
            const int64_t iy = std::clamp(y - pad, int64_t(0), H - 1);
            for (int64_t xo = 0; xo < Wo; ++xo) {
                const int64_t ix = std::clamp(xo - pad, int64_t(0), W - 1);
                dst[y * Wo + xo] = src[iy * W + ix];
            }
        }
    }
    if (detail::tracked(x)) {
        auto xi = x.impl();
        auto oi = out.impl();
        detail::record(out, [xi, oi, N, C, H, W, Ho, Wo, pad]() {
            if (oi->grad.empty()) return;
            if (xi->grad.empty()) xi->grad.assign(xi->value.size(), T(0));
            const T* g = oi->grad.data();
            for (int64_t nc = 0; nc < N * C; ++nc) {
                T* dst = xi->grad.data() + nc * H * W;
                const T* src = g + nc * Ho * Wo;
                for (int64_t y = 0; y < Ho; ++y) {
                    const int64_t iy = std::clamp(y - pad, int64_t(0), H - 1);
                    for (int64_t xo = 0; xo < Wo; ++xo) {
                        const int64_t ix = std::clamp(xo - pad, int64_t(0), W - 1);
                        dst[iy * W + ix] += src[y * Wo + xo];
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& x, int64_t k) {
    check(x.ndim() == 4, "avg_pool2d: expected NCHW, got " + shape_str(x.shape()));
    check(k > 0 && x.dim(2) % k == 0 && x.dim(3) % k == 0,
          "avg_pool2d: window " + std::to_string(k) + " does not divide " +
              shape_str(x.shape()));
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t Ho = H / k, Wo = W / k;
    const T scale = T(1) / static_cast<T>(k * k);
    Tensor<T> out = Tensor<T>::zeros({N, C, Ho, Wo});
    const T* xv = x.data();
    T* ov = out.data();
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const T* src = xv + nc * H * W;
        T* dst = ov + nc * Ho * Wo;
        for (int64_t y = 0; y < Ho; ++y)
            for (int64_t xo = 0; xo < Wo; ++xo) {
                T acc = T(0);
                for (int64_t dy = 0; dy < k; ++dy)
                    for (int64_t dx = 0; dx < k; ++dx)
                        acc += src[(y * k + dy) * W + xo * k + dx];
                dst[y * Wo + xo] = acc * scale;
            }
    }
    if (detail::tracked(x)) {
        auto xi = x.impl();
        auto oi = out.impl();
        detail::record(out, [xi, oi, N, C, H, W, Ho, Wo, k, scale]() {
            if (oi->grad.empty()) return;
            if (xi->grad.empty()) xi->grad.assign(xi->value.size(), T(0));
            const T* g = oi->grad.data();
            for (int64_t nc = 0; nc < N * C; ++nc) {
                T* dst = xi->grad.data() + nc * H * W;
                const T* src = g + nc * Ho * Wo;
                for (int64_t y = 0; y < Ho; ++y)
                    for (int64_t xo = 0; xo < Wo; ++xo) {
                        const T gv = src[y * Wo + xo] * scale;
                        for (int64_t dy = 0; dy < k; ++dy)
                            for (int64_t dx = 0; dx < k; ++dx)
                                dst[(y * k + dy) * W + xo * k + dx] += gv;
                    }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> upsample_nearest2d(const Tensor<T>& x, int64_t factor) {
    check(x.ndim() == 4, "upsample_nearest2d: expected NCHW, got " + shape_str(x.shape()));
    check(factor > 0, "upsample_nearest2d: bad factor");
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t Ho = H * factor, Wo = W * factor;
    Tensor<T> out = Tensor<T>::zeros({N, C, Ho, Wo});
    const T* xv = x.data();
    T* ov = out.data();
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const T* src = xv + nc * H * W;
        T* dst = ov + nc * Ho * Wo;
        for (int64_t y = 0; y < Ho; ++y) {
            const T* srow = src + (y / factor) * W;
            for (int64_t xo = 0; xo < Wo; ++xo) dst[y * Wo + xo] = srow[xo / factor];
        }
    }
    if (detail::tracked(x)) {
        auto xi = x.impl();
        auto oi = out.impl();
        detail::record(out, [xi, oi, N, C, H, W, Ho, Wo, factor]() {
            if (oi->grad.empty()) return;
            if (xi->grad.empty()) xi->grad.assign(xi->value.size(), T(0));
            const T* g = oi->grad.data();
            for (int64_t nc = 0; nc < N * C; ++nc) {
                T* dst = xi->grad.data() + nc * H * W;
                const T* src = g + nc * Ho * Wo;
                for (int64_t y = 0; y < Ho; ++y) {
                    T* drow = dst + (y / factor) * W;
                    for (int64_t xo = 0; xo < Wo; ++xo) drow[xo / factor] += src[y * Wo + xo];
                }
            }
        });
    }
    return out;
}

template Tensor<float> reshape<float>(const Tensor<float>&, const Shape&);
template Tensor<double> reshape<double>(const Tensor<double>&, const Shape&);
template Tensor<float> permute<float>(const Tensor<float>&, const std::vector<int64_t>&);
template Tensor<double> permute<double>(const Tensor<double>&, const std::vector<int64_t>&);
template Tensor<float> concat<float>(const std::vector<Tensor<float>>&, int64_t);
template Tensor<double> concat<double>(const std::vector<Tensor<double>>&, int64_t);
template Tensor<float> slice<float>(const Tensor<float>&, int64_t, int64_t, int64_t);
template Tensor<double> slice<double>(const Tensor<double>&, int64_t, int64_t, int64_t);
template Tensor<float> detach<float>(const Tensor<float>&);
template Tensor<double> detach<double>(const Tensor<double>&);
template Tensor<float> replicate_pad<float>(const Tensor<float>&, int64_t);
template Tensor<double> replicate_pad<double>(const Tensor<double>&, int64_t);
template Tensor<float> avg_pool2d<float>(const Tensor<float>&, int64_t);
template Tensor<double> avg_pool2d<double>(const Tensor<double>&, int64_t);
template Tensor<float> upsample_nearest2d<float>(const Tensor<float>&, int64_t);
template Tensor<double> upsample_nearest2d<double>(const Tensor<double>&, int64_t);

}  // namespace vifuse
