#include "kernels.hpp"
#include "vifuse/ops.hpp"

namespace vifuse {

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 int64_t stride, int64_t pad) {
    check(x.ndim() == 4 && w.ndim() == 4,
          "conv2d: x " + shape_str(x.shape()) + ", w " + shape_str(w.shape()));
    check(x.dim(1) == w.dim(1), "conv2d: channel mismatch, x " + shape_str(x.shape()) +
                                    " vs w " + shape_str(w.shape()));
    check(stride > 0 && pad >= 0, "conv2d: bad stride/pad");
    const int64_t N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    if (b.defined())
        check(b.ndim() == 1 && b.dim(0) == Cout,
              "conv2d: bias " + shape_str(b.shape()) + " does not match w " +
                  shape_str(w.shape()));
    const int64_t Ho = (H + 2 * pad - kh) / stride + 1;
    const int64_t Wo = (W + 2 * pad - kw) / stride + 1;
    check(Ho > 0 && Wo > 0, "conv2d: kernel " + shape_str(w.shape()) +
                                " too large for input " + shape_str(x.shape()));

    const int64_t K = Cin * kh * kw;
    const int64_t L = Ho * Wo;
    Tensor<T> out = Tensor<T>::zeros({N, Cout, Ho, Wo});
    {
        if (stride == 1) {
            for (int64_t n = 0; n < N; ++n)
                detail::conv2d_s1(x.data() + n * Cin * H * W, Cin, H, W, w.data(), Cout,
                                  kh, kw, pad, Ho, Wo, out.data() + n * Cout * L);
        } else {
            std::vector<T> col(static_cast<size_t>(K * L));
            for (int64_t n = 0; n < N; ++n) {
                detail::im2col(x.data() + n * Cin * H * W, Cin, H, W, kh, kw, stride,
                               pad, Ho, Wo, col.data());
                detail::gemm_nn(Cout, L, K, w.data(), col.data(),
                                out.data() + n * Cout * L);
            }
        }
        if (b.defined()) {
            T* ov = out.data();
            for (int64_t n = 0; n < N; ++n)
                for (int64_t c = 0; c < Cout; ++c) {
                    const T bv = b.data()[c];
                    T* p = ov + (n * Cout + c) * L;
                    for (int64_t i = 0; i < L; ++i) p[i] += bv;
                }
        }
    }

    const bool tx = detail::tracked(x);
    const bool tw = detail::tracked(w);
    const bool tb = b.defined() && detail::tracked(b);
    if (tx || tw || tb) {
        auto xi = x.impl();
        auto wi = w.impl();
        auto bi = b.defined() ? b.impl() : nullptr;
        auto oi = out.impl();
        detail::record(out, [xi, wi, bi, oi, tx, tw, tb, N, Cin, H, W, Cout, kh, kw,
                             stride, pad, Ho, Wo, K, L]() {
            if (oi->grad.empty()) return;
            const T* g = oi->grad.data();
            if (tx && xi->grad.empty()) xi->grad.assign(xi->value.size(), T(0));
            if (tw && wi->grad.empty()) wi->grad.assign(wi->value.size(), T(0));
            if (tb && bi->grad.empty()) bi->grad.assign(bi->value.size(), T(0));

            std::vector<T> col;
            std::vector<T> wt;
            std::vector<T> colg;
            std::vector<T> colt;
            if (stride != 1) {
                col.resize(static_cast<size_t>(K * L));
                if (tx) {
                    wt.resize(static_cast<size_t>(K * Cout));
                    detail::transpose_2d(Cout, K, wi->value.data(), wt.data());
                    colg.resize(static_cast<size_t>(K * L));
                }
                if (tw) colt.resize(static_cast<size_t>(L * K));
            }

            for (int64_t n = 0; n < N; ++n) {
                const T* gn = g + n * Cout * L;
                const T* xn = xi->value.data() + n * Cin * H * W;
                if (stride == 1) {
                    if (tw)
                        detail::conv2d_s1_bwd_w(gn, Cout, Ho, Wo, xn, Cin, H, W, kh, kw,
                                                pad, wi->grad.data());
                    if (tx)
                        detail::conv2d_s1_bwd_x(gn, Cout, Ho, Wo, wi->value.data(), Cin,
                                                kh, kw, pad, H, W,
                                                xi->grad.data() + n * Cin * H * W);
                } else {
                    if (tw || tx)
                        detail::im2col(xn, Cin, H, W, kh, kw, stride, pad, Ho, Wo,
                                       col.data());
                    if (tw) {
                        // dW += dOut * col^T
                        detail::transpose_2d(K, L, col.data(), colt.data());
                        detail::gemm_nn(Cout, K, L, gn, colt.data(), wi->grad.data());
                    }
                    if (tx) {
                        // dX += col2im(W^T * dOut)
                        std::fill(colg.begin(), colg.end(), T(0));
                        detail::gemm_nn(K, L, Cout, wt.data(), gn, colg.data());
                        detail::col2im(colg.data(), Cin, H, W, kh, kw, stride, pad, Ho,
                                       Wo, xi->grad.data() + n * Cin * H * W);
                    }
                }
                if (tb) {
                    for (int64_t c = 0; c < Cout; ++c) {
                        T acc = T(0);
                        const T* p = gn + c * L;
                        for (int64_t i = 0; i < L; ++i) acc += p[i];
                        bi->grad[static_cast<size_t>(c)] += acc;
                    }
                }
            }
        });
    }
    return out;
}

template Tensor<float> conv2d<float>(const Tensor<float>&, const Tensor<float>&,
                                     const Tensor<float>&, int64_t, int64_t);
template Tensor<double> conv2d<double>(const Tensor<double>&, const Tensor<double>&,
                                       const Tensor<double>&, int64_t, int64_t);

}  // namespace vifuse
