#include "kernels.hpp"
#include "vifuse/ops.hpp"

namespace vifuse {

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    const int64_t nd = a.ndim();
    check(nd >= 2 && b.ndim() == nd,
          "matmul: need equal ranks >= 2, got " + shape_str(a.shape()) + " and " +
              shape_str(b.shape()));
    int64_t batch = 1;
    for (int64_t d = 0; d + 2 < nd; ++d) {
        check(a.dim(d) == b.dim(d), "matmul: batch dims differ, " + shape_str(a.shape()) +
                                        " vs " + shape_str(b.shape()));
        batch *= a.dim(d);
    }
    const int64_t M = a.dim(nd - 2), K = a.dim(nd - 1);
    const int64_t N = b.dim(nd - 1);
    check(b.dim(nd - 2) == K, "matmul: inner dims differ, " + shape_str(a.shape()) +
                                  " vs " + shape_str(b.shape()));

    Shape oshape = a.shape();
    oshape[static_cast<size_t>(nd - 1)] = N;
    Tensor<T> out = Tensor<T>::zeros(oshape);
    for (int64_t bi = 0; bi < batch; ++bi)
        detail::gemm_nn(M, N, K, a.data() + bi * M * K, b.data() + bi * K * N,
                        out.data() + bi * M * N);

    const bool ta = detail::tracked(a);
    const bool tb = detail::tracked(b);
    if (ta || tb) {
        auto ai = a.impl();
        auto bi_ = b.impl();
        auto oi = out.impl();
        detail::record(out, [ai, bi_, oi, ta, tb, batch, M, N, K]() {
            if (oi->grad.empty()) return;
            const T* g = oi->grad.data();
            std::vector<T> tmp;
            if (ta) {
                // dA = dC * B^T
                if (ai->grad.empty()) ai->grad.assign(ai->value.size(), T(0));
                tmp.resize(static_cast<size_t>(N * K));
                for (int64_t i = 0; i < batch; ++i) {
                    detail::transpose_2d(K, N, bi_->value.data() + i * K * N, tmp.data());
                    detail::gemm_nn(M, K, N, g + i * M * N, tmp.data(),
                                    ai->grad.data() + i * M * K);
                }
            }
            if (tb) {
                // dB = A^T * dC
                if (bi_->grad.empty()) bi_->grad.assign(bi_->value.size(), T(0));
                tmp.resize(static_cast<size_t>(M * K));
                for (int64_t i = 0; i < batch; ++i) {
                    detail::transpose_2d(M, K, ai->value.data() + i * M * K, tmp.data());
                    detail::gemm_nn(K, N, M, tmp.data(), g + i * M * N,
                                    bi_->grad.data() + i * K * N);
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    check(x.ndim() >= 1 && w.ndim() == 2,
          "linear: x " + shape_str(x.shape()) + ", w " + shape_str(w.shape()));
    const int64_t in = w.dim(1), out_f = w.dim(0);
    check(x.dim(x.ndim() - 1) == in, "linear: last dim of x " + shape_str(x.shape()) +
                                         " does not match w " + shape_str(w.shape()));
    if (b.defined())
        check(b.ndim() == 1 && b.dim(0) == out_f,
              "linear: bias " + shape_str(b.shape()) + " does not match w " +
                  shape_str(w.shape()));
    const int64_t R = x.numel() / in;

    Shape oshape = x.shape();
    oshape.back() = out_f;
    Tensor<T> out = Tensor<T>::zeros(oshape);
    {
        // out = x * w^T (+ b)
        std::vector<T> wt(static_cast<size_t>(in * out_f));
        detail::transpose_2d(out_f, in, w.data(), wt.data());
        detail::gemm_nn(R, out_f, in, x.data(), wt.data(), out.data());
        if (b.defined()) {
            T* ov = out.data();
            for (int64_t r = 0; r < R; ++r)
                for (int64_t o = 0; o < out_f; ++o) ov[r * out_f + o] += b.data()[o];
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
        detail::record(out, [xi, wi, bi, oi, tx, tw, tb, R, in, out_f]() {
            if (oi->grad.empty()) return;
            const T* g = oi->grad.data();
            if (tx) {
                // dX = dOut * W
                if (xi->grad.empty()) xi->grad.assign(xi->value.size(), T(0));
                detail::gemm_nn(R, in, out_f, g, wi->value.data(), xi->grad.data());
            }
            if (tw) {
                // dW = dOut^T * X
                if (wi->grad.empty()) wi->grad.assign(wi->value.size(), T(0));
                std::vector<T> gt(static_cast<size_t>(R * out_f));
                detail::transpose_2d(R, out_f, g, gt.data());
                detail::gemm_nn(out_f, in, R, gt.data(), xi->value.data(), wi->grad.data());
            }
            if (tb) {
                if (bi->grad.empty()) bi->grad.assign(bi->value.size(), T(0));
                for (int64_t r = 0; r < R; ++r)
                    for (int64_t o = 0; o < out_f; ++o) bi->grad[static_cast<size_t>(o)] += g[r * out_f + o];
            }
        });
    }
    return out;
}

template Tensor<float> matmul<float>(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> matmul<double>(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> linear<float>(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&);
template Tensor<double> linear<double>(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&);

}  // namespace vifuse
