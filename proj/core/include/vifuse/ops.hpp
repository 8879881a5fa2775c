#pragma once

#include "vifuse/tensor.hpp"

// Differentiable primitives. Every function computes eagerly and, when a tape
// is active and an input is tracked, records a backward closure. Elementwise
// ops require identical shapes; there is no implicit broadcasting.
namespace vifuse {

// ---- elementwise ----
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);
// Elementwise max; ties send the gradient to `a`.
template <typename T> Tensor<T> maximum(const Tensor<T>& a, const Tensor<T>& b);
// y = scale * x + shift with scalar constants.
template <typename T> Tensor<T> affine(const Tensor<T>& x, T scale, T shift);
// d|x|/dx at 0 is taken as 0.
template <typename T> Tensor<T> abs(const Tensor<T>& x);
template <typename T> Tensor<T> exp(const Tensor<T>& x);
template <typename T> Tensor<T> log(const Tensor<T>& x);
template <typename T> Tensor<T> tanh(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> relu(const Tensor<T>& x);
// Exact GELU, x * Phi(x) with the Gaussian CDF.
template <typename T> Tensor<T> gelu(const Tensor<T>& x);
template <typename T> Tensor<T> pow_scalar(const Tensor<T>& x, T p);

// ---- reductions ----
template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);
// [N, C, H, W] -> [C], summing over batch and space.
template <typename T> Tensor<T> channel_sum(const Tensor<T>& x);
template <typename T> Tensor<T> softmax(const Tensor<T>& x, int64_t axis);
template <typename T> Tensor<T> log_softmax(const Tensor<T>& x, int64_t axis);

// ---- shape ----
template <typename T> Tensor<T> reshape(const Tensor<T>& x, const Shape& shape);
template <typename T> Tensor<T> permute(const Tensor<T>& x, const std::vector<int64_t>& dims);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, int64_t axis);
template <typename T> Tensor<T> slice(const Tensor<T>& x, int64_t axis, int64_t start, int64_t len);
// Copies the value out of the graph; gradients stop here.
template <typename T> Tensor<T> detach(const Tensor<T>& x);
// Edge-replication padding of the two spatial dims of an NCHW tensor.
template <typename T> Tensor<T> replicate_pad(const Tensor<T>& x, int64_t pad);
// k x k window, stride k, no padding; spatial dims must divide by k.
template <typename T> Tensor<T> avg_pool2d(const Tensor<T>& x, int64_t k);
template <typename T> Tensor<T> upsample_nearest2d(const Tensor<T>& x, int64_t factor);

// ---- linear algebra ----
// [B..., M, K] x [B..., K, N] -> [B..., M, N]; leading dims must match.
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
// x [..., in], w [out, in], optional b [out] -> [..., out].
template <typename T> Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

// ---- convolution ----
// x [N, Cin, H, W], w [Cout, Cin, kh, kw], optional b [Cout]; zero padding.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 int64_t stride = 1, int64_t pad = 0);

}  // namespace vifuse
