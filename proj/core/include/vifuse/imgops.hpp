#pragma once

#include "vifuse/ops.hpp"

// Differentiable image primitives shared by the losses and (in no-gradient
// mode) the metric suite. Images are NCHW in [0,1].
namespace vifuse {

struct SsimParams {
    int64_t window = 11;
    double sigma = 1.5;
    double c1 = 0.01 * 0.01;  // (k1 L)^2 with k1=0.01, L=1
    double c2 = 0.03 * 0.03;  // (k2 L)^2 with k2=0.03, L=1
};

// BT.601 full-range: Y in [0,1], chroma centered at 0.5.
template <typename T> Tensor<T> rgb_to_ycbcr(const Tensor<T>& img);
template <typename T> Tensor<T> ycbcr_to_rgb(const Tensor<T>& img);
// Y channel of an RGB tensor, [N,1,H,W].
template <typename T> Tensor<T> luma(const Tensor<T>& rgb);

// |Gx| + |Gy| with 3x3 Sobel kernels and replicate padding; C must be 1.
template <typename T> Tensor<T> sobel_magnitude(const Tensor<T>& chan);

// Mean SSIM (Wang et al.) over the valid map, gaussian window, no padding.
// Single-channel inputs; mean also runs over the batch dim.
template <typename T>
Tensor<T> ssim(const Tensor<T>& x, const Tensor<T>& y, const SsimParams& p = {});

// Multi-scale SSIM: contrast-structure terms at the fine scales, full SSIM at
// the coarsest, combined as a weighted geometric mean; 2x2 average pooling
// between scales.
template <typename T>
Tensor<T> ms_ssim(const Tensor<T>& x, const Tensor<T>& y, int64_t levels,
                  const std::vector<double>& level_weights, const SsimParams& p = {});

// Canonical 5-level exponents.
const std::vector<double>& ms_ssim_default_weights();
// Largest level count whose coarsest scale still fits the window.
int64_t ms_ssim_max_levels(int64_t h, int64_t w, int64_t window);

}  // namespace vifuse
