#pragma once

#include "vifuse/imgops.hpp"
#include "vifuse/labelmap.hpp"

namespace vifuse {

// Weighted composition: total = beta1 * (lambda1*int + lambda2*grad +
// lambda3*ssim + lambda4*color) + beta2 * (ce + dice). Zero weights skip
// their term entirely, so gradients through that path are exactly zero.
struct LossWeights {
    double beta1 = 1.0;
    double beta2 = 1.0;
    double lambda1 = 20.0;  // intensity
    double lambda2 = 20.0;  // gradient
    double lambda3 = 10.0;  // ssim
    double lambda4 = 20.0;  // color
    double w_ir = 0.5;
    double w_vis = 0.5;
};

template <typename T>
struct LossBreakdown {
    double l_int = 0, l_grad = 0, l_ssim = 0, l_color = 0;
    double l_ce = 0, l_dice = 0;
    double l_fusion = 0, l_seg = 0, l_total = 0;
    Tensor<T> total;   // differentiable scalar
    Tensor<T> fusion;  // differentiable lambda-weighted fusion term (undefined if all lambdas 0)
    Tensor<T> seg;     // differentiable ce+dice term (undefined if beta2 == 0)
};

// Mean |f - max(ir, vis)| over batch, channels and pixels; sources are
// treated as constants.
template <typename T>
Tensor<T> intensity_loss(const Tensor<T>& f, const Tensor<T>& ir, const Tensor<T>& vis);

// Same L1 form on Sobel magnitude maps, per channel.
template <typename T>
Tensor<T> gradient_loss(const Tensor<T>& f, const Tensor<T>& ir, const Tensor<T>& vis);

// sum_j w_j * (1 - mean over channels of ssim(f_c, j_c)).
template <typename T>
Tensor<T> ssim_loss(const Tensor<T>& f, const Tensor<T>& ir, const Tensor<T>& vis,
                    double w_ir, double w_vis, const SsimParams& p = {});

// Mean L1 distance of the Cb and Cr channels of f and vis.
template <typename T>
Tensor<T> color_loss(const Tensor<T>& f, const Tensor<T>& vis);

// Mean negative log-likelihood over non-ignored pixels (log-sum-exp form).
template <typename T>
Tensor<T> ce_loss(const Tensor<T>& logits, const std::vector<LabelMap>& labels);

// 1 - mean over classes of (2*intersection + 1) / (support sum + 1);
// ignored pixels excluded from every sum.
template <typename T>
Tensor<T> dice_loss(const Tensor<T>& x, const std::vector<LabelMap>& labels,
                    bool from_logits = true);

// logits/labels may be empty when beta2 == 0.
template <typename T>
LossBreakdown<T> total_loss(const Tensor<T>& f, const Tensor<T>& ir,
                            const Tensor<T>& vis, const Tensor<T>& logits,
                            const std::vector<LabelMap>& labels,
                            const LossWeights& w, const SsimParams& sp = {});

}  // namespace vifuse
