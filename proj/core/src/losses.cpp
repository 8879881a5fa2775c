#include "vifuse/losses.hpp"

namespace vifuse {

namespace {

template <typename T>
void check_triple(const char* op, const Tensor<T>& f, const Tensor<T>& ir,
                  const Tensor<T>& vis) {
    check(f.defined() && ir.defined() && vis.defined(),
          std::string(op) + ": undefined input");
    check(f.shape() == ir.shape() && f.shape() == vis.shape(),
          std::string(op) + ": shape mismatch " + shape_str(f.shape()) + " / " +
              shape_str(ir.shape()) + " / " + shape_str(vis.shape()));
    check(f.ndim() == 4, std::string(op) + ": expected NCHW");
}

}  // namespace

template <typename T>
Tensor<T> intensity_loss(const Tensor<T>& f, const Tensor<T>& ir, const Tensor<T>& vis) {
    check_triple("intensity_loss", f, ir, vis);
    return mean(abs(sub(f, maximum(detach(ir), detach(vis)))));
}

template <typename T>
Tensor<T> gradient_loss(const Tensor<T>& f, const Tensor<T>& ir, const Tensor<T>& vis) {
    check_triple("gradient_loss", f, ir, vis);
    const Tensor<T> ir_c = detach(ir);
    const Tensor<T> vis_c = detach(vis);
    std::vector<Tensor<T>> diffs;
    for (int64_t c = 0; c < f.dim(1); ++c) {
        Tensor<T> gf = sobel_magnitude(slice(f, 1, c, 1));
        Tensor<T> target = maximum(sobel_magnitude(slice(ir_c, 1, c, 1)),
                                   sobel_magnitude(slice(vis_c, 1, c, 1)));
        diffs.push_back(abs(sub(gf, target)));
    }
    return mean(concat(diffs, 1));
}

template <typename T>
Tensor<T> ssim_loss(const Tensor<T>& f, const Tensor<T>& ir, const Tensor<T>& vis,
                    double w_ir, double w_vis, const SsimParams& p) {
    check_triple("ssim_loss", f, ir, vis);
    check(w_ir >= 0 && w_vis >= 0, "ssim_loss: negative source weight");
    auto term = [&](const Tensor<T>& src, double wj) {
        const Tensor<T> src_c = detach(src);
        std::vector<Tensor<T>> per_ch;
        for (int64_t c = 0; c < f.dim(1); ++c)
            per_ch.push_back(ssim(slice(f, 1, c, 1), slice(src_c, 1, c, 1), p));
        // wj * (1 - mean over channels)
        return affine(mean(concat(per_ch, 0)), static_cast<T>(-wj), static_cast<T>(wj));
    };
    if (w_ir == 0 && w_vis == 0) return Tensor<T>::scalar(T(0));
    if (w_ir == 0) return term(vis, w_vis);
    if (w_vis == 0) return term(ir, w_ir);
    return add(term(ir, w_ir), term(vis, w_vis));
}

template <typename T>
Tensor<T> color_loss(const Tensor<T>& f, const Tensor<T>& vis) {
    check(f.defined() && vis.defined(), "color_loss: undefined input");
    check(f.shape() == vis.shape(), "color_loss: shape mismatch " +
                                        shape_str(f.shape()) + " vs " +
                                        shape_str(vis.shape()));
    Tensor<T> chroma_f = slice(rgb_to_ycbcr(f), 1, 1, 2);
    Tensor<T> chroma_v = slice(rgb_to_ycbcr(detach(vis)), 1, 1, 2);
    return mean(abs(sub(chroma_f, chroma_v)));
}

namespace {

template <typename T>
void check_logits(const char* op, const Tensor<T>& logits,
                  const std::vector<LabelMap>& labels) {
    check(logits.defined() && logits.ndim() == 4,
          std::string(op) + ": expected NxCxHxW logits");
    check(static_cast<int64_t>(labels.size()) == logits.dim(0),
          std::string(op) + ": batch size mismatch");
    for (const auto& m : labels)
        check(m.h == logits.dim(2) && m.w == logits.dim(3),
              std::string(op) + ": label map size does not match logits");
}

}  // namespace

template <typename T>
Tensor<T> ce_loss(const Tensor<T>& logits, const std::vector<LabelMap>& labels) {
    check_logits("ce_loss", logits, labels);
    const int64_t cnt = count_valid(labels);
    check(cnt > 0, "ce_loss: every pixel is ignore-index");
    Tensor<T> oh = one_hot<T>(labels, logits.dim(1));
    Tensor<T> picked = mul(log_softmax(logits, 1), oh);
    return affine(sum(picked), T(-1) / static_cast<T>(cnt), T(0));
}

template <typename T>
Tensor<T> dice_loss(const Tensor<T>& x, const std::vector<LabelMap>& labels,
                    bool from_logits) {
    check_logits("dice_loss", x, labels);
    const int64_t n_classes = x.dim(1);
    Tensor<T> p = from_logits ? softmax(x, 1) : x;
    Tensor<T> oh = one_hot<T>(labels, n_classes);
    Tensor<T> pm = mul(p, valid_mask<T>(labels, n_classes));
    Tensor<T> inter = channel_sum(mul(pm, oh));
    Tensor<T> support = add(channel_sum(pm), channel_sum(oh));
    Tensor<T> dice = div(affine(inter, T(2), T(1)), affine(support, T(1), T(1)));
    return affine(mean(dice), T(-1), T(1));
}

template <typename T>
LossBreakdown<T> total_loss(const Tensor<T>& f, const Tensor<T>& ir,
                            const Tensor<T>& vis, const Tensor<T>& logits,
                            const std::vector<LabelMap>& labels,
                            const LossWeights& w, const SsimParams& sp) {
    check(w.beta1 >= 0 && w.beta2 >= 0 && w.lambda1 >= 0 && w.lambda2 >= 0 &&
              w.lambda3 >= 0 && w.lambda4 >= 0,
          "total_loss: negative loss weight");
    LossBreakdown<T> out;

    auto fold = [&](Tensor<T> term, double lam, double* slot) {
        *slot = static_cast<double>(term.item());
        Tensor<T> weighted = affine(term, static_cast<T>(lam), T(0));
        out.fusion = out.fusion.defined() ? add(out.fusion, weighted) : weighted;
    };
    if (w.lambda1 > 0) fold(intensity_loss(f, ir, vis), w.lambda1, &out.l_int);
    if (w.lambda2 > 0) fold(gradient_loss(f, ir, vis), w.lambda2, &out.l_grad);
    if (w.lambda3 > 0)
        fold(ssim_loss(f, ir, vis, w.w_ir, w.w_vis, sp), w.lambda3, &out.l_ssim);
    if (w.lambda4 > 0) fold(color_loss(f, vis), w.lambda4, &out.l_color);
    if (out.fusion.defined()) out.l_fusion = static_cast<double>(out.fusion.item());

    if (w.beta2 > 0) {
        Tensor<T> ce = ce_loss(logits, labels);
        Tensor<T> dice = dice_loss(logits, labels, true);
        out.l_ce = static_cast<double>(ce.item());
        out.l_dice = static_cast<double>(dice.item());
        out.seg = add(ce, dice);
        out.l_seg = static_cast<double>(out.seg.item());
    }

    Tensor<T> total;
    if (w.beta1 > 0 && out.fusion.defined())
        total = affine(out.fusion, static_cast<T>(w.beta1), T(0));
    if (w.beta2 > 0) {
        Tensor<T> segw = affine(out.seg, static_cast<T>(w.beta2), T(0));
        total = total.defined() ? add(total, segw) : segw;
    }
    if (!total.defined()) total = Tensor<T>::scalar(T(0));
    out.total = total;
    out.l_total = static_cast<double>(total.item());
    return out;
}

#define VIFUSE_INST_LOSS(T)                                                        \
    template Tensor<T> intensity_loss<T>(const Tensor<T>&, const Tensor<T>&,       \
                                         const Tensor<T>&);                        \
    template Tensor<T> gradient_loss<T>(const Tensor<T>&, const Tensor<T>&,        \
                                        const Tensor<T>&);                         \
    template Tensor<T> ssim_loss<T>(const Tensor<T>&, const Tensor<T>&,            \
                                    const Tensor<T>&, double, double,              \
                                    const SsimParams&);                            \
    template Tensor<T> color_loss<T>(const Tensor<T>&, const Tensor<T>&);          \
    template Tensor<T> ce_loss<T>(const Tensor<T>&, const std::vector<LabelMap>&); \
    template Tensor<T> dice_loss<T>(const Tensor<T>&, const std::vector<LabelMap>&, \
                                    bool);                                         \
    template LossBreakdown<T> total_loss<T>(                                       \
        const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,    \
        const std::vector<LabelMap>&, const LossWeights&, const SsimParams&);

VIFUSE_INST_LOSS(float)
VIFUSE_INST_LOSS(double)

}  // namespace vifuse
