#include "vifuse/model.hpp"

#include <cmath>

namespace vifuse {

void validate_model_config(const ModelConfig& cfg) {
    check(cfg.backbone.base > 0 && cfg.backbone.c_feat > 0,
          "model: channel widths must be positive");
    check(cfg.backbone.c_feat % 2 == 0, "model: c_feat must be even");
    check(cfg.mth.embed_dim > 0 && cfg.mth.heads > 0 &&
              cfg.mth.embed_dim % cfg.mth.heads == 0,
          "model: embed_dim must divide evenly into heads");
    check(cfg.mth.n_classes >= 2, "model: need at least 2 classes");
    check(cfg.mth.hia_ch_kv == "from_re" || cfg.mth.hia_ch_kv == "from_seg",
          "model: hia_ch_kv must be from_re or from_seg");
    check(cfg.mth.token_stride >= 1, "model: token_stride must be >= 1");
}

template <typename T>
FusionModel<T>::FusionModel(const ModelConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
    validate_model_config(cfg);
    Rng rng(mix_seed(init_seed, 0x6d6f64656cULL));
    const int64_t in_ch = cfg.mth.channel_mode == ChannelMode::kOne ? 1 : 3;
    const int64_t out_ch = in_ch;
    const int64_t b = cfg.backbone.base;
    const int64_t cf = cfg.backbone.c_feat;
    const int64_t d = cfg.mth.embed_dim;

    auto conv = [&](const std::string& path, const std::string& group, int64_t cout,
                    int64_t cin, int64_t k) {
        store_.add(path + ".weight", group,
                   kaiming_uniform<T>(rng, {cout, cin, k, k}, cin * k * k));
        store_.add(path + ".bias", group, Tensor<T>::zeros({cout}));
    };
    auto lin = [&](const std::string& path, const std::string& group, int64_t out,
                   int64_t in, bool zero = false) {
        store_.add(path + ".weight", group,
                   zero ? Tensor<T>::zeros({out, in})
                        : xavier_uniform<T>(rng, {out, in}, in, out));
        store_.add(path + ".bias", group, Tensor<T>::zeros({out}));
    };

    conv("backbone.vis_stem.0", "backbone", b, in_ch, 3);
    conv("backbone.vis_stem.1", "backbone", b, b, 3);
    conv("backbone.ir_stem.0", "backbone", b, in_ch, 3);
    conv("backbone.ir_stem.1", "backbone", b, b, 3);
    conv("backbone.fuse.0", "backbone", cf, 2 * b, 3);
    conv("backbone.fuse.1", "backbone", cf, cf, 3);

    conv("mth.re_stem", "fusion_head", cf, cf, 3);
    conv("mth.seg_stem", "seg_head", cf, cf, 3);

    conv("mth.hia.align", "fusion_head", cf, cf, 1);
    conv("mth.hia.embed_s_high", "fusion_head", d, cf, 1);
    conv("mth.hia.embed_s_low", "fusion_head", d, cf, 1);
    conv("mth.hia.embed_r_high", "fusion_head", d, cf, 1);
    conv("mth.hia.embed_r_low", "fusion_head", d, cf, 1);
    for (const char* blk : {"attn_high", "attn_low"})
        for (const char* proj : {"wq", "wk", "wv", "wo"})
            lin("mth.hia." + std::string(blk) + "." + proj, "fusion_head", d, d);
    lin("mth.hia.mlp.0", "fusion_head", 2 * d, 2 * d);
    // Zero final layer: training starts at the residual identity.
    lin("mth.hia.mlp.1", "fusion_head", cf, 2 * d, /*zero=*/true);

    conv("mth.fusion_out.0", "fusion_head", cf, cf, 3);
    conv("mth.fusion_out.1", "fusion_head", out_ch, cf, 3);
    conv("mth.seg_out.0", "seg_head", cf, cf, 3);
    conv("mth.seg_out.1", "seg_head", cfg.mth.n_classes, cf, 3);
}

template <typename T>
Tensor<T> FusionModel<T>::p(const std::string& path) const {
    const Param<T>* prm = store_.find(path);
    check(prm != nullptr, "model: missing parameter " + path);
    return prm->tensor;
}

template <typename T>
Tensor<T> FusionModel<T>::conv_block(const Tensor<T>& x, const std::string& path) const {
    return gelu(conv2d(x, p(path + ".weight"), p(path + ".bias"), 1, 1));
}

template <typename T>
Tensor<T> FusionModel<T>::attention(const Tensor<T>& q, const Tensor<T>& kv,
                                    const std::string& prefix) const {
    const int64_t N = q.dim(0), Tq = q.dim(1), Tk = kv.dim(1);
    const int64_t d = cfg_.mth.embed_dim, h = cfg_.mth.heads, dh = d / h;
    check(q.dim(2) == d && kv.dim(2) == d,
          "attention: token dim mismatch, q " + shape_str(q.shape()) + " kv " +
              shape_str(kv.shape()));

    auto split_heads = [&](const Tensor<T>& t, int64_t tokens) {
        return permute(reshape(t, {N, tokens, h, dh}), {0, 2, 1, 3});
    };
    Tensor<T> Q = split_heads(linear(q, p(prefix + ".wq.weight"), p(prefix + ".wq.bias")), Tq);
    Tensor<T> K = split_heads(linear(kv, p(prefix + ".wk.weight"), p(prefix + ".wk.bias")), Tk);
    Tensor<T> V = split_heads(linear(kv, p(prefix + ".wv.weight"), p(prefix + ".wv.bias")), Tk);

    Tensor<T> scores = affine(matmul(Q, permute(K, {0, 1, 3, 2})),
                              static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh))),
                              T(0));
    Tensor<T> ctx = matmul(softmax(scores, 3), V);
    Tensor<T> merged = reshape(permute(ctx, {0, 2, 1, 3}), {N, Tq, d});
    return linear(merged, p(prefix + ".wo.weight"), p(prefix + ".wo.bias"));
}

template <typename T>
typename FusionModel<T>::Output FusionModel<T>::forward(const Tensor<T>& vis,
                                                        const Tensor<T>& ir) const {
    check(vis.defined() && ir.defined() && vis.ndim() == 4 && ir.ndim() == 4,
          "model: expected NCHW inputs");
    check(vis.shape() == ir.shape(), "model: vis " + shape_str(vis.shape()) +
                                         " and ir " + shape_str(ir.shape()) +
                                         " must match");
    check(vis.dim(1) == 3, "model: inputs must be RGB (3 channels)");

    const bool one_ch = cfg_.mth.channel_mode == ChannelMode::kOne;
    Tensor<T> v_in = one_ch ? luma(vis) : vis;
    Tensor<T> i_in = one_ch ? luma(ir) : ir;

    Output out;
    Tensor<T> v = conv_block(conv_block(v_in, "backbone.vis_stem.0"), "backbone.vis_stem.1");
    Tensor<T> i = conv_block(conv_block(i_in, "backbone.ir_stem.0"), "backbone.ir_stem.1");
    out.features =
        conv_block(conv_block(concat<T>({v, i}, 1), "backbone.fuse.0"), "backbone.fuse.1");

    out.f_re = conv_block(out.features, "mth.re_stem");
    out.f_seg = conv_block(out.features, "mth.seg_stem");

    if (cfg_.mth.hia_f_enabled) {
        const int64_t stride = cfg_.mth.token_stride;
        const int64_t H = out.f_re.dim(2), W = out.f_re.dim(3);
        check(H % stride == 0 && W % stride == 0,
              "model: token_stride " + std::to_string(stride) +
                  " must divide the feature size " + shape_str(out.f_re.shape()));
        Tensor<T> aligned = conv2d(out.f_seg, p("mth.hia.align.weight"),
                                   p("mth.hia.align.bias"), 1, 0);
        Tensor<T> sp = stride > 1 ? avg_pool2d(aligned, stride) : aligned;
        Tensor<T> rp = stride > 1 ? avg_pool2d(out.f_re, stride) : out.f_re;
        const int64_t Ht = H / stride, Wt = W / stride;
        const int64_t N = out.f_re.dim(0), d = cfg_.mth.embed_dim;

        auto tokens = [&](const Tensor<T>& feats, const std::string& embed) {
            Tensor<T> e = conv2d(feats, p(embed + ".weight"), p(embed + ".bias"), 1, 0);
            return permute(reshape(e, {N, d, Ht * Wt}), {0, 2, 1});  // [N,T,d]
        };
        Tensor<T> t_s_h = tokens(sp, "mth.hia.embed_s_high");
        Tensor<T> t_s_l = tokens(sp, "mth.hia.embed_s_low");
        Tensor<T> t_r_h = tokens(rp, "mth.hia.embed_r_high");
        Tensor<T> t_r_l = tokens(rp, "mth.hia.embed_r_low");

        Tensor<T> kv_high = cfg_.mth.hia_ch_kv == "from_re" ? t_r_h : t_s_l;
        Tensor<T> f_h = attention(t_s_h, kv_high, "mth.hia.attn_high");
        Tensor<T> f_l = attention(t_r_l, t_s_l, "mth.hia.attn_low");

        Tensor<T> catd = concat<T>({f_h, f_l}, 2);  // [N,T,2d]
        Tensor<T> hidden =
            gelu(linear(catd, p("mth.hia.mlp.0.weight"), p("mth.hia.mlp.0.bias")));
        Tensor<T> mixed =
            linear(hidden, p("mth.hia.mlp.1.weight"), p("mth.hia.mlp.1.bias"));
        Tensor<T> map = permute(reshape(mixed, {N, Ht, Wt, cfg_.backbone.c_feat}),
                                {0, 3, 1, 2});
        if (stride > 1) map = upsample_nearest2d(map, stride);
        out.f_re_interacted = add(out.f_re, map);
    } else {
        out.f_re_interacted = out.f_re;
    }

    Tensor<T> fo = conv_block(out.f_re_interacted, "mth.fusion_out.0");
    out.fused = sigmoid(
        conv2d(fo, p("mth.fusion_out.1.weight"), p("mth.fusion_out.1.bias"), 1, 1));

    Tensor<T> so = conv_block(out.f_seg, "mth.seg_out.0");
    out.logits = conv2d(so, p("mth.seg_out.1.weight"), p("mth.seg_out.1.bias"), 1, 1);
    return out;
}

template <typename T>
Tensor<T> fused_to_rgb(const Tensor<T>& fused, const Tensor<T>& vis, ChannelMode mode) {
    if (mode == ChannelMode::kThree) return fused;
    check(fused.dim(1) == 1, "fused_to_rgb: expected 1-channel fused image");
    Tensor<T> chroma = slice(rgb_to_ycbcr(detach(vis)), 1, 1, 2);
    return ycbcr_to_rgb(concat<T>({fused, chroma}, 1));
}

template class FusionModel<float>;
template class FusionModel<double>;
template Tensor<float> fused_to_rgb<float>(const Tensor<float>&, const Tensor<float>&,
                                           ChannelMode);
template Tensor<double> fused_to_rgb<double>(const Tensor<double>&, const Tensor<double>&,
                                             ChannelMode);

}  // namespace vifuse
