#pragma once

#include "vifuse/imgops.hpp"
#include "vifuse/params.hpp"

namespace vifuse {

enum class ChannelMode { kThree, kOne };

struct BackboneConfig {
    int64_t base = 8;     // stem width
    int64_t c_feat = 16;  // fused feature channels, must be even
};

struct MthConfig {
    int64_t embed_dim = 32;  // token dim d, divisible by heads
    int64_t heads = 4;
    int64_t n_classes = 5;
    bool hia_f_enabled = true;
    ChannelMode channel_mode = ChannelMode::kThree;
    // The interaction block's high-level attention can read its key/value
    // either from the reconstruction tokens (default) or, following the
    // alternative wiring, from the low-level segmentation tokens.
    std::string hia_ch_kv = "from_re";  // or "from_seg"
    // Average-pool factor applied before tokenization; k tokens per k*k
    // pixels keeps attention affordable at larger crops.
    int64_t token_stride = 4;
};

struct ModelConfig {
    BackboneConfig backbone;
    MthConfig mth;
};

// Backbone (per-modality stems -> concat -> fusion convs) plus the dual-branch
// head. Forward is stride-1: logits and fused image keep the input H x W.
template <typename T>
class FusionModel {
public:
    FusionModel(const ModelConfig& cfg, uint64_t init_seed);

    struct Output {
        Tensor<T> fused;   // [N,3,H,W] (or [N,1,H,W] in one-channel mode), sigmoid range
        Tensor<T> logits;  // [N,n_classes,H,W]
        Tensor<T> features;  // backbone output
        Tensor<T> f_re;      // reconstruction branch stem output
        Tensor<T> f_seg;     // segmentation branch stem output
        Tensor<T> f_re_interacted;  // f_re after the interaction residual
    };

    // vis and ir are RGB [N,3,H,W]; one-channel mode reduces them to luma
    // internally.
    Output forward(const Tensor<T>& vis, const Tensor<T>& ir) const;

    ParamStore<T>& params() { return store_; }
    const ParamStore<T>& params() const { return store_; }
    const ModelConfig& config() const { return cfg_; }

private:
    Tensor<T> p(const std::string& path) const;
    Tensor<T> conv_block(const Tensor<T>& x, const std::string& path) const;
    Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& kv,
                        const std::string& prefix) const;

    ModelConfig cfg_;
    ParamStore<T> store_;
};

void validate_model_config(const ModelConfig& cfg);

// In one-channel mode the fused luma is recombined with the chroma of the
// visible image; in three-channel mode this is the identity.
template <typename T>
Tensor<T> fused_to_rgb(const Tensor<T>& fused, const Tensor<T>& vis, ChannelMode mode);

}  // namespace vifuse
