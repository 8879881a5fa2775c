#pragma once

#include <string>
#include <vector>

#include "vifuse/imgops.hpp"
#include "vifuse/labelmap.hpp"
#include "vifuse/tensor.hpp"

namespace vifuse {

// Fusion-quality metrics. Grayscale arguments are [1,1,H,W] tensors in
// [0,1] (BT.601 luma); everything is computed in double precision.

// Shannon entropy in bits of the 256-bin intensity histogram.
double metric_entropy(const Tensor<double>& y);

// Histogram mutual information MI(f,a) + MI(f,b), in bits, unnormalized.
double metric_mi(const Tensor<double>& yf, const Tensor<double>& ya,
                 const Tensor<double>& yb);

// Gradient-transfer quality: per-pixel edge strength/orientation agreement
// pushed through the usual sigmoid pair, weighted by source edge strength.
struct QabfResult {
    double value = 0;
    bool degenerate = false;  // both sources are edge-free
};
QabfResult metric_qabf(const Tensor<double>& yf, const Tensor<double>& ya,
                       const Tensor<double>& yb);

// Pixel-domain visual information fidelity, averaged over the two sources.
struct VifResult {
    double value = 0;
    bool degenerate = false;  // a source had no usable variance
};
VifResult metric_vif(const Tensor<double>& yf, const Tensor<double>& ya,
                     const Tensor<double>& yb, int64_t scales = 4);

// Structural similarity against each source, averaged.
double metric_ssim(const Tensor<double>& yf, const Tensor<double>& ya,
                   const Tensor<double>& yb, const SsimParams& p = {});

// levels == 0 picks min(5, deepest feasible pyramid) and renormalizes the
// canonical weights over the kept levels.
double metric_ms_ssim(const Tensor<double>& yf, const Tensor<double>& ya,
                      const Tensor<double>& yb, int64_t levels = 0,
                      const SsimParams& p = {});

// CIEDE2000 color difference between Lab points / mean over an RGB image
// pair (sRGB, D65 white).
double ciede2000_lab(double l1, double a1, double b1, double l2, double a2, double b2);
void srgb_to_lab(double r, double g, double b, double& l_out, double& a_out,
                 double& b_out);
double metric_delta_e(const Tensor<double>& rgb_a, const Tensor<double>& rgb_b);

// Segmentation quality. Pixels whose ground truth is the ignore index are
// excluded; classes absent from both prediction and truth do not enter the
// mean.
struct IouReport {
    std::vector<double> per_class;  // NaN for absent classes
    double miou = 0;
};

class IouAccumulator {
public:
    explicit IouAccumulator(int64_t n_classes);
    void add(const LabelMap& pred, const LabelMap& gt);
    IouReport report() const;
    // row-major [gt][pred]
    const std::vector<int64_t>& confusion() const { return confusion_; }

private:
    int64_t n_;
    std::vector<int64_t> confusion_;
};

IouReport iou_single(const LabelMap& pred, const LabelMap& gt, int64_t n_classes);

// Per-sample argmax over the class axis of [N,C,H,W] logits.
template <typename T>
LabelMap argmax_labels(const Tensor<T>& logits, int64_t n);

// All fusion metrics for one in-memory triple of RGB images ([1,3,H,W]).
struct ImageMetrics {
    std::string id;
    double en = 0, mi = 0, vif = 0, qabf = 0, ssim = 0, mss = 0, de = 0;
    double miou = 0;
    bool has_miou = false;
};

ImageMetrics eval_fused_triple(const Tensor<double>& fused_rgb,
                               const Tensor<double>& vis_rgb,
                               const Tensor<double>& ir_rgb,
                               int64_t msssim_levels = 0);

// Batch evaluation over directories of equally named PNGs. The checkpoint
// is optional; with it, segmentation mIoU is computed per image and over
// the dataset-level confusion matrix.
struct EvalOptions {
    std::string fused_dir;
    std::string vis_dir;
    std::string ir_dir;
    std::string labels_dir;   // required for mIoU
    std::string checkpoint;   // required for mIoU
    int64_t msssim_levels = 0;  // 0 = auto
};

struct MetricsReport {
    std::vector<ImageMetrics> per_image;
    ImageMetrics aggregate;  // means; miou is the dataset-level value
    IouReport dataset_iou;
    bool has_miou = false;
};

MetricsReport evaluate_directory(const EvalOptions& opt);

// Columns: id,EN,MI,VIF,Qabf,SSIM,MSS,dE,mIoU (mIoU blank without labels).
void write_report_csv(const MetricsReport& r, const std::string& path);
void write_report_jsonl(const MetricsReport& r, const std::string& path);

}  // namespace vifuse
