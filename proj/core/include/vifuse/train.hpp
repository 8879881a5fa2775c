#pragma once

#include <string>
#include <vector>

#include "vifuse/data.hpp"
#include "vifuse/losses.hpp"
#include "vifuse/model.hpp"

namespace vifuse {

struct AdamConfig {
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct TrainConfig {
    int64_t epochs = 40;
    int64_t patience = 10;
    int64_t batch_size = 8;
    int64_t crop = 64;
    double split_ratio = 0.9;
    uint64_t seed = 1;
    AdamConfig adam;
    LossWeights weights;
    SsimParams ssim;
    bool log_grad_projection = false;
};

void validate_train_config(const TrainConfig& cfg);

// Adam with bias correction. A parameter whose gradient was never written
// is treated as zero gradient and stays exactly unchanged; a non-finite
// gradient aborts the step naming the offending parameter.
class Adam {
public:
    Adam(const AdamConfig& cfg, ParamStore<float>& params);
    void step();
    int64_t steps_taken() const { return t_; }

private:
    AdamConfig cfg_;
    ParamStore<float>* params_;
    std::vector<std::vector<float>> m_, v_;
    int64_t t_ = 0;
};

// Stops once the monitored value has not improved for `patience`
// consecutive observations.
class EarlyStopper {
public:
    explicit EarlyStopper(int64_t patience);
    bool observe(double value);  // true if value improved on the best so far
    bool should_stop() const { return since_best_ >= patience_; }
    double best() const { return best_; }
    int64_t since_best() const { return since_best_; }

private:
    int64_t patience_;
    double best_;
    int64_t since_best_ = 0;
};

// Means of the loss components over an epoch.
struct EpochStats {
    double l_int = 0, l_grad = 0, l_ssim = 0, l_color = 0;
    double l_ce = 0, l_dice = 0;
    double l_fusion = 0, l_seg = 0, l_total = 0;
};

// Gradient geometry between the two task losses, measured on the backbone
// parameter group.
struct GradProjectionRecord {
    int64_t step = 0;
    double dot = 0;
    double norm_fus = 0;
    double norm_seg = 0;
    double proj_fus_on_seg = 0;  // (g_fus . g_seg) / |g_seg|
    double proj_seg_on_fus = 0;  // (g_fus . g_seg) / |g_fus|
    double cosine = 0;
    bool degenerate = false;  // a gradient had zero norm
};

struct EpochRecord {
    int64_t epoch = 0;  // 1-based
    EpochStats train;
    EpochStats val;
    double val_miou = 0;
    double wall_seconds = 0;  // in-memory only, never serialized
    std::vector<GradProjectionRecord> projections;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    int64_t best_epoch = 0;
    double best_val_total = 0;
    int64_t stopped_epoch = 0;
    bool early_stopped = false;
};

// One JSON object per epoch plus a trailing summary object. Wall-clock time
// is deliberately omitted so a rerun of the same config produces a
// byte-identical file.
std::string history_to_jsonl(const TrainHistory& h);

// Fixed schedule: per epoch, shuffle the training set and draw one random
// crop per sample (all randomness keyed on mix_seed(cfg.seed, epoch)),
// validate on the full-size validation images, and track the best epoch by
// validation total loss. On return the model holds the best parameters.
TrainHistory train(FusionModel<float>& model, const TrainConfig& cfg,
                   const DatasetSplit& data);

// Two separate passes over one batch: backward the lambda-weighted fusion
// loss, then the segmentation loss, and compare the backbone gradients.
// Parameters are left unchanged, gradients cleared.
GradProjectionRecord grad_projection_probe(FusionModel<float>& model, const Batch& batch,
                                           const LossWeights& w, const SsimParams& sp);

struct AblationCell {
    double mi = 0, qabf = 0, ssim = 0, de = 0, miou = 0;
};

struct AblationRow {
    std::string variant;
    std::vector<AblationCell> per_seed;
    AblationCell mean;
};

struct AblationResult {
    std::vector<uint64_t> seeds;
    std::vector<AblationRow> rows;
};

// Variants: "full", "no_hia_f", "no_seg_loss", "no_color_loss", "one_channel".
void apply_ablation(const std::string& variant, ModelConfig& model, TrainConfig& train);

// Trains every variant for every seed on a fresh split, evaluates the best
// model on the validation images and averages the cells over seeds.
AblationResult run_ablation(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                            const std::vector<SamplePair>& pairs,
                            const std::vector<std::string>& variants,
                            const std::vector<uint64_t>& seeds);

std::string ablation_table(const AblationResult& r);
std::string ablation_to_json(const AblationResult& r);

}  // namespace vifuse
