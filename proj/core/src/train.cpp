#include "vifuse/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "vifuse/metrics.hpp"

namespace vifuse {

void validate_train_config(const TrainConfig& cfg) {
    check(cfg.epochs >= 1, "train: epochs must be at least 1");
    check(cfg.patience >= 1, "train: patience must be at least 1");
    check(cfg.batch_size >= 1, "train: batch_size must be at least 1");
    check(cfg.crop >= 8, "train: crop must be at least 8");
    check(cfg.split_ratio > 0.0 && cfg.split_ratio < 1.0,
          "train: split_ratio must be in (0,1)");
    check(cfg.adam.lr > 0.0, "train: learning rate must be positive");
    check(cfg.adam.beta1 >= 0.0 && cfg.adam.beta1 < 1.0 && cfg.adam.beta2 >= 0.0 &&
              cfg.adam.beta2 < 1.0,
          "train: adam betas must be in [0,1)");
    check(cfg.adam.eps > 0.0, "train: adam eps must be positive");
}

Adam::Adam(const AdamConfig& cfg, ParamStore<float>& params)
    : cfg_(cfg), params_(&params) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const Param<float>& p : params.items()) {
        m_.emplace_back(static_cast<size_t>(p.tensor.numel()), 0.0f);
        v_.emplace_back(static_cast<size_t>(p.tensor.numel()), 0.0f);
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params_->size(); ++i) {
        Param<float>& p = params_->items()[i];
        const std::vector<float>& g = p.tensor.grad();
        if (g.empty()) continue;  // zero gradient: m, v and value stay put
        float* w = p.tensor.data();
        std::vector<float>& m = m_[i];
        std::vector<float>& v = v_[i];
        for (size_t k = 0; k < g.size(); ++k) {
            const double gk = static_cast<double>(g[k]);
            if (!std::isfinite(gk))
                fail("non-finite gradient for parameter \"" + p.path + "\"");
            const double mk = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * gk;
            const double vk = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * gk * gk;
            m[k] = static_cast<float>(mk);
            v[k] = static_cast<float>(vk);
            w[k] -= static_cast<float>(cfg_.lr * (mk / bc1) /
                                       (std::sqrt(vk / bc2) + cfg_.eps));
        }
    }
}

EarlyStopper::EarlyStopper(int64_t patience)
    : patience_(patience), best_(std::numeric_limits<double>::infinity()) {
    check(patience >= 1, "EarlyStopper: patience must be at least 1");
}

bool EarlyStopper::observe(double value) {
    if (value < best_) {
        best_ = value;
        since_best_ = 0;
        return true;
    }
    ++since_best_;
    return false;
}

namespace {

void add_stats(EpochStats& acc, const LossBreakdown<float>& lb) {
    acc.l_int += lb.l_int;
    acc.l_grad += lb.l_grad;
    acc.l_ssim += lb.l_ssim;
    acc.l_color += lb.l_color;
    acc.l_ce += lb.l_ce;
    acc.l_dice += lb.l_dice;
    acc.l_fusion += lb.l_fusion;
    acc.l_seg += lb.l_seg;
    acc.l_total += lb.l_total;
}

void scale_stats(EpochStats& s, double inv) {
    s.l_int *= inv;
    s.l_grad *= inv;
    s.l_ssim *= inv;
    s.l_color *= inv;
    s.l_ce *= inv;
    s.l_dice *= inv;
    s.l_fusion *= inv;
    s.l_seg *= inv;
    s.l_total *= inv;
}

nlohmann::json stats_json(const EpochStats& s) {
    return nlohmann::json{{"l_int", s.l_int},     {"l_grad", s.l_grad},
                          {"l_ssim", s.l_ssim},   {"l_color", s.l_color},
                          {"l_ce", s.l_ce},       {"l_dice", s.l_dice},
                          {"l_fusion", s.l_fusion}, {"l_seg", s.l_seg},
                          {"l_total", s.l_total}};
}

nlohmann::json projection_json(const GradProjectionRecord& r) {
    return nlohmann::json{{"step", r.step},
                          {"dot", r.dot},
                          {"norm_fus", r.norm_fus},
                          {"norm_seg", r.norm_seg},
                          {"proj_fus_on_seg", r.proj_fus_on_seg},
                          {"proj_seg_on_fus", r.proj_seg_on_fus},
                          {"cosine", r.cosine},
                          {"degenerate", r.degenerate}};
}

}  // namespace

std::string history_to_jsonl(const TrainHistory& h) {
    std::ostringstream out;
    for (const EpochRecord& e : h.epochs) {
        nlohmann::json j{{"epoch", e.epoch},
                         {"train", stats_json(e.train)},
                         {"val", stats_json(e.val)},
                         {"val_miou", e.val_miou}};
        if (!e.projections.empty()) {
            nlohmann::json ps = nlohmann::json::array();
            for (const GradProjectionRecord& r : e.projections)
                ps.push_back(projection_json(r));
            j["projections"] = ps;
        }
        out << j.dump() << "\n";
    }
    nlohmann::json s{{"best_epoch", h.best_epoch},
                     {"best_val_total", h.best_val_total},
                     {"stopped_epoch", h.stopped_epoch},
                     {"early_stopped", h.early_stopped}};
    out << nlohmann::json{{"summary", s}}.dump() << "\n";
    return out.str();
}

TrainHistory train(FusionModel<float>& model, const TrainConfig& cfg,
                   const DatasetSplit& data) {
    validate_train_config(cfg);
    check(!data.train.empty(), "train: empty training set");
    check(!data.val.empty(), "train: empty validation set");

    const ChannelMode mode = model.config().mth.channel_mode;
    const int64_t n_classes = model.config().mth.n_classes;
    Adam opt(cfg.adam, model.params());
    EarlyStopper stopper(cfg.patience);
    TrainHistory hist;
    std::vector<std::vector<float>> best_snapshot;
    int64_t global_step = 0;

    for (int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        Rng rng(mix_seed(cfg.seed, static_cast<uint64_t>(epoch)));
        std::vector<size_t> order(data.train.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);

        EpochRecord rec;
        rec.epoch = epoch;
        int64_t steps = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
            const size_t end =
                std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            std::vector<SamplePair> crops;
            crops.reserve(end - start);
            for (size_t i = start; i < end; ++i)
                crops.push_back(random_crop_pair(data.train[order[i]], cfg.crop, rng));
            std::vector<const SamplePair*> ptrs;
            for (const SamplePair& c : crops) ptrs.push_back(&c);
            Batch b = make_batch(ptrs);
            ++global_step;

            if (cfg.log_grad_projection) {
                GradProjectionRecord pr =
                    grad_projection_probe(model, b, cfg.weights, cfg.ssim);
                pr.step = global_step;
                rec.projections.push_back(pr);
            }

            Tape<float> tape;
            typename Tape<float>::Scope scope(tape);
            auto out = model.forward(b.vis, b.ir);
            Tensor<float> f_rgb = fused_to_rgb(out.fused, b.vis, mode);
            LossBreakdown<float> lb =
                total_loss(f_rgb, b.ir, b.vis, out.logits, b.labels, cfg.weights, cfg.ssim);
            if (!std::isfinite(lb.l_total))
                fail("non-finite training loss at epoch " + std::to_string(epoch) +
                     " step " + std::to_string(global_step));
            tape.backward(lb.total);
            opt.step();
            model.params().clear_grads();
            add_stats(rec.train, lb);
            ++steps;
        }
        scale_stats(rec.train, 1.0 / static_cast<double>(steps));

        IouAccumulator iou(n_classes);
        for (const SamplePair& s : data.val) {
            auto out = model.forward(s.vis, s.ir);
            Tensor<float> f_rgb = fused_to_rgb(out.fused, s.vis, mode);
            LossBreakdown<float> lb = total_loss(f_rgb, s.ir, s.vis, out.logits,
                                                 {s.labels}, cfg.weights, cfg.ssim);
            add_stats(rec.val, lb);
            iou.add(argmax_labels(out.logits, 0), s.labels);
        }
        scale_stats(rec.val, 1.0 / static_cast<double>(data.val.size()));
        rec.val_miou = iou.report().miou;

        if (stopper.observe(rec.val.l_total)) {
            best_snapshot = model.params().snapshot();
            hist.best_epoch = epoch;
            hist.best_val_total = rec.val.l_total;
        }
        rec.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        hist.epochs.push_back(std::move(rec));
        hist.stopped_epoch = epoch;
        if (stopper.should_stop()) {
            hist.early_stopped = true;
            break;
        }
    }

    model.params().restore(best_snapshot);
    return hist;
}

GradProjectionRecord grad_projection_probe(FusionModel<float>& model, const Batch& batch,
                                           const LossWeights& w, const SsimParams& sp) {
    const ChannelMode mode = model.config().mth.channel_mode;
    // Probe geometry is independent of the ablation in effect: force both
    // branches on.
    LossWeights pw = w;
    pw.beta1 = 1.0;
    pw.beta2 = 1.0;
    check(pw.lambda1 != 0 || pw.lambda2 != 0 || pw.lambda3 != 0 || pw.lambda4 != 0,
          "grad_projection_probe: all fusion loss weights are zero");

    ParamStore<float>& params = model.params();
    params.clear_grads();

    {
        Tape<float> tape;
        typename Tape<float>::Scope scope(tape);
        auto out = model.forward(batch.vis, batch.ir);
        Tensor<float> f_rgb = fused_to_rgb(out.fused, batch.vis, mode);
        LossBreakdown<float> lb =
            total_loss(f_rgb, batch.ir, batch.vis, out.logits, batch.labels, pw, sp);
        tape.backward(lb.fusion);
    }
    const std::vector<float> g_fus = params.flat_grad("backbone");
    params.clear_grads();

    {
        Tape<float> tape;
        typename Tape<float>::Scope scope(tape);
        auto out = model.forward(batch.vis, batch.ir);
        Tensor<float> f_rgb = fused_to_rgb(out.fused, batch.vis, mode);
        LossBreakdown<float> lb =
            total_loss(f_rgb, batch.ir, batch.vis, out.logits, batch.labels, pw, sp);
        tape.backward(lb.seg);
    }
    const std::vector<float> g_seg = params.flat_grad("backbone");
    params.clear_grads();

    GradProjectionRecord r;
    double dot = 0, nf = 0, ns = 0;
    for (size_t i = 0; i < g_fus.size(); ++i) {
        dot += static_cast<double>(g_fus[i]) * static_cast<double>(g_seg[i]);
        nf += static_cast<double>(g_fus[i]) * static_cast<double>(g_fus[i]);
        ns += static_cast<double>(g_seg[i]) * static_cast<double>(g_seg[i]);
    }
    r.dot = dot;
    r.norm_fus = std::sqrt(nf);
    r.norm_seg = std::sqrt(ns);
    r.degenerate = (r.norm_fus == 0.0 || r.norm_seg == 0.0);
    if (!r.degenerate) {
        r.proj_fus_on_seg = dot / r.norm_seg;
        r.proj_seg_on_fus = dot / r.norm_fus;
        r.cosine = dot / (r.norm_fus * r.norm_seg);
    }
    return r;
}

void apply_ablation(const std::string& variant, ModelConfig& model, TrainConfig& train) {
    if (variant == "full") return;
    if (variant == "no_hia_f") {
        model.mth.hia_f_enabled = false;
    } else if (variant == "no_seg_loss") {
        train.weights.beta2 = 0.0;
    } else if (variant == "no_color_loss") {
        train.weights.lambda4 = 0.0;
    } else if (variant == "one_channel") {
        model.mth.channel_mode = ChannelMode::kOne;
    } else {
        fail("unknown ablation variant \"" + variant +
             "\" (expected full, no_hia_f, no_seg_loss, no_color_loss or one_channel)");
    }
}

namespace {

Tensor<double> to_double(const Tensor<float>& t) {
    Tensor<double> out = Tensor<double>::zeros(t.shape());
    const float* src = t.data();
    double* dst = out.data();
    for (int64_t i = 0; i < t.numel(); ++i) dst[i] = static_cast<double>(src[i]);
    return out;
}

AblationCell eval_variant(FusionModel<float>& model, const std::vector<SamplePair>& val) {
    AblationCell cell;
    IouAccumulator iou(model.config().mth.n_classes);
    for (const SamplePair& s : val) {
        auto out = model.forward(s.vis, s.ir);
        Tensor<float> f_rgb = fused_to_rgb(out.fused, s.vis, model.config().mth.channel_mode);
        Tensor<double> fd = to_double(f_rgb);
        Tensor<double> vd = to_double(s.vis);
        Tensor<double> id = to_double(s.ir);
        Tensor<double> yf = luma(fd), yv = luma(vd), yi = luma(id);
        cell.mi += metric_mi(yf, yv, yi);
        cell.qabf += metric_qabf(yf, yv, yi).value;
        cell.ssim += metric_ssim(yf, yv, yi);
        cell.de += metric_delta_e(fd, vd);
        iou.add(argmax_labels(out.logits, 0), s.labels);
    }
    const double inv = 1.0 / static_cast<double>(val.size());
    cell.mi *= inv;
    cell.qabf *= inv;
    cell.ssim *= inv;
    cell.de *= inv;
    cell.miou = iou.report().miou;
    return cell;
}

}  // namespace

AblationResult run_ablation(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                            const std::vector<SamplePair>& pairs,
                            const std::vector<std::string>& variants,
                            const std::vector<uint64_t>& seeds) {
    check(!variants.empty(), "run_ablation: no variants requested");
    check(!seeds.empty(), "run_ablation: no seeds given");

    AblationResult res;
    res.seeds = seeds;
    for (const std::string& variant : variants) {
        AblationRow row;
        row.variant = variant;
        for (uint64_t seed : seeds) {
            ModelConfig mc = model_cfg;
            TrainConfig tc = train_cfg;
            tc.seed = seed;
            apply_ablation(variant, mc, tc);
            validate_model_config(mc);

            DatasetSplit split = split_dataset(pairs, tc.split_ratio, seed);
            FusionModel<float> model(mc, seed);
            train(model, tc, split);
            row.per_seed.push_back(eval_variant(model, split.val));
        }
        const double inv = 1.0 / static_cast<double>(row.per_seed.size());
        for (const AblationCell& c : row.per_seed) {
            row.mean.mi += c.mi * inv;
            row.mean.qabf += c.qabf * inv;
            row.mean.ssim += c.ssim * inv;
            row.mean.de += c.de * inv;
            row.mean.miou += c.miou * inv;
        }
        res.rows.push_back(std::move(row));
    }
    return res;
}

std::string ablation_table(const AblationResult& r) {
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof(line), "%-14s %8s %8s %8s %8s %8s\n", "variant", "MI",
                  "Qabf", "SSIM", "dE", "mIoU");
    out << line;
    for (const AblationRow& row : r.rows) {
        std::snprintf(line, sizeof(line), "%-14s %8.4f %8.4f %8.4f %8.4f %8.4f\n",
                      row.variant.c_str(), row.mean.mi, row.mean.qabf, row.mean.ssim,
                      row.mean.de, row.mean.miou);
        out << line;
    }
    return out.str();
}

std::string ablation_to_json(const AblationResult& r) {
    nlohmann::json j;
    j["seeds"] = r.seeds;
    j["rows"] = nlohmann::json::array();
    auto cell_json = [](const AblationCell& c) {
        return nlohmann::json{{"mi", c.mi},
                              {"qabf", c.qabf},
                              {"ssim", c.ssim},
                              {"de", c.de},
                              {"miou", c.miou}};
    };
    for (const AblationRow& row : r.rows) {
        nlohmann::json jr{{"variant", row.variant}, {"mean", cell_json(row.mean)}};
        jr["per_seed"] = nlohmann::json::array();
        for (const AblationCell& c : row.per_seed) jr["per_seed"].push_back(cell_json(c));
        j["rows"].push_back(jr);
    }
    return j.dump(2);
}

}  // namespace vifuse
