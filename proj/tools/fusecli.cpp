// fusecli: train, run and evaluate the visible/infrared fusion model.
//
// Exit codes: 0 success, 2 usage or validation error, 1 runtime failure.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "vifuse/checkpoint.hpp"
#include "vifuse/config.hpp"
#include "vifuse/metrics.hpp"
#include "vifuse/model.hpp"
#include "vifuse/pngio.hpp"
#include "vifuse/synth.hpp"
#include "vifuse/train.hpp"

namespace fs = std::filesystem;
using namespace vifuse;

namespace {

// Thrown for bad arguments or bad config content (exit code 2, as opposed
// to failures while running, which exit 1).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

int64_t parse_size(const std::string& s) {
    int64_t h = 0, w = 0;
    char extra;
    if (std::sscanf(s.c_str(), "%lldx%lld%c", reinterpret_cast<long long*>(&h),
                    reinterpret_cast<long long*>(&w), &extra) == 2) {
        if (h != w) throw UsageError("non-square scenes are not supported: " + s);
        return h;
    }
    if (std::sscanf(s.c_str(), "%lld%c", reinterpret_cast<long long*>(&h), &extra) == 1)
        return h;
    throw UsageError("cannot parse --size \"" + s + "\" (expected N or NxN)");
}

RunConfig load_config_file(const std::string& path) {
    RunConfig rc;
    if (path.empty()) return rc;
    std::ifstream in(path);
    if (!in.good()) throw UsageError("cannot read config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        rc = parse_config(ss.str());
    } catch (const Error& e) {
        throw UsageError(path + ": " + e.what());
    }
    return rc;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    check(out.good(), "cannot write " + path.string());
    out << text;
    check(out.good(), "write failed: " + path.string());
}

std::vector<std::string> png_stems(const fs::path& dir) {
    check(fs::is_directory(dir), "directory missing: " + dir.string());
    std::vector<std::string> stems;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png")
            stems.push_back(e.path().stem().string());
    std::sort(stems.begin(), stems.end());
    check(!stems.empty(), "no PNG files under " + dir.string());
    return stems;
}

// Channel mosaic of a [1,C,H,W] feature map, each tile min-max normalized.
ImageU8 feature_mosaic(const Tensor<float>& t) {
    const int64_t c = t.shape()[1], h = t.shape()[2], w = t.shape()[3];
    const int64_t cols = static_cast<int64_t>(std::ceil(std::sqrt(static_cast<double>(c))));
    const int64_t rows = (c + cols - 1) / cols;
    ImageU8 img;
    img.channels = 1;
    img.h = rows * (h + 1) - 1;
    img.w = cols * (w + 1) - 1;
    img.data.assign(static_cast<size_t>(img.h * img.w), 0);
    for (int64_t ch = 0; ch < c; ++ch) {
        const float* p = t.data() + ch * h * w;
        float lo = p[0], hi = p[0];
        for (int64_t i = 1; i < h * w; ++i) {
            lo = std::min(lo, p[i]);
            hi = std::max(hi, p[i]);
        }
        const float scale = hi > lo ? 255.0f / (hi - lo) : 0.0f;
        const int64_t oy = (ch / cols) * (h + 1);
        const int64_t ox = (ch % cols) * (w + 1);
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x)
                img.data[static_cast<size_t>((oy + y) * img.w + ox + x)] =
                    static_cast<uint8_t>(std::lround((p[y * w + x] - lo) * scale));
    }
    return img;
}

Tensor<float> load_rgb(const fs::path& p, const char* what) {
    check(fs::exists(p), std::string("missing ") + what + " image: " + p.string());
    ImageU8 img = read_png(p.string());
    Tensor<float> t = image_to_tensor<float>(img);
    if (img.channels == 1) t = concat<float>({t, t, t}, 1);
    return t;
}

std::string ablate_to_variant(const std::string& flag) {
    if (flag == "hia_f") return "no_hia_f";
    if (flag == "seg_loss") return "no_seg_loss";
    if (flag == "color_loss") return "no_color_loss";
    if (flag == "one_channel") return "one_channel";
    throw UsageError("unknown --ablate value \"" + flag +
                     "\" (expected hia_f, seg_loss, color_loss or one_channel)");
}

// ---- synth ----------------------------------------------------------------

struct SynthArgs {
    std::string out;
    int64_t count = 200;
    uint64_t seed = 1;
    std::string size = "64x64";
    int64_t classes = 5;
    double noise = SynthConfig{}.noise_sigma;
    bool force = false;
};

int cmd_synth(const SynthArgs& a) {
    SynthConfig cfg;
    cfg.size = parse_size(a.size);
    cfg.n_classes = a.classes;
    cfg.seed = a.seed;
    cfg.noise_sigma = a.noise;
    try {
        validate_synth_config(cfg);
        check(a.count >= 1, "count must be at least 1");
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
    write_synth_dataset(cfg, a.count, a.out, a.force);
    std::cout << "wrote " << a.count << " scenes (" << cfg.size << "x" << cfg.size << ", "
              << cfg.n_classes << " classes) to " << a.out << "\n";
    return 0;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
    std::string data;
    std::string config;
    std::string out;
    std::string ablate;
    int64_t seed = -1;
    int64_t epochs = -1;
    bool log_projections = false;
};

int cmd_train(const TrainArgs& a) {
    RunConfig rc = load_config_file(a.config);
    if (a.seed >= 0) rc.train.seed = static_cast<uint64_t>(a.seed);
    if (a.epochs >= 0) rc.train.epochs = a.epochs;
    if (a.log_projections) rc.train.log_grad_projection = true;
    if (!a.ablate.empty()) apply_ablation(ablate_to_variant(a.ablate), rc.model, rc.train);
    try {
        validate_model_config(rc.model);
        validate_train_config(rc.train);
    } catch (const Error& e) {
        throw UsageError(e.what());
    }

    std::vector<SamplePair> pairs = load_dataset(a.data, rc.model.mth.n_classes);
    for (const SamplePair& s : pairs)
        check(rc.train.crop <= s.vis.shape()[2] && rc.train.crop <= s.vis.shape()[3],
              "crop " + std::to_string(rc.train.crop) + " exceeds image \"" + s.id +
                  "\" (" + std::to_string(s.vis.shape()[2]) + "x" +
                  std::to_string(s.vis.shape()[3]) + ")");
    DatasetSplit split = split_dataset(std::move(pairs), rc.train.split_ratio,
                                       rc.train.seed);

    fs::create_directories(a.out);
    const std::string resolved = dump_config(rc);
    write_text(fs::path(a.out) / "resolved_config.json", resolved);

    FusionModel<float> model(rc.model, rc.train.seed);
    TrainHistory hist = train(model, rc.train, split);

    write_text(fs::path(a.out) / "history.jsonl", history_to_jsonl(hist));
    save_checkpoint((fs::path(a.out) / "model.ckpt").string(), model.params(), resolved);

    const EpochRecord& last = hist.epochs.back();
    std::cout << "trained " << hist.stopped_epoch << " epoch(s)"
              << (hist.early_stopped ? " (early stop)" : "") << ", best epoch "
              << hist.best_epoch << " val L_total " << hist.best_val_total
              << ", final val mIoU " << last.val_miou << "\n"
              << "outputs in " << a.out << "\n";
    return 0;
}

// ---- fuse -----------------------------------------------------------------

struct FuseArgs {
    std::string ckpt;
    std::string vis;
    std::string ir;
    std::string out;
    std::string config;
    bool dump_features = false;
};

int cmd_fuse(const FuseArgs& a) {
    Checkpoint ck = load_checkpoint(a.ckpt);
    RunConfig rc;
    try {
        rc = parse_config(ck.config_json);
    } catch (const Error& e) {
        fail(std::string("checkpoint config snapshot is invalid: ") + e.what());
    }
    if (!a.config.empty()) {
        RunConfig override_cfg = load_config_file(a.config);
        if (override_cfg.model.mth.channel_mode != rc.model.mth.channel_mode)
            throw UsageError("checkpoint/config channel-mode mismatch");
        rc = override_cfg;
    }
    FusionModel<float> model(rc.model, 0);
    apply_checkpoint(ck, model.params());

    fs::create_directories(a.out);
    int64_t n = 0;
    for (const std::string& stem : png_stems(a.vis)) {
        Tensor<float> vis = load_rgb(fs::path(a.vis) / (stem + ".png"), "vis");
        Tensor<float> ir = load_rgb(fs::path(a.ir) / (stem + ".png"), "ir");
        check(vis.shape() == ir.shape(), "size mismatch for \"" + stem + "\"");

        auto out = model.forward(vis, ir);
        Tensor<float> rgb = fused_to_rgb(out.fused, vis, rc.model.mth.channel_mode);
        write_png((fs::path(a.out) / (stem + "_fused.png")).string(),
                  tensor_to_image<float>(rgb));
        write_png((fs::path(a.out) / (stem + "_labels.png")).string(),
                  labels_to_image(argmax_labels(out.logits, 0)));
        if (a.dump_features) {
            write_png((fs::path(a.out) / (stem + "_re_features.png")).string(),
                      feature_mosaic(out.f_re));
            write_png((fs::path(a.out) / (stem + "_seg_features.png")).string(),
                      feature_mosaic(out.f_seg));
        }
        ++n;
    }
    std::cout << "fused " << n << " pair(s) into " << a.out << "\n";
    return 0;
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
    std::string fused, vis, ir, labels, ckpt, out;
    int64_t msssim_levels = 0;
};

int cmd_eval(const EvalArgs& a) {
    EvalOptions opt;
    opt.fused_dir = a.fused;
    opt.vis_dir = a.vis;
    opt.ir_dir = a.ir;
    opt.labels_dir = a.labels;
    opt.checkpoint = a.ckpt;
    opt.msssim_levels = a.msssim_levels;
    MetricsReport rep = evaluate_directory(opt);

    fs::create_directories(a.out);
    write_report_csv(rep, (fs::path(a.out) / "metrics.csv").string());
    write_report_jsonl(rep, (fs::path(a.out) / "metrics.jsonl").string());

    const ImageMetrics& g = rep.aggregate;
    std::printf("aggregate over %zu image(s): EN %.4f  MI %.4f  VIF %.4f  Qabf %.4f  "
                "SSIM %.4f  MSS %.4f  dE %.4f",
                rep.per_image.size(), g.en, g.mi, g.vif, g.qabf, g.ssim, g.mss, g.de);
    if (rep.has_miou) std::printf("  mIoU %.4f", g.miou);
    std::printf("\nreports in %s\n", a.out.c_str());
    return 0;
}

// ---- grad-analyze ---------------------------------------------------------

struct GradArgs {
    std::string ckpt;
    std::string data;
    int64_t steps = 50;
    std::string out;
};

int cmd_grad_analyze(const GradArgs& a) {
    if (a.steps < 1) throw UsageError("--steps must be at least 1");

    Checkpoint ck = load_checkpoint(a.ckpt);
    RunConfig rc = parse_config(ck.config_json);
    FusionModel<float> model(rc.model, 0);
    apply_checkpoint(ck, model.params());

    std::vector<SamplePair> pairs = load_dataset(a.data, rc.model.mth.n_classes);
    DatasetSplit split = split_dataset(std::move(pairs), rc.train.split_ratio,
                                       rc.train.seed);

    // Batches follow the training schedule: epoch streams, shuffled order,
    // one random crop per sample.
    std::vector<GradProjectionRecord> records;
    int64_t epoch = 0;
    while (static_cast<int64_t>(records.size()) < a.steps) {
        ++epoch;
        Rng rng(mix_seed(rc.train.seed, static_cast<uint64_t>(epoch)));
        std::vector<size_t> order(split.train.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);
        for (size_t start = 0;
             start < order.size() && static_cast<int64_t>(records.size()) < a.steps;
             start += static_cast<size_t>(rc.train.batch_size)) {
            const size_t end =
                std::min(order.size(), start + static_cast<size_t>(rc.train.batch_size));
            std::vector<SamplePair> crops;
            for (size_t i = start; i < end; ++i)
                crops.push_back(random_crop_pair(split.train[order[i]], rc.train.crop, rng));
            std::vector<const SamplePair*> ptrs;
            for (const SamplePair& c : crops) ptrs.push_back(&c);
            GradProjectionRecord r =
                grad_projection_probe(model, make_batch(ptrs), rc.train.weights,
                                      rc.train.ssim);
            r.step = static_cast<int64_t>(records.size()) + 1;
            records.push_back(r);
        }
    }

    double avg_fs = 0, avg_sf = 0, avg_cos = 0;
    int64_t degenerate = 0;
    for (const GradProjectionRecord& r : records) {
        avg_fs += r.proj_fus_on_seg;
        avg_sf += r.proj_seg_on_fus;
        avg_cos += r.cosine;
        if (r.degenerate) ++degenerate;
    }
    const double inv = 1.0 / static_cast<double>(records.size());
    avg_fs *= inv;
    avg_sf *= inv;
    avg_cos *= inv;

    std::ostringstream text;
    for (const GradProjectionRecord& r : records) {
        nlohmann::json j{{"step", r.step},
                         {"dot", r.dot},
                         {"norm_fus", r.norm_fus},
                         {"norm_seg", r.norm_seg},
                         {"proj_fus_on_seg", r.proj_fus_on_seg},
                         {"proj_seg_on_fus", r.proj_seg_on_fus},
                         {"cosine", r.cosine},
                         {"degenerate", r.degenerate}};
        text << j.dump() << "\n";
    }
    nlohmann::json summary{{"steps", static_cast<int64_t>(records.size())},
                           {"avg_proj_fus_on_seg", avg_fs},
                           {"avg_proj_seg_on_fus", avg_sf},
                           {"avg_cosine", avg_cos},
                           {"degenerate_steps", degenerate}};
    text << nlohmann::json{{"summary", summary}}.dump() << "\n";
    write_text(a.out, text.str());

    std::printf("avg proj fusion→seg %.6e, seg→fusion %.6e, cosine %.4f over %lld step(s)\n",
                avg_fs, avg_sf, avg_cos, static_cast<long long>(records.size()));
    return 0;
}

// ---- ablate ---------------------------------------------------------------

struct AblateArgs {
    std::string data;
    std::string config;
    std::string out;
    std::vector<std::string> variants{"full", "no_hia_f", "no_seg_loss", "no_color_loss",
                                      "one_channel"};
    std::vector<uint64_t> seeds{1, 2, 3};
};

int cmd_ablate(const AblateArgs& a) {
    RunConfig rc = load_config_file(a.config);
    try {
        validate_model_config(rc.model);
        validate_train_config(rc.train);
        for (const std::string& v : a.variants) {
            ModelConfig m = rc.model;
            TrainConfig t = rc.train;
            apply_ablation(v, m, t);  // rejects unknown variants
        }
    } catch (const Error& e) {
        throw UsageError(e.what());
    }

    std::vector<SamplePair> pairs = load_dataset(a.data, rc.model.mth.n_classes);
    AblationResult res = run_ablation(rc.model, rc.train, pairs, a.variants, a.seeds);

    fs::create_directories(a.out);
    const std::string table = ablation_table(res);
    write_text(fs::path(a.out) / "ablation.txt", table);
    write_text(fs::path(a.out) / "ablation.json", ablation_to_json(res));
    std::cout << table << "outputs in " << a.out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"visible/infrared image fusion: train, fuse, evaluate"};
    app.require_subcommand(1);

    SynthArgs synth_args;
    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--out", synth_args.out, "output dataset root")->required();
    synth->add_option("--count", synth_args.count, "number of scenes");
    synth->add_option("--seed", synth_args.seed, "generator seed");
    synth->add_option("--size", synth_args.size, "scene size, N or NxN");
    synth->add_option("--classes", synth_args.classes, "number of classes incl. background");
    synth->add_option("--noise", synth_args.noise, "gaussian noise sigma");
    synth->add_flag("--force", synth_args.force, "allow writing into a non-empty directory");

    TrainArgs train_args;
    CLI::App* train = app.add_subcommand("train", "train the fusion model");
    train->add_option("--data", train_args.data, "dataset root")->required();
    train->add_option("--config", train_args.config, "JSON config file");
    train->add_option("--out", train_args.out, "output directory")->required();
    train->add_option("--ablate", train_args.ablate,
                      "hia_f, seg_loss, color_loss or one_channel");
    train->add_option("--seed", train_args.seed, "override the config seed");
    train->add_option("--epochs", train_args.epochs, "override the config epoch count");
    train->add_flag("--log-grad-projection", train_args.log_projections,
                    "record per-step gradient projections in the history");

    FuseArgs fuse_args;
    CLI::App* fuse = app.add_subcommand("fuse", "fuse image pairs with a checkpoint");
    fuse->add_option("--ckpt", fuse_args.ckpt, "checkpoint file")->required();
    fuse->add_option("--vis", fuse_args.vis, "directory of visible images")->required();
    fuse->add_option("--ir", fuse_args.ir, "directory of infrared images")->required();
    fuse->add_option("--out", fuse_args.out, "output directory")->required();
    fuse->add_option("--config", fuse_args.config, "config overriding the snapshot");
    fuse->add_flag("--dump-features", fuse_args.dump_features,
                   "also write per-branch feature mosaics");

    EvalArgs eval_args;
    CLI::App* eval = app.add_subcommand("eval", "score fused images");
    eval->add_option("--fused", eval_args.fused, "directory of fused images")->required();
    eval->add_option("--vis", eval_args.vis, "directory of visible images")->required();
    eval->add_option("--ir", eval_args.ir, "directory of infrared images")->required();
    eval->add_option("--labels", eval_args.labels, "directory of label maps");
    eval->add_option("--ckpt", eval_args.ckpt, "checkpoint for segmentation mIoU");
    eval->add_option("--out", eval_args.out, "output directory")->required();
    eval->add_option("--msssim-levels", eval_args.msssim_levels,
                     "MS-SSIM levels (0 = auto)");

    GradArgs grad_args;
    CLI::App* grad = app.add_subcommand("grad-analyze",
                                        "measure fusion/segmentation gradient geometry");
    grad->add_option("--ckpt", grad_args.ckpt, "checkpoint file")->required();
    grad->add_option("--data", grad_args.data, "dataset root")->required();
    grad->add_option("--steps", grad_args.steps, "number of batches to probe");
    grad->add_option("--out", grad_args.out, "output JSONL file")->required();

    AblateArgs ablate_args;
    CLI::App* ablate = app.add_subcommand("ablate", "train and compare ablation variants");
    ablate->add_option("--data", ablate_args.data, "dataset root")->required();
    ablate->add_option("--config", ablate_args.config, "JSON config file");
    ablate->add_option("--out", ablate_args.out, "output directory")->required();
    ablate->add_option("--variants", ablate_args.variants,
                       "variants to run (full no_hia_f no_seg_loss no_color_loss one_channel)");
    ablate->add_option("--seeds", ablate_args.seeds, "training seeds");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed()) return cmd_synth(synth_args);
        if (train->parsed()) return cmd_train(train_args);
        if (fuse->parsed()) return cmd_fuse(fuse_args);
        if (eval->parsed()) return cmd_eval(eval_args);
        if (grad->parsed()) return cmd_grad_analyze(grad_args);
        if (ablate->parsed()) return cmd_ablate(ablate_args);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
