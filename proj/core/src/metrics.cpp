#include "vifuse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>

#include <nlohmann/json.hpp>

#include "vifuse/checkpoint.hpp"
#include "vifuse/config.hpp"
#include "vifuse/model.hpp"
#include "vifuse/pngio.hpp"

namespace fs = std::filesystem;

namespace vifuse {
namespace {

constexpr double kHalfPi = 1.5707963267948966192313216916398;

const double* gray_plane(const Tensor<double>& y, const char* what) {
    check(y.ndim() == 4 && y.shape()[0] == 1 && y.shape()[1] == 1,
          std::string(what) + ": expected a [1,1,H,W] tensor, got " + shape_str(y.shape()));
    return y.data();
}

// 256-bin quantization of [0,1] intensities.
int bin_of(double v) {
    const int b = static_cast<int>(std::floor(v * 256.0));
    return std::min(255, std::max(0, b));
}

double entropy_of_hist(const std::vector<int64_t>& hist, int64_t total) {
    double h = 0;
    for (int64_t c : hist) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / static_cast<double>(total);
        h -= p * std::log2(p);
    }
    return h;
}

double mi_pair(const double* x, const double* y, int64_t n) {
    std::vector<int64_t> hx(256, 0), hy(256, 0), hxy(256 * 256, 0);
    for (int64_t i = 0; i < n; ++i) {
        const int bx = bin_of(x[i]);
        const int by = bin_of(y[i]);
        ++hx[static_cast<size_t>(bx)];
        ++hy[static_cast<size_t>(by)];
        ++hxy[static_cast<size_t>(bx * 256 + by)];
    }
    return entropy_of_hist(hx, n) + entropy_of_hist(hy, n) - entropy_of_hist(hxy, n);
}

// Zero-padded 3x3 Sobel edge strength and orientation.
struct EdgeField {
    std::vector<double> g, a;
};

EdgeField edge_field(const double* p, int64_t h, int64_t w) {
    EdgeField e;
    e.g.resize(static_cast<size_t>(h * w));
    e.a.resize(static_cast<size_t>(h * w));
    auto at = [&](int64_t y, int64_t x) -> double {
        if (y < 0 || y >= h || x < 0 || x >= w) return 0.0;
        return p[y * w + x];
    };
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            const double gx = -at(y - 1, x - 1) + at(y - 1, x + 1) - 2 * at(y, x - 1) +
                              2 * at(y, x + 1) - at(y + 1, x - 1) + at(y + 1, x + 1);
            const double gy = -at(y - 1, x - 1) - 2 * at(y - 1, x) - at(y - 1, x + 1) +
                              at(y + 1, x - 1) + 2 * at(y + 1, x) + at(y + 1, x + 1);
            const size_t i = static_cast<size_t>(y * w + x);
            e.g[i] = std::sqrt(gx * gx + gy * gy);
            e.a[i] = (gx == 0.0 && gy == 0.0) ? 0.0 : std::atan(gy / gx);
        }
    return e;
}

Tensor<double> to_double(const Tensor<float>& t) {
    Tensor<double> out = Tensor<double>::zeros(t.shape());
    for (int64_t i = 0; i < t.numel(); ++i)
        out.data()[i] = static_cast<double>(t.data()[i]);
    return out;
}

}  // namespace

double metric_entropy(const Tensor<double>& y) {
    const double* p = gray_plane(y, "metric_entropy");
    std::vector<int64_t> hist(256, 0);
    for (int64_t i = 0; i < y.numel(); ++i) ++hist[static_cast<size_t>(bin_of(p[i]))];
    return entropy_of_hist(hist, y.numel());
}

double metric_mi(const Tensor<double>& yf, const Tensor<double>& ya,
                 const Tensor<double>& yb) {
    const double* f = gray_plane(yf, "metric_mi");
    const double* a = gray_plane(ya, "metric_mi");
    const double* b = gray_plane(yb, "metric_mi");
    check(yf.shape() == ya.shape() && yf.shape() == yb.shape(),
          "metric_mi: image sizes differ");
    return mi_pair(f, a, yf.numel()) + mi_pair(f, b, yf.numel());
}

QabfResult metric_qabf(const Tensor<double>& yf, const Tensor<double>& ya,
                       const Tensor<double>& yb) {
    gray_plane(yf, "metric_qabf");
    gray_plane(ya, "metric_qabf");
    gray_plane(yb, "metric_qabf");
    check(yf.shape() == ya.shape() && yf.shape() == yb.shape(),
          "metric_qabf: image sizes differ");
    const int64_t h = yf.shape()[2], w = yf.shape()[3];
    const EdgeField ef = edge_field(yf.data(), h, w);
    const EdgeField ea = edge_field(ya.data(), h, w);
    const EdgeField eb = edge_field(yb.data(), h, w);

    // Sigmoid constants of the gradient-transfer model.
    constexpr double kGammaG = 0.9994, kKappaG = -15.0, kSigmaG = 0.5;
    constexpr double kGammaA = 0.9879, kKappaA = -22.0, kSigmaA = 0.8;

    double num = 0, den = 0;
    auto accumulate = [&](const EdgeField& src, size_t i) {
        const double gs = src.g[i], gf = ef.g[i];
        double rel;
        if (gs == 0.0 && gf == 0.0)
            rel = 0.0;
        else
            rel = std::min(gs, gf) / std::max(gs, gf);
        const double align = 1.0 - std::abs(src.a[i] - ef.a[i]) / kHalfPi;
        const double qg = kGammaG / (1.0 + std::exp(kKappaG * (rel - kSigmaG)));
        const double qa = kGammaA / (1.0 + std::exp(kKappaA * (align - kSigmaA)));
        num += qg * qa * gs;
        den += gs;
    };
    for (size_t i = 0; i < ef.g.size(); ++i) {
        accumulate(ea, i);
        accumulate(eb, i);
    }
    if (den == 0.0) return {0.0, true};
    return {num / den, false};
}

double metric_ssim(const Tensor<double>& yf, const Tensor<double>& ya,
                   const Tensor<double>& yb, const SsimParams& p) {
    const double sa = ssim(yf, ya, p).item();
    const double sb = ssim(yf, yb, p).item();
    return 0.5 * (sa + sb);
}

double metric_ms_ssim(const Tensor<double>& yf, const Tensor<double>& ya,
                      const Tensor<double>& yb, int64_t levels, const SsimParams& p) {
    if (levels == 0) {
        const int64_t h = yf.shape()[2], w = yf.shape()[3];
        levels = std::min<int64_t>(5, ms_ssim_max_levels(h, w, p.window));
    }
    std::vector<double> weights(ms_ssim_default_weights().begin(),
                                ms_ssim_default_weights().begin() +
                                    std::min<size_t>(static_cast<size_t>(levels), 5));
    while (static_cast<int64_t>(weights.size()) < levels)
        weights.push_back(weights.back());
    double wsum = 0;
    for (double v : weights) wsum += v;
    for (double& v : weights) v /= wsum;
    const double sa = ms_ssim(yf, ya, levels, weights, p).item();
    const double sb = ms_ssim(yf, yb, levels, weights, p).item();
    return 0.5 * (sa + sb);
}

IouAccumulator::IouAccumulator(int64_t n_classes) : n_(n_classes) {
    check(n_classes >= 1, "IouAccumulator: need at least one class");
    confusion_.assign(static_cast<size_t>(n_ * n_), 0);
}

void IouAccumulator::add(const LabelMap& pred, const LabelMap& gt) {
    check(pred.h == gt.h && pred.w == gt.w, "iou: prediction/label size mismatch");
    for (size_t i = 0; i < gt.data.size(); ++i) {
        const int32_t g = gt.data[i];
        if (g == kIgnoreIndex) continue;
        check(g >= 0 && g < n_, "iou: label class " + std::to_string(g) +
                                    " out of range [0, " + std::to_string(n_) + ")");
        const int32_t p = pred.data[i];
        check(p >= 0 && p < n_, "iou: predicted class " + std::to_string(p) +
                                    " out of range [0, " + std::to_string(n_) + ")");
        ++confusion_[static_cast<size_t>(g * n_ + p)];
    }
}

IouReport IouAccumulator::report() const {
    IouReport r;
    r.per_class.assign(static_cast<size_t>(n_), std::numeric_limits<double>::quiet_NaN());
    double sum = 0;
    int64_t present = 0;
    for (int64_t c = 0; c < n_; ++c) {
        const int64_t inter = confusion_[static_cast<size_t>(c * n_ + c)];
        int64_t row = 0, col = 0;
        for (int64_t k = 0; k < n_; ++k) {
            row += confusion_[static_cast<size_t>(c * n_ + k)];
            col += confusion_[static_cast<size_t>(k * n_ + c)];
        }
        const int64_t uni = row + col - inter;
        if (uni == 0) continue;  // class absent from prediction and truth
        const double v = static_cast<double>(inter) / static_cast<double>(uni);
        r.per_class[static_cast<size_t>(c)] = v;
        sum += v;
        ++present;
    }
    r.miou = present > 0 ? sum / static_cast<double>(present) : 0.0;
    return r;
}

IouReport iou_single(const LabelMap& pred, const LabelMap& gt, int64_t n_classes) {
    IouAccumulator acc(n_classes);
    acc.add(pred, gt);
    return acc.report();
}

template <typename T>
LabelMap argmax_labels(const Tensor<T>& logits, int64_t n) {
    check(logits.ndim() == 4, "argmax_labels: expected [N,C,H,W] logits");
    const int64_t nb = logits.shape()[0], c = logits.shape()[1];
    const int64_t h = logits.shape()[2], w = logits.shape()[3];
    check(n >= 0 && n < nb, "argmax_labels: batch index out of range");
    LabelMap m(h, w);
    const T* base = logits.data() + n * c * h * w;
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            int32_t best = 0;
            T bv = base[y * w + x];
            for (int64_t k = 1; k < c; ++k) {
                const T v = base[k * h * w + y * w + x];
                if (v > bv) {
                    bv = v;
                    best = static_cast<int32_t>(k);
                }
            }
            m.data[static_cast<size_t>(y * w + x)] = best;
        }
    return m;
}

template LabelMap argmax_labels<float>(const Tensor<float>&, int64_t);
template LabelMap argmax_labels<double>(const Tensor<double>&, int64_t);

ImageMetrics eval_fused_triple(const Tensor<double>& fused_rgb,
                               const Tensor<double>& vis_rgb,
                               const Tensor<double>& ir_rgb, int64_t msssim_levels) {
    Tensor<double> yf = luma(fused_rgb);
    Tensor<double> yv = luma(vis_rgb);
    Tensor<double> yi = luma(ir_rgb);
    ImageMetrics m;
    m.en = metric_entropy(yf);
    m.mi = metric_mi(yf, yv, yi);
    m.vif = metric_vif(yf, yv, yi).value;
    m.qabf = metric_qabf(yf, yv, yi).value;
    m.ssim = metric_ssim(yf, yv, yi);
    m.mss = metric_ms_ssim(yf, yv, yi, msssim_levels);
    m.de = metric_delta_e(fused_rgb, vis_rgb);
    return m;
}

MetricsReport evaluate_directory(const EvalOptions& opt) {
    check(fs::is_directory(opt.fused_dir), "fused directory missing: " + opt.fused_dir);
    check(fs::is_directory(opt.vis_dir), "vis directory missing: " + opt.vis_dir);
    check(fs::is_directory(opt.ir_dir), "ir directory missing: " + opt.ir_dir);

    std::vector<std::string> stems;
    for (const auto& e : fs::directory_iterator(opt.fused_dir))
        if (e.is_regular_file() && e.path().extension() == ".png")
            stems.push_back(e.path().stem().string());
    std::sort(stems.begin(), stems.end());
    check(!stems.empty(), "no PNG files under " + opt.fused_dir);

    MetricsReport rep;
    rep.has_miou = !opt.checkpoint.empty() && !opt.labels_dir.empty();
    std::unique_ptr<FusionModel<float>> model;
    int64_t n_classes = 0;
    if (rep.has_miou) {
        Checkpoint ck = load_checkpoint(opt.checkpoint);
        RunConfig rc = parse_config(ck.config_json);
        model = std::make_unique<FusionModel<float>>(rc.model, 0);
        apply_checkpoint(ck, model->params());
        n_classes = rc.model.mth.n_classes;
    }
    IouAccumulator acc(std::max<int64_t>(n_classes, 1));

    auto load_rgb = [](const fs::path& p, const char* what) {
        check(fs::exists(p), std::string("missing ") + what + " image: " + p.string());
        ImageU8 img = read_png(p.string());
        Tensor<float> t = image_to_tensor<float>(img);
        if (img.channels == 1) t = concat<float>({t, t, t}, 1);
        return t;
    };

    for (const std::string& stem : stems) {
        Tensor<float> fused = load_rgb(fs::path(opt.fused_dir) / (stem + ".png"), "fused");
        Tensor<float> vis = load_rgb(fs::path(opt.vis_dir) / (stem + ".png"), "vis");
        Tensor<float> ir = load_rgb(fs::path(opt.ir_dir) / (stem + ".png"), "ir");
        check(fused.shape() == vis.shape() && fused.shape() == ir.shape(),
              "size mismatch for \"" + stem + "\"");

        ImageMetrics m = eval_fused_triple(to_double(fused), to_double(vis),
                                           to_double(ir), opt.msssim_levels);
        m.id = stem;
        if (rep.has_miou) {
            const fs::path lp = fs::path(opt.labels_dir) / (stem + ".png");
            check(fs::exists(lp), "missing label image: " + lp.string());
            LabelMap gt = image_to_labels(read_png(lp.string()));
            validate_labels(gt, n_classes);
            auto out = model->forward(vis, ir);
            LabelMap pred = argmax_labels(out.logits, 0);
            m.miou = iou_single(pred, gt, n_classes).miou;
            m.has_miou = true;
            acc.add(pred, gt);
        }
        rep.per_image.push_back(std::move(m));
    }

    rep.aggregate.id = "aggregate";
    const double inv = 1.0 / static_cast<double>(rep.per_image.size());
    for (const ImageMetrics& m : rep.per_image) {
        rep.aggregate.en += m.en * inv;
        rep.aggregate.mi += m.mi * inv;
        rep.aggregate.vif += m.vif * inv;
        rep.aggregate.qabf += m.qabf * inv;
        rep.aggregate.ssim += m.ssim * inv;
        rep.aggregate.mss += m.mss * inv;
        rep.aggregate.de += m.de * inv;
    }
    if (rep.has_miou) {
        rep.dataset_iou = acc.report();
        rep.aggregate.miou = rep.dataset_iou.miou;
        rep.aggregate.has_miou = true;
    }
    return rep;
}

namespace {

void csv_row(std::ostream& out, const ImageMetrics& m) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,",
                  m.id.c_str(), m.en, m.mi, m.vif, m.qabf, m.ssim, m.mss, m.de);
    out << buf;
    if (m.has_miou) {
        std::snprintf(buf, sizeof(buf), "%.6f", m.miou);
        out << buf;
    }
    out << "\n";
}

nlohmann::json metrics_json(const ImageMetrics& m) {
    nlohmann::json j{{"id", m.id},     {"EN", m.en},     {"MI", m.mi},
                     {"VIF", m.vif},   {"Qabf", m.qabf}, {"SSIM", m.ssim},
                     {"MSS", m.mss},   {"dE", m.de}};
    if (m.has_miou) j["mIoU"] = m.miou;
    return j;
}

}  // namespace

void write_report_csv(const MetricsReport& r, const std::string& path) {
    std::ofstream out(path);
    check(out.good(), "cannot write " + path);
    out << "id,EN,MI,VIF,Qabf,SSIM,MSS,dE,mIoU\n";
    for (const ImageMetrics& m : r.per_image) csv_row(out, m);
    csv_row(out, r.aggregate);
    check(out.good(), "write failed: " + path);
}

void write_report_jsonl(const MetricsReport& r, const std::string& path) {
    std::ofstream out(path);
    check(out.good(), "cannot write " + path);
    for (const ImageMetrics& m : r.per_image) out << metrics_json(m).dump() << "\n";
    nlohmann::json agg{{"aggregate", metrics_json(r.aggregate)}};
    if (r.has_miou) {
        nlohmann::json pc = nlohmann::json::array();
        for (double v : r.dataset_iou.per_class) {
            if (std::isnan(v))
                pc.push_back(nullptr);
            else
                pc.push_back(v);
        }
        agg["per_class_iou"] = pc;
    }
    out << agg.dump() << "\n";
    check(out.good(), "write failed: " + path);
}

}  // namespace vifuse
