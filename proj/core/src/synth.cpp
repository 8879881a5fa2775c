#include "vifuse/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "vifuse/ops.hpp"
#include "vifuse/pngio.hpp"

namespace fs = std::filesystem;

namespace vifuse {
namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

struct Object {
    int kind = 0;  // 0 rect, 1 ellipse, 2 bar
    int32_t cls = 1;
    double cx = 0, cy = 0;
    double ex = 0, ey = 0;  // half extents / radii
    double u0 = 0, u1 = 0, u2 = 0;  // appearance draws
    int orient = 0;
    int hue = 0;

    bool inside(int64_t x, int64_t y) const {
        const double dx = static_cast<double>(x) - cx;
        const double dy = static_cast<double>(y) - cy;
        switch (kind) {
            case 0: return std::abs(dx) <= ex && std::abs(dy) <= ey;
            case 1: return (dx * dx) / (ex * ex) + (dy * dy) / (ey * ey) <= 1.0;
            default: {
                const double lx = orient == 0 ? ex : ey;
                const double ly = orient == 0 ? ey : ex;
                return std::abs(dx) <= lx && std::abs(dy) <= ly;
            }
        }
    }
};

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

void rotate_rgb(double rgb[3], int hue) {
    for (int i = 0; i < hue; ++i) {
        const double t = rgb[2];
        rgb[2] = rgb[1];
        rgb[1] = rgb[0];
        rgb[0] = t;
    }
}

}  // namespace

void validate_synth_config(const SynthConfig& cfg) {
    check(cfg.size >= 32, "synth: size must be at least 32, got " +
                              std::to_string(cfg.size));
    check(cfg.n_classes >= 2 && cfg.n_classes <= 32,
          "synth: n_classes must be in [2,32], got " + std::to_string(cfg.n_classes));
    check(cfg.min_objects >= 1 && cfg.max_objects >= cfg.min_objects,
          "synth: need 1 <= min_objects <= max_objects");
    check(cfg.noise_sigma >= 0.0, "synth: noise_sigma must be non-negative");
}

SamplePair synth_scene(const SynthConfig& cfg, int64_t index) {
    validate_synth_config(cfg);
    check(index >= 0, "synth: index must be non-negative");
    Rng rng(mix_seed(cfg.seed, 0x7363656e65ULL + static_cast<uint64_t>(index)));

    const int64_t s = cfg.size;
    const int64_t plane = s * s;
    std::vector<double> vis(static_cast<size_t>(3 * plane));
    std::vector<double> ir(static_cast<size_t>(plane));
    LabelMap labels(s, s);

    // Background: gently textured gray. The infrared band sees the same
    // scene geometry (albedo bleeds into emissivity), just at its own level
    // and with a thermal drift, so the two bands disagree on palette and on
    // hot objects rather than on structure.
    const double bg_gray = 0.28 + 0.14 * rng.uniform();
    const double bg_tint[3] = {0.02 * (rng.uniform() - 0.5), 0.02 * (rng.uniform() - 0.5),
                               0.02 * (rng.uniform() - 0.5)};
    const double fx = (1.5 + 2.0 * rng.uniform()) / static_cast<double>(s);
    const double fy = (1.5 + 2.0 * rng.uniform()) / static_cast<double>(s);
    const double phx = kTwoPi * rng.uniform();
    const double phy = kTwoPi * rng.uniform();
    const double bg_ir = clamp01(bg_gray + 0.10 * (rng.uniform() - 0.5));
    const double ir_slope = 0.04 * (rng.uniform() - 0.5) / static_cast<double>(s);

    for (int64_t y = 0; y < s; ++y)
        for (int64_t x = 0; x < s; ++x) {
            const double tex = 0.04 * std::sin(kTwoPi * fx * x + phx) *
                               std::sin(kTwoPi * fy * y + phy);
            for (int64_t c = 0; c < 3; ++c)
                vis[static_cast<size_t>(c * plane + y * s + x)] =
                    clamp01(bg_gray + bg_tint[c] + tex);
            ir[static_cast<size_t>(y * s + x)] =
                clamp01(bg_ir + 0.75 * tex + ir_slope * static_cast<double>(x + y));
        }

    // Objects; class cycling guarantees class variety inside each scene.
    const int64_t span = cfg.max_objects - cfg.min_objects + 1;
    const int64_t n_obj =
        cfg.min_objects + static_cast<int64_t>(rng.below(static_cast<uint64_t>(span)));
    const int64_t n_fg = cfg.n_classes - 1;
    const int64_t cls_offset = static_cast<int64_t>(rng.below(static_cast<uint64_t>(n_fg)));
    const double margin = static_cast<double>(s) / 8.0;

    std::vector<Object> objects;
    for (int64_t j = 0; j < n_obj; ++j) {
        Object o;
        o.cls = static_cast<int32_t>(1 + (j + cls_offset) % n_fg);
        o.kind = static_cast<int>(rng.below(3));
        o.cx = margin + (static_cast<double>(s) - 2.0 * margin) * rng.uniform();
        o.cy = margin + (static_cast<double>(s) - 2.0 * margin) * rng.uniform();
        const double lo = static_cast<double>(s) / 20.0;
        const double hi = static_cast<double>(s) / 10.0;
        o.ex = lo + (hi - lo) * rng.uniform();
        o.ey = lo + (hi - lo) * rng.uniform();
        if (o.kind == 2) {  // bar: one long, one thin extent
            o.ex = static_cast<double>(s) / 8.0 +
                   (static_cast<double>(s) / 5.0 - static_cast<double>(s) / 8.0) * rng.uniform();
            o.ey = 2.0 + (static_cast<double>(s) / 20.0 - 2.0) * rng.uniform();
        }
        o.orient = static_cast<int>(rng.below(2));
        o.hue = static_cast<int>(rng.below(3));
        o.u0 = rng.uniform();
        o.u1 = rng.uniform();
        o.u2 = rng.uniform();
        objects.push_back(o);
    }
    // Hot objects go underneath everything else: their visible-band pixels
    // must stay indistinguishable from the untouched background.
    std::stable_sort(objects.begin(), objects.end(), [](const Object& a, const Object& b) {
        const int ra = (a.cls - 1) % 4 == 0 ? 0 : 1;
        const int rb = (b.cls - 1) % 4 == 0 ? 0 : 1;
        return ra < rb;
    });

    for (const Object& o : objects) {
        // Appearance role cycles with class id; class 1 (role 0) is the hot
        // object: infrared >= 0.9, visible contrast below 0.05.
        const int role = static_cast<int>((o.cls - 1) % 4);
        const int64_t x0 = std::max<int64_t>(0, static_cast<int64_t>(o.cx - o.ex - 1));
        const int64_t x1 = std::min<int64_t>(s - 1, static_cast<int64_t>(o.cx + o.ex + 1));
        const int64_t y0 = std::max<int64_t>(0, static_cast<int64_t>(o.cy - o.ey - 1));
        const int64_t y1 = std::min<int64_t>(s - 1, static_cast<int64_t>(o.cy + o.ey + 1));
        for (int64_t y = y0; y <= y1; ++y)
            for (int64_t x = x0; x <= x1; ++x) {
                if (!o.inside(x, y)) continue;
                const size_t p = static_cast<size_t>(y * s + x);
                labels.data[p] = o.cls;
                double rgb[3];
                double ir_v = ir[p];
                switch (role) {
                    case 0: {  // hot: keep the visible background, light up ir
                        const double delta = 0.02 * (o.u0 - 0.5) * 2.0;
                        for (int c = 0; c < 3; ++c)
                            rgb[c] = clamp01(vis[static_cast<size_t>(c) * plane + p] + delta);
                        ir_v = 0.92 + 0.06 * o.u1;
                        break;
                    }
                    case 1: {  // saturated color in vis; ir tracks its luma
                        rgb[0] = 0.62 + 0.16 * o.u0;
                        rgb[1] = 0.16 + 0.08 * o.u1;
                        rgb[2] = 0.16 + 0.08 * o.u2;
                        rotate_rgb(rgb, o.hue);
                        ir_v = clamp01(0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2] +
                                       0.04 * (o.u1 - 0.5));
                        break;
                    }
                    case 2: {  // striped gray, stripes visible in both bands
                        const double stripe =
                            0.06 * std::sin(kTwoPi * static_cast<double>(y) / 6.0 + kTwoPi * o.u2);
                        const double g = 0.52 + 0.16 * o.u0 + stripe;
                        rgb[0] = clamp01(g);
                        rgb[1] = clamp01(g);
                        rgb[2] = clamp01(g * 0.92);
                        ir_v = clamp01(0.52 + 0.16 * o.u1 + stripe);
                        break;
                    }
                    default: {  // bright bluish in vis, lukewarm ir
                        rgb[0] = 0.18 + 0.08 * o.u0;
                        rgb[1] = 0.48 + 0.10 * o.u1;
                        rgb[2] = 0.78 + 0.16 * o.u2;
                        ir_v = 0.46 + 0.08 * o.u0;
                        break;
                    }
                }
                for (int c = 0; c < 3; ++c)
                    vis[static_cast<size_t>(c) * plane + p] = rgb[c];
                ir[p] = ir_v;
            }
    }

    if (cfg.noise_sigma > 0.0) {
        for (double& v : vis) v = clamp01(v + cfg.noise_sigma * rng.normal());
        for (double& v : ir) v = clamp01(v + cfg.noise_sigma * rng.normal());
    }

    SamplePair out;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04lld", static_cast<long long>(index));
    out.id = buf;
    out.vis = Tensor<float>::zeros({1, 3, s, s});
    out.ir = Tensor<float>::zeros({1, 3, s, s});
    for (int64_t i = 0; i < 3 * plane; ++i)
        out.vis.data()[i] = static_cast<float>(vis[static_cast<size_t>(i)]);
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t i = 0; i < plane; ++i)
            out.ir.data()[c * plane + i] = static_cast<float>(ir[static_cast<size_t>(i)]);
    out.labels = std::move(labels);
    return out;
}

void write_synth_dataset(const SynthConfig& cfg, int64_t count, const std::string& root,
                         bool force) {
    validate_synth_config(cfg);
    check(count >= 1, "synth: count must be at least 1");

    const fs::path rootp(root);
    if (fs::exists(rootp) && !fs::is_empty(rootp) && !force)
        fail("output directory " + root + " is not empty (pass force to overwrite)");
    for (const char* sub : {"vis", "ir", "labels"})
        fs::create_directories(rootp / sub);

    for (int64_t i = 0; i < count; ++i) {
        SamplePair s = synth_scene(cfg, i);
        write_png((rootp / "vis" / (s.id + ".png")).string(),
                  tensor_to_image<float>(s.vis));
        // Store the single infrared band as a gray PNG.
        Tensor<float> band = slice<float>(s.ir, 1, 0, 1);
        write_png((rootp / "ir" / (s.id + ".png")).string(), tensor_to_image<float>(band));
        write_png((rootp / "labels" / (s.id + ".png")).string(),
                  labels_to_image(s.labels));
    }

    nlohmann::json manifest{{"generator", kSynthGeneratorVersion},
                            {"count", count},
                            {"seed", cfg.seed},
                            {"size", cfg.size},
                            {"n_classes", cfg.n_classes},
                            {"min_objects", cfg.min_objects},
                            {"max_objects", cfg.max_objects},
                            {"noise_sigma", cfg.noise_sigma}};
    std::ofstream mf(rootp / "manifest.json");
    check(mf.good(), "cannot write manifest under " + root);
    mf << manifest.dump(2) << "\n";
}

}  // namespace vifuse
