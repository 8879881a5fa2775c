#include <cmath>
#include <vector>

#include "doctest.h"
#include "vifuse/fdcheck.hpp"
#include "vifuse/losses.hpp"

using namespace vifuse;

namespace {

Tensor<double> randu(Rng& rng, const Shape& shape, double lo = 0.0, double hi = 1.0) {
    Tensor<double> t = Tensor<double>::zeros(shape);
    for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(lo, hi);
    return t;
}

// Replicate-padded 3x3 Sobel |Gx|+|Gy| on one [H,W] plane, plain loops.
std::vector<double> sobel_ref(const double* p, int64_t h, int64_t w) {
    auto at = [&](int64_t y, int64_t x) {
        y = std::min(std::max<int64_t>(y, 0), h - 1);
        x = std::min(std::max<int64_t>(x, 0), w - 1);
        return p[y * w + x];
    };
    std::vector<double> out(size_t(h * w));
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            const double gx = -at(y - 1, x - 1) + at(y - 1, x + 1) -
                              2 * at(y, x - 1) + 2 * at(y, x + 1) -
                              at(y + 1, x - 1) + at(y + 1, x + 1);
            const double gy = -at(y - 1, x - 1) - 2 * at(y - 1, x) - at(y - 1, x + 1) +
                              at(y + 1, x - 1) + 2 * at(y + 1, x) + at(y + 1, x + 1);
            out[size_t(y * w + x)] = std::fabs(gx) + std::fabs(gy);
        }
    return out;
}

LabelMap labels_from(std::initializer_list<int32_t> v, int64_t h, int64_t w) {
    LabelMap m(h, w);
    std::copy(v.begin(), v.end(), m.data.begin());
    return m;
}

}  // namespace

TEST_CASE("intensity loss identity and loop oracle") {
    Rng rng(101);
    auto ir = randu(rng, {2, 3, 6, 6});
    auto vis = randu(rng, {2, 3, 6, 6});

    // f = elementwise max of the sources drives the loss to exactly zero.
    Tensor<double> best = Tensor<double>::zeros({2, 3, 6, 6});
    for (int64_t i = 0; i < best.numel(); ++i)
        best.data()[i] = std::max(ir.data()[i], vis.data()[i]);
    CHECK(intensity_loss(best, ir, vis).item() == 0.0);

    auto f = randu(rng, {2, 3, 6, 6});
    double acc = 0;
    for (int64_t i = 0; i < f.numel(); ++i)
        acc += std::fabs(f.data()[i] - std::max(ir.data()[i], vis.data()[i]));
    CHECK(intensity_loss(f, ir, vis).item() ==
          doctest::Approx(acc / double(f.numel())).epsilon(1e-12));

    CHECK_THROWS_AS(intensity_loss(f, ir, randu(rng, {1, 3, 6, 6})), Error);
}

TEST_CASE("gradient loss against a loop oracle") {
    Rng rng(103);
    const int64_t N = 1, C = 3, H = 7, W = 6, plane = H * W;
    auto f = randu(rng, {N, C, H, W});
    auto ir = randu(rng, {N, C, H, W});
    auto vis = randu(rng, {N, C, H, W});

    double acc = 0;
    for (int64_t c = 0; c < C; ++c) {
        auto gf = sobel_ref(f.data() + c * plane, H, W);
        auto gi = sobel_ref(ir.data() + c * plane, H, W);
        auto gv = sobel_ref(vis.data() + c * plane, H, W);
        for (int64_t i = 0; i < plane; ++i)
            acc += std::fabs(gf[size_t(i)] - std::max(gi[size_t(i)], gv[size_t(i)]));
    }
    CHECK(gradient_loss(f, ir, vis).item() ==
          doctest::Approx(acc / double(C * plane)).epsilon(1e-10));

    // Matching gradients (f equal to a source that dominates) zero the loss.
    CHECK(gradient_loss(ir, ir, ir).item() == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("ssim loss identity and weighting") {
    Rng rng(105);
    auto img = randu(rng, {1, 3, 16, 16});
    // f == ir == vis: both SSIM terms are exactly 1, the loss exactly 0.
    CHECK(ssim_loss(img, img, img, 0.5, 0.5).item() == 0.0);

    auto f = randu(rng, {1, 3, 16, 16});
    auto other = randu(rng, {1, 3, 16, 16});
    const double both = ssim_loss(f, other, img, 0.5, 0.5).item();
    const double ir_only = ssim_loss(f, other, img, 1.0, 0.0).item();
    const double vis_only = ssim_loss(f, other, img, 0.0, 1.0).item();
    CHECK(both == doctest::Approx(0.5 * ir_only + 0.5 * vis_only).epsilon(1e-12));
    CHECK(ssim_loss(f, other, img, 0.0, 0.0).item() == 0.0);
}

TEST_CASE("color loss identity and loop oracle") {
    Rng rng(107);
    auto vis = randu(rng, {1, 3, 5, 5});
    CHECK(color_loss(vis, vis).item() == 0.0);

    auto f = randu(rng, {1, 3, 5, 5});
    const int64_t plane = 25;
    double acc = 0;
    for (int64_t i = 0; i < plane; ++i) {
        auto cbcr = [&](const Tensor<double>& t, double& cb, double& cr) {
            const double r = t.data()[i], g = t.data()[plane + i], b = t.data()[2 * plane + i];
            const double y = 0.299 * r + 0.587 * g + 0.114 * b;
            cb = 0.5 + (b - y) * 0.5 / (1.0 - 0.114);
            cr = 0.5 + (r - y) * 0.5 / (1.0 - 0.299);
        };
        double fcb, fcr, vcb, vcr;
        cbcr(f, fcb, fcr);
        cbcr(vis, vcb, vcr);
        acc += std::fabs(fcb - vcb) + std::fabs(fcr - vcr);
    }
    CHECK(color_loss(f, vis).item() ==
          doctest::Approx(acc / double(2 * plane)).epsilon(1e-10));
}

TEST_CASE("cross entropy identities and loop oracle") {
    const int64_t C = 4, H = 2, W = 2;

    SUBCASE("confident correct logits give (near) zero loss") {
        Tensor<double> logits = Tensor<double>::zeros({1, C, H, W});
        LabelMap m = labels_from({0, 1, 2, 3}, H, W);
        for (int64_t i = 0; i < H * W; ++i)
            logits.data()[m.data[size_t(i)] * H * W + i] = 60.0;
        CHECK(ce_loss(logits, {m}).item() < 1e-9);
    }

    SUBCASE("uniform logits over 4 classes give ln 4") {
        Tensor<double> logits = Tensor<double>::full({1, C, H, W}, 0.37);
        LabelMap m = labels_from({0, 1, 2, 3}, H, W);
        CHECK(ce_loss(logits, {m}).item() ==
              doctest::Approx(std::log(4.0)).epsilon(1e-9));
    }

    SUBCASE("hand-computed softmax oracle with ignored pixels") {
        Rng rng(109);
        auto logits = randu(rng, {1, C, H, W}, -2.0, 2.0);
        LabelMap m = labels_from({1, kIgnoreIndex, 3, 0}, H, W);
        double acc = 0;
        int64_t cnt = 0;
        for (int64_t i = 0; i < H * W; ++i) {
            const int32_t lab = m.data[size_t(i)];
            if (lab == kIgnoreIndex) continue;
            double mx = -1e300;
            for (int64_t c = 0; c < C; ++c)
                mx = std::max(mx, logits.data()[c * H * W + i]);
            double z = 0;
            for (int64_t c = 0; c < C; ++c)
                z += std::exp(logits.data()[c * H * W + i] - mx);
            acc -= logits.data()[lab * H * W + i] - mx - std::log(z);
            ++cnt;
        }
        CHECK(ce_loss(logits, {m}).item() ==
              doctest::Approx(acc / double(cnt)).epsilon(1e-12));
    }

    SUBCASE("all pixels ignored is an error") {
        Tensor<double> logits = Tensor<double>::zeros({1, C, H, W});
        LabelMap m = labels_from({kIgnoreIndex, kIgnoreIndex, kIgnoreIndex, kIgnoreIndex},
                                 H, W);
        CHECK_THROWS_AS(ce_loss(logits, {m}), Error);
    }
}

TEST_CASE("dice loss identities and loop oracle") {
    const int64_t C = 3, H = 2, W = 3;
    LabelMap m = labels_from({0, 1, 2, 1, kIgnoreIndex, 0}, H, W);

    SUBCASE("exact one-hot probabilities give zero loss") {
        Tensor<double> p = Tensor<double>::zeros({1, C, H, W});
        for (int64_t i = 0; i < H * W; ++i) {
            const int32_t lab = m.data[size_t(i)];
            if (lab != kIgnoreIndex) p.data()[lab * H * W + i] = 1.0;
        }
        CHECK(dice_loss(p, {m}, false).item() == doctest::Approx(0.0).epsilon(1e-12));
    }

    SUBCASE("softmax path matches a hand computation") {
        Rng rng(111);
        auto logits = randu(rng, {1, C, H, W}, -1.5, 1.5);
        // Reference: softmax -> mask ignored -> per-class smoothed dice.
        double dice_sum = 0;
        std::vector<double> inter(size_t(C), 0.0), support(size_t(C), 0.0);
        for (int64_t i = 0; i < H * W; ++i) {
            double z = 0;
            std::vector<double> p(size_t(C), 0.0);
            for (int64_t c = 0; c < C; ++c) {
                p[size_t(c)] = std::exp(logits.data()[c * H * W + i]);
                z += p[size_t(c)];
            }
            const int32_t lab = m.data[size_t(i)];
            if (lab == kIgnoreIndex) continue;
            for (int64_t c = 0; c < C; ++c) {
                const double prob = p[size_t(c)] / z;
                support[size_t(c)] += prob + (lab == c ? 1.0 : 0.0);
                if (lab == c) inter[size_t(c)] += prob;
            }
        }
        for (int64_t c = 0; c < C; ++c)
            dice_sum += (2 * inter[size_t(c)] + 1) / (support[size_t(c)] + 1);
        const double expect = 1.0 - dice_sum / double(C);
        CHECK(dice_loss(logits, {m}, true).item() ==
              doctest::Approx(expect).epsilon(1e-10));
    }
}

TEST_CASE("total loss composition") {
    Rng rng(113);
    const Shape img_shape{1, 3, 16, 16};
    auto f = randu(rng, img_shape, 0.05, 0.95);
    auto ir = randu(rng, img_shape, 0.05, 0.95);
    auto vis = randu(rng, img_shape, 0.05, 0.95);
    auto logits = randu(rng, {1, 5, 16, 16}, -1.0, 1.0);
    LabelMap m(16, 16);
    for (auto& v : m.data) v = int32_t(rng.below(5));

    LossWeights w;  // (1, 1, 20, 20, 10, 20), sources at 0.5
    auto out = total_loss(f, ir, vis, logits, {m}, w);

    const double li = intensity_loss(f, ir, vis).item();
    const double lg = gradient_loss(f, ir, vis).item();
    const double ls = ssim_loss(f, ir, vis, w.w_ir, w.w_vis).item();
    const double lc = color_loss(f, vis).item();
    const double lce = ce_loss(logits, {m}).item();
    const double ld = dice_loss(logits, {m}, true).item();

    CHECK(out.l_int == doctest::Approx(li).epsilon(1e-12));
    CHECK(out.l_grad == doctest::Approx(lg).epsilon(1e-12));
    CHECK(out.l_ssim == doctest::Approx(ls).epsilon(1e-12));
    CHECK(out.l_color == doctest::Approx(lc).epsilon(1e-12));
    CHECK(out.l_ce == doctest::Approx(lce).epsilon(1e-12));
    CHECK(out.l_dice == doctest::Approx(ld).epsilon(1e-12));

    const double fusion = 20 * li + 20 * lg + 10 * ls + 20 * lc;
    CHECK(out.l_fusion == doctest::Approx(fusion).epsilon(1e-9));
    CHECK(out.l_seg == doctest::Approx(lce + ld).epsilon(1e-9));
    CHECK(out.l_total == doctest::Approx(1.0 * fusion + 1.0 * (lce + ld)).epsilon(1e-6));
    CHECK(out.total.item() == doctest::Approx(out.l_total).epsilon(1e-12));

    SUBCASE("beta2 = 0 drops the segmentation term") {
        LossWeights w2 = w;
        w2.beta2 = 0;
        auto o2 = total_loss(f, ir, vis, Tensor<double>{}, {}, w2);
        CHECK(o2.l_ce == 0.0);
        CHECK(o2.l_seg == 0.0);
        CHECK(!o2.seg.defined());
        CHECK(o2.l_total == doctest::Approx(fusion).epsilon(1e-9));
    }

    SUBCASE("lambda4 = 0 skips the color term entirely") {
        LossWeights w2 = w;
        w2.lambda4 = 0;
        auto o2 = total_loss(f, ir, vis, logits, {m}, w2);
        CHECK(o2.l_color == 0.0);
        CHECK(o2.l_fusion == doctest::Approx(20 * li + 20 * lg + 10 * ls).epsilon(1e-9));
    }

    SUBCASE("negative weights are rejected") {
        LossWeights w2 = w;
        w2.lambda1 = -1;
        CHECK_THROWS_AS(total_loss(f, ir, vis, logits, {m}, w2), Error);
    }
}

TEST_CASE("loss gradients pass finite differences") {
    Rng rng(115);
    const Shape img_shape{1, 3, 12, 12};
    auto f = randu(rng, img_shape, 0.1, 0.9);
    auto ir = randu(rng, img_shape, 0.1, 0.9);
    auto vis = randu(rng, img_shape, 0.1, 0.9);
    f.set_requires_grad();
    SsimParams p;
    p.window = 5;

    auto fd = [&](auto build, double tol = 1e-5) {
        FdResult r = fd_check(build, {f});
        INFO("worst ", r.worst, " rel ", r.max_rel_err);
        CHECK(r.max_rel_err < tol);
    };
    fd([&] { return intensity_loss(f, ir, vis); });
    fd([&] { return gradient_loss(f, ir, vis); });
    fd([&] { return ssim_loss(f, ir, vis, 0.5, 0.5, p); });
    fd([&] { return color_loss(f, vis); });

    auto logits = randu(rng, {1, 4, 6, 6}, -1.0, 1.0);
    logits.set_requires_grad();
    LabelMap m(6, 6);
    for (size_t i = 0; i < m.data.size(); ++i)
        m.data[i] = i % 7 == 0 ? kIgnoreIndex : int32_t(i % 4);
    {
        FdResult r = fd_check([&] { return ce_loss(logits, {m}); }, {logits});
        CHECK(r.max_rel_err < 1e-6);
    }
    {
        FdResult r = fd_check([&] { return dice_loss(logits, {m}, true); }, {logits});
        CHECK(r.max_rel_err < 1e-6);
    }
}
