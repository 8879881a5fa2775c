#include <cmath>

#include "doctest.h"
#include "vifuse/fdcheck.hpp"
#include "vifuse/imgops.hpp"

using namespace vifuse;

namespace {

Tensor<double> randu(Rng& rng, const Shape& shape, double lo = 0.0, double hi = 1.0) {
    Tensor<double> t = Tensor<double>::zeros(shape);
    for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(lo, hi);
    return t;
}

Tensor<double> solid_rgb(double r, double g, double b, int64_t h = 2, int64_t w = 2) {
    Tensor<double> t = Tensor<double>::zeros({1, 3, h, w});
    for (int64_t i = 0; i < h * w; ++i) {
        t.data()[i] = r;
        t.data()[h * w + i] = g;
        t.data()[2 * h * w + i] = b;
    }
    return t;
}

}  // namespace

TEST_CASE("BT.601 primaries and neutrals") {
    auto red = rgb_to_ycbcr(solid_rgb(1, 0, 0));
    CHECK(red.data()[0] == doctest::Approx(0.299).epsilon(1e-12));
    // Cb = 0.5 + (0 - Y) * 0.5/(1-0.114)
    CHECK(red.data()[4] == doctest::Approx(0.5 - 0.299 * 0.5 / 0.886).epsilon(1e-12));
    // Cr = 0.5 + (1 - Y) * 0.5/(1-0.299) = 1 exactly
    CHECK(red.data()[8] == doctest::Approx(1.0).epsilon(1e-12));

    auto white = rgb_to_ycbcr(solid_rgb(1, 1, 1));
    CHECK(white.data()[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(white.data()[4] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(white.data()[8] == doctest::Approx(0.5).epsilon(1e-12));

    auto black = rgb_to_ycbcr(solid_rgb(0, 0, 0));
    CHECK(black.data()[0] == doctest::Approx(0.0));
    CHECK(black.data()[4] == doctest::Approx(0.5));
}

TEST_CASE("color conversion roundtrip and luma") {
    Rng rng(21);
    auto img = randu(rng, {2, 3, 4, 5});
    auto back = ycbcr_to_rgb(rgb_to_ycbcr(img));
    for (int64_t i = 0; i < img.numel(); ++i)
        CHECK(back.data()[i] == doctest::Approx(img.data()[i]).epsilon(1e-12));

    auto y = luma(img);
    auto y_ref = slice(rgb_to_ycbcr(img), 1, 0, 1);
    REQUIRE(y.shape() == Shape{2, 1, 4, 5});
    for (int64_t i = 0; i < y.numel(); ++i)
        CHECK(y.data()[i] == doctest::Approx(y_ref.data()[i]).epsilon(1e-14));

    CHECK_THROWS_AS(rgb_to_ycbcr(Tensor<double>::zeros({1, 1, 4, 4})), Error);
}

TEST_CASE("sobel magnitude of a horizontal ramp") {
    const int64_t h = 5, w = 6;
    const double step = 0.1;
    Tensor<double> ramp = Tensor<double>::zeros({1, 1, h, w});
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) ramp.data()[y * w + x] = step * double(x);

    auto g = sobel_magnitude(ramp);
    REQUIRE(g.shape() == ramp.shape());
    // Rows are identical, so |Gy| = 0 everywhere. |Gx| correlates (1,2,1)
    // against the +/-1 column difference: 8*step inside, 4*step at the
    // replicated borders.
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            const double expect = (x == 0 || x == w - 1) ? 4 * step : 8 * step;
            CHECK(g.data()[y * w + x] == doctest::Approx(expect).epsilon(1e-12));
        }

    CHECK_THROWS_AS(sobel_magnitude(Tensor<double>::zeros({1, 3, 5, 5})), Error);
    CHECK_THROWS_AS(sobel_magnitude(Tensor<double>::zeros({1, 1, 2, 5})), Error);
}

TEST_CASE("ssim of an image with itself is exactly one") {
    Rng rng(33);
    auto x = randu(rng, {2, 1, 16, 16});
    CHECK(ssim(x, x).item() == 1.0);

    auto xf = Tensor<float>::zeros({1, 1, 12, 12});
    for (int64_t i = 0; i < xf.numel(); ++i) xf.data()[i] = float(rng.uniform());
    CHECK(ssim(xf, xf).item() == 1.0f);
}

TEST_CASE("ssim closed form for constant images") {
    // Zero variance collapses SSIM to the luminance term
    // (2ab+c1)/(a^2+b^2+c1).
    const double a = 0.25, b = 0.75;
    auto x = Tensor<double>::full({1, 1, 11, 11}, a);
    auto y = Tensor<double>::full({1, 1, 11, 11}, b);
    SsimParams p;
    const double expect = (2 * a * b + p.c1) / (a * a + b * b + p.c1);
    CHECK(ssim(x, y, p).item() == doctest::Approx(expect).epsilon(1e-9));

    // Symmetry.
    CHECK(ssim(x, y).item() == doctest::Approx(ssim(y, x).item()).epsilon(1e-12));
}

TEST_CASE("ssim against a direct sliding-window oracle") {
    Rng rng(55);
    const int64_t h = 14, w = 13;
    auto x = randu(rng, {1, 1, h, w});
    auto y = randu(rng, {1, 1, h, w});
    SsimParams p;
    p.window = 5;
    p.sigma = 1.1;

    // Plain-loop gaussian-window SSIM, no library ops involved.
    std::vector<double> k(size_t(p.window));
    double ks = 0;
    for (int64_t i = 0; i < p.window; ++i) {
        const double d = double(i) - double(p.window - 1) / 2.0;
        k[size_t(i)] = std::exp(-d * d / (2 * p.sigma * p.sigma));
        ks += k[size_t(i)];
    }
    for (double& v : k) v /= ks;

    const int64_t ho = h - p.window + 1, wo = w - p.window + 1;
    double acc = 0;
    for (int64_t oy = 0; oy < ho; ++oy)
        for (int64_t ox = 0; ox < wo; ++ox) {
            double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
            for (int64_t i = 0; i < p.window; ++i)
                for (int64_t j = 0; j < p.window; ++j) {
                    const double wij = k[size_t(i)] * k[size_t(j)];
                    const double xv = x.data()[(oy + i) * w + ox + j];
                    const double yv = y.data()[(oy + i) * w + ox + j];
                    mx += wij * xv;
                    my += wij * yv;
                    sxx += wij * xv * xv;
                    syy += wij * yv * yv;
                    sxy += wij * xv * yv;
                }
            sxx -= mx * mx;
            syy -= my * my;
            sxy -= mx * my;
            acc += (2 * mx * my + p.c1) * (2 * sxy + p.c2) /
                   ((mx * mx + my * my + p.c1) * (sxx + syy + p.c2));
        }
    const double oracle = acc / double(ho * wo);
    CHECK(ssim(x, y, p).item() == doctest::Approx(oracle).epsilon(1e-9));
}

TEST_CASE("ms_ssim basics") {
    Rng rng(77);
    auto x = randu(rng, {1, 1, 48, 48});
    auto y = randu(rng, {1, 1, 48, 48});
    SsimParams p;

    SUBCASE("self comparison gives exactly one") {
        CHECK(ms_ssim(x, x, 2, {0.5, 0.5}, p).item() == 1.0);
    }

    SUBCASE("one level is ssim^w0") {
        const double s = ssim(x, y, p).item();
        CHECK(ms_ssim(x, y, 1, {1.0}, p).item() == doctest::Approx(s).epsilon(1e-15));
        CHECK(ms_ssim(x, y, 1, {0.7}, p).item() ==
              doctest::Approx(std::pow(s, 0.7)).epsilon(1e-12));
    }

    SUBCASE("two levels decompose into cs and full terms") {
        // Use a correlated pair so ssim stays solidly positive at both
        // scales, then peel off the coarse factor: what remains is the
        // fine-scale cs term raised to w0, which sits in (0, 1].
        std::vector<double> mixed(x.value().size());
        for (size_t i = 0; i < mixed.size(); ++i)
            mixed[i] = 0.85 * x.value()[i] + 0.15 * y.value()[i];
        auto yc = Tensor<double>::from_data(x.shape(), mixed);
        const double w0 = 0.3, w1 = 0.7;
        auto x2 = avg_pool2d(x, 2);
        auto y2 = avg_pool2d(yc, 2);
        const double coarse = ssim(x2, y2, p).item();
        REQUIRE(coarse > 0.0);
        const double combined = ms_ssim(x, yc, 2, {w0, w1}, p).item();
        const double cs_part = combined / std::pow(coarse, w1);
        CHECK(cs_part > 0.0);
        CHECK(cs_part <= 1.0 + 1e-9);
    }

    SUBCASE("input too small for the pyramid is rejected") {
        CHECK_THROWS_AS(ms_ssim(x, y, 4, {0.25, 0.25, 0.25, 0.25}, p), Error);
        auto odd = randu(rng, {1, 1, 33, 33});
        CHECK_THROWS_AS(ms_ssim(odd, odd, 2, {0.5, 0.5}, p), Error);  // 33 % 2 != 0
        CHECK_THROWS_AS(ms_ssim(x, y, 2, {0.5}, p), Error);
    }
}

TEST_CASE("ms_ssim_max_levels") {
    CHECK(ms_ssim_max_levels(176, 176, 11) == 5);
    CHECK(ms_ssim_max_levels(64, 64, 11) == 3);
    CHECK(ms_ssim_max_levels(65, 65, 11) == 1);
    CHECK(ms_ssim_max_levels(11, 11, 11) == 1);
    CHECK(ms_ssim_default_weights().size() == 5);
    double s = 0;
    for (double w : ms_ssim_default_weights()) s += w;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("image op gradients") {
    Rng rng(99);
    auto rgb = randu(rng, {1, 3, 6, 6}, 0.1, 0.9);
    rgb.set_requires_grad();
    auto fd = [&](auto build) {
        FdResult r = fd_check(build, {rgb});
        INFO("worst ", r.worst, " rel ", r.max_rel_err);
        CHECK(r.max_rel_err < 1e-6);
    };
    fd([&] { return mean(rgb_to_ycbcr(rgb)); });
    fd([&] { return mean(ycbcr_to_rgb(rgb)); });
    fd([&] { return mean(mul(luma(rgb), luma(rgb))); });

    auto chan = randu(rng, {1, 1, 8, 8}, 0.1, 0.9);
    chan.set_requires_grad();
    auto other = randu(rng, {1, 1, 8, 8}, 0.1, 0.9);
    SsimParams small;
    small.window = 5;
    {
        FdResult r = fd_check([&] { return mean(mul(sobel_magnitude(chan),
                                                    sobel_magnitude(chan))); },
                              {chan});
        CHECK(r.max_rel_err < 1e-6);
    }
    {
        FdResult r = fd_check([&] { return ssim(chan, other, small); }, {chan});
        CHECK(r.max_rel_err < 1e-6);
    }
    auto big = randu(rng, {1, 1, 20, 20}, 0.1, 0.9);
    big.set_requires_grad();
    auto big2 = randu(rng, {1, 1, 20, 20}, 0.1, 0.9);
    {
        FdResult r =
            fd_check([&] { return ms_ssim(big, big2, 2, {0.4, 0.6}, small); }, {big});
        CHECK(r.max_rel_err < 1e-5);
    }
}
