#include <cmath>

#include "vifuse/metrics.hpp"

namespace vifuse {
namespace {

constexpr double kPi = 3.1415926535897932384626433832795;

// D65 reference white.
constexpr double kXn = 0.95047, kYn = 1.0, kZn = 1.08883;

double srgb_to_linear(double c) {
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double lab_f(double t) {
    constexpr double d = 6.0 / 29.0;
    return t > d * d * d ? std::cbrt(t) : t / (3.0 * d * d) + 4.0 / 29.0;
}

double deg2rad(double d) { return d * kPi / 180.0; }

}  // namespace

void srgb_to_lab(double r, double g, double b, double& l_out, double& a_out,
                 double& b_out) {
    const double rl = srgb_to_linear(r);
    const double gl = srgb_to_linear(g);
    const double bl = srgb_to_linear(b);
    const double x = 0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl;
    const double y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl;
    const double z = 0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl;
    const double fx = lab_f(x / kXn);
    const double fy = lab_f(y / kYn);
    const double fz = lab_f(z / kZn);
    l_out = 116.0 * fy - 16.0;
    a_out = 500.0 * (fx - fy);
    b_out = 200.0 * (fy - fz);
}

double ciede2000_lab(double l1, double a1, double b1, double l2, double a2, double b2) {
    const double c1 = std::sqrt(a1 * a1 + b1 * b1);
    const double c2 = std::sqrt(a2 * a2 + b2 * b2);
    const double cbar = 0.5 * (c1 + c2);
    const double cbar7 = std::pow(cbar, 7.0);
    constexpr double k257 = 6103515625.0;  // 25^7
    const double g = 0.5 * (1.0 - std::sqrt(cbar7 / (cbar7 + k257)));

    const double ap1 = (1.0 + g) * a1;
    const double ap2 = (1.0 + g) * a2;
    const double cp1 = std::sqrt(ap1 * ap1 + b1 * b1);
    const double cp2 = std::sqrt(ap2 * ap2 + b2 * b2);

    auto hue_of = [](double ap, double b) {
        if (ap == 0.0 && b == 0.0) return 0.0;
        double h = std::atan2(b, ap) * 180.0 / kPi;
        if (h < 0.0) h += 360.0;
        return h;
    };
    const double hp1 = hue_of(ap1, b1);
    const double hp2 = hue_of(ap2, b2);

    const double dl = l2 - l1;
    const double dc = cp2 - cp1;
    double dhp;
    if (cp1 * cp2 == 0.0)
        dhp = 0.0;
    else {
        dhp = hp2 - hp1;
        if (dhp > 180.0)
            dhp -= 360.0;
        else if (dhp < -180.0)
            dhp += 360.0;
    }
    const double dh = 2.0 * std::sqrt(cp1 * cp2) * std::sin(deg2rad(dhp) / 2.0);

    const double lbar = 0.5 * (l1 + l2);
    const double cpbar = 0.5 * (cp1 + cp2);
    double hbar;
    if (cp1 * cp2 == 0.0)
        hbar = hp1 + hp2;
    else {
        const double diff = std::abs(hp1 - hp2);
        hbar = 0.5 * (hp1 + hp2);
        if (diff > 180.0) hbar += hp1 + hp2 < 360.0 ? 180.0 : -180.0;
    }

    const double t = 1.0 - 0.17 * std::cos(deg2rad(hbar - 30.0)) +
                     0.24 * std::cos(deg2rad(2.0 * hbar)) +
                     0.32 * std::cos(deg2rad(3.0 * hbar + 6.0)) -
                     0.20 * std::cos(deg2rad(4.0 * hbar - 63.0));
    const double dtheta = 30.0 * std::exp(-((hbar - 275.0) / 25.0) * ((hbar - 275.0) / 25.0));
    const double cpbar7 = std::pow(cpbar, 7.0);
    const double rc = 2.0 * std::sqrt(cpbar7 / (cpbar7 + k257));
    const double lterm = (lbar - 50.0) * (lbar - 50.0);
    const double sl = 1.0 + 0.015 * lterm / std::sqrt(20.0 + lterm);
    const double sc = 1.0 + 0.045 * cpbar;
    const double sh = 1.0 + 0.015 * cpbar * t;
    const double rt = -std::sin(deg2rad(2.0 * dtheta)) * rc;

    const double tl = dl / sl;
    const double tc = dc / sc;
    const double th = dh / sh;
    return std::sqrt(tl * tl + tc * tc + th * th + rt * tc * th);
}

double metric_delta_e(const Tensor<double>& rgb_a, const Tensor<double>& rgb_b) {
    check(rgb_a.ndim() == 4 && rgb_a.shape()[0] == 1 && rgb_a.shape()[1] == 3,
          "metric_delta_e: expected [1,3,H,W], got " + shape_str(rgb_a.shape()));
    check(rgb_a.shape() == rgb_b.shape(), "metric_delta_e: image sizes differ");
    const int64_t plane = rgb_a.shape()[2] * rgb_a.shape()[3];
    const double* pa = rgb_a.data();
    const double* pb = rgb_b.data();
    double sum = 0;
    for (int64_t i = 0; i < plane; ++i) {
        double l1, a1, b1, l2, a2, b2;
        srgb_to_lab(pa[i], pa[plane + i], pa[2 * plane + i], l1, a1, b1);
        srgb_to_lab(pb[i], pb[plane + i], pb[2 * plane + i], l2, a2, b2);
        sum += ciede2000_lab(l1, a1, b1, l2, a2, b2);
    }
    return sum / static_cast<double>(plane);
}

}  // namespace vifuse
