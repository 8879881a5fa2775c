#include <cmath>

#include "vifuse/metrics.hpp"

namespace vifuse {
namespace {

// Pixel-domain VIF (multi-scale; gaussian windows shrink with scale,
// additive-noise variance 2 on the [0,255] intensity range).
constexpr double kSigmaNsq = 2.0;

struct Plane {
    int64_t h = 0, w = 0;
    std::vector<double> v;
    double at(int64_t y, int64_t x) const { return v[static_cast<size_t>(y * w + x)]; }
};

std::vector<double> gauss_weights(int64_t n, double sd) {
    std::vector<double> w(static_cast<size_t>(n));
    const double c = (static_cast<double>(n) - 1.0) / 2.0;
    double sum = 0;
    for (int64_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(i) - c;
        w[static_cast<size_t>(i)] = std::exp(-(d * d) / (2.0 * sd * sd));
        sum += w[static_cast<size_t>(i)];
    }
    for (double& x : w) x /= sum;
    return w;
}

// Separable valid-mode filtering.
Plane filter_valid(const Plane& p, const std::vector<double>& w) {
    const int64_t n = static_cast<int64_t>(w.size());
    Plane mid;
    mid.h = p.h;
    mid.w = p.w - n + 1;
    mid.v.resize(static_cast<size_t>(mid.h * mid.w));
    for (int64_t y = 0; y < mid.h; ++y)
        for (int64_t x = 0; x < mid.w; ++x) {
            double s = 0;
            for (int64_t k = 0; k < n; ++k)
                s += w[static_cast<size_t>(k)] * p.at(y, x + k);
            mid.v[static_cast<size_t>(y * mid.w + x)] = s;
        }
    Plane out;
    out.h = p.h - n + 1;
    out.w = mid.w;
    out.v.resize(static_cast<size_t>(out.h * out.w));
    for (int64_t y = 0; y < out.h; ++y)
        for (int64_t x = 0; x < out.w; ++x) {
            double s = 0;
            for (int64_t k = 0; k < n; ++k)
                s += w[static_cast<size_t>(k)] * mid.at(y + k, x);
            out.v[static_cast<size_t>(y * out.w + x)] = s;
        }
    return out;
}

Plane subsample2(const Plane& p) {
    Plane out;
    out.h = (p.h + 1) / 2;
    out.w = (p.w + 1) / 2;
    out.v.resize(static_cast<size_t>(out.h * out.w));
    for (int64_t y = 0; y < out.h; ++y)
        for (int64_t x = 0; x < out.w; ++x)
            out.v[static_cast<size_t>(y * out.w + x)] = p.at(2 * y, 2 * x);
    return out;
}

Plane from_tensor(const Tensor<double>& t) {
    Plane p;
    p.h = t.shape()[2];
    p.w = t.shape()[3];
    p.v.resize(static_cast<size_t>(p.h * p.w));
    for (size_t i = 0; i < p.v.size(); ++i) p.v[i] = t.data()[i] * 255.0;
    return p;
}

// One reference/distorted pair; degenerate when the reference carries no
// variance at any scale.
VifResult vifp(Plane ref, Plane dist, int64_t scales) {
    double num = 0, den = 0;
    for (int64_t sc = 1; sc <= scales; ++sc) {
        const int64_t n = (1LL << (scales - sc + 1)) + 1;
        const std::vector<double> win = gauss_weights(n, static_cast<double>(n) / 5.0);
        if (sc > 1) {
            check(ref.h >= n && ref.w >= n,
                  "metric_vif: image too small at scale " + std::to_string(sc));
            ref = subsample2(filter_valid(ref, win));
            dist = subsample2(filter_valid(dist, win));
        }
        check(ref.h >= n && ref.w >= n,
              "metric_vif: image too small at scale " + std::to_string(sc));

        Plane mu1 = filter_valid(ref, win);
        Plane mu2 = filter_valid(dist, win);
        Plane rr = ref, dd = dist, rd = ref;
        for (size_t i = 0; i < rr.v.size(); ++i) {
            rr.v[i] = ref.v[i] * ref.v[i];
            dd.v[i] = dist.v[i] * dist.v[i];
            rd.v[i] = ref.v[i] * dist.v[i];
        }
        Plane m_rr = filter_valid(rr, win);
        Plane m_dd = filter_valid(dd, win);
        Plane m_rd = filter_valid(rd, win);

        for (size_t i = 0; i < mu1.v.size(); ++i) {
            const double m1 = mu1.v[i], m2 = mu2.v[i];
            double s1 = m_rr.v[i] - m1 * m1;
            double s2 = m_dd.v[i] - m2 * m2;
            double s12 = m_rd.v[i] - m1 * m2;
            if (s1 < 0) s1 = 0;
            if (s2 < 0) s2 = 0;

            double g = s12 / (s1 + 1e-10);
            double sv = s2 - g * s12;
            if (s1 < 1e-10) {
                g = 0;
                sv = s2;
                s1 = 0;
            }
            if (s2 < 1e-10) {
                g = 0;
                sv = 0;
            }
            if (g < 0) {
                sv = s2;
                g = 0;
            }
            if (sv <= 1e-10) sv = 1e-10;
            num += std::log10(1.0 + g * g * s1 / (sv + kSigmaNsq));
            den += std::log10(1.0 + s1 / kSigmaNsq);
        }
    }
    if (den == 0.0) return {0.0, true};
    return {num / den, false};
}

}  // namespace

VifResult metric_vif(const Tensor<double>& yf, const Tensor<double>& ya,
                     const Tensor<double>& yb, int64_t scales) {
    check(scales >= 1 && scales <= 6, "metric_vif: scales must be in [1,6]");
    check(yf.ndim() == 4 && yf.shape()[0] == 1 && yf.shape()[1] == 1,
          "metric_vif: expected [1,1,H,W], got " + shape_str(yf.shape()));
    check(yf.shape() == ya.shape() && yf.shape() == yb.shape(),
          "metric_vif: image sizes differ");

    const Plane f = from_tensor(yf);
    const VifResult va = vifp(from_tensor(ya), f, scales);
    const VifResult vb = vifp(from_tensor(yb), f, scales);

    VifResult r;
    r.degenerate = va.degenerate || vb.degenerate;
    int n = 0;
    if (!va.degenerate) {
        r.value += va.value;
        ++n;
    }
    if (!vb.degenerate) {
        r.value += vb.value;
        ++n;
    }
    if (n > 0) r.value /= static_cast<double>(n);
    return r;
}

}  // namespace vifuse
