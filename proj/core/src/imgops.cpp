#include "vifuse/imgops.hpp"

#include <cmath>

namespace vifuse {

namespace {

// BT.601 luma coefficients; chroma scaled so [0,1] inputs give [0,1] chroma
// with 0.5 neutral.
constexpr double KR = 0.299;
constexpr double KG = 0.587;
constexpr double KB = 0.114;
constexpr double CB_SCALE = 0.5 / (1.0 - KB);
constexpr double CR_SCALE = 0.5 / (1.0 - KR);

template <typename T>
void check_rgb(const char* op, const Tensor<T>& img) {
    check(img.ndim() == 4 && img.dim(1) == 3,
          std::string(op) + ": expected Nx3xHxW, got " + shape_str(img.shape()));
}

template <typename T>
Tensor<T> gauss_kernel(const SsimParams& p, bool row) {
    const int64_t w = p.window;
    std::vector<double> k(static_cast<size_t>(w));
    const double c = static_cast<double>(w - 1) / 2.0;
    double s = 0.0;
    for (int64_t i = 0; i < w; ++i) {
        const double d = static_cast<double>(i) - c;
        k[static_cast<size_t>(i)] = std::exp(-d * d / (2.0 * p.sigma * p.sigma));
        s += k[static_cast<size_t>(i)];
    }
    std::vector<T> kv(static_cast<size_t>(w));
    for (int64_t i = 0; i < w; ++i)
        kv[static_cast<size_t>(i)] = static_cast<T>(k[static_cast<size_t>(i)] / s);
    return Tensor<T>::from_data(row ? Shape{1, 1, 1, w} : Shape{1, 1, w, 1},
                                std::move(kv));
}

// Valid-mode separable gaussian filter.
template <typename T>
Tensor<T> gauss_blur(const Tensor<T>& z, const Tensor<T>& krow, const Tensor<T>& kcol) {
    return conv2d(conv2d(z, krow, Tensor<T>(), 1, 0), kcol, Tensor<T>(), 1, 0);
}

// Mean full-SSIM and mean contrast-structure term over the valid map.
template <typename T>
void ssim_terms(const Tensor<T>& x, const Tensor<T>& y, const SsimParams& p,
                Tensor<T>* full, Tensor<T>* cs) {
    check(x.ndim() == 4 && x.dim(1) == 1,
          "ssim: expected Nx1xHxW, got " + shape_str(x.shape()));
    check(x.shape() == y.shape(), "ssim: shape mismatch " + shape_str(x.shape()) +
                                      " vs " + shape_str(y.shape()));
    check(p.window >= 3 && p.window % 2 == 1, "ssim: window must be odd and >= 3");
    check(p.window <= x.dim(2) && p.window <= x.dim(3),
          "ssim: window " + std::to_string(p.window) + " too large for " +
              shape_str(x.shape()));
    check(p.sigma > 0 && p.c1 > 0 && p.c2 > 0, "ssim: params must be positive");

    const Tensor<T> krow = gauss_kernel<T>(p, true);
    const Tensor<T> kcol = gauss_kernel<T>(p, false);
    const T c1 = static_cast<T>(p.c1);
    const T c2 = static_cast<T>(p.c2);

    Tensor<T> mu_x = gauss_blur(x, krow, kcol);
    Tensor<T> mu_y = gauss_blur(y, krow, kcol);
    Tensor<T> mu_xx = mul(mu_x, mu_x);
    Tensor<T> mu_yy = mul(mu_y, mu_y);
    Tensor<T> mu_xy = mul(mu_x, mu_y);
    Tensor<T> sig_x = sub(gauss_blur(mul(x, x), krow, kcol), mu_xx);
    Tensor<T> sig_y = sub(gauss_blur(mul(y, y), krow, kcol), mu_yy);
    Tensor<T> sig_xy = sub(gauss_blur(mul(x, y), krow, kcol), mu_xy);

    Tensor<T> cs_num = affine(sig_xy, T(2), c2);
    Tensor<T> cs_den = affine(add(sig_x, sig_y), T(1), c2);
    if (cs) *cs = mean(div(cs_num, cs_den));
    if (full) {
        Tensor<T> l_num = affine(mu_xy, T(2), c1);
        Tensor<T> l_den = affine(add(mu_xx, mu_yy), T(1), c1);
        *full = mean(div(mul(l_num, cs_num), mul(l_den, cs_den)));
    }
}

}  // namespace

template <typename T>
Tensor<T> rgb_to_ycbcr(const Tensor<T>& img) {
    check_rgb("rgb_to_ycbcr", img);
    Tensor<T> r = slice(img, 1, 0, 1);
    Tensor<T> g = slice(img, 1, 1, 1);
    Tensor<T> b = slice(img, 1, 2, 1);
    Tensor<T> y = add(add(affine(r, T(KR), T(0)), affine(g, T(KG), T(0))),
                      affine(b, T(KB), T(0)));
    Tensor<T> cb = affine(sub(b, y), T(CB_SCALE), T(0.5));
    Tensor<T> cr = affine(sub(r, y), T(CR_SCALE), T(0.5));
    return concat<T>({y, cb, cr}, 1);
}

template <typename T>
Tensor<T> ycbcr_to_rgb(const Tensor<T>& img) {
    check_rgb("ycbcr_to_rgb", img);
    Tensor<T> y = slice(img, 1, 0, 1);
    Tensor<T> cb = slice(img, 1, 1, 1);
    Tensor<T> cr = slice(img, 1, 2, 1);
    // Cr = 0.5 + CR_SCALE*(R-Y)  =>  R = Y + (Cr-0.5)/CR_SCALE, likewise B.
    Tensor<T> r = add(y, affine(cr, T(1.0 / CR_SCALE), T(-0.5 / CR_SCALE)));
    Tensor<T> b = add(y, affine(cb, T(1.0 / CB_SCALE), T(-0.5 / CB_SCALE)));
    Tensor<T> g = affine(sub(sub(y, affine(r, T(KR), T(0))), affine(b, T(KB), T(0))),
                         T(1.0 / KG), T(0));
    return concat<T>({r, g, b}, 1);
}

template <typename T>
Tensor<T> luma(const Tensor<T>& rgb) {
    check_rgb("luma", rgb);
    Tensor<T> r = slice(rgb, 1, 0, 1);
    Tensor<T> g = slice(rgb, 1, 1, 1);
    Tensor<T> b = slice(rgb, 1, 2, 1);
    return add(add(affine(r, T(KR), T(0)), affine(g, T(KG), T(0))),
               affine(b, T(KB), T(0)));
}

template <typename T>
Tensor<T> sobel_magnitude(const Tensor<T>& chan) {
    check(chan.ndim() == 4 && chan.dim(1) == 1,
          "sobel_magnitude: expected Nx1xHxW, got " + shape_str(chan.shape()));
    check(chan.dim(2) >= 3 && chan.dim(3) >= 3,
          "sobel_magnitude: image smaller than 3x3");
    static const std::vector<T> kx = {-1, 0, 1, -2, 0, 2, -1, 0, 1};
    static const std::vector<T> ky = {-1, -2, -1, 0, 0, 0, 1, 2, 1};
    Tensor<T> wx = Tensor<T>::from_data({1, 1, 3, 3}, kx);
    Tensor<T> wy = Tensor<T>::from_data({1, 1, 3, 3}, ky);
    Tensor<T> padded = replicate_pad(chan, 1);
    return add(abs(conv2d(padded, wx, Tensor<T>(), 1, 0)),
               abs(conv2d(padded, wy, Tensor<T>(), 1, 0)));
}

template <typename T>
Tensor<T> ssim(const Tensor<T>& x, const Tensor<T>& y, const SsimParams& p) {
    Tensor<T> full;
    ssim_terms<T>(x, y, p, &full, nullptr);
    return full;
}

template <typename T>
Tensor<T> ms_ssim(const Tensor<T>& x, const Tensor<T>& y, int64_t levels,
                  const std::vector<double>& level_weights, const SsimParams& p) {
    check(levels >= 1, "ms_ssim: levels must be >= 1");
    check(static_cast<int64_t>(level_weights.size()) == levels,
          "ms_ssim: got " + std::to_string(level_weights.size()) + " weights for " +
              std::to_string(levels) + " levels");
    if (levels == 1) return pow_scalar(ssim(x, y, p), static_cast<T>(level_weights[0]));

    check(x.ndim() == 4, "ms_ssim: expected NCHW, got " + shape_str(x.shape()));
    const int64_t factor = int64_t(1) << (levels - 1);
    const int64_t min_side = p.window * factor;
    check(x.dim(2) >= min_side && x.dim(3) >= min_side,
          "ms_ssim: " + std::to_string(levels) + " levels with window " +
              std::to_string(p.window) + " need at least " + std::to_string(min_side) +
              "x" + std::to_string(min_side) + ", got " + shape_str(x.shape()));
    check(x.dim(2) % factor == 0 && x.dim(3) % factor == 0,
          "ms_ssim: spatial dims of " + shape_str(x.shape()) +
              " must be divisible by " + std::to_string(factor));

    Tensor<T> cur_x = x;
    Tensor<T> cur_y = y;
    Tensor<T> result;
    const Tensor<T> floor_c = Tensor<T>::scalar(T(1e-8));
    for (int64_t lvl = 0; lvl < levels; ++lvl) {
        const bool last = lvl == levels - 1;
        Tensor<T> full, cs;
        ssim_terms(cur_x, cur_y, p, last ? &full : nullptr, last ? nullptr : &cs);
        // Clamp before the fractional power; cs can dip below 0 in theory.
        Tensor<T> term = maximum(last ? full : cs, floor_c);
        Tensor<T> factor_t = pow_scalar(term, static_cast<T>(level_weights[lvl]));
        result = result.defined() ? mul(result, factor_t) : factor_t;
        if (!last) {
            cur_x = avg_pool2d(cur_x, 2);
            cur_y = avg_pool2d(cur_y, 2);
        }
    }
    return result;
}

const std::vector<double>& ms_ssim_default_weights() {
    static const std::vector<double> w = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
    return w;
}

int64_t ms_ssim_max_levels(int64_t h, int64_t w, int64_t window) {
    int64_t levels = 1;
    int64_t side = std::min(h, w);
    while (levels < 16) {
        const int64_t factor = int64_t(1) << levels;  // for levels+1 scales
        if (side / factor < window || h % factor != 0 || w % factor != 0) break;
        ++levels;
    }
    return levels;
}

#define VIFUSE_INST_IMG1(fn)                          \
    template Tensor<float> fn<float>(const Tensor<float>&); \
    template Tensor<double> fn<double>(const Tensor<double>&);

VIFUSE_INST_IMG1(rgb_to_ycbcr)
VIFUSE_INST_IMG1(ycbcr_to_rgb)
VIFUSE_INST_IMG1(luma)
VIFUSE_INST_IMG1(sobel_magnitude)
template Tensor<float> ssim<float>(const Tensor<float>&, const Tensor<float>&,
                                   const SsimParams&);
template Tensor<double> ssim<double>(const Tensor<double>&, const Tensor<double>&,
                                     const SsimParams&);
template Tensor<float> ms_ssim<float>(const Tensor<float>&, const Tensor<float>&,
                                      int64_t, const std::vector<double>&,
                                      const SsimParams&);
template Tensor<double> ms_ssim<double>(const Tensor<double>&, const Tensor<double>&,
                                        int64_t, const std::vector<double>&,
                                        const SsimParams&);

}  // namespace vifuse
