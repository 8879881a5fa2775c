#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

// Internal dense kernels shared by the op implementations. Plain loops,
// written so the inner loop runs over contiguous memory.
namespace vifuse::detail {

// C (M x N) += A (M x K) * B (K x N). Tiled over N so the B panel stays in
// cache across the M rows; the per-element accumulation order is unchanged.
template <typename T>
void gemm_nn(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C) {
    constexpr int64_t NB = 960;
    for (int64_t j0 = 0; j0 < N; j0 += NB) {
        const int64_t jn = std::min(NB, N - j0);
        for (int64_t i = 0; i < M; ++i) {
            T* Crow = C + i * N + j0;
            const T* Arow = A + i * K;
            for (int64_t k = 0; k < K; ++k) {
                const T a = Arow[k];
                const T* Brow = B + k * N + j0;
                for (int64_t j = 0; j < jn; ++j) Crow[j] += a * Brow[j];
            }
        }
    }
}

// B (cols x rows) = transpose of A (rows x cols)
template <typename T>
void transpose_2d(int64_t rows, int64_t cols, const T* A, T* B) {
    for (int64_t i = 0; i < rows; ++i)
        for (int64_t j = 0; j < cols; ++j) B[j * rows + i] = A[i * cols + j];
}

// Direct stride-1 convolution of one image: out[co,oy,ox] += sum over (c,ki,kj)
// of w[co,c,ki,kj] * img[c,oy-pad+ki,ox-pad+kj]. Padding contributions are
// skipped instead of multiplied out; `out` must hold its initial value.
template <typename T>
void conv2d_s1(const T* __restrict__ img, int64_t C, int64_t H, int64_t W,
               const T* __restrict__ w, int64_t Cout, int64_t kh, int64_t kw,
               int64_t pad, int64_t Ho, int64_t Wo, T* __restrict__ out) {
    for (int64_t co = 0; co < Cout; ++co) {
        const T* wco = w + co * C * kh * kw;
        for (int64_t oy = 0; oy < Ho; ++oy) {
            T* __restrict__ dst = out + (co * Ho + oy) * Wo;
            for (int64_t c = 0; c < C; ++c) {
                for (int64_t ki = 0; ki < kh; ++ki) {
                    const int64_t iy = oy - pad + ki;
                    if (iy < 0 || iy >= H) continue;
                    const T* src = img + (c * H + iy) * W;
                    const T* wrow = wco + (c * kh + ki) * kw;
                    for (int64_t kj = 0; kj < kw; ++kj) {
                        const int64_t ox0 = std::max<int64_t>(0, pad - kj);
                        const int64_t ox1 = std::min(Wo, W + pad - kj);
                        const T wv = wrow[kj];
                        const T* __restrict__ s = src - pad + kj;
                        for (int64_t ox = ox0; ox < ox1; ++ox) dst[ox] += wv * s[ox];
                    }
                }
            }
        }
    }
}

// Adjoint of conv2d_s1 with respect to the image; `dimg` accumulates.
template <typename T>
void conv2d_s1_bwd_x(const T* __restrict__ g, int64_t Cout, int64_t Ho, int64_t Wo,
                     const T* __restrict__ w, int64_t C, int64_t kh, int64_t kw,
                     int64_t pad, int64_t H, int64_t W, T* __restrict__ dimg) {
    for (int64_t c = 0; c < C; ++c) {
        for (int64_t iy = 0; iy < H; ++iy) {
            T* __restrict__ dst = dimg + (c * H + iy) * W;
            for (int64_t co = 0; co < Cout; ++co) {
                const T* wc = w + (co * C + c) * kh * kw;
                for (int64_t ki = 0; ki < kh; ++ki) {
                    const int64_t oy = iy + pad - ki;
                    if (oy < 0 || oy >= Ho) continue;
                    const T* grow = g + (co * Ho + oy) * Wo;
                    for (int64_t kj = 0; kj < kw; ++kj) {
                        const int64_t ix0 = std::max<int64_t>(0, kj - pad);
                        const int64_t ix1 = std::min(W, Wo + kj - pad);
                        const T wv = wc[ki * kw + kj];
                        const T* __restrict__ s = grow + pad - kj;
                        for (int64_t ix = ix0; ix < ix1; ++ix) dst[ix] += wv * s[ix];
                    }
                }
            }
        }
    }
}

// Adjoint of conv2d_s1 with respect to the weights: one dot product per weight,
// split into fixed-width partial sums so the loop vectorizes deterministically.
template <typename T>
void conv2d_s1_bwd_w(const T* __restrict__ g, int64_t Cout, int64_t Ho, int64_t Wo,
                     const T* __restrict__ img, int64_t C, int64_t H, int64_t W,
                     int64_t kh, int64_t kw, int64_t pad, T* __restrict__ dw) {
    for (int64_t co = 0; co < Cout; ++co) {
        const T* gc = g + co * Ho * Wo;
        for (int64_t c = 0; c < C; ++c) {
            for (int64_t ki = 0; ki < kh; ++ki) {
                for (int64_t kj = 0; kj < kw; ++kj) {
                    const int64_t ox0 = std::max<int64_t>(0, pad - kj);
                    const int64_t ox1 = std::min(Wo, W + pad - kj);
                    T part[8] = {};
                    T tail = T(0);
                    for (int64_t oy = 0; oy < Ho; ++oy) {
                        const int64_t iy = oy - pad + ki;
                        if (iy < 0 || iy >= H) continue;
                        const T* grow = gc + oy * Wo;
                        const T* src = img + (c * H + iy) * W - pad + kj;
                        int64_t ox = ox0;
                        for (; ox + 8 <= ox1; ox += 8)
                            for (int64_t u = 0; u < 8; ++u)
                                part[u] += grow[ox + u] * src[ox + u];
                        for (; ox < ox1; ++ox) tail += grow[ox] * src[ox];
                    }
                    T acc = tail;
                    for (int64_t u = 0; u < 8; ++u) acc += part[u];
                    dw[((co * C + c) * kh + ki) * kw + kj] += acc;
                }
            }
        }
    }
}

// Unfolds one image [C, H, W] into [C*kh*kw, Hout*Wout] with zero padding.
template <typename T>
void im2col(const T* img, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw,
            int64_t stride, int64_t pad, int64_t Hout, int64_t Wout, T* col) {
    for (int64_t c = 0; c < C; ++c) {
        for (int64_t ki = 0; ki < kh; ++ki) {
            for (int64_t kj = 0; kj < kw; ++kj) {
                T* row = col + ((c * kh + ki) * kw + kj) * Hout * Wout;
                for (int64_t oy = 0; oy < Hout; ++oy) {
                    const int64_t iy = oy * stride - pad + ki;
                    if (iy < 0 || iy >= H) {
                        for (int64_t ox = 0; ox < Wout; ++ox) row[oy * Wout + ox] = T(0);
                        continue;
                    }
                    const T* src = img + (c * H + iy) * W;
                    for (int64_t ox = 0; ox < Wout; ++ox) {
                        const int64_t ix = ox * stride - pad + kj;
                        row[oy * Wout + ox] = (ix >= 0 && ix < W) ? src[ix] : T(0);
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-adds a column buffer back into [C, H, W].
template <typename T>
void col2im(const T* col, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw,
            int64_t stride, int64_t pad, int64_t Hout, int64_t Wout, T* img) {
    for (int64_t c = 0; c < C; ++c) {
        for (int64_t ki = 0; ki < kh; ++ki) {
            for (int64_t kj = 0; kj < kw; ++kj) {
                const T* row = col + ((c * kh + ki) * kw + kj) * Hout * Wout;
                for (int64_t oy = 0; oy < Hout; ++oy) {
                    const int64_t iy = oy * stride - pad + ki;
                    if (iy < 0 || iy >= H) continue;
                    T* dst = img + (c * H + iy) * W;
                    for (int64_t ox = 0; ox < Wout; ++ox) {
                        const int64_t ix = ox * stride - pad + kj;
                        if (ix >= 0 && ix < W) dst[ix] += row[oy * Wout + ox];
                    }
                }
            }
        }
    }
}

}  // namespace vifuse::detail
