#pragma once

#include <cstdint>

#include "vifuse/tensor.hpp"

namespace vifuse {

inline constexpr int32_t kIgnoreIndex = 255;

// H x W integer class indices; 255 marks pixels excluded from segmentation
// losses and metrics.
struct LabelMap {
    int64_t h = 0;
    int64_t w = 0;
    std::vector<int32_t> data;

    LabelMap() = default;
    LabelMap(int64_t height, int64_t width)
        : h(height), w(width), data(static_cast<size_t>(height * width), 0) {}

    int32_t at(int64_t y, int64_t x) const { return data[static_cast<size_t>(y * w + x)]; }
};

inline void validate_labels(const LabelMap& m, int64_t n_classes) {
    check(m.h > 0 && m.w > 0 &&
              m.data.size() == static_cast<size_t>(m.h * m.w),
          "labels: inconsistent label map dimensions");
    for (int32_t v : m.data)
        check((v >= 0 && v < n_classes) || v == kIgnoreIndex,
              "labels: class index " + std::to_string(v) + " out of range [0, " +
                  std::to_string(n_classes) + ") and not ignore (255)");
}

// One-hot target [N, C, H, W]; ignored pixels are all-zero rows.
template <typename T>
Tensor<T> one_hot(const std::vector<LabelMap>& labels, int64_t n_classes) {
    check(!labels.empty(), "one_hot: empty batch");
    const int64_t N = static_cast<int64_t>(labels.size());
    const int64_t H = labels[0].h, W = labels[0].w;
    Tensor<T> out = Tensor<T>::zeros({N, n_classes, H, W});
    for (int64_t n = 0; n < N; ++n) {
        const LabelMap& m = labels[static_cast<size_t>(n)];
        validate_labels(m, n_classes);
        check(m.h == H && m.w == W, "one_hot: label maps differ in size");
        for (int64_t i = 0; i < H * W; ++i) {
            const int32_t v = m.data[static_cast<size_t>(i)];
            if (v != kIgnoreIndex)
                out.data()[(n * n_classes + v) * H * W + i] = T(1);
        }
    }
    return out;
}

// 1 at valid pixels, 0 at ignored ones, replicated across `channels`.
template <typename T>
Tensor<T> valid_mask(const std::vector<LabelMap>& labels, int64_t channels) {
    check(!labels.empty(), "valid_mask: empty batch");
    const int64_t N = static_cast<int64_t>(labels.size());
    const int64_t H = labels[0].h, W = labels[0].w;
    Tensor<T> out = Tensor<T>::zeros({N, channels, H, W});
    for (int64_t n = 0; n < N; ++n) {
        const LabelMap& m = labels[static_cast<size_t>(n)];
        check(m.h == H && m.w == W, "valid_mask: label maps differ in size");
        for (int64_t i = 0; i < H * W; ++i) {
            if (m.data[static_cast<size_t>(i)] == kIgnoreIndex) continue;
            for (int64_t c = 0; c < channels; ++c)
                out.data()[(n * channels + c) * H * W + i] = T(1);
        }
    }
    return out;
}

inline int64_t count_valid(const std::vector<LabelMap>& labels) {
    int64_t n = 0;
    for (const auto& m : labels)
        for (int32_t v : m.data)
            if (v != kIgnoreIndex) ++n;
    return n;
}

}  // namespace vifuse
