#pragma once

#include <string>

#include "vifuse/labelmap.hpp"
#include "vifuse/tensor.hpp"

namespace vifuse {

// Interleaved 8-bit image, 1 (gray) or 3 (RGB) channels.
struct ImageU8 {
    int64_t h = 0;
    int64_t w = 0;
    int64_t channels = 0;
    std::vector<uint8_t> data;

    uint8_t at(int64_t y, int64_t x, int64_t c) const {
        return data[static_cast<size_t>((y * w + x) * channels + c)];
    }
};

// Accepts 8-bit gray/RGB PNGs (palette expanded, alpha stripped); 16-bit
// files are rejected.
ImageU8 read_png(const std::string& path);
void write_png(const std::string& path, const ImageU8& img);

// [1,C,H,W] in [0,1].
template <typename T>
Tensor<T> image_to_tensor(const ImageU8& img);

// Clamps to [0,1] and quantizes with round-half-up.
template <typename T>
ImageU8 tensor_to_image(const Tensor<T>& t);

LabelMap image_to_labels(const ImageU8& img);
ImageU8 labels_to_image(const LabelMap& m);

}  // namespace vifuse
