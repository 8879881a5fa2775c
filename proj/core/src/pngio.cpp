#include "vifuse/pngio.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

namespace vifuse {
namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

[[noreturn]] void png_fail(png_structp, png_const_charp msg) {
    fail(std::string("png: ") + msg);
}

void png_warn(png_structp, png_const_charp) {}

}  // namespace

ImageU8 read_png(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) fail("cannot open " + path);

    png_byte header[8];
    if (std::fread(header, 1, 8, f.get()) != 8 || png_sig_cmp(header, 0, 8) != 0)
        fail(path + " is not a PNG file");

    png_structp png =
        png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
    if (!png) fail("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        fail("png_create_info_struct failed");
    }

    ImageU8 img;
    try {
        png_init_io(png, f.get());
        png_set_sig_bytes(png, 8);
        png_read_info(png, info);

        const int bit_depth = png_get_bit_depth(png, info);
        if (bit_depth == 16)
            fail(path + ": 16-bit PNG not supported, expected 8-bit");
        const int color_type = png_get_color_type(png, info);

        if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
        if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
            png_set_expand_gray_1_2_4_to_8(png);
        if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
        if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
        if (color_type == PNG_COLOR_TYPE_RGB_ALPHA) png_set_strip_alpha(png);
        png_read_update_info(png, info);

        img.h = png_get_image_height(png, info);
        img.w = png_get_image_width(png, info);
        img.channels = png_get_channels(png, info);
        if (img.channels != 1 && img.channels != 3)
            fail(path + ": expected 1 or 3 channels, got " +
                 std::to_string(img.channels));

        img.data.resize(static_cast<size_t>(img.h * img.w * img.channels));
        std::vector<png_bytep> rows(static_cast<size_t>(img.h));
        const size_t stride = static_cast<size_t>(img.w * img.channels);
        for (int64_t y = 0; y < img.h; ++y)
            rows[static_cast<size_t>(y)] = img.data.data() + static_cast<size_t>(y) * stride;
        png_read_image(png, rows.data());
        png_read_end(png, nullptr);
    } catch (...) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_png(const std::string& path, const ImageU8& img) {
    check(img.channels == 1 || img.channels == 3,
          "write_png: expected 1 or 3 channels, got " + std::to_string(img.channels));
    check(img.h > 0 && img.w > 0, "write_png: empty image");
    check(img.data.size() == static_cast<size_t>(img.h * img.w * img.channels),
          "write_png: data size does not match dimensions");

    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) fail("cannot open " + path + " for writing");

    png_structp png =
        png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
    if (!png) fail("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail("png_create_info_struct failed");
    }

    try {
        png_init_io(png, f.get());
        png_set_IHDR(png, info, static_cast<png_uint_32>(img.w),
                     static_cast<png_uint_32>(img.h), 8,
                     img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                     PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                     PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);

        std::vector<png_bytep> rows(static_cast<size_t>(img.h));
        const size_t stride = static_cast<size_t>(img.w * img.channels);
        for (int64_t y = 0; y < img.h; ++y)
            rows[static_cast<size_t>(y)] =
                const_cast<png_bytep>(img.data.data()) + static_cast<size_t>(y) * stride;
        png_write_image(png, rows.data());
        png_write_end(png, nullptr);
    } catch (...) {
        png_destroy_write_struct(&png, &info);
        throw;
    }
    png_destroy_write_struct(&png, &info);
}

template <typename T>
Tensor<T> image_to_tensor(const ImageU8& img) {
    check(img.channels == 1 || img.channels == 3, "image_to_tensor: bad channel count");
    Tensor<T> t = Tensor<T>::zeros({1, img.channels, img.h, img.w});
    T* out = t.data();
    const int64_t plane = img.h * img.w;
    for (int64_t y = 0; y < img.h; ++y)
        for (int64_t x = 0; x < img.w; ++x)
            for (int64_t c = 0; c < img.channels; ++c)
                out[c * plane + y * img.w + x] =
                    static_cast<T>(img.at(y, x, c)) / static_cast<T>(255);
    return t;
}

template <typename T>
ImageU8 tensor_to_image(const Tensor<T>& t) {
    check(t.ndim() == 4 && t.shape()[0] == 1, "tensor_to_image: expected [1,C,H,W]");
    const int64_t c = t.shape()[1], h = t.shape()[2], w = t.shape()[3];
    check(c == 1 || c == 3, "tensor_to_image: expected 1 or 3 channels");
    ImageU8 img;
    img.h = h;
    img.w = w;
    img.channels = c;
    img.data.resize(static_cast<size_t>(h * w * c));
    const T* in = t.data();
    const int64_t plane = h * w;
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                double v = static_cast<double>(in[ch * plane + y * w + x]);
                v = std::min(1.0, std::max(0.0, v));
                img.data[static_cast<size_t>((y * w + x) * c + ch)] =
                    static_cast<uint8_t>(std::floor(v * 255.0 + 0.5));
            }
    return img;
}

LabelMap image_to_labels(const ImageU8& img) {
    check(img.channels == 1, "image_to_labels: label PNG must be single-channel");
    LabelMap m(img.h, img.w);
    for (size_t i = 0; i < img.data.size(); ++i)
        m.data[i] = static_cast<int32_t>(img.data[i]);
    return m;
}

ImageU8 labels_to_image(const LabelMap& m) {
    ImageU8 img;
    img.h = m.h;
    img.w = m.w;
    img.channels = 1;
    img.data.resize(m.data.size());
    for (size_t i = 0; i < m.data.size(); ++i) {
        check(m.data[i] >= 0 && m.data[i] <= 255,
              "labels_to_image: class index out of 8-bit range");
        img.data[i] = static_cast<uint8_t>(m.data[i]);
    }
    return img;
}

template Tensor<float> image_to_tensor<float>(const ImageU8&);
template Tensor<double> image_to_tensor<double>(const ImageU8&);
template ImageU8 tensor_to_image<float>(const Tensor<float>&);
template ImageU8 tensor_to_image<double>(const Tensor<double>&);

}  // namespace vifuse
