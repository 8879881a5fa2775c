#include "vifuse/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "vifuse/ops.hpp"
#include "vifuse/pngio.hpp"

namespace fs = std::filesystem;

namespace vifuse {
namespace {

Tensor<float> crop_image(const Tensor<float>& t, int64_t oy, int64_t ox, int64_t size) {
    const int64_t c = t.shape()[1], w = t.shape()[3];
    const int64_t h = t.shape()[2];
    Tensor<float> out = Tensor<float>::zeros({1, c, size, size});
    const float* in = t.data();
    float* dst = out.data();
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t y = 0; y < size; ++y) {
            const float* row = in + ch * h * w + (oy + y) * w + ox;
            std::copy(row, row + size, dst + ch * size * size + y * size);
        }
    return out;
}

}  // namespace

std::vector<SamplePair> load_dataset(const std::string& root, int64_t n_classes) {
    const fs::path vis_dir = fs::path(root) / "vis";
    const fs::path ir_dir = fs::path(root) / "ir";
    const fs::path lab_dir = fs::path(root) / "labels";
    for (const fs::path& d : {vis_dir, ir_dir, lab_dir})
        check(fs::is_directory(d), "dataset directory missing: " + d.string());

    std::vector<std::string> stems;
    for (const auto& e : fs::directory_iterator(vis_dir))
        if (e.is_regular_file() && e.path().extension() == ".png")
            stems.push_back(e.path().stem().string());
    std::sort(stems.begin(), stems.end());
    check(!stems.empty(), "no PNG files under " + vis_dir.string());

    std::vector<SamplePair> out;
    out.reserve(stems.size());
    for (const std::string& stem : stems) {
        const fs::path vp = vis_dir / (stem + ".png");
        const fs::path ip = ir_dir / (stem + ".png");
        const fs::path lp = lab_dir / (stem + ".png");
        check(fs::exists(ip), "missing infrared image for \"" + stem + "\": " + ip.string());
        check(fs::exists(lp), "missing label image for \"" + stem + "\": " + lp.string());

        ImageU8 vis = read_png(vp.string());
        ImageU8 ir = read_png(ip.string());
        ImageU8 lab = read_png(lp.string());
        check(vis.channels == 3, vp.string() + ": visible image must be RGB");
        check(vis.h == ir.h && vis.w == ir.w && vis.h == lab.h && vis.w == lab.w,
              "size mismatch for \"" + stem + "\": vis " + std::to_string(vis.h) + "x" +
                  std::to_string(vis.w) + ", ir " + std::to_string(ir.h) + "x" +
                  std::to_string(ir.w) + ", labels " + std::to_string(lab.h) + "x" +
                  std::to_string(lab.w));

        SamplePair s;
        s.id = stem;
        s.vis = image_to_tensor<float>(vis);
        if (ir.channels == 1) {
            Tensor<float> band = image_to_tensor<float>(ir);
            s.ir = concat<float>({band, band, band}, 1);
        } else {
            s.ir = image_to_tensor<float>(ir);
        }
        s.labels = image_to_labels(lab);
        validate_labels(s.labels, n_classes);
        out.push_back(std::move(s));
    }
    return out;
}

DatasetSplit split_dataset(std::vector<SamplePair> pairs, double ratio, uint64_t seed) {
    check(pairs.size() >= 2, "split_dataset: need at least 2 pairs, got " +
                                 std::to_string(pairs.size()));
    check(ratio > 0.0 && ratio < 1.0, "split_dataset: ratio must be in (0,1)");

    std::vector<size_t> idx(pairs.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(mix_seed(seed, 0x73706c6974ULL));  // "split"
    rng.shuffle(idx);

    size_t n_train = static_cast<size_t>(
        std::floor(ratio * static_cast<double>(pairs.size())));
    n_train = std::min(std::max<size_t>(n_train, 1), pairs.size() - 1);

    DatasetSplit s;
    for (size_t i = 0; i < idx.size(); ++i)
        (i < n_train ? s.train : s.val).push_back(std::move(pairs[idx[i]]));
    return s;
}

SamplePair random_crop_pair(const SamplePair& s, int64_t size, Rng& rng) {
    const int64_t h = s.vis.shape()[2], w = s.vis.shape()[3];
    check(size >= 1 && size <= h && size <= w,
          "random_crop_pair: crop " + std::to_string(size) + " exceeds image " +
              std::to_string(h) + "x" + std::to_string(w));
    const int64_t oy = static_cast<int64_t>(rng.below(static_cast<uint64_t>(h - size + 1)));
    const int64_t ox = static_cast<int64_t>(rng.below(static_cast<uint64_t>(w - size + 1)));

    SamplePair out;
    out.id = s.id;
    out.vis = crop_image(s.vis, oy, ox, size);
    out.ir = crop_image(s.ir, oy, ox, size);
    out.labels = LabelMap(size, size);
    for (int64_t y = 0; y < size; ++y)
        for (int64_t x = 0; x < size; ++x)
            out.labels.data[static_cast<size_t>(y * size + x)] = s.labels.at(oy + y, ox + x);
    return out;
}

Batch make_batch(const std::vector<const SamplePair*>& samples) {
    check(!samples.empty(), "make_batch: empty sample list");
    std::vector<Tensor<float>> vis, ir;
    Batch b;
    for (const SamplePair* s : samples) {
        vis.push_back(s->vis);
        ir.push_back(s->ir);
        b.labels.push_back(s->labels);
        b.ids.push_back(s->id);
    }
    b.vis = concat<float>(vis, 0);
    b.ir = concat<float>(ir, 0);
    return b;
}

}  // namespace vifuse
