#pragma once

#include <string>
#include <vector>

#include "vifuse/labelmap.hpp"
#include "vifuse/tensor.hpp"

namespace vifuse {

// One aligned visible/infrared pair with per-pixel labels.
// vis and ir are [1,3,H,W] in [0,1]; ir is a replicated single band.
struct SamplePair {
    std::string id;
    Tensor<float> vis;
    Tensor<float> ir;
    LabelMap labels;
};

// Loads <root>/{vis,ir,labels}/<stem>.png for every stem found under vis/.
// Stems are sorted; a missing counterpart or a size mismatch is an error.
std::vector<SamplePair> load_dataset(const std::string& root, int64_t n_classes);

struct DatasetSplit {
    std::vector<SamplePair> train;
    std::vector<SamplePair> val;
};

// Deterministic shuffle by seed, then the first floor(ratio*N) samples
// become the training set. Requires at least 2 pairs and 1 <= train < N.
DatasetSplit split_dataset(std::vector<SamplePair> pairs, double ratio, uint64_t seed);

// Same random window from vis, ir and labels.
SamplePair random_crop_pair(const SamplePair& s, int64_t size, Rng& rng);

// Stacks samples along the batch axis: [B,3,h,w] plus the label maps.
struct Batch {
    Tensor<float> vis;
    Tensor<float> ir;
    std::vector<LabelMap> labels;
    std::vector<std::string> ids;
};
Batch make_batch(const std::vector<const SamplePair*>& samples);

}  // namespace vifuse
