#pragma once

#include <string>

#include "vifuse/data.hpp"

namespace vifuse {

// Procedural visible/infrared scene generator. Scenes are a textured
// background (class 0) plus a handful of shapes; class 1 is the "hot object"
// class: bright in infrared, nearly invisible in the visible band.
struct SynthConfig {
    int64_t size = 64;
    int64_t n_classes = 5;
    int64_t min_objects = 3;
    int64_t max_objects = 6;
    double noise_sigma = 0.005;
    uint64_t seed = 1;
};

// Bump when the procedural recipe changes; scenes for a (version, seed,
// index) triple are frozen.
inline constexpr const char* kSynthGeneratorVersion = "vifuse-synth-1";

void validate_synth_config(const SynthConfig& cfg);

// Deterministic in (cfg.seed, index); labels match the clean geometry
// exactly (noise only perturbs pixel values).
SamplePair synth_scene(const SynthConfig& cfg, int64_t index);

// Writes <root>/{vis,ir,labels}/<index>.png for count scenes plus a
// manifest.json. Refuses a non-empty root unless force is set.
void write_synth_dataset(const SynthConfig& cfg, int64_t count, const std::string& root,
                         bool force);

}  // namespace vifuse
