#pragma once

#include <string>
#include <vector>

#include "vifuse/params.hpp"

namespace vifuse {

// Binary checkpoint: magic, format version, a JSON snapshot of the resolved
// run configuration, a parameter table (path/group/shape), the float32
// payload in registration order, and a trailing FNV-1a checksum over
// everything before it.
inline constexpr char kCheckpointMagic[8] = {'V', 'I', 'F', 'C', 'K', 'P', 'T', '1'};
inline constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
    std::string path;
    std::string group;
    Shape shape;
    std::vector<float> values;
};

struct Checkpoint {
    std::string config_json;
    std::vector<CheckpointEntry> entries;
};

void save_checkpoint(const std::string& path, const ParamStore<float>& params,
                     const std::string& config_json);

// Verifies magic, version and checksum; corrupt or truncated files fail.
Checkpoint load_checkpoint(const std::string& path);

// Copies entry values into matching parameters. Every store parameter must
// be present with the same shape; the first mismatch is named in the error.
void apply_checkpoint(const Checkpoint& ck, ParamStore<float>& params);

}  // namespace vifuse
