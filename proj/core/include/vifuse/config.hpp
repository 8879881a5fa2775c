#pragma once

#include <nlohmann/json.hpp>

#include "vifuse/synth.hpp"
#include "vifuse/train.hpp"

namespace vifuse {

// JSON (de)serialization for the run configuration. Missing keys keep their
// defaults, so partial config files are fine; unknown keys are rejected to
// catch typos.

struct RunConfig {
    ModelConfig model;
    TrainConfig train;
};

void to_json(nlohmann::json& j, const BackboneConfig& c);
void from_json(const nlohmann::json& j, BackboneConfig& c);
void to_json(nlohmann::json& j, const MthConfig& c);
void from_json(const nlohmann::json& j, MthConfig& c);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const LossWeights& c);
void from_json(const nlohmann::json& j, LossWeights& c);
void to_json(nlohmann::json& j, const SsimParams& c);
void from_json(const nlohmann::json& j, SsimParams& c);
void to_json(nlohmann::json& j, const AdamConfig& c);
void from_json(const nlohmann::json& j, AdamConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);
void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

std::string dump_config(const RunConfig& c);          // stable, indented
RunConfig parse_config(const std::string& json_text);  // throws Error on bad input

}  // namespace vifuse
