#include "vifuse/config.hpp"

#include <set>

namespace vifuse {
namespace {

// Assign known keys onto defaults, reject anything unrecognized.
class Fields {
public:
    Fields(const nlohmann::json& j, const char* what) : j_(j), what_(what) {
        check(j.is_object(), std::string(what) + " config must be a JSON object");
    }
    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (j_.contains(key)) {
            try {
                out = j_.at(key).get<T>();
            } catch (const nlohmann::json::exception& e) {
                fail(std::string(what_) + "." + key + ": " + e.what());
            }
        }
    }
    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            (void)value;
            if (!seen_.count(key))
                fail(std::string(what_) + ": unknown config key \"" + key + "\"");
        }
    }

private:
    const nlohmann::json& j_;
    const char* what_;
    std::set<std::string> seen_;
};

}  // namespace

void to_json(nlohmann::json& j, const BackboneConfig& c) {
    j = {{"base", c.base}, {"c_feat", c.c_feat}};
}

void from_json(const nlohmann::json& j, BackboneConfig& c) {
    Fields f(j, "backbone");
    f.get("base", c.base);
    f.get("c_feat", c.c_feat);
    f.finish();
}

void to_json(nlohmann::json& j, const MthConfig& c) {
    j = {{"embed_dim", c.embed_dim},
         {"heads", c.heads},
         {"n_classes", c.n_classes},
         {"hia_f_enabled", c.hia_f_enabled},
         {"channel_mode", c.channel_mode == ChannelMode::kOne ? "one" : "three"},
         {"hia_ch_kv", c.hia_ch_kv},
         {"token_stride", c.token_stride}};
}

void from_json(const nlohmann::json& j, MthConfig& c) {
    Fields f(j, "mth");
    f.get("embed_dim", c.embed_dim);
    f.get("heads", c.heads);
    f.get("n_classes", c.n_classes);
    f.get("hia_f_enabled", c.hia_f_enabled);
    std::string mode = c.channel_mode == ChannelMode::kOne ? "one" : "three";
    f.get("channel_mode", mode);
    if (mode == "one")
        c.channel_mode = ChannelMode::kOne;
    else if (mode == "three")
        c.channel_mode = ChannelMode::kThree;
    else
        fail("mth.channel_mode must be \"one\" or \"three\", got \"" + mode + "\"");
    f.get("hia_ch_kv", c.hia_ch_kv);
    f.get("token_stride", c.token_stride);
    f.finish();
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = {{"backbone", c.backbone}, {"mth", c.mth}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    Fields f(j, "model");
    f.get("backbone", c.backbone);
    f.get("mth", c.mth);
    f.finish();
}

void to_json(nlohmann::json& j, const LossWeights& c) {
    j = {{"beta1", c.beta1},   {"beta2", c.beta2},   {"lambda1", c.lambda1},
         {"lambda2", c.lambda2}, {"lambda3", c.lambda3}, {"lambda4", c.lambda4},
         {"w_ir", c.w_ir},     {"w_vis", c.w_vis}};
}

void from_json(const nlohmann::json& j, LossWeights& c) {
    Fields f(j, "weights");
    f.get("beta1", c.beta1);
    f.get("beta2", c.beta2);
    f.get("lambda1", c.lambda1);
    f.get("lambda2", c.lambda2);
    f.get("lambda3", c.lambda3);
    f.get("lambda4", c.lambda4);
    f.get("w_ir", c.w_ir);
    f.get("w_vis", c.w_vis);
    f.finish();
}

void to_json(nlohmann::json& j, const SsimParams& c) {
    j = {{"window", c.window}, {"sigma", c.sigma}, {"c1", c.c1}, {"c2", c.c2}};
}

void from_json(const nlohmann::json& j, SsimParams& c) {
    Fields f(j, "ssim");
    f.get("window", c.window);
    f.get("sigma", c.sigma);
    f.get("c1", c.c1);
    f.get("c2", c.c2);
    f.finish();
}

void to_json(nlohmann::json& j, const AdamConfig& c) {
    j = {{"lr", c.lr}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps}};
}

void from_json(const nlohmann::json& j, AdamConfig& c) {
    Fields f(j, "adam");
    f.get("lr", c.lr);
    f.get("beta1", c.beta1);
    f.get("beta2", c.beta2);
    f.get("eps", c.eps);
    f.finish();
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"epochs", c.epochs},
         {"patience", c.patience},
         {"batch_size", c.batch_size},
         {"crop", c.crop},
         {"split_ratio", c.split_ratio},
         {"seed", c.seed},
         {"adam", c.adam},
         {"weights", c.weights},
         {"ssim", c.ssim},
         {"log_grad_projection", c.log_grad_projection}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    Fields f(j, "train");
    f.get("epochs", c.epochs);
    f.get("patience", c.patience);
    f.get("batch_size", c.batch_size);
    f.get("crop", c.crop);
    f.get("split_ratio", c.split_ratio);
    f.get("seed", c.seed);
    f.get("adam", c.adam);
    f.get("weights", c.weights);
    f.get("ssim", c.ssim);
    f.get("log_grad_projection", c.log_grad_projection);
    f.finish();
}

void to_json(nlohmann::json& j, const SynthConfig& c) {
    j = {{"size", c.size},
         {"n_classes", c.n_classes},
         {"min_objects", c.min_objects},
         {"max_objects", c.max_objects},
         {"noise_sigma", c.noise_sigma},
         {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SynthConfig& c) {
    Fields f(j, "synth");
    f.get("size", c.size);
    f.get("n_classes", c.n_classes);
    f.get("min_objects", c.min_objects);
    f.get("max_objects", c.max_objects);
    f.get("noise_sigma", c.noise_sigma);
    f.get("seed", c.seed);
    f.finish();
}

void to_json(nlohmann::json& j, const RunConfig& c) {
    j = {{"model", c.model}, {"train", c.train}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
    Fields f(j, "run");
    f.get("model", c.model);
    f.get("train", c.train);
    f.finish();
}

std::string dump_config(const RunConfig& c) {
    return nlohmann::json(c).dump(2) + "\n";
}

RunConfig parse_config(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        fail(std::string("config is not valid JSON: ") + e.what());
    }
    return j.get<RunConfig>();
}

}  // namespace vifuse
