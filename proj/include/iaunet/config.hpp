#pragma once

#include <string>

#include "json.hpp"

#include "iaunet/data.hpp"
#include "iaunet/model.hpp"
#include "iaunet/trainer.hpp"

namespace iaunet::config {

// Union of all module configurations, addressed by flat dotted keys
// ("model.base_channels", "loss.lambda", ...). Every key has a documented
// default; unknown keys are rejected. A config file is a flat JSON object of
// these keys, and CLI flags override individual entries.
struct RunConfig {
    ModelConfig model;
    train::TrainConfig train;
    data::SynthConfig synth;
    double eval_threshold = 0.5;
    std::string dtype = "float32";  // float32 | float64

    void apply_file(const std::string& path);
    void apply_json(const nlohmann::json& flat);
    void apply_kv(const std::string& key, const std::string& value);
    nlohmann::json to_flat_json() const;

    void validate() const;

    // JSON-schema document for the flat config format.
    static nlohmann::json schema();
};

}  // namespace iaunet::config
