#pragma once

#include <string>

#include "ctvit/model.hpp"
#include "ctvit/train.hpp"

namespace ctvit {

// One flat `key = value` file (UTF-8, '#' comments) carrying both the model
// and the training configuration; the single `seed` key feeds both. Unknown
// keys are an error.
struct RunConfig {
    ModelConfig model;
    TrainingConfig train;
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

// Emits every key; parse(serialize(c)) reproduces c.
std::string serialize_run_config(const RunConfig& config);
void save_run_config(const std::string& path, const RunConfig& config);

}  // namespace ctvit
