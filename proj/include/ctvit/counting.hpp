#pragma once

#include <string>
#include <vector>

#include "ctvit/model.hpp"

namespace ctvit {

struct CountRow {
    std::string module;
    int64_t params = 0;
    int64_t flops = 0;
};

// Closed-form parameter and FLOP totals derived from the config alone.
// Conventions: one multiply-accumulate is one FLOP; linear layers and the
// QK^T / alpha-V attention products are counted; softmax, norms, activations
// and residual adds are not. Parameter totals are exact (they must equal an
// instantiated model's scalar count); FLOP totals assume one forward pass on
// one image.
struct ModelCost {
    std::vector<CountRow> rows;

    int64_t total_params() const;
    int64_t total_flops() const;
};

ModelCost count_model(const ModelConfig& config);

}  // namespace ctvit
