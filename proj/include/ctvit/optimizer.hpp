#pragma once

#include <map>
#include <string>
#include <vector>

#include "ctvit/params.hpp"

namespace ctvit {

enum class OptimizerKind { Sgd, Adam };

OptimizerKind optimizer_kind_from_string(const std::string& s);
std::string to_string(OptimizerKind kind);

// Plain SGD or bias-corrected Adam over an explicit set of registered
// parameters; anything not registered is frozen. Adam moments are keyed by
// parameter name and exist only for registered parameters.
class Optimizer {
public:
    Optimizer(OptimizerKind kind, double learning_rate)
        : kind_(kind), lr_(learning_rate) {}

    void add_param(const Parameter& p);
    void add_params(const std::vector<Parameter>& ps);

    // One update over all registered parameters. Every registered parameter
    // must have a gradient from a prior backward().
    void step();

    void zero_grad();

    int64_t step_count() const { return step_count_; }
    size_t param_count() const { return params_.size(); }

    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;

private:
    OptimizerKind kind_;
    double lr_;
    int64_t step_count_ = 0;
    std::vector<Parameter> params_;
    std::map<std::string, std::vector<double>> m_;
    std::map<std::string, std::vector<double>> v_;
};

}  // namespace ctvit
