#include "ctvit/optimizer.hpp"

#include <cmath>

#include "ctvit/kernels.hpp"

namespace ctvit {

OptimizerKind optimizer_kind_from_string(const std::string& s) {
    if (s == "sgd") return OptimizerKind::Sgd;
    if (s == "adam") return OptimizerKind::Adam;
    throw ConfigError("unknown optimizer kind: " + s);
}

std::string to_string(OptimizerKind kind) {
    return kind == OptimizerKind::Sgd ? "sgd" : "adam";
}

void Optimizer::add_param(const Parameter& p) {
    if (m_.count(p.name)) throw ConfigError("parameter registered twice: " + p.name);
    params_.push_back(p);
    if (kind_ == OptimizerKind::Adam) {
        m_[p.name].assign(p.tensor.numel(), 0.0);
        v_[p.name].assign(p.tensor.numel(), 0.0);
    } else {
        m_[p.name];  // presence marks registration
    }
}

void Optimizer::add_params(const std::vector<Parameter>& ps) {
    for (const Parameter& p : ps) add_param(p);
}

void Optimizer::step() {
    for (const Parameter& p : params_) {
        if (!p.tensor.has_grad())
            throw ContractError("optimizer step: no gradient for parameter " + p.name);
    }
    ++step_count_;
    const auto& kt = kernels::active();
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step_count_));
    for (Parameter& p : params_) {
        const int64_t n = p.tensor.numel();
        const double* g = p.tensor.grad().data();
        double* values = p.tensor.mutable_data().data();
        if (kind_ == OptimizerKind::Sgd) {
            kt.axpy(-lr_, g, values, n);
        } else {
            kt.adam_update(values, m_[p.name].data(), v_[p.name].data(), g, n, lr_,
                           kBeta1, kBeta2, kEps, bc1, bc2);
        }
        round_to_f32(p.tensor.mutable_data());
    }
}

void Optimizer::zero_grad() {
    for (Parameter& p : params_) p.tensor.zero_grad();
}

}  // namespace ctvit
