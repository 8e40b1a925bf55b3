#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctvit/rng.hpp"
#include "ctvit/tensor.hpp"

namespace ctvit {

// Checkpoint values are float32; parameters live in float64 buffers but are
// kept on float32-representable values (rounded after init and after every
// optimizer step) so save/load/predict round-trips are bit-exact.
inline void round_to_f32(std::vector<double>& values) {
    for (double& v : values) v = static_cast<double>(static_cast<float>(v));
}

struct Parameter {
    std::string name;  // dot-separated path, unique within a model
    Tensor tensor;
};

enum class Init { Zero, One, TruncNormal };

// Owns every learnable tensor of a model, in registration order. Names are
// checkpoint identity; duplicate registration is a bug.
class ParamStore {
public:
    explicit ParamStore(uint64_t seed) : rng_(seed, rng_stream::kParamInit) {}

    Tensor create(const std::string& name, Shape shape, Init init,
                  double sigma = 0.02) {
        if (index_.count(name))
            throw ConfigError("duplicate parameter name: " + name);
        Tensor t = Tensor::zeros(std::move(shape), true);
        if (init == Init::TruncNormal) {
            for (double& v : t.mutable_data()) v = rng_.trunc_normal(sigma);
        } else if (init == Init::One) {
            for (double& v : t.mutable_data()) v = 1.0;
        }
        round_to_f32(t.mutable_data());
        index_[name] = params_.size();
        params_.push_back({name, t});
        return t;
    }

    const std::vector<Parameter>& all() const { return params_; }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    const Parameter& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
        return params_[it->second];
    }

    int64_t total_scalars() const {
        int64_t n = 0;
        for (const Parameter& p : params_) n += p.tensor.numel();
        return n;
    }

    void zero_grad() {
        for (Parameter& p : params_) p.tensor.zero_grad();
    }

private:
    Rng rng_;
    std::vector<Parameter> params_;
    std::unordered_map<std::string, size_t> index_;
};

}  // namespace ctvit
