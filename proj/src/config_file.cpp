#include "ctvit/config_file.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace ctvit {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

class KvReader {
public:
    explicit KvReader(const std::string& text) {
        std::istringstream in(text);
        std::string line;
        int64_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const size_t hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            const size_t eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": expected key = value");
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty())
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": empty key");
            if (kv_.count(key))
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": duplicate key " + key);
            kv_[key] = value;
        }
    }

    bool has(const std::string& key) const { return kv_.count(key) != 0; }

    std::string take(const std::string& key, const std::string& fallback) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        used_.insert(key);
        return it->second;
    }

    int64_t take_int(const std::string& key, int64_t fallback) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        used_.insert(key);
        try {
            size_t pos = 0;
            const int64_t v = std::stoll(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("trailing");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + ": not an integer: " + it->second);
        }
    }

    double take_double(const std::string& key, double fallback) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        used_.insert(key);
        try {
            size_t pos = 0;
            const double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("trailing");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + ": not a number: " + it->second);
        }
    }

    bool take_bool(const std::string& key, bool fallback) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        used_.insert(key);
        if (it->second == "true") return true;
        if (it->second == "false") return false;
        throw ConfigError("config key " + key + ": expected true/false, got " +
                          it->second);
    }

    std::array<double, 3> take_triple(const std::string& key,
                                      std::array<double, 3> fallback) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        used_.insert(key);
        std::array<double, 3> out{};
        std::istringstream ss(it->second);
        std::string part;
        int i = 0;
        while (std::getline(ss, part, ',')) {
            if (i >= 3) break;
            try {
                out[i++] = std::stod(trim(part));
            } catch (const std::exception&) {
                throw ConfigError("config key " + key + ": bad triple: " + it->second);
            }
        }
        if (i != 3)
            throw ConfigError("config key " + key +
                              ": expected three comma-separated values");
        return out;
    }

    void reject_unknown() const {
        for (const auto& [key, value] : kv_)
            if (!used_.count(key)) throw ConfigError("unknown config key: " + key);
    }

private:
    std::map<std::string, std::string> kv_;
    std::set<std::string> used_;
};

}  // namespace

RunConfig parse_run_config(const std::string& text) {
    KvReader kv(text);
    RunConfig c;

    c.model.arch = arch_from_string(kv.take("arch", to_string(c.model.arch)));
    c.model.image_side = kv.take_int("image_side", c.model.image_side);
    c.model.patch_large = kv.take_int("patch_large", c.model.patch_large);
    c.model.patch_small = kv.take_int("patch_small", c.model.patch_small);
    c.model.sbranch_input_side =
        kv.take_int("sbranch_input_side", c.model.sbranch_input_side);
    c.model.dim_large = kv.take_int("dim_large", c.model.dim_large);
    c.model.dim_small = kv.take_int("dim_small", c.model.dim_small);
    c.model.depth_large = kv.take_int("depth_large", c.model.depth_large);
    c.model.depth_small = kv.take_int("depth_small", c.model.depth_small);
    c.model.heads_large = kv.take_int("heads_large", c.model.heads_large);
    c.model.heads_small = kv.take_int("heads_small", c.model.heads_small);
    c.model.fusion_iters_phase1 =
        kv.take_int("fusion_iters_phase1", c.model.fusion_iters_phase1);
    c.model.depth_expr = kv.take_int("depth_expr", c.model.depth_expr);
    c.model.depth_mask = kv.take_int("depth_mask", c.model.depth_mask);
    c.model.fusion_iters_phase2 =
        kv.take_int("fusion_iters_phase2", c.model.fusion_iters_phase2);
    c.model.mlp_ratio = kv.take_int("mlp_ratio", c.model.mlp_ratio);
    c.model.num_expr_classes = kv.take_int("num_expr_classes", c.model.num_expr_classes);
    c.model.num_mask_classes = kv.take_int("num_mask_classes", c.model.num_mask_classes);
    c.model.num_classes = kv.take_int("num_classes", c.model.num_classes);
    c.model.fusion_variant_last = fusion_variant_from_string(
        kv.take("fusion_variant_last", to_string(c.model.fusion_variant_last)));
    c.model.phase2_enabled = kv.take_bool("phase2_enabled", c.model.phase2_enabled);

    const int64_t seed = kv.take_int("seed", static_cast<int64_t>(c.model.seed));
    c.model.seed = static_cast<uint64_t>(seed);
    c.train.seed = static_cast<uint64_t>(seed);

    c.train.batch_size = kv.take_int("batch_size", c.train.batch_size);
    c.train.learning_rate = kv.take_double("learning_rate", c.train.learning_rate);
    c.train.epochs_stage1 = kv.take_int("epochs_stage1", c.train.epochs_stage1);
    c.train.epochs_stage2 = kv.take_int("epochs_stage2", c.train.epochs_stage2);
    c.train.optimizer =
        optimizer_kind_from_string(kv.take("optimizer", to_string(c.train.optimizer)));
    c.train.lambda_expr = kv.take_double("lambda_expr", c.train.lambda_expr);
    c.train.lambda_mask = kv.take_double("lambda_mask", c.train.lambda_mask);
    c.train.lambda_shared = kv.take_double("lambda_shared", c.train.lambda_shared);
    c.train.norm_mean = kv.take_triple("norm_mean", c.train.norm_mean);
    c.train.norm_std = kv.take_triple("norm_std", c.train.norm_std);
    c.train.train_manifest = kv.take("train_manifest", c.train.train_manifest);
    c.train.eval_manifest = kv.take("eval_manifest", c.train.eval_manifest);

    kv.reject_unknown();
    c.model.validate();
    c.train.validate();
    return c;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

std::string serialize_run_config(const RunConfig& c) {
    std::ostringstream os;
    os.precision(17);
    os << "# model\n";
    os << "arch = " << to_string(c.model.arch) << '\n';
    os << "image_side = " << c.model.image_side << '\n';
    os << "patch_large = " << c.model.patch_large << '\n';
    os << "patch_small = " << c.model.patch_small << '\n';
    os << "sbranch_input_side = " << c.model.sbranch_input_side << '\n';
    os << "dim_large = " << c.model.dim_large << '\n';
    os << "dim_small = " << c.model.dim_small << '\n';
    os << "depth_large = " << c.model.depth_large << '\n';
    os << "depth_small = " << c.model.depth_small << '\n';
    os << "heads_large = " << c.model.heads_large << '\n';
    os << "heads_small = " << c.model.heads_small << '\n';
    os << "fusion_iters_phase1 = " << c.model.fusion_iters_phase1 << '\n';
    os << "depth_expr = " << c.model.depth_expr << '\n';
    os << "depth_mask = " << c.model.depth_mask << '\n';
    os << "fusion_iters_phase2 = " << c.model.fusion_iters_phase2 << '\n';
    os << "mlp_ratio = " << c.model.mlp_ratio << '\n';
    os << "num_expr_classes = " << c.model.num_expr_classes << '\n';
    os << "num_mask_classes = " << c.model.num_mask_classes << '\n';
    os << "num_classes = " << c.model.num_classes << '\n';
    os << "fusion_variant_last = " << to_string(c.model.fusion_variant_last) << '\n';
    os << "phase2_enabled = " << (c.model.phase2_enabled ? "true" : "false") << '\n';
    os << "seed = " << c.model.seed << '\n';
    os << "\n# training\n";
    os << "batch_size = " << c.train.batch_size << '\n';
    os << "learning_rate = " << c.train.learning_rate << '\n';
    os << "epochs_stage1 = " << c.train.epochs_stage1 << '\n';
    os << "epochs_stage2 = " << c.train.epochs_stage2 << '\n';
    os << "optimizer = " << to_string(c.train.optimizer) << '\n';
    os << "lambda_expr = " << c.train.lambda_expr << '\n';
    os << "lambda_mask = " << c.train.lambda_mask << '\n';
    os << "lambda_shared = " << c.train.lambda_shared << '\n';
    os << "norm_mean = " << c.train.norm_mean[0] << ',' << c.train.norm_mean[1] << ','
       << c.train.norm_mean[2] << '\n';
    os << "norm_std = " << c.train.norm_std[0] << ',' << c.train.norm_std[1] << ','
       << c.train.norm_std[2] << '\n';
    if (!c.train.train_manifest.empty())
        os << "train_manifest = " << c.train.train_manifest << '\n';
    if (!c.train.eval_manifest.empty())
        os << "eval_manifest = " << c.train.eval_manifest << '\n';
    return os.str();
}

void save_run_config(const std::string& path, const RunConfig& config) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write config file: " + path);
    out << serialize_run_config(config);
}

}  // namespace ctvit
