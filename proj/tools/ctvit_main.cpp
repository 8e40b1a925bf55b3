// Command-line front end: training, evaluation, complexity accounting,
// toy-data generation and the ablation variants.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "ctvit/checkpoint.hpp"
#include "ctvit/config_file.hpp"
#include "ctvit/counting.hpp"
#include "ctvit/data.hpp"
#include "ctvit/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ctvit;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

std::string iso_now() {
    const std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

void apply_variant(ModelConfig& config, const std::string& variant) {
    if (variant == "full" || variant.empty()) return;
    if (variant == "dot-product-last") {
        config.fusion_variant_last = FusionVariant::DotProduct;
        return;
    }
    if (variant == "phase1-only") {
        config.phase2_enabled = false;
        return;
    }
    throw ConfigError("unknown variant: " + variant +
                      " (want full, dot-product-last or phase1-only)");
}

struct TrainArgs {
    std::string config_path;
    std::string data_manifest;
    bool use_toy = false;
    int64_t toy_n = 700;
    std::string stage = "both";
    int64_t seed = -1;  // -1: keep the config's seed
    std::string out_dir = "run";
    std::string resume;
    std::string variant;  // ablate only
};

void add_train_flags(CLI::App* cmd, TrainArgs& args) {
    cmd->add_option("--config", args.config_path, "run configuration file")->required();
    cmd->add_option("--data", args.data_manifest, "training manifest (tsv)");
    cmd->add_flag("--toy", args.use_toy, "train on the built-in toy dataset");
    cmd->add_option("--toy-n", args.toy_n, "toy dataset size (default 700)");
    cmd->add_option("--stage", args.stage, "1, 2 or both (default both)")
        ->check(CLI::IsMember({"1", "2", "both"}));
    cmd->add_option("--seed", args.seed, "override the config seed");
    cmd->add_option("--out", args.out_dir, "output directory (default ./run)");
    cmd->add_option("--resume", args.resume, "checkpoint to start from");
}

std::vector<LabeledSample> gather_data(const TrainArgs& args, const RunConfig& run,
                                       int64_t toy_n) {
    if (args.use_toy && !args.data_manifest.empty())
        throw ConfigError("--toy and --data are mutually exclusive");
    if (!args.use_toy && args.data_manifest.empty())
        throw ConfigError("either --data <manifest> or --toy is required");
    if (args.use_toy)
        return generate_toy_dataset(toy_n, run.model.image_side, run.train.seed,
                                    run.train.norm_mean, run.train.norm_std);
    return load_dataset(args.data_manifest, run.model.image_side, run.train.norm_mean,
                        run.train.norm_std, run.model.num_expr_classes,
                        run.model.num_mask_classes);
}

int run_train(const TrainArgs& args) {
    const std::string started = iso_now();
    RunConfig run = load_run_config(args.config_path);
    if (args.seed >= 0) {
        run.model.seed = static_cast<uint64_t>(args.seed);
        run.train.seed = static_cast<uint64_t>(args.seed);
    }
    apply_variant(run.model, args.variant);

    std::vector<LabeledSample> data = gather_data(args, run, args.toy_n);

    CrossTaskModel model(run.model);
    if (!args.resume.empty()) load_checkpoint(args.resume, model.params());

    MetricLog log;
    if (args.stage == "1" || args.stage == "both") {
        MetricLog l = stage1_train(model, data, run.train);
        log.rows.insert(log.rows.end(), l.rows.begin(), l.rows.end());
    }
    if (args.stage == "2" || args.stage == "both") {
        MetricLog l = stage2_train(model, data, run.train);
        log.rows.insert(log.rows.end(), l.rows.begin(), l.rows.end());
    }

    fs::create_directories(args.out_dir);
    const std::string ckpt_path = (fs::path(args.out_dir) / "model.ckpt").string();
    const std::string csv_path = (fs::path(args.out_dir) / "metrics.csv").string();
    save_checkpoint(ckpt_path, model.params());
    write_metric_csv(csv_path, log);

    json manifest;
    manifest["config"] = serialize_run_config(run);
    manifest["seed"] = run.train.seed;
    manifest["stage"] = args.stage;
    manifest["variant"] = args.variant.empty() ? "full" : args.variant;
    manifest["started"] = started;
    manifest["finished"] = iso_now();
    manifest["checkpoint"] = ckpt_path;
    manifest["checkpoint_sha256"] = file_sha256(ckpt_path);
    manifest["metrics_csv"] = csv_path;
    std::ofstream mf(fs::path(args.out_dir) / "run_manifest.json");
    mf << manifest.dump(2) << '\n';

    if (!log.rows.empty()) {
        const EpochRow& last = log.rows.back();
        std::printf("final: stage %d epoch %lld loss %.6f expr_acc %.4f mask_acc %.4f\n",
                    last.stage, static_cast<long long>(last.epoch), last.train_loss,
                    last.expr_acc, last.mask_acc);
    }
    std::printf("checkpoint: %s\n", ckpt_path.c_str());
    return kExitOk;
}

void print_confusion(const std::vector<std::vector<int64_t>>& m, const char* title) {
    std::printf("%s\n", title);
    for (const auto& row : m) {
        std::printf("  ");
        for (int64_t v : row) std::printf("%6lld", static_cast<long long>(v));
        std::printf("\n");
    }
}

struct EvalArgs {
    std::string config_path, ckpt_path, data_manifest;
    bool use_toy = false;
    int64_t toy_n = 280;
    int64_t seed = -1;
    bool as_json = false;
    std::string variant;
};

int run_eval(const EvalArgs& args) {
    RunConfig run = load_run_config(args.config_path);
    if (args.seed >= 0) {
        run.model.seed = static_cast<uint64_t>(args.seed);
        run.train.seed = static_cast<uint64_t>(args.seed);
    }
    apply_variant(run.model, args.variant);
    CrossTaskModel model(run.model);
    load_checkpoint(args.ckpt_path, model.params());

    std::vector<LabeledSample> data;
    if (args.use_toy) {
        data = generate_toy_dataset(args.toy_n, run.model.image_side, run.train.seed,
                                    run.train.norm_mean, run.train.norm_std);
    } else {
        if (args.data_manifest.empty())
            throw ConfigError("either --data <manifest> or --toy is required");
        data = load_dataset(args.data_manifest, run.model.image_side,
                            run.train.norm_mean, run.train.norm_std,
                            run.model.num_expr_classes, run.model.num_mask_classes);
    }

    EvalResult res = evaluate(model, data);
    if (args.as_json) {
        json out;
        out["expr_acc"] = res.expr_acc;
        out["mask_acc"] = res.mask_acc;
        out["confusion_expr"] = res.confusion_expr;
        out["confusion_mask"] = res.confusion_mask;
        out["n_samples"] = res.n_samples;
        std::printf("%s\n", out.dump(2).c_str());
    } else {
        std::printf("samples: %lld\n", static_cast<long long>(res.n_samples));
        std::printf("expr_acc: %.6f\n", res.expr_acc);
        std::printf("mask_acc: %.6f\n", res.mask_acc);
        print_confusion(res.confusion_expr, "confusion_expr (rows = true class):");
        print_confusion(res.confusion_mask, "confusion_mask (rows = true class):");
    }
    return kExitOk;
}

int run_count(const std::string& config_path, const std::string& preset,
              const std::string& variant, bool breakdown) {
    if (!preset.empty() && !config_path.empty())
        throw ConfigError("--config and --preset are mutually exclusive");
    if (preset.empty() && config_path.empty())
        throw ConfigError("one of --config or --preset is required");
    ModelConfig config = preset.empty() ? load_run_config(config_path).model
                                        : config_from_preset(preset);
    apply_variant(config, variant);

    ModelCost cost = count_model(config);
    std::printf("params %lld  (%.1fM)\n", static_cast<long long>(cost.total_params()),
                cost.total_params() / 1e6);
    std::printf("flops  %lld  (%.2fG)\n", static_cast<long long>(cost.total_flops()),
                cost.total_flops() / 1e9);
    if (breakdown) {
        std::printf("%-18s %14s %16s\n", "module", "params", "flops");
        for (const CountRow& row : cost.rows)
            std::printf("%-18s %14lld %16lld\n", row.module.c_str(),
                        static_cast<long long>(row.params),
                        static_cast<long long>(row.flops));
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cross-task multi-branch vision transformer"};
    app.require_subcommand(1);

    TrainArgs train_args;
    CLI::App* train_cmd = app.add_subcommand("train", "two-stage training");
    add_train_flags(train_cmd, train_args);

    EvalArgs eval_args;
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    eval_cmd->add_option("--config", eval_args.config_path)->required();
    eval_cmd->add_option("--ckpt", eval_args.ckpt_path)->required();
    eval_cmd->add_option("--data", eval_args.data_manifest);
    eval_cmd->add_flag("--toy", eval_args.use_toy);
    eval_cmd->add_option("--toy-n", eval_args.toy_n);
    eval_cmd->add_option("--seed", eval_args.seed);
    eval_cmd->add_flag("--json", eval_args.as_json);
    eval_cmd->add_option("--variant", eval_args.variant)
        ->check(CLI::IsMember({"full", "dot-product-last", "phase1-only"}));

    std::string count_config, count_preset, count_variant;
    bool count_breakdown = false;
    CLI::App* count_cmd = app.add_subcommand("count", "parameter and FLOP accounting");
    count_cmd->add_option("--config", count_config);
    count_cmd->add_option("--preset", count_preset)
        ->check(CLI::IsMember({"vit-b16", "crossvit-b", "proposed", "tiny", "gradcheck"}));
    count_cmd->add_option("--variant", count_variant)
        ->check(CLI::IsMember({"full", "dot-product-last", "phase1-only"}));
    count_cmd->add_flag("--breakdown", count_breakdown);

    int64_t gen_n = 700, gen_side = 32, gen_seed = 0;
    std::string gen_out;
    CLI::App* gen_cmd = app.add_subcommand("gen-data", "write a toy dataset");
    gen_cmd->add_option("--n", gen_n);
    gen_cmd->add_option("--side", gen_side);
    gen_cmd->add_option("--seed", gen_seed);
    gen_cmd->add_option("--out", gen_out)->required();

    TrainArgs ablate_args;
    CLI::App* ablate_cmd = app.add_subcommand("ablate", "train a network variant");
    add_train_flags(ablate_cmd, ablate_args);
    ablate_cmd->add_option("--variant", ablate_args.variant,
                           "full, dot-product-last or phase1-only")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << std::endl;
        return kExitConfig;
    }

    try {
        if (*train_cmd) return run_train(train_args);
        if (*eval_cmd) return run_eval(eval_args);
        if (*count_cmd)
            return run_count(count_config, count_preset, count_variant, count_breakdown);
        if (*gen_cmd) {
            const std::string manifest =
                write_toy_dataset(gen_n, gen_side, static_cast<uint64_t>(gen_seed), gen_out);
            std::printf("manifest: %s\n", manifest.c_str());
            return kExitOk;
        }
        if (*ablate_cmd) return run_train(ablate_args);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << std::endl;
        return kExitConfig;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << std::endl;
        return kExitData;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << std::endl;
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return kExitOk;
}
