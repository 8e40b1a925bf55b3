#pragma once

#include <array>
#include <string>
#include <vector>

#include "ctvit/model.hpp"
#include "ctvit/optimizer.hpp"

namespace ctvit {

struct TrainingConfig {
    int64_t batch_size = 16;
    double learning_rate = 1e-4;
    int64_t epochs_stage1 = 8;
    int64_t epochs_stage2 = 2;
    OptimizerKind optimizer = OptimizerKind::Adam;
    double lambda_expr = 1.0;
    double lambda_mask = 1.0;
    double lambda_shared = 1.0;
    uint64_t seed = 0;
    std::array<double, 3> norm_mean{0.5, 0.5, 0.5};
    std::array<double, 3> norm_std{0.5, 0.5, 0.5};
    std::string train_manifest;
    std::string eval_manifest;

    void validate() const;
};

struct LabeledSample {
    Tensor image;  // (3, S, S), normalized
    int64_t expr_label = 0;
    int64_t mask_label = 0;
};

// -log softmax(logits)[label], computed with log-sum-exp.
Tensor cross_entropy(const Tensor& logits, int64_t label);

struct EpochRow {
    int stage = 0;
    int64_t epoch = 0;
    double train_loss = 0.0;
    double expr_acc = 0.0;
    double mask_acc = 0.0;
    double wall_time_s = 0.0;
};

struct MetricLog {
    std::vector<EpochRow> rows;
};

std::string metric_csv(const MetricLog& log);
void write_metric_csv(const std::string& path, const MetricLog& log);

struct EvalResult {
    double expr_acc = 0.0;
    double mask_acc = 0.0;
    std::vector<std::vector<int64_t>> confusion_expr;  // [true][pred]
    std::vector<std::vector<int64_t>> confusion_mask;
    int64_t n_samples = 0;
};

EvalResult evaluate(const CrossTaskModel& model,
                    const std::vector<LabeledSample>& data);

// Stage 1: minimize CE(shared_logits, expr_label); only phase-1 parameters and
// the shared head move. Stage 2: jointly minimize the weighted three-task loss
// over all parameters. Both shuffle once per epoch from (seed, stage, epoch)
// and abort with NumericError on a non-finite loss.
MetricLog stage1_train(CrossTaskModel& model, const std::vector<LabeledSample>& data,
                       const TrainingConfig& cfg);
MetricLog stage2_train(CrossTaskModel& model, const std::vector<LabeledSample>& data,
                       const TrainingConfig& cfg);

}  // namespace ctvit
