#include "ctvit/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ctvit/rng.hpp"

namespace ctvit {

void TrainingConfig::validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs_stage1 < 0 || epochs_stage2 < 0)
        throw ConfigError("epoch counts must be >= 0");
    if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
    if (lambda_expr < 0 || lambda_mask < 0 || lambda_shared < 0)
        throw ConfigError("loss weights must be >= 0");
    if (lambda_expr + lambda_mask <= 0)
        throw ConfigError("lambda_expr + lambda_mask must be > 0");
    for (double s : norm_std)
        if (s <= 0) throw ConfigError("normalization std must be > 0");
}

Tensor cross_entropy(const Tensor& logits, int64_t label) {
    if (logits.rank() != 1)
        throw ShapeError("cross_entropy expects a logits vector, got " +
                         shape_str(logits.shape()));
    if (label < 0 || label >= logits.numel())
        throw ContractError("cross_entropy: label " + std::to_string(label) +
                            " out of range for " + std::to_string(logits.numel()) +
                            " classes");
    const int64_t n = logits.numel();
    const double* x = logits.data().data();
    double mx = x[0];
    for (int64_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
    double denom = 0.0;
    for (int64_t i = 0; i < n; ++i) denom += std::exp(x[i] - mx);
    const double lse = mx + std::log(denom);
    const double loss = lse - x[label];

    auto node = std::make_shared<TensorNode>();
    node->shape = {};
    node->data = std::make_shared<std::vector<double>>(1, loss);
    node->requires_grad = logits.requires_grad();
    if (node->requires_grad) {
        node->parents = {logits};
        node->backward_fn = [label, mx, denom](TensorNode& self) {
            Tensor& p = self.parents[0];
            p.node()->ensure_grad();
            const double g = self.grad[0];
            const double* xv = p.data().data();
            double* pg = p.node()->grad.data();
            for (int64_t i = 0; i < p.numel(); ++i) {
                const double softmax_i = std::exp(xv[i] - mx) / denom;
                pg[i] += g * (softmax_i - (i == label ? 1.0 : 0.0));
            }
        };
    }
    return Tensor(node);
}

std::string metric_csv(const MetricLog& log) {
    std::ostringstream os;
    os << "stage,epoch,train_loss,expr_acc,mask_acc,wall_time_s\n";
    os.precision(17);
    for (const EpochRow& r : log.rows) {
        os << r.stage << ',' << r.epoch << ',' << r.train_loss << ',' << r.expr_acc
           << ',' << r.mask_acc << ',' << r.wall_time_s << '\n';
    }
    return os.str();
}

void write_metric_csv(const std::string& path, const MetricLog& log) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write metric csv: " + path);
    out << metric_csv(log);
}

EvalResult evaluate(const CrossTaskModel& model,
                    const std::vector<LabeledSample>& data) {
    if (data.empty()) throw DataError("evaluate: empty dataset");
    const int64_t ke = model.config().num_expr_classes;
    const int64_t km = model.config().num_mask_classes;
    EvalResult res;
    res.confusion_expr.assign(ke, std::vector<int64_t>(ke, 0));
    res.confusion_mask.assign(km, std::vector<int64_t>(km, 0));
    int64_t expr_hits = 0, mask_hits = 0;
    for (const LabeledSample& s : data) {
        Predictions pred = model.predict(s.image);
        const int64_t pe = argmax(pred.expr_logits);
        const int64_t pm = argmax(pred.mask_logits);
        res.confusion_expr[s.expr_label][pe] += 1;
        res.confusion_mask[s.mask_label][pm] += 1;
        expr_hits += pe == s.expr_label;
        mask_hits += pm == s.mask_label;
    }
    res.n_samples = static_cast<int64_t>(data.size());
    res.expr_acc = static_cast<double>(expr_hits) / res.n_samples;
    res.mask_acc = static_cast<double>(mask_hits) / res.n_samples;
    return res;
}

namespace {

std::vector<size_t> shuffled_indices(size_t n, uint64_t seed, int stage,
                                     int64_t epoch) {
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed, rng_stream::kShuffleBase + 1000 * static_cast<uint64_t>(stage) +
                      static_cast<uint64_t>(epoch));
    for (size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    return idx;
}

// Shared epoch loop; the stages differ only in loss graph and trainable set.
template <typename LossFn>
MetricLog run_stage(int stage, CrossTaskModel& model,
                    const std::vector<LabeledSample>& data,
                    const TrainingConfig& cfg, int64_t epochs,
                    const std::vector<Parameter>& trainable, LossFn sample_loss) {
    cfg.validate();
    if (data.empty()) throw DataError("training requires a non-empty dataset");

    Optimizer opt(cfg.optimizer, cfg.learning_rate);
    opt.add_params(trainable);

    MetricLog log;
    for (int64_t epoch = 0; epoch < epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto order = shuffled_indices(data.size(), cfg.seed, stage, epoch);
        double loss_sum = 0.0;
        for (size_t start = 0; start < order.size();
             start += static_cast<size_t>(cfg.batch_size)) {
            const size_t end =
                std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            Tensor batch_loss;
            for (size_t i = start; i < end; ++i) {
                Tensor l = sample_loss(data[order[i]]);
                batch_loss = batch_loss.defined() ? add(batch_loss, l) : l;
            }
            batch_loss = scale(batch_loss, 1.0 / static_cast<double>(end - start));
            const double value = batch_loss.item();
            if (!std::isfinite(value))
                throw NumericError("non-finite loss at stage " + std::to_string(stage) +
                                   " epoch " + std::to_string(epoch) + " batch " +
                                   std::to_string(start / cfg.batch_size));
            loss_sum += value * static_cast<double>(end - start);
            opt.zero_grad();
            backward(batch_loss);
            opt.step();
        }
        EvalResult eval = evaluate(model, data);
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        log.rows.push_back({stage, epoch, loss_sum / static_cast<double>(data.size()),
                            eval.expr_acc, eval.mask_acc, wall});
    }
    return log;
}

}  // namespace

MetricLog stage1_train(CrossTaskModel& model, const std::vector<LabeledSample>& data,
                       const TrainingConfig& cfg) {
    return run_stage(1, model, data, cfg, cfg.epochs_stage1,
                     model.phase1_parameters(), [&](const LabeledSample& s) {
                         return cross_entropy(model.forward_shared(s.image),
                                              s.expr_label);
                     });
}

MetricLog stage2_train(CrossTaskModel& model, const std::vector<LabeledSample>& data,
                       const TrainingConfig& cfg) {
    return run_stage(2, model, data, cfg, cfg.epochs_stage2, model.params().all(),
                     [&](const LabeledSample& s) {
                         Predictions pred = model.predict(s.image);
                         Tensor loss =
                             scale(cross_entropy(pred.expr_logits, s.expr_label),
                                   cfg.lambda_expr);
                         loss = add(loss,
                                    scale(cross_entropy(pred.mask_logits, s.mask_label),
                                          cfg.lambda_mask));
                         loss = add(loss, scale(cross_entropy(pred.shared_logits,
                                                              s.expr_label),
                                                cfg.lambda_shared));
                         return loss;
                     });
}

}  // namespace ctvit
