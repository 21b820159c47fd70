#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "hcr/dataset.hpp"
#include "hcr/loss.hpp"
#include "hcr/model.hpp"

namespace hcr {

struct TrainConfig {
    int epochs = 50;
    int batch_size = 32;
    float learning_rate = 0.01f;
    float momentum = 0.9f;
    int patience = 5;
    std::uint64_t seed = 1;
    int eval_every = 1;
    bool early_stopping = true;
    // optional success cutoffs, disabled when negative; checked on eval epochs
    float stop_at_test_accuracy = -1.0f;
    float stop_at_train_accuracy = -1.0f;

    bool operator==(const TrainConfig&) const = default;

    void validate() const {
        if (epochs < 1) throw ConfigError("epochs must be positive");
        if (batch_size < 1) throw ConfigError("batch size must be positive");
        if (!(learning_rate > 0.0f))
            throw ConfigError("learning rate must be positive");
        if (momentum < 0.0f || momentum >= 1.0f)
            throw ConfigError("momentum must be in [0, 1)");
        if (patience < 1) throw ConfigError("patience must be >= 1");
        if (eval_every < 1) throw ConfigError("eval_every must be positive");
    }
};

struct MetricsRecord {
    int epoch = 0;
    double train_loss = 0.0;
    std::vector<double> per_head;  // unweighted aux losses then main
    std::optional<double> test_top1;
    double wall_time_s = 0.0;
};

/// v <- momentum * v + g; p <- p - lr * v. The velocity vector is created
/// on first use and must then stay aligned with params.
inline void sgd_step(const std::vector<Param*>& params, float lr, float momentum,
                     std::vector<Tensor>& velocity) {
    if (velocity.empty())
        for (const Param* p : params) velocity.emplace_back(p->value.shape());
    if (velocity.size() != params.size())
        throw ShapeError("velocity count does not match params");
    for (std::size_t i = 0; i < params.size(); ++i) {
        Param& p = *params[i];
        Tensor& v = velocity[i];
        if (v.shape() != p.value.shape())
            throw ShapeError("velocity shape does not match param " + p.name);
        for (std::int64_t j = 0; j < p.numel(); ++j) {
            v[j] = momentum * v[j] + p.grad[j];
            p.value[j] -= lr * v[j];
        }
    }
}

/// True when the last `patience` entries show no improvement over the best
/// entry before them, with an absolute improvement threshold of 1e-4.
/// Never fires before patience + 1 entries exist.
inline bool early_stop(const std::vector<double>& acc_history, int patience) {
    if (patience < 1) throw ConfigError("patience must be >= 1");
    const std::size_t n = acc_history.size();
    if (n < static_cast<std::size_t>(patience) + 1) return false;
    double best_before = -1e300;
    for (std::size_t i = 0; i + patience < n; ++i)
        best_before = std::max(best_before, acc_history[i]);
    double best_recent = -1e300;
    for (std::size_t i = n - static_cast<std::size_t>(patience); i < n; ++i)
        best_recent = std::max(best_recent, acc_history[i]);
    return best_recent < best_before + 1e-4;
}

namespace detail {

inline int argmax_row(const Tensor& logits, int row) {
    const int k = logits.dim(1);
    int best = 0;
    for (int j = 1; j < k; ++j)
        if (logits.at2(row, j) > logits.at2(row, best)) best = j;
    return best;
}

}  // namespace detail

/// Fraction of samples whose eval-mode main-logit argmax equals the label.
inline double evaluate(const Model& model, const std::vector<Sample>& samples,
                       bool ink_low, int batch_size) {
    if (samples.empty()) throw ConfigError("evaluate needs a nonempty dataset");
    if (batch_size < 1) throw ConfigError("batch size must be positive");
    std::int64_t correct = 0;
    std::vector<int> indices;
    std::vector<int> labels;
    for (std::size_t start = 0; start < samples.size();
         start += static_cast<std::size_t>(batch_size)) {
        indices.clear();
        const std::size_t end =
            std::min(samples.size(), start + static_cast<std::size_t>(batch_size));
        for (std::size_t i = start; i < end; ++i)
            indices.push_back(static_cast<int>(i));
        Tensor x = make_batch(samples, indices, ink_low, &labels);
        Tensor logits = model.infer_main(x);
        for (int r = 0; r < logits.dim(0); ++r)
            correct += detail::argmax_row(logits, r) == labels[static_cast<std::size_t>(r)];
    }
    return static_cast<double>(correct) / static_cast<double>(samples.size());
}

struct TrainResult {
    std::vector<MetricsRecord> metrics;
    int epochs_run = 0;
    int best_epoch = 0;  // 0 when no evaluation happened
    double best_test_top1 = 0.0;
};

/// Seed-deterministic SGD training with per-epoch metrics and optional
/// early stopping on the test-accuracy history. The model is left holding
/// the weights of its best test-accuracy epoch (final weights when no test
/// set was given). Non-finite loss aborts with the epoch and batch index.
inline TrainResult train(Model& model, const std::vector<Sample>& train_set,
                         const std::vector<Sample>& test_set, bool ink_low,
                         const FocalLossConfig& loss_cfg, const TrainConfig& cfg) {
    cfg.validate();
    if (train_set.empty()) throw ConfigError("training set is empty");
    const ModelSpec& spec = model.spec();
    const int num_aux = spec.num_bricks - 1;
    loss_cfg.validate(spec.num_classes, num_aux + 1);
    class_counts(train_set, spec.num_classes);
    if (!test_set.empty()) class_counts(test_set, spec.num_classes);
    for (const Sample& s : train_set)
        if (s.image.width != spec.input_side || s.image.height != spec.input_side)
            throw ConfigError("training image side does not match model spec");

    const int n = static_cast<int>(train_set.size());
    Rng base(cfg.seed);
    std::vector<Tensor> velocity;
    std::vector<double> acc_history;
    std::vector<std::pair<std::string, Tensor>> best_weights;
    TrainResult result;

    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        Rng ep = base.fork(static_cast<std::uint64_t>(epoch));
        for (int i = n - 1; i > 0; --i) {
            const auto j = static_cast<int>(ep.next_below(static_cast<std::uint64_t>(i) + 1));
            std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
        }

        double loss_sum = 0.0;
        std::vector<double> head_sums(static_cast<std::size_t>(num_aux) + 1, 0.0);
        std::vector<int> batch_idx;
        std::vector<int> labels;
        int batch_index = 0;
        for (int start = 0; start < n; start += cfg.batch_size, ++batch_index) {
            batch_idx.clear();
            const int end = std::min(n, start + cfg.batch_size);
            for (int i = start; i < end; ++i)
                batch_idx.push_back(order[static_cast<std::size_t>(i)]);
            Tensor x = make_batch(train_set, batch_idx, ink_low, &labels);

            ModelTrace trace;
            HeadOutputs out = model.forward(x, Mode::kTrain, ep, &trace);
            MultiHeadLoss loss =
                multi_head_loss(out.aux_logits, out.main_logits, labels, loss_cfg);
            if (!std::isfinite(loss.report.total))
                throw TrainingError("training loss is not finite", epoch, batch_index);
            model.zero_grad();
            model.backward(trace, loss.aux_grads, loss.main_grad);
            sgd_step(model.params(), cfg.learning_rate, cfg.momentum, velocity);

            const auto bs = static_cast<double>(batch_idx.size());
            loss_sum += loss.report.total * bs;
            for (std::size_t h = 0; h < head_sums.size(); ++h)
                head_sums[h] += loss.report.per_head[h] * bs;
        }

        MetricsRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / n;
        for (double s : head_sums) rec.per_head.push_back(s / n);

        const bool eval_epoch = epoch % cfg.eval_every == 0 || epoch == cfg.epochs;
        if (!test_set.empty() && eval_epoch) {
            const double top1 = evaluate(model, test_set, ink_low, cfg.batch_size);
            rec.test_top1 = top1;
            acc_history.push_back(top1);
            if (result.best_epoch == 0 || top1 > result.best_test_top1) {
                result.best_test_top1 = top1;
                result.best_epoch = epoch;
                best_weights = model.save_weights();
            }
        }
        rec.wall_time_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count();
        result.metrics.push_back(std::move(rec));
        result.epochs_run = epoch;

        if (cfg.stop_at_test_accuracy >= 0.0f && !acc_history.empty() &&
            acc_history.back() >= cfg.stop_at_test_accuracy)
            break;
        if (cfg.stop_at_train_accuracy >= 0.0f && eval_epoch &&
            evaluate(model, train_set, ink_low, cfg.batch_size) >=
                cfg.stop_at_train_accuracy)
            break;
        if (cfg.early_stopping && early_stop(acc_history, cfg.patience)) break;
    }

    if (!best_weights.empty()) model.load_weights(best_weights);
    return result;
}

/// Fixed-schema CSV. Absent aux heads and epochs without an evaluation
/// leave their cells empty.
inline void write_metrics_csv(const std::vector<MetricsRecord>& metrics,
                              int num_aux, std::ostream& out) {
    out << "epoch,train_loss,aux1,aux2,aux3,aux4,main,test_top1,wall_time_s\n";
    char buf[64];
    const auto fmt = [&buf](double v) {
        std::snprintf(buf, sizeof buf, "%.9g", v);
        return std::string(buf);
    };
    for (const MetricsRecord& rec : metrics) {
        out << rec.epoch << "," << fmt(rec.train_loss);
        for (int a = 0; a < 4; ++a) {
            out << ",";
            if (a < num_aux) out << fmt(rec.per_head[static_cast<std::size_t>(a)]);
        }
        out << "," << fmt(rec.per_head.back());
        out << ",";
        if (rec.test_top1) out << fmt(*rec.test_top1);
        std::snprintf(buf, sizeof buf, "%.3f", rec.wall_time_s);
        out << "," << buf << "\n";
    }
}

}  // namespace hcr
