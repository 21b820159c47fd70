#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "hcr/common.hpp"
#include "hcr/tensor.hpp"

namespace hcr {

struct LossOutput {
    double value = 0.0;
    Tensor grad;  // d(mean loss)/d(logits), same shape as the logits
};

/// Class weights proportional to inverse frequency, normalized to mean 1.
/// counts of [30, 10] give [0.5, 1.5].
inline std::vector<float> alpha_from_frequencies(const std::vector<std::int64_t>& counts) {
    if (counts.empty()) throw ConfigError("alpha_from_frequencies: empty count vector");
    double inv_sum = 0.0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
        if (counts[k] <= 0)
            throw ConfigError("alpha_from_frequencies: class " + std::to_string(k) +
                              " has count " + std::to_string(counts[k]));
        inv_sum += 1.0 / static_cast<double>(counts[k]);
    }
    const double scale = static_cast<double>(counts.size()) / inv_sum;
    std::vector<float> alpha(counts.size());
    for (std::size_t k = 0; k < counts.size(); ++k)
        alpha[k] = static_cast<float>(scale / static_cast<double>(counts[k]));
    return alpha;
}

/// Alpha-balanced focal cross-entropy, mean over the batch.
///
/// Per sample with true class y: loss = -alpha[y] * (1-p)^gamma * log p,
/// where p is the softmax probability of y. Probabilities come from a
/// log-sum-exp in double; 1-p is computed as the sum of the other classes'
/// probabilities so the modulating factor keeps precision when p is near 1.
/// gamma = 0 reduces exactly to alpha-balanced cross-entropy.
inline LossOutput focal_loss(const Tensor& logits, const std::vector<int>& labels,
                             const std::vector<float>& alpha, float gamma) {
    if (logits.ndim() != 2)
        throw ShapeError("focal_loss expects rank 2 logits (batch, classes)");
    const int N = logits.dim(0), K = logits.dim(1);
    if (static_cast<int>(labels.size()) != N)
        throw ShapeError("focal_loss label count " + std::to_string(labels.size()) +
                         " does not match batch " + std::to_string(N));
    if (static_cast<int>(alpha.size()) != K)
        throw ShapeError("focal_loss alpha length " + std::to_string(alpha.size()) +
                         " does not match class count " + std::to_string(K));
    if (gamma < 0.0f) throw ConfigError("focal_loss gamma must be >= 0");

    LossOutput out;
    out.grad = Tensor({N, K});
    std::vector<double> p(static_cast<std::size_t>(K));
    double total = 0.0;
    const double g = gamma;
    for (int n = 0; n < N; ++n) {
        const int y = labels[n];
        if (y < 0 || y >= K)
            throw ShapeError("focal_loss label " + std::to_string(y) +
                             " out of range for " + std::to_string(K) + " classes");
        const float* row = logits.data() + static_cast<std::size_t>(n) * K;
        double mx = row[0];
        for (int k = 1; k < K; ++k) mx = std::max(mx, static_cast<double>(row[k]));
        double denom = 0.0;
        for (int k = 0; k < K; ++k) {
            p[static_cast<std::size_t>(k)] = std::exp(static_cast<double>(row[k]) - mx);
            denom += p[static_cast<std::size_t>(k)];
        }
        double others = 0.0;
        for (int k = 0; k < K; ++k) {
            p[static_cast<std::size_t>(k)] /= denom;
            if (k != y) others += p[static_cast<std::size_t>(k)];
        }
        const double py = p[static_cast<std::size_t>(y)];
        const double log_py = static_cast<double>(row[y]) - mx - std::log(denom);
        const double a = alpha[static_cast<std::size_t>(y)];

        double mod, factor;
        if (g == 0.0) {
            mod = 1.0;
            factor = 1.0;
        } else if (others == 0.0) {
            // perfectly confident sample: zero loss, zero gradient in the limit
            mod = 0.0;
            factor = 0.0;
        } else {
            mod = std::pow(others, g);
            factor = mod - g * py * std::pow(others, g - 1.0) * log_py;
        }
        total += -a * mod * log_py;

        float* grow = out.grad.data() + static_cast<std::size_t>(n) * K;
        const double coeff = a * factor / static_cast<double>(N);
        for (int k = 0; k < K; ++k) {
            const double delta = (k == y) ? 1.0 : 0.0;
            grow[k] = static_cast<float>(coeff * (p[static_cast<std::size_t>(k)] - delta));
        }
    }
    out.value = total / static_cast<double>(N);
    return out;
}

/// Alpha-balanced cross-entropy: -alpha[y] * log p_y, batch mean. The
/// gamma = 0 focal loss is this same function, bit for bit.
inline LossOutput balanced_ce(const Tensor& logits, const std::vector<int>& labels,
                              const std::vector<float>& alpha) {
    return focal_loss(logits, labels, alpha, 0.0f);
}

/// Loss weights for the aux heads (in brick order) plus the main head last.
/// Shallower models keep the leading aux weights; the main head always
/// counts fully.
inline std::vector<float> default_head_weights(int num_bricks) {
    static const float kAux[4] = {0.025f, 0.05f, 0.5f, 0.2f};
    if (num_bricks < 2 || num_bricks > 5)
        throw ConfigError("default head weights defined for 2..5 bricks, got " +
                          std::to_string(num_bricks));
    std::vector<float> w(kAux, kAux + (num_bricks - 1));
    w.push_back(1.0f);
    return w;
}

struct FocalLossConfig {
    float gamma = 4.0f;
    std::vector<float> alpha;         // one weight per class, all > 0
    std::vector<float> head_weights;  // aux heads in brick order, then main

    bool operator==(const FocalLossConfig&) const = default;

    void validate(int num_classes, int num_heads) const {
        if (gamma < 0.0f) throw ConfigError("gamma must be >= 0");
        if (static_cast<int>(alpha.size()) != num_classes)
            throw ConfigError("alpha length " + std::to_string(alpha.size()) +
                              " does not match num_classes " +
                              std::to_string(num_classes));
        for (float a : alpha)
            if (!(a > 0.0f)) throw ConfigError("alpha entries must be positive");
        if (static_cast<int>(head_weights.size()) != num_heads)
            throw ConfigError("head_weights length " +
                              std::to_string(head_weights.size()) +
                              " does not match head count " + std::to_string(num_heads));
        for (float w : head_weights)
            if (w < 0.0f) throw ConfigError("head weights must be >= 0");
        if (!(head_weights.back() > 0.0f))
            throw ConfigError("main head weight must be positive");
    }
};

struct LossReport {
    std::vector<double> per_head;  // unweighted, aux heads first, main last
    double total = 0.0;            // weighted sum
    int batch_size = 0;
};

struct MultiHeadLoss {
    LossReport report;
    std::vector<Tensor> aux_grads;  // already scaled by the head weights
    Tensor main_grad;
};

/// Weighted focal loss over all heads: total = sum_i w_i * focal(head_i).
/// Per-head gradients come back pre-scaled by their weights, ready to feed
/// the model's backward pass.
inline MultiHeadLoss multi_head_loss(const std::vector<Tensor>& aux_logits,
                                     const Tensor& main_logits,
                                     const std::vector<int>& targets,
                                     const FocalLossConfig& cfg) {
    const int num_heads = static_cast<int>(aux_logits.size()) + 1;
    cfg.validate(main_logits.dim(1), num_heads);

    MultiHeadLoss out;
    out.report.batch_size = main_logits.dim(0);
    double total = 0.0;
    for (std::size_t i = 0; i < aux_logits.size(); ++i) {
        LossOutput lo = focal_loss(aux_logits[i], targets, cfg.alpha, cfg.gamma);
        const float w = cfg.head_weights[i];
        total += static_cast<double>(w) * lo.value;
        out.report.per_head.push_back(lo.value);
        for (std::int64_t j = 0; j < lo.grad.numel(); ++j) lo.grad[j] *= w;
        out.aux_grads.push_back(std::move(lo.grad));
    }
    LossOutput main = focal_loss(main_logits, targets, cfg.alpha, cfg.gamma);
    const float wm = cfg.head_weights.back();
    total += static_cast<double>(wm) * main.value;
    out.report.per_head.push_back(main.value);
    for (std::int64_t j = 0; j < main.grad.numel(); ++j) main.grad[j] *= wm;
    out.main_grad = std::move(main.grad);
    out.report.total = total;
    return out;
}

}  // namespace hcr
