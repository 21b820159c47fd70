#include "hcr/loss.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "hcr/grad_check.hpp"
#include "hcr/rng.hpp"

namespace hcr {
namespace {

Tensor rand_tensor(const std::vector<int>& shape, Rng& rng, float lo = -2.0f,
                   float hi = 2.0f) {
    return Tensor::uniform(shape, lo, hi, rng);
}

/// Plain cross-entropy evaluated straight from the definition, in double.
double ce_ref(const Tensor& logits, const std::vector<int>& labels) {
    const int N = logits.dim(0), K = logits.dim(1);
    double total = 0.0;
    for (int n = 0; n < N; ++n) {
        double mx = logits.at2(n, 0);
        for (int k = 1; k < K; ++k) mx = std::max(mx, static_cast<double>(logits.at2(n, k)));
        double denom = 0.0;
        for (int k = 0; k < K; ++k) denom += std::exp(logits.at2(n, k) - mx);
        total += -(logits.at2(n, labels[static_cast<std::size_t>(n)]) - mx -
                   std::log(denom));
    }
    return total / N;
}

TEST(FocalLoss, PerfectPredictionNearZero) {
    Tensor logits({1, 3});
    logits[0] = 50.0f;
    const std::vector<float> alpha(3, 1.0f);
    LossOutput out = focal_loss(logits, {0}, alpha, 4.0f);
    EXPECT_LT(out.value, 1e-6);
}

TEST(FocalLoss, ScalarOracle) {
    // p_y = 0.9 exactly by construction: softmax of log-probabilities
    Tensor logits({1, 3});
    logits[0] = std::log(0.9f);
    logits[1] = std::log(0.05f);
    logits[2] = std::log(0.05f);
    const std::vector<float> alpha(3, 1.0f);
    LossOutput out = focal_loss(logits, {0}, alpha, 4.0f);
    // (1 - 0.9)^4 * (-ln 0.9)
    EXPECT_NEAR(out.value, 1.0536051565782628e-05, 1e-9);
}

TEST(FocalLoss, GammaZeroEqualsCrossEntropy) {
    Rng rng(100);
    Tensor logits = rand_tensor({5, 4}, rng);
    const std::vector<int> labels = {0, 3, 1, 2, 2};
    const std::vector<float> alpha(4, 1.0f);
    LossOutput out = focal_loss(logits, labels, alpha, 0.0f);
    EXPECT_NEAR(out.value, ce_ref(logits, labels), 1e-6);
}

TEST(FocalLoss, BalancedCeIsGammaZeroBitForBit) {
    Rng rng(101);
    Tensor logits = rand_tensor({4, 6}, rng);
    const std::vector<int> labels = {5, 0, 2, 4};
    std::vector<float> alpha;
    for (int k = 0; k < 6; ++k) alpha.push_back(0.5f + 0.2f * static_cast<float>(k));
    LossOutput a = balanced_ce(logits, labels, alpha);
    LossOutput b = focal_loss(logits, labels, alpha, 0.0f);
    EXPECT_EQ(a.value, b.value);
    for (std::int64_t i = 0; i < a.grad.numel(); ++i) ASSERT_EQ(a.grad[i], b.grad[i]);
}

TEST(BalancedCe, UniformLogitsGiveLogK) {
    Tensor logits({1, 4});
    const std::vector<float> alpha(4, 1.0f);
    LossOutput out = balanced_ce(logits, {2}, alpha);
    EXPECT_NEAR(out.value, std::log(4.0), 1e-6);
}

TEST(BalancedCe, AlphaDoublingDoublesLossExactly) {
    Rng rng(102);
    Tensor logits = rand_tensor({3, 5}, rng);
    const std::vector<int> labels = {1, 4, 0};
    std::vector<float> alpha = {0.3f, 1.2f, 0.7f, 2.0f, 0.9f};
    LossOutput base = balanced_ce(logits, labels, alpha);
    for (float& a : alpha) a *= 2.0f;
    LossOutput doubled = balanced_ce(logits, labels, alpha);
    EXPECT_EQ(doubled.value, 2.0 * base.value);
    for (std::int64_t i = 0; i < base.grad.numel(); ++i)
        ASSERT_EQ(doubled.grad[i], 2.0f * base.grad[i]);
}

TEST(FocalLoss, NeverExceedsCrossEntropyForEqualAlpha) {
    Rng rng(103);
    const std::vector<float> alpha(6, 1.0f);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor logits = rand_tensor({1, 6}, rng, -4.0f, 4.0f);
        const std::vector<int> labels = {static_cast<int>(rng.next_below(6))};
        const double focal = focal_loss(logits, labels, alpha, 2.0f).value;
        const double ce = focal_loss(logits, labels, alpha, 0.0f).value;
        EXPECT_LE(focal, ce + 1e-12);
    }
}

TEST(FocalLoss, ContinuousInGammaAtZero) {
    Rng rng(104);
    Tensor logits = rand_tensor({4, 5}, rng);
    const std::vector<int> labels = {0, 1, 2, 3};
    const std::vector<float> alpha(5, 1.0f);
    const double at_zero = focal_loss(logits, labels, alpha, 0.0f).value;
    const double near_zero = focal_loss(logits, labels, alpha, 1e-6f).value;
    EXPECT_NEAR(at_zero, near_zero, 1e-4);
}

TEST(FocalLoss, GradientMatchesFiniteDifferences) {
    for (const float gamma : {0.0f, 1.5f, 4.0f}) {
        Rng rng(105);
        Param logits{"logits", rand_tensor({3, 5}, rng)};
        const std::vector<int> labels = {2, 0, 4};
        std::vector<float> alpha;
        for (int k = 0; k < 5; ++k) alpha.push_back(0.4f + 0.3f * static_cast<float>(k));
        logits.grad = focal_loss(logits.value, labels, alpha, gamma).grad;
        auto loss = [&] { return focal_loss(logits.value, labels, alpha, gamma).value; };
        GradCheckReport rep = grad_check({&logits}, loss);
        EXPECT_LT(rep.max_rel_err, 1e-2) << "gamma " << gamma;
    }
}

TEST(FocalLoss, OutOfRangeTargetThrows) {
    Tensor logits({2, 3});
    const std::vector<float> alpha(3, 1.0f);
    EXPECT_THROW(focal_loss(logits, {0, 3}, alpha, 1.0f), ShapeError);
    EXPECT_THROW(focal_loss(logits, {-1, 0}, alpha, 1.0f), ShapeError);
}

TEST(FocalLoss, NegativeGammaThrows) {
    Tensor logits({1, 2});
    EXPECT_THROW(focal_loss(logits, {0}, {1.0f, 1.0f}, -1.0f), ConfigError);
}

TEST(AlphaFromFrequencies, BalancedCountsGiveOnes) {
    const auto alpha = alpha_from_frequencies({10, 10});
    EXPECT_FLOAT_EQ(alpha[0], 1.0f);
    EXPECT_FLOAT_EQ(alpha[1], 1.0f);
    for (float a : alpha_from_frequencies({1, 1, 1, 1})) EXPECT_FLOAT_EQ(a, 1.0f);
}

TEST(AlphaFromFrequencies, InverseFrequencyNormalized) {
    const auto alpha = alpha_from_frequencies({30, 10});
    EXPECT_NEAR(alpha[0], 0.5f, 1e-6f);
    EXPECT_NEAR(alpha[1], 1.5f, 1e-6f);
}

TEST(AlphaFromFrequencies, MeanIsOne) {
    const auto alpha = alpha_from_frequencies({3, 14, 159, 2, 65});
    double sum = 0.0;
    for (float a : alpha) sum += a;
    EXPECT_NEAR(sum / static_cast<double>(alpha.size()), 1.0, 1e-6);
}

TEST(AlphaFromFrequencies, ZeroCountThrows) {
    EXPECT_THROW(alpha_from_frequencies({5, 0, 3}), ConfigError);
    EXPECT_THROW(alpha_from_frequencies({}), ConfigError);
}

TEST(HeadWeights, FiveBrickDefaultsSumTo1775) {
    const auto w = default_head_weights(5);
    ASSERT_EQ(w.size(), 5u);
    EXPECT_FLOAT_EQ(w[0], 0.025f);
    EXPECT_FLOAT_EQ(w[1], 0.05f);
    EXPECT_FLOAT_EQ(w[2], 0.5f);
    EXPECT_FLOAT_EQ(w[3], 0.2f);
    EXPECT_FLOAT_EQ(w[4], 1.0f);
    double sum = 0.0;
    for (float v : w) sum += v;
    EXPECT_NEAR(sum, 1.775, 1e-6);  // total when every per-head loss is 1.0
}

TEST(HeadWeights, TruncationKeepsLeadingAuxWeights) {
    const auto w2 = default_head_weights(2);
    ASSERT_EQ(w2.size(), 2u);
    EXPECT_FLOAT_EQ(w2[0], 0.025f);
    EXPECT_FLOAT_EQ(w2[1], 1.0f);
    const auto w3 = default_head_weights(3);
    ASSERT_EQ(w3.size(), 3u);
    EXPECT_FLOAT_EQ(w3[1], 0.05f);
    const auto w4 = default_head_weights(4);
    ASSERT_EQ(w4.size(), 4u);
    EXPECT_FLOAT_EQ(w4[2], 0.5f);
    EXPECT_THROW(default_head_weights(1), ConfigError);
    EXPECT_THROW(default_head_weights(6), ConfigError);
}

TEST(MultiHeadLoss, TotalIsWeightedSumOfPerHead) {
    Rng rng(110);
    std::vector<Tensor> aux;
    for (int i = 0; i < 4; ++i) aux.push_back(rand_tensor({3, 4}, rng));
    Tensor main_logits = rand_tensor({3, 4}, rng);
    const std::vector<int> labels = {1, 0, 3};
    FocalLossConfig cfg;
    cfg.gamma = 4.0f;
    cfg.alpha.assign(4, 1.0f);
    cfg.head_weights = default_head_weights(5);
    MultiHeadLoss out = multi_head_loss(aux, main_logits, labels, cfg);
    ASSERT_EQ(out.report.per_head.size(), 5u);
    double expect = 0.0;
    for (int i = 0; i < 5; ++i)
        expect += static_cast<double>(cfg.head_weights[static_cast<std::size_t>(i)]) *
                  out.report.per_head[static_cast<std::size_t>(i)];
    EXPECT_NEAR(out.report.total, expect, 1e-6);
    // per-head values match the standalone loss
    for (int i = 0; i < 4; ++i)
        EXPECT_EQ(out.report.per_head[static_cast<std::size_t>(i)],
                  focal_loss(aux[static_cast<std::size_t>(i)], labels, cfg.alpha,
                             cfg.gamma)
                      .value);
    EXPECT_EQ(out.report.per_head[4],
              focal_loss(main_logits, labels, cfg.alpha, cfg.gamma).value);
}

TEST(MultiHeadLoss, ZeroAuxWeightsLeaveMainOnly) {
    Rng rng(111);
    std::vector<Tensor> aux = {rand_tensor({2, 3}, rng), rand_tensor({2, 3}, rng)};
    Tensor main_logits = rand_tensor({2, 3}, rng);
    const std::vector<int> labels = {2, 1};
    FocalLossConfig cfg;
    cfg.gamma = 2.0f;
    cfg.alpha.assign(3, 1.0f);
    cfg.head_weights = {0.0f, 0.0f, 1.0f};
    MultiHeadLoss out = multi_head_loss(aux, main_logits, labels, cfg);
    EXPECT_DOUBLE_EQ(out.report.total,
                     focal_loss(main_logits, labels, cfg.alpha, cfg.gamma).value);
    for (std::int64_t i = 0; i < out.aux_grads[0].numel(); ++i)
        ASSERT_EQ(out.aux_grads[0][i], 0.0f);
}

TEST(MultiHeadLoss, SingleAuxTruncation) {
    Rng rng(112);
    std::vector<Tensor> aux = {rand_tensor({2, 3}, rng)};
    Tensor main_logits = rand_tensor({2, 3}, rng);
    const std::vector<int> labels = {0, 2};
    FocalLossConfig cfg;
    cfg.gamma = 4.0f;
    cfg.alpha.assign(3, 1.0f);
    cfg.head_weights = default_head_weights(2);
    MultiHeadLoss out = multi_head_loss(aux, main_logits, labels, cfg);
    const double aux_loss = focal_loss(aux[0], labels, cfg.alpha, cfg.gamma).value;
    const double main_loss = focal_loss(main_logits, labels, cfg.alpha, cfg.gamma).value;
    EXPECT_NEAR(out.report.total, 0.025 * aux_loss + main_loss, 1e-9);
}

TEST(MultiHeadLoss, GradsScaledByHeadWeight) {
    Rng rng(113);
    std::vector<Tensor> aux = {rand_tensor({2, 4}, rng)};
    Tensor main_logits = rand_tensor({2, 4}, rng);
    const std::vector<int> labels = {3, 1};
    FocalLossConfig cfg;
    cfg.gamma = 1.0f;
    cfg.alpha.assign(4, 1.0f);
    cfg.head_weights = {0.25f, 1.0f};
    MultiHeadLoss out = multi_head_loss(aux, main_logits, labels, cfg);
    LossOutput solo = focal_loss(aux[0], labels, cfg.alpha, cfg.gamma);
    for (std::int64_t i = 0; i < solo.grad.numel(); ++i)
        ASSERT_FLOAT_EQ(out.aux_grads[0][i], 0.25f * solo.grad[i]);
}

TEST(MultiHeadLoss, DoubledWeightsDoubleTotal) {
    Rng rng(114);
    std::vector<Tensor> aux = {rand_tensor({2, 3}, rng), rand_tensor({2, 3}, rng)};
    Tensor main_logits = rand_tensor({2, 3}, rng);
    const std::vector<int> labels = {1, 1};
    FocalLossConfig cfg;
    cfg.gamma = 4.0f;
    cfg.alpha.assign(3, 1.0f);
    cfg.head_weights = {0.1f, 0.2f, 1.0f};
    const double base = multi_head_loss(aux, main_logits, labels, cfg).report.total;
    for (float& w : cfg.head_weights) w *= 2.0f;
    const double doubled = multi_head_loss(aux, main_logits, labels, cfg).report.total;
    EXPECT_NEAR(doubled, 2.0 * base, 1e-12);
}

TEST(MultiHeadLoss, HeadCountMismatchThrows) {
    Rng rng(115);
    std::vector<Tensor> aux = {rand_tensor({1, 3}, rng)};
    Tensor main_logits = rand_tensor({1, 3}, rng);
    FocalLossConfig cfg;
    cfg.gamma = 0.0f;
    cfg.alpha.assign(3, 1.0f);
    cfg.head_weights = {0.1f, 0.2f, 0.3f, 1.0f};  // four weights, two heads
    EXPECT_THROW(multi_head_loss(aux, main_logits, {0}, cfg), ConfigError);
}

TEST(MultiHeadLoss, NonPositiveMainWeightThrows) {
    Rng rng(116);
    std::vector<Tensor> aux = {rand_tensor({1, 3}, rng)};
    Tensor main_logits = rand_tensor({1, 3}, rng);
    FocalLossConfig cfg;
    cfg.gamma = 0.0f;
    cfg.alpha.assign(3, 1.0f);
    cfg.head_weights = {0.1f, 0.0f};
    EXPECT_THROW(multi_head_loss(aux, main_logits, {0}, cfg), ConfigError);
}

}  // namespace
}  // namespace hcr
