#include "hcr/config.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>

namespace hcr {
namespace {

TEST(JsonParsing, BadSyntaxThrowsConfigError) {
    EXPECT_THROW(parse_json_text("{oops"), ConfigError);
    EXPECT_THROW(parse_json_text(""), ConfigError);
    EXPECT_NO_THROW(parse_json_text("{}"));
}

TEST(JsonParsing, MissingFileThrowsLoadError) {
    EXPECT_THROW(load_json_file("/nonexistent/nowhere.json"), LoadError);
}

TEST(ModelSpecJson, RoundTrip) {
    ModelSpec spec;
    spec.num_bricks = 3;
    spec.base_filters = 8;
    spec.num_classes = 7;
    spec.input_side = 64;
    spec.brick_dropout = 0.1f;
    spec.head_dropout = 0.3f;
    spec.aux_dense_units = 32;
    spec.main_dense_units = {48, 24};
    EXPECT_EQ(model_spec_from_json(to_json(spec)), spec);
}

TEST(ModelSpecJson, MissingKeysFallBackToDefaults) {
    ModelSpec spec = model_spec_from_json(parse_json_text("{}"));
    EXPECT_EQ(spec.num_bricks, 5);
    EXPECT_EQ(spec.num_classes, 0);  // left for the data to decide
    EXPECT_EQ(spec.input_side, 256);
}

TEST(ModelSpecJson, UnknownKeyRejected) {
    try {
        model_spec_from_json(parse_json_text(R"({"num_brickz": 3})"));
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("num_brickz"), std::string::npos);
    }
}

TEST(ModelSpecJson, WrongTypeRejected) {
    EXPECT_THROW(model_spec_from_json(parse_json_text(R"({"num_bricks": "three"})")),
                 ConfigError);
    EXPECT_THROW(model_spec_from_json(parse_json_text("[]")), ConfigError);
}

TEST(LossConfigJson, RoundTrip) {
    FocalLossConfig cfg;
    cfg.gamma = 2.0f;
    cfg.alpha = {0.5f, 1.5f};
    cfg.head_weights = {0.1f, 1.0f};
    EXPECT_EQ(loss_config_from_json(to_json(cfg)), cfg);
}

TEST(LossConfigJson, OmittedWeightsStayEmpty) {
    FocalLossConfig cfg = loss_config_from_json(parse_json_text(R"({"gamma": 1.5})"));
    EXPECT_FLOAT_EQ(cfg.gamma, 1.5f);
    EXPECT_TRUE(cfg.alpha.empty());
    EXPECT_TRUE(cfg.head_weights.empty());
}

TEST(LossConfigJson, ResolveFillsAlphaFromFrequencies) {
    std::vector<Sample> samples;
    for (int i = 0; i < 30; ++i)
        samples.push_back({GrayImage(2, 2), 0, 0});
    for (int i = 0; i < 10; ++i)
        samples.push_back({GrayImage(2, 2), 1, 1});
    FocalLossConfig cfg;  // empty alpha and head weights
    cfg = resolve_loss_config(cfg, samples, 2, 2);
    ASSERT_EQ(cfg.alpha.size(), 2u);
    EXPECT_NEAR(cfg.alpha[0], 0.5f, 1e-6f);
    EXPECT_NEAR(cfg.alpha[1], 1.5f, 1e-6f);
    ASSERT_EQ(cfg.head_weights.size(), 2u);
    EXPECT_FLOAT_EQ(cfg.head_weights[0], 0.025f);
    EXPECT_FLOAT_EQ(cfg.head_weights[1], 1.0f);
}

TEST(LossConfigJson, ResolveKeepsExplicitValues) {
    std::vector<Sample> samples{{GrayImage(2, 2), 0, 0}, {GrayImage(2, 2), 1, 1}};
    FocalLossConfig cfg;
    cfg.alpha = {2.0f, 2.0f};
    cfg.head_weights = {0.5f, 0.5f};
    FocalLossConfig resolved = resolve_loss_config(cfg, samples, 2, 2);
    EXPECT_EQ(resolved.alpha, cfg.alpha);
    EXPECT_EQ(resolved.head_weights, cfg.head_weights);
}

TEST(TrainConfigJson, RoundTrip) {
    TrainConfig cfg;
    cfg.epochs = 7;
    cfg.batch_size = 3;
    cfg.learning_rate = 0.2f;
    cfg.momentum = 0.5f;
    cfg.patience = 2;
    cfg.seed = 99;
    cfg.eval_every = 3;
    cfg.early_stopping = false;
    cfg.stop_at_train_accuracy = 0.9f;
    EXPECT_EQ(train_config_from_json(to_json(cfg)), cfg);
}

TEST(TrainConfigJson, UnknownKeyRejected) {
    EXPECT_THROW(train_config_from_json(parse_json_text(R"({"epoch": 3})")),
                 ConfigError);
}

TEST(DataConfigJson, RequiresExactlyOneSource) {
    DataConfig neither;
    EXPECT_THROW(neither.validate(), ConfigError);
    DataConfig both;
    both.gnt_path = "x.gnt";
    both.synth_classes = 3;
    both.synth_per_class = 4;
    EXPECT_THROW(both.validate(), ConfigError);
    DataConfig gnt;
    gnt.gnt_path = "x.gnt";
    EXPECT_NO_THROW(gnt.validate());
    DataConfig synth;
    synth.synth_classes = 3;
    synth.synth_per_class = 4;
    EXPECT_NO_THROW(synth.validate());
}

TEST(DataConfigJson, FractionBounds) {
    DataConfig cfg;
    cfg.gnt_path = "x.gnt";
    cfg.train_fraction = 1.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg.train_fraction = 0.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg.train_fraction = 0.5;
    EXPECT_NO_THROW(cfg.validate());
}

TEST(RunConfigJson, MinimalDocumentGetsDefaults) {
    RunConfig cfg = run_config_from_json(
        parse_json_text(R"({"data": {"synth_classes": 3, "synth_per_class": 5}})"));
    EXPECT_EQ(cfg.model.num_classes, 0);
    EXPECT_EQ(cfg.train.epochs, 50);
    EXPECT_EQ(cfg.blur_variant, 1);
    EXPECT_EQ(cfg.output_dir, "out");
    EXPECT_EQ(cfg.data.synth_classes, 3);
    EXPECT_DOUBLE_EQ(cfg.data.train_fraction, 0.75);
}

TEST(RunConfigJson, MissingDataSectionRejected) {
    EXPECT_THROW(run_config_from_json(parse_json_text("{}")), ConfigError);
}

TEST(RunConfigJson, UnknownKeysRejectedAtEveryLevel) {
    EXPECT_THROW(run_config_from_json(parse_json_text(
                     R"({"data": {"synth_classes": 3, "synth_per_class": 5}, "modle": {}})")),
                 ConfigError);
    EXPECT_THROW(run_config_from_json(parse_json_text(
                     R"({"data": {"synth_classes": 3, "synth_per_class": 5, "bogus": 1}})")),
                 ConfigError);
    EXPECT_THROW(run_config_from_json(parse_json_text(
                     R"({"data": {"synth_classes": 3, "synth_per_class": 5},
                         "train": {"lr": 0.1}})")),
                 ConfigError);
}

TEST(RunConfigJson, BlurVariantRange) {
    EXPECT_THROW(run_config_from_json(parse_json_text(
                     R"({"data": {"synth_classes": 3, "synth_per_class": 5},
                         "blur_variant": 4})")),
                 ConfigError);
    RunConfig cfg = run_config_from_json(parse_json_text(
        R"({"data": {"synth_classes": 3, "synth_per_class": 5}, "blur_variant": 3})"));
    EXPECT_EQ(cfg.blur_variant, 3);
}

TEST(RunConfigJson, RoundTrip) {
    RunConfig cfg;
    cfg.model.num_bricks = 2;
    cfg.model.num_classes = 4;
    cfg.model.input_side = 32;
    cfg.loss.gamma = 2.0f;
    cfg.train.epochs = 5;
    cfg.blur_variant = 2;
    cfg.data.synth_classes = 4;
    cfg.data.synth_per_class = 6;
    cfg.output_dir = "runs/a";
    RunConfig back = run_config_from_json(to_json(cfg));
    EXPECT_EQ(back.model, cfg.model);
    EXPECT_EQ(back.loss, cfg.loss);
    EXPECT_EQ(back.train, cfg.train);
    EXPECT_EQ(back.blur_variant, cfg.blur_variant);
    EXPECT_EQ(back.data, cfg.data);
    EXPECT_EQ(back.output_dir, cfg.output_dir);
}

TEST(RunConfigJson, LoadFromFile) {
    const std::string path = testing::TempDir() + "hcr_cfg_test.json";
    {
        std::ofstream out(path);
        out << R"({"data": {"gnt_path": "d.gnt"}, "output_dir": "o"})";
    }
    RunConfig cfg = load_run_config(path);
    EXPECT_EQ(cfg.data.gnt_path, "d.gnt");
    EXPECT_EQ(cfg.output_dir, "o");
    std::remove(path.c_str());
}

}  // namespace
}  // namespace hcr
