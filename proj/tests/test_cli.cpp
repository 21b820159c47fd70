#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "hcr/dataset.hpp"
#include "hcr/gnt.hpp"
#include "hcr/image.hpp"

namespace {

using Json = nlohmann::json;

struct CliResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

CliResult run_cli(const std::string& dir, const std::string& args,
                  const std::string& env = "") {
    const std::string out_path = dir + "/cli_stdout.txt";
    const std::string err_path = dir + "/cli_stderr.txt";
    const std::string cmd = "cd '" + dir + "' && " + env + " '" + HCR_CLI_PATH +
                            "' " + args + " > cli_stdout.txt 2> cli_stderr.txt";
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out_path);
    r.err = slurp(err_path);
    return r;
}

std::string fresh_dir(const std::string& name) {
    const std::string dir = std::string(testing::TempDir()) + name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

/// A small synthetic run config; trains in well under a second.
std::string tiny_config_json(const std::string& output_dir, int epochs = 3,
                             int input_side = 16) {
    Json j{{"model", Json{{"num_bricks", 2},
                          {"base_filters", 4},
                          {"input_side", input_side},
                          {"aux_dense_units", 8},
                          {"main_dense_units", Json::array({16})}}},
           {"train", Json{{"epochs", epochs},
                          {"batch_size", 4},
                          {"learning_rate", 0.05},
                          {"seed", 5},
                          {"early_stopping", false}}},
           {"data", Json{{"synth_classes", 3}, {"synth_per_class", 8}, {"synth_seed", 9}}},
           {"blur_variant", 1},
           {"output_dir", output_dir}};
    return j.dump(2);
}

/// Drops the trailing wall-clock column so timing noise cannot affect
/// equality checks.
std::string strip_last_column(const std::string& csv) {
    std::stringstream in(csv);
    std::string line, out;
    while (std::getline(in, line)) {
        const std::size_t comma = line.rfind(',');
        out += line.substr(0, comma);
        out += '\n';
    }
    return out;
}

TEST(CliTrain, ProducesArtifactsAndSummary) {
    const std::string dir = fresh_dir("cli_train");
    spit(dir + "/run.json", tiny_config_json("out"));
    const CliResult r = run_cli(dir, "train --config run.json");
    ASSERT_EQ(r.exit_code, 0) << r.err;

    EXPECT_TRUE(std::filesystem::exists(dir + "/out/checkpoint.ckpt"));
    EXPECT_TRUE(std::filesystem::exists(dir + "/out/metrics.csv"));

    const std::string csv = slurp(dir + "/out/metrics.csv");
    EXPECT_EQ(csv.substr(0, csv.find('\n')),
              "epoch,train_loss,aux1,aux2,aux3,aux4,main,test_top1,wall_time_s");

    const Json summary = Json::parse(r.out);
    EXPECT_EQ(summary.at("epochs_run").get<int>(), 3);
    EXPECT_EQ(summary.at("num_classes").get<int>(), 3);
    EXPECT_GT(summary.at("params").get<long long>(), 0);
}

TEST(CliTrain, RerunIsByteIdenticalApartFromWallTime) {
    const std::string dir = fresh_dir("cli_determinism");
    spit(dir + "/a.json", tiny_config_json("out_a"));
    spit(dir + "/b.json", tiny_config_json("out_b"));
    ASSERT_EQ(run_cli(dir, "train --config a.json").exit_code, 0);
    ASSERT_EQ(run_cli(dir, "train --config b.json").exit_code, 0);

    EXPECT_EQ(strip_last_column(slurp(dir + "/out_a/metrics.csv")),
              strip_last_column(slurp(dir + "/out_b/metrics.csv")));
    EXPECT_EQ(slurp(dir + "/out_a/checkpoint.ckpt"),
              slurp(dir + "/out_b/checkpoint.ckpt"));
}

TEST(CliTrain, WorkerCountDoesNotChangeResults) {
    const std::string dir = fresh_dir("cli_threads");
    spit(dir + "/one.json", tiny_config_json("out_one"));
    spit(dir + "/four.json", tiny_config_json("out_four"));
    ASSERT_EQ(run_cli(dir, "train --config one.json", "HCR_THREADS=1").exit_code, 0);
    ASSERT_EQ(run_cli(dir, "train --config four.json", "HCR_THREADS=4").exit_code, 0);

    EXPECT_EQ(strip_last_column(slurp(dir + "/out_one/metrics.csv")),
              strip_last_column(slurp(dir + "/out_four/metrics.csv")));
    EXPECT_EQ(slurp(dir + "/out_one/checkpoint.ckpt"),
              slurp(dir + "/out_four/checkpoint.ckpt"));
}

TEST(CliExitCodes, InvalidConfigIsOne) {
    const std::string dir = fresh_dir("cli_badconfig");
    spit(dir + "/bad.json",
         R"({"data": {"synth_classes": 3, "synth_per_class": 4}, "blur_variant": 9})");
    const CliResult r = run_cli(dir, "train --config bad.json");
    EXPECT_EQ(r.exit_code, 1);
    const Json err = Json::parse(r.err);
    EXPECT_EQ(err.at("error").at("type").get<std::string>(), "ConfigError");
}

TEST(CliExitCodes, UnknownConfigKeyIsOne) {
    const std::string dir = fresh_dir("cli_unknownkey");
    spit(dir + "/bad.json",
         R"({"data": {"synth_classes": 3, "synth_per_class": 4}, "verbosity": 2})");
    const CliResult r = run_cli(dir, "train --config bad.json");
    EXPECT_EQ(r.exit_code, 1);
    EXPECT_NE(Json::parse(r.err).at("error").at("message").get<std::string>().find(
                  "verbosity"),
              std::string::npos);
}

TEST(CliExitCodes, MissingCheckpointIsTwo) {
    const std::string dir = fresh_dir("cli_missingckpt");
    const CliResult mk =
        run_cli(dir, "make-synth --classes 2 --per-class 2 --side 16 --out d.gnt");
    ASSERT_EQ(mk.exit_code, 0);
    const CliResult r = run_cli(dir, "eval --checkpoint nope.ckpt --data d.gnt");
    EXPECT_EQ(r.exit_code, 2);
    const Json err = Json::parse(r.err);
    EXPECT_EQ(err.at("error").at("type").get<std::string>(), "LoadError");
}

TEST(CliExitCodes, MissingSubcommandIsOne) {
    const std::string dir = fresh_dir("cli_nosub");
    EXPECT_EQ(run_cli(dir, "").exit_code, 1);
    EXPECT_EQ(run_cli(dir, "--help").exit_code, 0);
}

TEST(CliGntInspect, CountsAndHistogram) {
    const std::string dir = fresh_dir("cli_inspect");
    ASSERT_EQ(run_cli(dir, "make-synth --classes 4 --per-class 6 --side 24 "
                           "--seed 3 --out s.gnt")
                  .exit_code,
              0);
    const CliResult r = run_cli(dir, "gnt-inspect s.gnt");
    ASSERT_EQ(r.exit_code, 0) << r.err;
    const Json j = Json::parse(r.out);
    EXPECT_EQ(j.at("count").get<int>(), 24);
    EXPECT_EQ(j.at("histogram").size(), 4u);
    for (const auto& [tag, n] : j.at("histogram").items()) EXPECT_EQ(n.get<int>(), 6);
    EXPECT_EQ(j.at("dims").at("min_width").get<int>(), 24);
    EXPECT_EQ(j.at("dims").at("max_height").get<int>(), 24);
}

TEST(CliGntInspect, EmptyFileReportsZero) {
    const std::string dir = fresh_dir("cli_inspect_empty");
    spit(dir + "/empty.gnt", "");
    const CliResult r = run_cli(dir, "gnt-inspect empty.gnt");
    ASSERT_EQ(r.exit_code, 0) << r.err;
    const Json j = Json::parse(r.out);
    EXPECT_EQ(j.at("count").get<int>(), 0);
    EXPECT_TRUE(j.at("dims").is_null());
}

TEST(CliMakeSynth, OutputReparsesWithTheLibrary) {
    const std::string dir = fresh_dir("cli_makesynth");
    ASSERT_EQ(run_cli(dir, "make-synth --classes 3 --per-class 5 --side 20 "
                           "--seed 11 --out s.gnt")
                  .exit_code,
              0);
    const std::vector<hcr::Sample> samples = hcr::parse_gnt_file(dir + "/s.gnt");
    ASSERT_EQ(samples.size(), 15u);
    for (const hcr::Sample& s : samples) {
        EXPECT_EQ(s.image.width, 20);
        EXPECT_EQ(s.image.height, 20);
    }
}

TEST(CliPredict, JsonSchemaAndProbabilitySum) {
    const std::string dir = fresh_dir("cli_predict");
    spit(dir + "/run.json", tiny_config_json("out"));
    ASSERT_EQ(run_cli(dir, "train --config run.json").exit_code, 0);

    Json ens{{"members",
              Json::array({Json{{"checkpoint", "out/checkpoint.ckpt"}, {"variant", 1}},
                           Json{{"checkpoint", "out/checkpoint.ckpt"}, {"variant", 2}},
                           Json{{"checkpoint", "out/checkpoint.ckpt"}, {"variant", 3}}})},
             {"resize_side", 20},
             {"crop_side", 16}};
    spit(dir + "/ens.json", ens.dump(2));

    hcr::GrayImage img(24, 24);
    for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 24; ++x)
            img.at(y, x) = static_cast<std::uint8_t>((x * 7 + y * 13) % 256);
    hcr::write_pgm_file(img, dir + "/glyph.pgm");

    const CliResult r = run_cli(dir, "predict --ensemble ens.json --image glyph.pgm");
    ASSERT_EQ(r.exit_code, 0) << r.err;
    const Json j = Json::parse(r.out);
    const int cls = j.at("class_index").get<int>();
    EXPECT_GE(cls, 0);
    EXPECT_LT(cls, 3);
    EXPECT_TRUE(j.at("tag_code").is_string());

    const Json& top5 = j.at("top5");
    ASSERT_EQ(top5.size(), 3u);
    double sum = 0.0;
    double prev = 1.0;
    for (const Json& entry : top5) {
        const double p = entry.at("probability").get<double>();
        EXPECT_LE(p, prev);
        prev = p;
        sum += p;
    }
    EXPECT_NEAR(sum, 1.0, 1e-6);
    EXPECT_EQ(top5.at(0).at("class_index").get<int>(), cls);
}

TEST(CliPredict, MemorizedTrainingGlyphComesBackAsItsClass) {
    const std::string dir = fresh_dir("cli_predict_memo");
    Json cfg{{"model", Json{{"num_bricks", 2},
                            {"base_filters", 4},
                            {"input_side", 16},
                            {"aux_dense_units", 8},
                            {"main_dense_units", Json::array({16})}}},
             {"loss", Json{{"gamma", 0}}},
             {"train", Json{{"epochs", 300},
                            {"batch_size", 4},
                            {"learning_rate", 0.005},
                            {"seed", 5},
                            {"eval_every", 5},
                            {"early_stopping", false},
                            {"stop_at_train_accuracy", 1.0}}},
             {"data", Json{{"synth_classes", 3}, {"synth_per_class", 8}, {"synth_seed", 9}}},
             {"blur_variant", 1},
             {"output_dir", "out"}};
    spit(dir + "/run.json", cfg.dump(2));
    const CliResult train = run_cli(dir, "train --config run.json");
    ASSERT_EQ(train.exit_code, 0) << train.err;
    // Stopping short of the epoch cap means the train-accuracy target was hit,
    // so every training glyph is classified correctly by the saved weights.
    ASSERT_LT(Json::parse(train.out).at("epochs_run").get<int>(), 300);

    // Rebuild the same synthetic set and split to grab a train-side glyph.
    const hcr::Dataset ds = hcr::synth_glyphs(3, 8, 16, 9);
    const hcr::DatasetSplit split =
        hcr::shuffle_split(static_cast<int>(ds.samples.size()), 1, 0.75);
    const hcr::Sample& fixture =
        ds.samples[static_cast<std::size_t>(split.train.front())];
    hcr::write_pgm_file(fixture.image, dir + "/glyph.pgm");

    // Identity resize and a blur-free variant make the crops reproduce the
    // training input exactly.
    Json ens{{"members",
              Json::array({Json{{"checkpoint", "out/checkpoint.ckpt"}, {"variant", 1}},
                           Json{{"checkpoint", "out/checkpoint.ckpt"}, {"variant", 1}},
                           Json{{"checkpoint", "out/checkpoint.ckpt"}, {"variant", 1}}})},
             {"resize_side", 16},
             {"crop_side", 16}};
    spit(dir + "/ens.json", ens.dump(2));

    const CliResult r = run_cli(dir, "predict --ensemble ens.json --image glyph.pgm");
    ASSERT_EQ(r.exit_code, 0) << r.err;
    const Json j = Json::parse(r.out);
    EXPECT_EQ(j.at("class_index").get<int>(), fixture.label);
    char tag[16];
    std::snprintf(tag, sizeof tag, "0x%04x", fixture.tag_code);
    EXPECT_EQ(j.at("tag_code").get<std::string>(), tag);
}

TEST(CliSweeps, GammaCsvHasOneRowPerValue) {
    const std::string dir = fresh_dir("cli_sweep_gamma");
    spit(dir + "/run.json", tiny_config_json("out", 2));
    const CliResult r = run_cli(dir, "sweep-gamma --config run.json --gammas 0,1,2");
    ASSERT_EQ(r.exit_code, 0) << r.err;

    std::stringstream csv(slurp(dir + "/out/sweep_gamma.csv"));
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(csv, line)) lines.push_back(line);
    ASSERT_EQ(lines.size(), 4u);
    EXPECT_EQ(lines[0], "gamma,final_accuracy,epochs_run");
    EXPECT_EQ(lines[1].substr(0, 2), "0,");
    EXPECT_EQ(lines[2].substr(0, 2), "1,");
    EXPECT_EQ(lines[3].substr(0, 2), "2,");
    EXPECT_TRUE(std::filesystem::exists(dir + "/out/gamma_0/checkpoint.ckpt"));
    EXPECT_TRUE(std::filesystem::exists(dir + "/out/gamma_2/metrics.csv"));
}

TEST(CliSweeps, GammaZeroRowMatchesPlainTrainRun) {
    const std::string dir = fresh_dir("cli_sweep_gamma_zero");
    Json cfg = Json::parse(tiny_config_json("out_sweep", 2));
    cfg["loss"] = Json{{"gamma", 0}};
    spit(dir + "/sweep.json", cfg.dump(2));
    cfg["output_dir"] = "out_train";
    spit(dir + "/train.json", cfg.dump(2));

    const CliResult sweep = run_cli(dir, "sweep-gamma --config sweep.json --gammas 0");
    ASSERT_EQ(sweep.exit_code, 0) << sweep.err;
    const CliResult train = run_cli(dir, "train --config train.json");
    ASSERT_EQ(train.exit_code, 0) << train.err;

    std::stringstream csv(slurp(dir + "/out_sweep/sweep_gamma.csv"));
    std::string line;
    ASSERT_TRUE(std::getline(csv, line));
    ASSERT_TRUE(std::getline(csv, line));
    const std::size_t first = line.find(',');
    const std::size_t second = line.find(',', first + 1);
    const double sweep_acc = std::stod(line.substr(first + 1, second - first - 1));

    const double train_acc = Json::parse(train.out).at("best_test_top1").get<double>();
    // The CSV rounds to nine significant digits; otherwise the runs are
    // identical, so the accuracies agree to that precision.
    EXPECT_NEAR(sweep_acc, train_acc, 1e-8);
}

TEST(CliSweeps, BrickParamsStrictlyIncrease) {
    const std::string dir = fresh_dir("cli_sweep_bricks");
    // Light heads keep the conv stack dominant, so parameter counts grow
    // with depth instead of being swamped by the flattened dense input.
    Json cfg{{"model", Json{{"num_bricks", 2},
                            {"base_filters", 4},
                            {"input_side", 64},
                            {"aux_dense_units", 1},
                            {"main_dense_units", Json::array()}}},
             {"train", Json{{"epochs", 2},
                            {"batch_size", 4},
                            {"learning_rate", 0.05},
                            {"seed", 5},
                            {"early_stopping", false}}},
             {"data", Json{{"synth_classes", 3}, {"synth_per_class", 8}}},
             {"output_dir", "out"}};
    spit(dir + "/run.json", cfg.dump(2));
    const CliResult r = run_cli(dir, "sweep-bricks --config run.json --bricks 2,3,4");
    ASSERT_EQ(r.exit_code, 0) << r.err;

    std::stringstream csv(slurp(dir + "/out/sweep_bricks.csv"));
    std::string line;
    std::getline(csv, line);
    ASSERT_EQ(line, "bricks,params,final_accuracy");
    long long prev_params = 0;
    int rows = 0;
    while (std::getline(csv, line)) {
        std::stringstream row(line);
        std::string bricks, params;
        std::getline(row, bricks, ',');
        std::getline(row, params, ',');
        const long long p = std::stoll(params);
        EXPECT_GT(p, prev_params);
        prev_params = p;
        ++rows;
    }
    EXPECT_EQ(rows, 3);
}

TEST(CliSweeps, BadGammaListIsConfigError) {
    const std::string dir = fresh_dir("cli_sweep_bad");
    spit(dir + "/run.json", tiny_config_json("out", 1));
    EXPECT_EQ(run_cli(dir, "sweep-gamma --config run.json --gammas 0,nope").exit_code,
              1);
    EXPECT_EQ(run_cli(dir, "sweep-gamma --config run.json --gammas -1").exit_code, 1);
    EXPECT_EQ(run_cli(dir, "sweep-bricks --config run.json --bricks 2.5").exit_code, 1);
}

TEST(CliEval, ChecksOutTrainedCheckpoint) {
    const std::string dir = fresh_dir("cli_eval");
    spit(dir + "/run.json", tiny_config_json("out"));
    ASSERT_EQ(run_cli(dir, "train --config run.json").exit_code, 0);
    ASSERT_EQ(run_cli(dir, "make-synth --classes 3 --per-class 4 --side 16 "
                           "--seed 9 --out held.gnt")
                  .exit_code,
              0);
    const CliResult r =
        run_cli(dir, "eval --checkpoint out/checkpoint.ckpt --data held.gnt");
    ASSERT_EQ(r.exit_code, 0) << r.err;
    const Json j = Json::parse(r.out);
    EXPECT_EQ(j.at("samples").get<int>(), 12);
    EXPECT_EQ(j.at("num_classes").get<int>(), 3);
    const double top1 = j.at("top1").get<double>();
    EXPECT_GE(top1, 0.0);
    EXPECT_LE(top1, 1.0);
}

}  // namespace
