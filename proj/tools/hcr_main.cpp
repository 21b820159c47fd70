#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hcr/hcr.hpp"

namespace fs = std::filesystem;

namespace {

using hcr::Json;

std::string hex_tag(std::uint16_t tag) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "0x%04x", tag);
    return buf;
}

std::vector<float> parse_float_list(const std::string& text, const char* what) {
    std::vector<float> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stof(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw hcr::ConfigError(std::string(what) + " list has a bad entry: " + item);
        }
    }
    if (out.empty()) throw hcr::ConfigError(std::string(what) + " list is empty");
    return out;
}

std::vector<int> parse_int_list(const std::string& text, const char* what) {
    std::vector<int> out;
    for (float v : parse_float_list(text, what)) {
        if (v != static_cast<int>(v))
            throw hcr::ConfigError(std::string(what) + " list needs integers");
        out.push_back(static_cast<int>(v));
    }
    return out;
}

struct PreparedData {
    hcr::LabelMap label_map;
    std::vector<hcr::Sample> train_samples;
    std::vector<hcr::Sample> test_samples;
};

/// Loads or synthesizes the raw samples, applies the run's blur variant at
/// the model's input side, and splits train/test.
PreparedData prepare_data(const hcr::RunConfig& cfg, int input_side) {
    hcr::Dataset raw;
    if (!cfg.data.gnt_path.empty()) {
        raw.samples = hcr::parse_gnt_file(cfg.data.gnt_path);
        raw.label_map = hcr::LabelMap::from_samples(raw.samples);
        hcr::apply_labels(raw.samples, raw.label_map);
    } else {
        raw = hcr::synth_glyphs(cfg.data.synth_classes, cfg.data.synth_per_class,
                                input_side, cfg.data.synth_seed);
    }
    if (raw.samples.empty()) throw hcr::ConfigError("dataset is empty");

    const hcr::BlurSpec blur = hcr::BlurSpec::for_variant(cfg.blur_variant);
    const std::vector<hcr::Sample> prepared =
        hcr::prepare_variant(raw.samples, input_side, blur);

    const hcr::DatasetSplit split =
        hcr::shuffle_split(static_cast<int>(prepared.size()), cfg.data.split_seed,
                           cfg.data.train_fraction);
    PreparedData data;
    data.label_map = raw.label_map;
    for (int i : split.train)
        data.train_samples.push_back(prepared[static_cast<std::size_t>(i)]);
    for (int i : split.test)
        data.test_samples.push_back(prepared[static_cast<std::size_t>(i)]);
    return data;
}

struct RunOutcome {
    hcr::TrainResult result;
    std::int64_t params = 0;
    int num_classes = 0;
    bool has_test = false;
    double final_accuracy = 0.0;
    std::string checkpoint_path;
    std::string metrics_path;
};

/// One full training run: prepare data, train, drop metrics.csv and
/// checkpoint.ckpt into out_dir.
RunOutcome run_training(const hcr::RunConfig& cfg, const std::string& out_dir) {
    hcr::ModelSpec spec = cfg.model;
    PreparedData data = prepare_data(cfg, spec.input_side);
    if (spec.num_classes == 0) spec.num_classes = data.label_map.num_classes();
    spec.validate();
    if (data.train_samples.empty()) throw hcr::ConfigError("train split is empty");

    const hcr::FocalLossConfig loss = hcr::resolve_loss_config(
        cfg.loss, data.train_samples, spec.num_classes, spec.num_bricks);

    hcr::Rng init_rng(cfg.train.seed);
    hcr::Model model(spec, init_rng);
    RunOutcome out;
    out.params = model.param_count();
    out.num_classes = spec.num_classes;
    out.has_test = !data.test_samples.empty();
    out.result = hcr::train(model, data.train_samples, data.test_samples, true, loss,
                            cfg.train);

    fs::create_directories(out_dir);
    out.metrics_path = out_dir + "/metrics.csv";
    std::ofstream metrics(out.metrics_path);
    if (!metrics) throw hcr::LoadError("cannot write " + out.metrics_path);
    hcr::write_metrics_csv(out.result.metrics, spec.num_bricks - 1, metrics);

    hcr::CheckpointMeta meta;
    meta.epoch = out.result.best_epoch > 0 ? out.result.best_epoch
                                           : out.result.epochs_run;
    meta.label_tags = data.label_map.tags;
    out.checkpoint_path = out_dir + "/checkpoint.ckpt";
    hcr::save_checkpoint_file(model, meta, out.checkpoint_path);

    out.final_accuracy =
        out.has_test ? out.result.best_test_top1
                     : hcr::evaluate(model, data.train_samples, true,
                                     cfg.train.batch_size);
    return out;
}

int cmd_train(const std::string& config_path) {
    const hcr::RunConfig cfg = hcr::load_run_config(config_path);
    const RunOutcome out = run_training(cfg, cfg.output_dir);
    Json summary{{"epochs_run", out.result.epochs_run},
                 {"num_classes", out.num_classes},
                 {"params", out.params},
                 {"checkpoint", out.checkpoint_path},
                 {"metrics", out.metrics_path}};
    if (out.has_test) {
        summary["best_epoch"] = out.result.best_epoch;
        summary["best_test_top1"] = out.result.best_test_top1;
    } else {
        summary["train_top1"] = out.final_accuracy;
    }
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_path,
             int blur_variant) {
    const hcr::LoadedCheckpoint loaded = hcr::read_checkpoint_file(checkpoint_path);
    const auto model = hcr::restore_model(loaded);

    std::vector<hcr::Sample> samples = hcr::parse_gnt_file(data_path);
    if (samples.empty()) throw hcr::ConfigError("evaluation data is empty");
    const hcr::LabelMap map = loaded.meta.label_tags.empty()
                                  ? hcr::LabelMap::from_samples(samples)
                                  : hcr::LabelMap::from_tags(loaded.meta.label_tags);
    hcr::apply_labels(samples, map);
    const std::vector<hcr::Sample> prepared = hcr::prepare_variant(
        samples, model->spec().input_side, hcr::BlurSpec::for_variant(blur_variant));

    const double top1 = hcr::evaluate(*model, prepared, true, 32);
    Json summary{{"samples", prepared.size()},
                 {"num_classes", model->spec().num_classes},
                 {"top1", top1}};
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int cmd_predict(const std::string& ensemble_path, const std::string& image_path) {
    const hcr::EnsembleSpec spec = hcr::load_ensemble_spec(ensemble_path);
    const hcr::LoadedEnsemble ens = hcr::load_ensemble(spec);
    const hcr::GrayImage image = hcr::read_pgm_file(image_path);
    const hcr::Prediction pred = hcr::predict(ens, image);

    std::vector<int> order(pred.probabilities.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (pred.probabilities[static_cast<std::size_t>(a)] !=
            pred.probabilities[static_cast<std::size_t>(b)])
            return pred.probabilities[static_cast<std::size_t>(a)] >
                   pred.probabilities[static_cast<std::size_t>(b)];
        return a < b;
    });

    const auto tag_of = [&](int cls) -> Json {
        if (static_cast<std::size_t>(cls) < ens.label_tags.size())
            return hex_tag(ens.label_tags[static_cast<std::size_t>(cls)]);
        return nullptr;
    };
    Json top5 = Json::array();
    for (std::size_t r = 0; r < order.size() && r < 5; ++r)
        top5.push_back(Json{{"class_index", order[r]},
                            {"tag_code", tag_of(order[r])},
                            {"probability",
                             pred.probabilities[static_cast<std::size_t>(order[r])]}});
    Json summary{{"class_index", pred.class_index},
                 {"tag_code", tag_of(pred.class_index)},
                 {"top5", top5}};
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int cmd_sweep_gamma(const std::string& config_path, const std::string& gamma_list) {
    const hcr::RunConfig base = hcr::load_run_config(config_path);
    const std::vector<float> gammas = parse_float_list(gamma_list, "gamma");
    for (float g : gammas)
        if (g < 0.0f) throw hcr::ConfigError("gamma values must be >= 0");

    fs::create_directories(base.output_dir);
    const std::string csv_path = base.output_dir + "/sweep_gamma.csv";
    std::ofstream csv(csv_path);
    if (!csv) throw hcr::LoadError("cannot write " + csv_path);
    csv << "gamma,final_accuracy,epochs_run\n";
    for (float g : gammas) {
        hcr::RunConfig cfg = base;
        cfg.loss.gamma = g;
        char tag[32];
        std::snprintf(tag, sizeof tag, "%g", static_cast<double>(g));
        const RunOutcome out =
            run_training(cfg, base.output_dir + "/gamma_" + tag);
        char acc[32];
        std::snprintf(acc, sizeof acc, "%.9g", out.final_accuracy);
        csv << tag << "," << acc << "," << out.result.epochs_run << "\n";
    }
    std::cout << Json{{"rows", gammas.size()}, {"csv", csv_path}}.dump(2) << "\n";
    return 0;
}

int cmd_sweep_bricks(const std::string& config_path, const std::string& brick_list) {
    const hcr::RunConfig base = hcr::load_run_config(config_path);
    const std::vector<int> bricks = parse_int_list(brick_list, "bricks");

    fs::create_directories(base.output_dir);
    const std::string csv_path = base.output_dir + "/sweep_bricks.csv";
    std::ofstream csv(csv_path);
    if (!csv) throw hcr::LoadError("cannot write " + csv_path);
    csv << "bricks,params,final_accuracy\n";
    for (int n : bricks) {
        hcr::RunConfig cfg = base;
        cfg.model.num_bricks = n;
        const RunOutcome out =
            run_training(cfg, base.output_dir + "/bricks_" + std::to_string(n));
        char acc[32];
        std::snprintf(acc, sizeof acc, "%.9g", out.final_accuracy);
        csv << n << "," << out.params << "," << acc << "\n";
    }
    std::cout << Json{{"rows", bricks.size()}, {"csv", csv_path}}.dump(2) << "\n";
    return 0;
}

int cmd_gnt_inspect(const std::string& path) {
    const std::vector<hcr::Sample> samples = hcr::parse_gnt_file(path);
    std::map<std::string, std::int64_t> histogram;
    int min_w = 0, max_w = 0, min_h = 0, max_h = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const hcr::Sample& s = samples[i];
        ++histogram[hex_tag(s.tag_code)];
        if (i == 0) {
            min_w = max_w = s.image.width;
            min_h = max_h = s.image.height;
        } else {
            min_w = std::min(min_w, s.image.width);
            max_w = std::max(max_w, s.image.width);
            min_h = std::min(min_h, s.image.height);
            max_h = std::max(max_h, s.image.height);
        }
    }
    Json summary{{"count", samples.size()}, {"histogram", histogram}};
    if (samples.empty())
        summary["dims"] = nullptr;
    else
        summary["dims"] = Json{{"min_width", min_w},
                               {"max_width", max_w},
                               {"min_height", min_h},
                               {"max_height", max_h}};
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int cmd_make_synth(int classes, int per_class, int side, std::uint64_t seed,
                   const std::string& out_path) {
    const hcr::Dataset data = hcr::synth_glyphs(classes, per_class, side, seed);
    hcr::write_gnt_file(data.samples, out_path);
    std::cout << Json{{"count", data.samples.size()}, {"path", out_path}}.dump(2)
              << "\n";
    return 0;
}

Json error_json(const char* type, const std::string& message) {
    return Json{{"error", Json{{"type", type}, {"message", message}}}};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"brick-network handwritten character recognition toolkit"};
    app.require_subcommand(1);

    std::string config_path, checkpoint_path, data_path, ensemble_path, image_path;
    std::string gnt_path, out_path, gamma_list, brick_list;
    int blur_variant = 1;
    int classes = 0, per_class = 0, side = 64;
    std::uint64_t seed = 1;

    CLI::App* train = app.add_subcommand("train", "train a model from a run config");
    train->add_option("--config", config_path, "run config JSON")->required();

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a GNT file");
    eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    eval->add_option("--data", data_path, "GNT data file")->required();
    eval->add_option("--blur-variant", blur_variant, "preprocessing blur variant");

    CLI::App* predict = app.add_subcommand("predict", "ensemble prediction for one image");
    predict->add_option("--ensemble", ensemble_path, "ensemble spec JSON")->required();
    predict->add_option("--image", image_path, "PGM image")->required();

    CLI::App* sweep_gamma =
        app.add_subcommand("sweep-gamma", "train once per focusing parameter value");
    sweep_gamma->add_option("--config", config_path, "run config JSON")->required();
    sweep_gamma->add_option("--gammas", gamma_list, "comma-separated values")->required();

    CLI::App* sweep_bricks =
        app.add_subcommand("sweep-bricks", "train once per brick depth");
    sweep_bricks->add_option("--config", config_path, "run config JSON")->required();
    sweep_bricks->add_option("--bricks", brick_list, "comma-separated depths")->required();

    CLI::App* inspect = app.add_subcommand("gnt-inspect", "summarize a GNT file");
    inspect->add_option("path", gnt_path, "GNT file")->required();

    CLI::App* make_synth = app.add_subcommand("make-synth", "write a synthetic GNT fixture");
    make_synth->add_option("--classes", classes, "number of classes")->required();
    make_synth->add_option("--per-class", per_class, "samples per class")->required();
    make_synth->add_option("--side", side, "glyph image side");
    make_synth->add_option("--seed", seed, "generator seed");
    make_synth->add_option("--out", out_path, "output GNT path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*train) return cmd_train(config_path);
        if (*eval) return cmd_eval(checkpoint_path, data_path, blur_variant);
        if (*predict) return cmd_predict(ensemble_path, image_path);
        if (*sweep_gamma) return cmd_sweep_gamma(config_path, gamma_list);
        if (*sweep_bricks) return cmd_sweep_bricks(config_path, brick_list);
        if (*inspect) return cmd_gnt_inspect(gnt_path);
        if (*make_synth)
            return cmd_make_synth(classes, per_class, side, seed, out_path);
        std::cerr << error_json("InternalError", "no subcommand dispatched").dump()
                  << "\n";
        return 2;
    } catch (const hcr::ConfigError& e) {
        std::cerr << error_json("ConfigError", e.what()).dump() << "\n";
        return 1;
    } catch (const hcr::TrainingError& e) {
        std::cerr << error_json("TrainingError", e.what()).dump() << "\n";
        return 2;
    } catch (const hcr::ParseError& e) {
        std::cerr << error_json("ParseError", e.what()).dump() << "\n";
        return 2;
    } catch (const hcr::LoadError& e) {
        std::cerr << error_json("LoadError", e.what()).dump() << "\n";
        return 2;
    } catch (const hcr::Error& e) {
        std::cerr << error_json("Error", e.what()).dump() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << error_json("InternalError", e.what()).dump() << "\n";
        return 2;
    }
}
