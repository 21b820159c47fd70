#pragma once

#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hcr/dataset.hpp"
#include "hcr/image.hpp"
#include "hcr/loss.hpp"
#include "hcr/model.hpp"
#include "hcr/trainer.hpp"

namespace hcr {

using Json = nlohmann::json;

inline Json parse_json_text(const std::string& text) {
    try {
        return Json::parse(text);
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("invalid JSON: ") + e.what());
    }
}

inline Json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_json_text(buf.str());
}

namespace detail {

inline void require_object(const Json& j, const std::string& what) {
    if (!j.is_object()) throw ConfigError(what + " must be a JSON object");
}

inline void reject_unknown_keys(const Json& j, const std::string& what,
                                std::initializer_list<const char*> allowed) {
    require_object(j, what);
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* k : allowed) known = known || item.key() == k;
        if (!known)
            throw ConfigError("unknown key \"" + item.key() + "\" in " + what);
    }
}

template <typename T>
T field_or(const Json& j, const std::string& what, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const Json::exception&) {
        throw ConfigError(what + "." + key + " has the wrong type");
    }
}

}  // namespace detail

inline Json to_json(const ModelSpec& spec) {
    return Json{{"num_bricks", spec.num_bricks},
                {"base_filters", spec.base_filters},
                {"num_classes", spec.num_classes},
                {"input_side", spec.input_side},
                {"brick_dropout", spec.brick_dropout},
                {"head_dropout", spec.head_dropout},
                {"aux_dense_units", spec.aux_dense_units},
                {"main_dense_units", spec.main_dense_units}};
}

/// num_classes may be omitted or 0 here; the caller fills it from the data
/// before validating.
inline ModelSpec model_spec_from_json(const Json& j) {
    detail::reject_unknown_keys(j, "model",
                                {"num_bricks", "base_filters", "num_classes",
                                 "input_side", "brick_dropout", "head_dropout",
                                 "aux_dense_units", "main_dense_units"});
    ModelSpec spec;
    spec.num_bricks = detail::field_or(j, "model", "num_bricks", spec.num_bricks);
    spec.base_filters = detail::field_or(j, "model", "base_filters", spec.base_filters);
    spec.num_classes = detail::field_or(j, "model", "num_classes", 0);
    spec.input_side = detail::field_or(j, "model", "input_side", spec.input_side);
    spec.brick_dropout = detail::field_or(j, "model", "brick_dropout", spec.brick_dropout);
    spec.head_dropout = detail::field_or(j, "model", "head_dropout", spec.head_dropout);
    spec.aux_dense_units =
        detail::field_or(j, "model", "aux_dense_units", spec.aux_dense_units);
    spec.main_dense_units =
        detail::field_or(j, "model", "main_dense_units", spec.main_dense_units);
    return spec;
}

inline Json to_json(const FocalLossConfig& cfg) {
    return Json{{"gamma", cfg.gamma},
                {"alpha", cfg.alpha},
                {"head_weights", cfg.head_weights}};
}

/// alpha and head_weights may be omitted (left empty); resolve_loss_config
/// fills them from the training data and the model depth.
inline FocalLossConfig loss_config_from_json(const Json& j) {
    detail::reject_unknown_keys(j, "loss", {"gamma", "alpha", "head_weights"});
    FocalLossConfig cfg;
    cfg.gamma = detail::field_or(j, "loss", "gamma", cfg.gamma);
    cfg.alpha = detail::field_or(j, "loss", "alpha", std::vector<float>{});
    cfg.head_weights =
        detail::field_or(j, "loss", "head_weights", std::vector<float>{});
    return cfg;
}

/// Empty alpha becomes inverse-frequency weights over the training set;
/// empty head weights become the depth defaults.
inline FocalLossConfig resolve_loss_config(FocalLossConfig cfg,
                                           const std::vector<Sample>& train_set,
                                           int num_classes, int num_bricks) {
    if (cfg.alpha.empty())
        cfg.alpha = alpha_from_frequencies(class_counts(train_set, num_classes));
    if (cfg.head_weights.empty()) cfg.head_weights = default_head_weights(num_bricks);
    cfg.validate(num_classes, num_bricks);
    return cfg;
}

inline Json to_json(const TrainConfig& cfg) {
    return Json{{"epochs", cfg.epochs},
                {"batch_size", cfg.batch_size},
                {"learning_rate", cfg.learning_rate},
                {"momentum", cfg.momentum},
                {"patience", cfg.patience},
                {"seed", cfg.seed},
                {"eval_every", cfg.eval_every},
                {"early_stopping", cfg.early_stopping},
                {"stop_at_test_accuracy", cfg.stop_at_test_accuracy},
                {"stop_at_train_accuracy", cfg.stop_at_train_accuracy}};
}

inline TrainConfig train_config_from_json(const Json& j) {
    detail::reject_unknown_keys(
        j, "train",
        {"epochs", "batch_size", "learning_rate", "momentum", "patience", "seed",
         "eval_every", "early_stopping", "stop_at_test_accuracy",
         "stop_at_train_accuracy"});
    TrainConfig cfg;
    cfg.epochs = detail::field_or(j, "train", "epochs", cfg.epochs);
    cfg.batch_size = detail::field_or(j, "train", "batch_size", cfg.batch_size);
    cfg.learning_rate = detail::field_or(j, "train", "learning_rate", cfg.learning_rate);
    cfg.momentum = detail::field_or(j, "train", "momentum", cfg.momentum);
    cfg.patience = detail::field_or(j, "train", "patience", cfg.patience);
    cfg.seed = detail::field_or(j, "train", "seed", cfg.seed);
    cfg.eval_every = detail::field_or(j, "train", "eval_every", cfg.eval_every);
    cfg.early_stopping =
        detail::field_or(j, "train", "early_stopping", cfg.early_stopping);
    cfg.stop_at_test_accuracy = detail::field_or(j, "train", "stop_at_test_accuracy",
                                                 cfg.stop_at_test_accuracy);
    cfg.stop_at_train_accuracy = detail::field_or(j, "train", "stop_at_train_accuracy",
                                                  cfg.stop_at_train_accuracy);
    return cfg;
}

/// Training data either comes from a GNT file or is synthesized on the fly;
/// exactly one of the two must be configured.
struct DataConfig {
    std::string gnt_path;
    int synth_classes = 0;
    int synth_per_class = 0;
    std::uint64_t synth_seed = 1;
    double train_fraction = 0.75;
    std::uint64_t split_seed = 1;

    bool operator==(const DataConfig&) const = default;

    void validate() const {
        const bool has_gnt = !gnt_path.empty();
        const bool has_synth = synth_classes > 0 || synth_per_class > 0;
        if (has_gnt == has_synth)
            throw ConfigError("data needs exactly one of gnt_path or synth_classes");
        if (has_synth && (synth_classes < 2 || synth_per_class < 1))
            throw ConfigError("synth data needs synth_classes >= 2 and synth_per_class >= 1");
        if (!(train_fraction > 0.0 && train_fraction < 1.0))
            throw ConfigError("train_fraction must be in (0, 1)");
    }
};

inline Json to_json(const DataConfig& cfg) {
    return Json{{"gnt_path", cfg.gnt_path},
                {"synth_classes", cfg.synth_classes},
                {"synth_per_class", cfg.synth_per_class},
                {"synth_seed", cfg.synth_seed},
                {"train_fraction", cfg.train_fraction},
                {"split_seed", cfg.split_seed}};
}

inline DataConfig data_config_from_json(const Json& j) {
    detail::reject_unknown_keys(j, "data",
                                {"gnt_path", "synth_classes", "synth_per_class",
                                 "synth_seed", "train_fraction", "split_seed"});
    DataConfig cfg;
    cfg.gnt_path = detail::field_or(j, "data", "gnt_path", cfg.gnt_path);
    cfg.synth_classes = detail::field_or(j, "data", "synth_classes", cfg.synth_classes);
    cfg.synth_per_class =
        detail::field_or(j, "data", "synth_per_class", cfg.synth_per_class);
    cfg.synth_seed = detail::field_or(j, "data", "synth_seed", cfg.synth_seed);
    cfg.train_fraction =
        detail::field_or(j, "data", "train_fraction", cfg.train_fraction);
    cfg.split_seed = detail::field_or(j, "data", "split_seed", cfg.split_seed);
    return cfg;
}

struct RunConfig {
    ModelSpec model;
    FocalLossConfig loss;
    TrainConfig train;
    int blur_variant = 1;
    DataConfig data;
    std::string output_dir = "out";

    void validate() const {
        if (blur_variant < 1 || blur_variant > 3)
            throw ConfigError("blur_variant must be 1, 2 or 3");
        if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
        train.validate();
        data.validate();
    }
};

inline Json to_json(const RunConfig& cfg) {
    return Json{{"model", to_json(cfg.model)},   {"loss", to_json(cfg.loss)},
                {"train", to_json(cfg.train)},   {"blur_variant", cfg.blur_variant},
                {"data", to_json(cfg.data)},     {"output_dir", cfg.output_dir}};
}

inline RunConfig run_config_from_json(const Json& j) {
    detail::reject_unknown_keys(
        j, "config", {"model", "loss", "train", "blur_variant", "data", "output_dir"});
    RunConfig cfg;
    cfg.model.num_classes = 0;
    if (j.contains("model")) cfg.model = model_spec_from_json(j.at("model"));
    if (j.contains("loss")) cfg.loss = loss_config_from_json(j.at("loss"));
    if (j.contains("train")) cfg.train = train_config_from_json(j.at("train"));
    cfg.blur_variant = detail::field_or(j, "config", "blur_variant", cfg.blur_variant);
    if (!j.contains("data")) throw ConfigError("config requires a data section");
    cfg.data = data_config_from_json(j.at("data"));
    cfg.output_dir = detail::field_or(j, "config", "output_dir", cfg.output_dir);
    cfg.validate();
    return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
    return run_config_from_json(load_json_file(path));
}

}  // namespace hcr
