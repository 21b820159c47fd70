#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "hcr/checkpoint.hpp"
#include "hcr/config.hpp"
#include "hcr/dataset.hpp"
#include "hcr/image.hpp"
#include "hcr/model.hpp"

namespace hcr {

struct EnsembleMember {
    std::string checkpoint_path;
    BlurSpec blur;
    double weight = 0.0;
};

struct EnsembleSpec {
    std::vector<EnsembleMember> members;
    int resize_side = 280;
    int crop_side = 256;

    void validate() const {
        if (members.size() != 3)
            throw ConfigError("ensemble needs exactly 3 members, got " +
                              std::to_string(members.size()));
        double sum = 0.0;
        for (const EnsembleMember& m : members) {
            if (m.checkpoint_path.empty())
                throw ConfigError("ensemble member is missing a checkpoint path");
            m.blur.validate();
            if (m.weight < 0.0) throw ConfigError("ensemble weights must be >= 0");
            sum += m.weight;
        }
        if (std::abs(sum - 1.0) > 1e-6)
            throw ConfigError("ensemble weights must sum to 1, got " +
                              std::to_string(sum));
        if (resize_side < 1 || crop_side < 1)
            throw ConfigError("crop geometry sides must be positive");
        if (crop_side > resize_side)
            throw ConfigError("crop_side " + std::to_string(crop_side) +
                              " exceeds resize_side " + std::to_string(resize_side));
    }
};

inline constexpr double kDefaultEnsembleWeights[3] = {0.3, 0.2, 0.5};

struct CropSet {
    std::vector<GrayImage> crops;
    std::vector<std::pair<int, int>> offsets;  // (row, col)
};

/// Resize to resize_side, then cut the four corner windows and the center
/// window of crop_side each.
inline CropSet five_crops(const GrayImage& image, int resize_side, int crop_side) {
    if (resize_side < 1 || crop_side < 1)
        throw ConfigError("crop geometry sides must be positive");
    if (crop_side > resize_side)
        throw ConfigError("crop_side " + std::to_string(crop_side) +
                          " exceeds resize_side " + std::to_string(resize_side));
    const GrayImage resized = resize(image, resize_side);
    const int delta = resize_side - crop_side;
    CropSet set;
    set.offsets = {{0, 0}, {0, delta}, {delta, 0}, {delta, delta},
                   {delta / 2, delta / 2}};
    for (const auto& [oy, ox] : set.offsets) {
        GrayImage crop(crop_side, crop_side);
        for (int y = 0; y < crop_side; ++y)
            for (int x = 0; x < crop_side; ++x)
                crop.at(y, x) = resized.at(y + oy, x + ox);
        set.crops.push_back(std::move(crop));
    }
    return set;
}

/// One member's eval-mode main logits for one crop, after that member's
/// blur. Returns a 1 x num_classes tensor.
inline Tensor member_logits(const Model& model, const GrayImage& crop,
                            const BlurSpec& blur, bool ink_low = true) {
    std::vector<Sample> one{{gaussian_blur(crop, blur), 0, 0}};
    const std::vector<int> idx{0};
    return model.infer_main(make_batch(one, idx, ink_low, nullptr));
}

/// logits[crop][member], each 1 x K: per crop the weighted member sum, then
/// the plain mean over crops. Accumulates in double.
inline Tensor aggregate(const std::vector<std::vector<Tensor>>& logits,
                        const std::vector<double>& weights) {
    if (logits.empty()) throw ConfigError("aggregate needs at least one crop");
    const std::size_t num_members = logits.front().size();
    if (weights.size() != num_members)
        throw ConfigError("weight count " + std::to_string(weights.size()) +
                          " does not match member count " +
                          std::to_string(num_members));
    const Tensor& first = logits.front().front();
    if (first.ndim() != 2 || first.dim(0) != 1)
        throw ShapeError("member logits must be 1 x num_classes");
    const int k = first.dim(1);
    std::vector<double> acc(static_cast<std::size_t>(k), 0.0);
    for (const auto& crop_logits : logits) {
        if (crop_logits.size() != num_members)
            throw ShapeError("ragged member logits across crops");
        for (std::size_t m = 0; m < num_members; ++m) {
            const Tensor& l = crop_logits[m];
            if (l.ndim() != 2 || l.dim(0) != 1 || l.dim(1) != k)
                throw ShapeError("member logit shapes disagree");
            for (int j = 0; j < k; ++j)
                acc[static_cast<std::size_t>(j)] +=
                    weights[m] * static_cast<double>(l.at2(0, j));
        }
    }
    Tensor out({1, k});
    for (int j = 0; j < k; ++j)
        out.at2(0, j) = static_cast<float>(acc[static_cast<std::size_t>(j)] /
                                           static_cast<double>(logits.size()));
    return out;
}

struct Prediction {
    int class_index = 0;
    std::vector<double> probabilities;
};

/// Softmax in double with max subtraction; argmax ties go to the lowest
/// class index.
inline Prediction softmax_predict(const Tensor& logits) {
    if (logits.ndim() != 2 || logits.dim(0) != 1)
        throw ShapeError("softmax_predict expects 1 x num_classes logits");
    const int k = logits.dim(1);
    double max_logit = logits.at2(0, 0);
    for (int j = 1; j < k; ++j)
        max_logit = std::max(max_logit, static_cast<double>(logits.at2(0, j)));
    Prediction pred;
    pred.probabilities.resize(static_cast<std::size_t>(k));
    double sum = 0.0;
    for (int j = 0; j < k; ++j) {
        const double e = std::exp(static_cast<double>(logits.at2(0, j)) - max_logit);
        pred.probabilities[static_cast<std::size_t>(j)] = e;
        sum += e;
    }
    for (double& p : pred.probabilities) p /= sum;
    for (int j = 1; j < k; ++j)
        if (logits.at2(0, j) > logits.at2(0, pred.class_index)) pred.class_index = j;
    return pred;
}

/// Member models restored from their checkpoints, ready for inference.
struct LoadedEnsemble {
    EnsembleSpec spec;
    std::vector<std::unique_ptr<Model>> models;
    std::vector<std::uint16_t> label_tags;  // from the first member, may be empty
};

/// Restores all member checkpoints up front; any load problem surfaces here,
/// before any inference happens.
inline LoadedEnsemble load_ensemble(const EnsembleSpec& spec) {
    spec.validate();
    LoadedEnsemble ens;
    ens.spec = spec;
    for (const EnsembleMember& m : spec.members) {
        LoadedCheckpoint loaded = read_checkpoint_file(m.checkpoint_path);
        if (ens.label_tags.empty()) ens.label_tags = loaded.meta.label_tags;
        ens.models.push_back(restore_model(loaded));
    }
    const ModelSpec& head = ens.models.front()->spec();
    for (const auto& model : ens.models) {
        if (model->spec().num_classes != head.num_classes)
            throw LoadError("ensemble members disagree on num_classes");
        if (model->spec().input_side != spec.crop_side)
            throw LoadError("member input side " +
                            std::to_string(model->spec().input_side) +
                            " does not match crop_side " +
                            std::to_string(spec.crop_side));
    }
    return ens;
}

inline Tensor ensemble_logits(const LoadedEnsemble& ens, const GrayImage& image,
                              bool ink_low = true) {
    const CropSet crops = five_crops(image, ens.spec.resize_side, ens.spec.crop_side);
    std::vector<std::vector<Tensor>> logits;
    std::vector<double> weights;
    for (const EnsembleMember& m : ens.spec.members) weights.push_back(m.weight);
    for (const GrayImage& crop : crops.crops) {
        std::vector<Tensor> per_member;
        for (std::size_t m = 0; m < ens.models.size(); ++m)
            per_member.push_back(member_logits(*ens.models[m], crop,
                                               ens.spec.members[m].blur, ink_low));
        logits.push_back(std::move(per_member));
    }
    return aggregate(logits, weights);
}

inline Prediction predict(const LoadedEnsemble& ens, const GrayImage& image,
                          bool ink_low = true) {
    return softmax_predict(ensemble_logits(ens, image, ink_low));
}

inline Json to_json(const EnsembleSpec& spec) {
    Json members = Json::array();
    for (const EnsembleMember& m : spec.members)
        members.push_back(Json{{"checkpoint", m.checkpoint_path},
                               {"kernel_side", m.blur.kernel_side},
                               {"sigma", m.blur.sigma},
                               {"weight", m.weight}});
    return Json{{"members", members},
                {"resize_side", spec.resize_side},
                {"crop_side", spec.crop_side}};
}

namespace detail {

/// Blur settings are the three canonical variants; free-form side and sigma
/// must match one of them.
inline BlurSpec member_blur_from_json(const Json& j) {
    if (j.contains("variant")) {
        BlurSpec spec = BlurSpec::for_variant(field_or(j, "member", "variant", 1));
        if (j.contains("kernel_side") &&
            field_or(j, "member", "kernel_side", 0) != spec.kernel_side)
            throw ConfigError("member kernel_side contradicts its variant");
        if (j.contains("sigma") &&
            field_or(j, "member", "sigma", 0.0f) != spec.sigma)
            throw ConfigError("member sigma contradicts its variant");
        return spec;
    }
    const int side = field_or(j, "member", "kernel_side", 1);
    const float sigma = field_or(j, "member", "sigma", 1.0f);
    for (int v = 1; v <= 3; ++v) {
        const BlurSpec canon = BlurSpec::for_variant(v);
        if (canon.kernel_side == side && (side == 1 || canon.sigma == sigma))
            return canon;
    }
    throw ConfigError("member blur (side " + std::to_string(side) + ", sigma " +
                      std::to_string(sigma) + ") matches no known variant");
}

}  // namespace detail

inline EnsembleSpec ensemble_spec_from_json(const Json& j) {
    detail::reject_unknown_keys(j, "ensemble",
                                {"members", "resize_side", "crop_side"});
    if (!j.contains("members") || !j.at("members").is_array())
        throw ConfigError("ensemble requires a members array");
    EnsembleSpec spec;
    spec.resize_side = detail::field_or(j, "ensemble", "resize_side", spec.resize_side);
    spec.crop_side = detail::field_or(j, "ensemble", "crop_side", spec.crop_side);
    std::size_t index = 0;
    bool any_weight = false;
    for (const Json& jm : j.at("members")) {
        detail::reject_unknown_keys(
            jm, "member", {"checkpoint", "variant", "kernel_side", "sigma", "weight"});
        EnsembleMember m;
        m.checkpoint_path = detail::field_or(jm, "member", "checkpoint", std::string{});
        m.blur = detail::member_blur_from_json(jm);
        any_weight = any_weight || jm.contains("weight");
        m.weight = detail::field_or(jm, "member", "weight",
                                    index < 3 ? kDefaultEnsembleWeights[index] : 0.0);
        spec.members.push_back(std::move(m));
        ++index;
    }
    if (any_weight)
        for (const Json& jm : j.at("members"))
            if (!jm.contains("weight"))
                throw ConfigError("either every member lists a weight or none does");
    spec.validate();
    return spec;
}

inline EnsembleSpec load_ensemble_spec(const std::string& path) {
    return ensemble_spec_from_json(load_json_file(path));
}

}  // namespace hcr
