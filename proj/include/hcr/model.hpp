#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "hcr/blocks.hpp"

namespace hcr {

struct ModelSpec {
    int num_bricks = 5;
    int base_filters = 32;
    int num_classes = 0;
    int input_side = 256;
    float brick_dropout = 0.2f;
    float head_dropout = 0.5f;
    int aux_dense_units = 256;
    std::vector<int> main_dense_units = {1024, 512};

    bool operator==(const ModelSpec&) const = default;

    void validate() const {
        if (num_bricks < 2 || num_bricks > 5)
            throw ConfigError("num_bricks must be in [2, 5], got " +
                              std::to_string(num_bricks));
        if (base_filters < 1) throw ConfigError("base_filters must be positive");
        if (num_classes < 2)
            throw ConfigError("num_classes must be at least 2, got " +
                              std::to_string(num_classes));
        if (input_side < 1) throw ConfigError("input_side must be positive");
        std::int64_t div = 1;
        for (int i = 1; i < num_bricks; ++i) div *= 4;
        if (input_side % div != 0)
            throw ConfigError("input_side " + std::to_string(input_side) +
                              " must be divisible by 4^(num_bricks-1) = " +
                              std::to_string(div));
        if (input_side / div < 1)
            throw ConfigError("input_side " + std::to_string(input_side) +
                              " collapses below 1 pixel before the final brick");
        if (brick_dropout < 0.0f || brick_dropout >= 1.0f ||
            head_dropout < 0.0f || head_dropout >= 1.0f)
            throw ConfigError("dropout rates must be in [0, 1)");
        if (aux_dense_units < 1) throw ConfigError("aux_dense_units must be positive");
        for (int u : main_dense_units)
            if (u < 1) throw ConfigError("main_dense_units entries must be positive");
    }

    /// Conv-block filter count of 1-indexed brick i: base_filters * 2^(i-1).
    int brick_filters(int i) const { return base_filters << (i - 1); }
};

struct HeadOutputs {
    std::vector<Tensor> aux_logits;
    Tensor main_logits;
};

/// Per-brick shape arithmetic, computable without building the network.
struct ShapeTrace {
    std::vector<int> filters;               // conv filter count per brick
    std::vector<int> out_channels;          // channels leaving each brick
    std::vector<int> out_side;              // spatial side leaving each brick
    std::vector<std::int64_t> aux_features;  // flattened width per aux head
    std::int64_t main_features = 0;
};

inline ShapeTrace shape_trace(const ModelSpec& spec) {
    spec.validate();
    ShapeTrace t;
    int side = spec.input_side;
    for (int i = 1; i < spec.num_bricks; ++i) {
        const int w = spec.brick_filters(i);
        side /= 4;
        t.filters.push_back(w);
        t.out_channels.push_back(3 * w);
        t.out_side.push_back(side);
        t.aux_features.push_back(static_cast<std::int64_t>(3 * w) * side * side);
    }
    const int wn = spec.brick_filters(spec.num_bricks);
    t.filters.push_back(wn);
    t.out_channels.push_back(wn);
    t.out_side.push_back(side);
    t.main_features = static_cast<std::int64_t>(wn) * side * side;
    return t;
}

struct ModelTrace {
    std::vector<ConvBlockCtx> conv;
    std::vector<ResBlockCtx> res;
    std::vector<InceptionCtx> incep;
    std::vector<AuxHeadCtx> aux;
    MainHeadCtx main;
};

/// The brick network: bricks 1..n-1 are ConvBlock(pool) -> ResBlock ->
/// InceptionBlock, each followed by an auxiliary head; the final brick is a
/// pool-free ConvBlock feeding the main head. Spatial side quarters per full
/// brick; channel width doubles per brick.
class Model {
  public:
    Model(const ModelSpec& spec, Rng& rng) : spec_(spec) {
        spec.validate();
        const int n = spec.num_bricks;
        int in_ch = 1;
        int side = spec.input_side;
        std::vector<int> aux_features;
        for (int i = 1; i < n; ++i) {
            const int w = spec.brick_filters(i);
            const std::string prefix = "brick" + std::to_string(i);
            convs_.emplace_back(prefix, in_ch, w, true, spec.brick_dropout, rng);
            res_.emplace_back(prefix + ".res", w, w, rng);
            incep_.emplace_back(prefix + ".incep", w, w, rng);
            in_ch = 3 * w;
            side /= 4;
            aux_features.push_back(in_ch * side * side);
        }
        const int wn = spec.brick_filters(n);
        convs_.emplace_back("brick" + std::to_string(n), in_ch, wn, false,
                            spec.head_dropout, rng);
        for (int i = 1; i < n; ++i)
            aux_.emplace_back("aux" + std::to_string(i),
                              aux_features[static_cast<std::size_t>(i - 1)],
                              spec.aux_dense_units, spec.num_classes, spec.head_dropout,
                              rng);
        main_ = std::make_unique<MainHead>("main", wn * side * side,
                                           spec.main_dense_units, spec.num_classes,
                                           spec.head_dropout, rng);

        for (int i = 0; i < n; ++i) {
            convs_[static_cast<std::size_t>(i)].collect(params_, state_);
            if (i < n - 1) {
                res_[static_cast<std::size_t>(i)].collect(params_, state_);
                incep_[static_cast<std::size_t>(i)].collect(params_, state_);
            }
        }
        for (AuxHead& h : aux_) h.collect(params_);
        main_->collect(params_);
    }

    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    const ModelSpec& spec() const { return spec_; }

    HeadOutputs forward(const Tensor& batch, Mode mode, Rng& rng, ModelTrace* trace) {
        check_input(batch);
        const int n = spec_.num_bricks;
        if (trace) {
            trace->conv.assign(static_cast<std::size_t>(n), {});
            trace->res.assign(static_cast<std::size_t>(n - 1), {});
            trace->incep.assign(static_cast<std::size_t>(n - 1), {});
            trace->aux.assign(static_cast<std::size_t>(n - 1), {});
        }
        HeadOutputs out;
        Tensor cur = batch;
        for (int i = 0; i < n - 1; ++i) {
            const auto ui = static_cast<std::size_t>(i);
            cur = convs_[ui].forward(cur, mode, rng, trace ? &trace->conv[ui] : nullptr);
            cur = res_[ui].forward(cur, mode, trace ? &trace->res[ui] : nullptr);
            cur = incep_[ui].forward(cur, mode, trace ? &trace->incep[ui] : nullptr);
            out.aux_logits.push_back(
                aux_[ui].forward(cur, mode, rng, trace ? &trace->aux[ui] : nullptr));
        }
        const auto last = static_cast<std::size_t>(n - 1);
        cur = convs_[last].forward(cur, mode, rng, trace ? &trace->conv[last] : nullptr);
        out.main_logits = main_->forward(cur, mode, rng, trace ? &trace->main : nullptr);
        return out;
    }

    /// Eval-mode forward without bookkeeping; safe to call concurrently.
    HeadOutputs infer(const Tensor& batch) const {
        check_input(batch);
        const int n = spec_.num_bricks;
        HeadOutputs out;
        Tensor cur = batch;
        for (int i = 0; i < n - 1; ++i) {
            const auto ui = static_cast<std::size_t>(i);
            cur = convs_[ui].infer(cur);
            cur = res_[ui].infer(cur);
            cur = incep_[ui].infer(cur);
            out.aux_logits.push_back(aux_[ui].infer(cur));
        }
        cur = convs_[static_cast<std::size_t>(n - 1)].infer(cur);
        out.main_logits = main_->infer(cur);
        return out;
    }

    /// Main-head logits only; the aux heads are training-time scaffolding.
    Tensor infer_main(const Tensor& batch) const {
        check_input(batch);
        const int n = spec_.num_bricks;
        Tensor cur = batch;
        for (int i = 0; i < n - 1; ++i) {
            const auto ui = static_cast<std::size_t>(i);
            cur = convs_[ui].infer(cur);
            cur = res_[ui].infer(cur);
            cur = incep_[ui].infer(cur);
        }
        cur = convs_[static_cast<std::size_t>(n - 1)].infer(cur);
        return main_->infer(cur);
    }

    /// Accumulates parameter gradients from per-head logit gradients
    /// (aux heads in brick order, then main). Returns the input gradient.
    Tensor backward(ModelTrace& trace, const std::vector<Tensor>& aux_grads,
                    const Tensor& main_grad) {
        const int n = spec_.num_bricks;
        if (static_cast<int>(aux_grads.size()) != n - 1)
            throw ShapeError("backward expects " + std::to_string(n - 1) +
                             " aux gradients, got " + std::to_string(aux_grads.size()));
        Tensor g = main_->backward(trace.main, main_grad);
        g = convs_[static_cast<std::size_t>(n - 1)].backward(
            trace.conv[static_cast<std::size_t>(n - 1)], g);
        for (int i = n - 2; i >= 0; --i) {
            const auto ui = static_cast<std::size_t>(i);
            g = add(g, aux_[ui].backward(trace.aux[ui], aux_grads[ui]));
            g = incep_[ui].backward(trace.incep[ui], g);
            g = res_[ui].backward(trace.res[ui], g);
            g = convs_[ui].backward(trace.conv[ui], g);
        }
        return g;
    }

    std::vector<Param*>& params() { return params_; }
    const std::vector<Param*>& params() const { return params_; }
    std::vector<StateEntry>& state() { return state_; }
    const std::vector<StateEntry>& state() const { return state_; }

    void zero_grad() {
        for (Param* p : params_) p->zero_grad();
    }

    std::int64_t param_count() const {
        std::int64_t total = 0;
        for (const Param* p : params_) total += p->value.numel();
        return total;
    }

    /// Trainable parameters plus BN running stats, keyed by stable names.
    std::vector<std::pair<std::string, Tensor>> save_weights() const {
        std::vector<std::pair<std::string, Tensor>> entries;
        entries.reserve(params_.size() + state_.size());
        for (const Param* p : params_) entries.emplace_back(p->name, p->value);
        for (const StateEntry& s : state_) entries.emplace_back(s.first, *s.second);
        return entries;
    }

    void load_weights(const std::vector<std::pair<std::string, Tensor>>& entries) {
        std::size_t hit = 0;
        for (const auto& [name, value] : entries) {
            Tensor* dst = find_tensor(name);
            if (!dst) throw LoadError("unknown tensor name in weights: " + name);
            if (!dst->same_shape(value))
                throw LoadError("shape mismatch for " + name + ": model has " +
                                dst->shape_str() + ", weights have " + value.shape_str());
            *dst = value;
            ++hit;
        }
        if (hit != params_.size() + state_.size())
            throw LoadError("weights cover " + std::to_string(hit) + " of " +
                            std::to_string(params_.size() + state_.size()) +
                            " model tensors");
    }

  private:
    void check_input(const Tensor& batch) const {
        if (batch.ndim() != 4 || batch.dim(1) != 1)
            throw ShapeError("model input must be N x 1 x side x side grayscale");
        if (batch.dim(2) != spec_.input_side || batch.dim(3) != spec_.input_side)
            throw ShapeError("model input side " + std::to_string(batch.dim(2)) + "x" +
                             std::to_string(batch.dim(3)) + " does not match spec side " +
                             std::to_string(spec_.input_side));
    }

    Tensor* find_tensor(const std::string& name) {
        for (Param* p : params_)
            if (p->name == name) return &p->value;
        for (StateEntry& s : state_)
            if (s.first == name) return s.second;
        return nullptr;
    }

    ModelSpec spec_;
    std::vector<ConvBlock> convs_;
    std::vector<ResBlock> res_;
    std::vector<InceptionBlock> incep_;
    std::vector<AuxHead> aux_;
    std::unique_ptr<MainHead> main_;
    std::vector<Param*> params_;
    std::vector<StateEntry> state_;
};

}  // namespace hcr
