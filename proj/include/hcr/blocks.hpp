#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hcr/ops.hpp"

namespace hcr {

inline constexpr float kBnEps = 1e-5f;
inline constexpr float kBnMomentum = 0.1f;

namespace detail {

/// Fan-in-scaled uniform init: U(-sqrt(6/fan_in), +sqrt(6/fan_in)).
inline void init_fan_in(Tensor& w, std::int64_t fan_in, Rng& rng) {
    const float limit = std::sqrt(6.0f / static_cast<float>(fan_in));
    for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform(-limit, limit);
}

}  // namespace detail

using StateEntry = std::pair<std::string, Tensor*>;

// ---------------------------------------------------------------------------
// Parameterized layers

struct ConvLayer {
    Param w, b;
    int stride, padding;

    ConvLayer(const std::string& prefix, int in_ch, int out_ch, int ksize, int stride_,
              int padding_, Rng& rng)
        : w{prefix + ".w", Tensor({out_ch, in_ch, ksize, ksize})},
          b{prefix + ".b", Tensor({out_ch})},
          stride(stride_),
          padding(padding_) {
        if (in_ch <= 0 || out_ch <= 0)
            throw ConfigError("conv layer channels must be positive");
        detail::init_fan_in(w.value, static_cast<std::int64_t>(in_ch) * ksize * ksize, rng);
    }

    Tensor forward(const Tensor& x) const {
        return conv2d_forward(x, w.value, b.value, stride, padding);
    }
    Tensor backward(const Tensor& x, const Tensor& gout) {
        return conv2d_backward(x, w.value, stride, padding, gout, w.grad, b.grad);
    }
    void collect(std::vector<Param*>& params) {
        params.push_back(&w);
        params.push_back(&b);
    }
};

struct BnLayer {
    Param scale, shift;
    Tensor running_mean, running_var;
    std::string prefix;

    BnLayer(const std::string& prefix_, int channels)
        : scale{prefix_ + ".scale", Tensor::full({channels}, 1.0f)},
          shift{prefix_ + ".shift", Tensor({channels})},
          running_mean(Tensor({channels})),
          running_var(Tensor::full({channels}, 1.0f)),
          prefix(prefix_) {}

    Tensor forward(const Tensor& x, Mode mode, BnCache* cache) {
        return batchnorm2d_forward(x, scale.value, shift.value, running_mean, running_var,
                                   kBnEps, kBnMomentum, mode, cache);
    }
    Tensor infer(const Tensor& x) const {
        // running stats are untouched in eval mode, so the const_cast is safe
        auto& self = const_cast<BnLayer&>(*this);
        return batchnorm2d_forward(x, scale.value, shift.value, self.running_mean,
                                   self.running_var, kBnEps, kBnMomentum, Mode::kEval,
                                   nullptr);
    }
    Tensor backward(const Tensor& x, const BnCache& cache, const Tensor& gout) {
        return batchnorm2d_backward(x, scale.value, cache, gout, scale.grad, shift.grad);
    }
    void collect(std::vector<Param*>& params, std::vector<StateEntry>& state) {
        params.push_back(&scale);
        params.push_back(&shift);
        state.emplace_back(prefix + ".running_mean", &running_mean);
        state.emplace_back(prefix + ".running_var", &running_var);
    }
};

struct DenseLayer {
    Param w, b;

    DenseLayer(const std::string& prefix, int in_features, int out_features, Rng& rng)
        : w{prefix + ".w", Tensor({in_features, out_features})},
          b{prefix + ".b", Tensor({out_features})} {
        if (in_features <= 0 || out_features <= 0)
            throw ConfigError("dense layer sizes must be positive");
        detail::init_fan_in(w.value, in_features, rng);
    }

    Tensor forward(const Tensor& x) const { return dense_forward(x, w.value, b.value); }
    Tensor backward(const Tensor& x, const Tensor& gout) {
        return dense_backward(x, w.value, gout, w.grad, b.grad);
    }
    void collect(std::vector<Param*>& params) {
        params.push_back(&w);
        params.push_back(&b);
    }
};

// ---------------------------------------------------------------------------
// Conv block: conv3x3 s1 p1 -> BN -> relu -> [maxpool 2x2] -> dropout

struct ConvBlockCtx {
    Tensor x;
    Tensor conv_out;
    Tensor relu_out;
    BnCache bn;
    std::vector<std::int64_t> pool_argmax;
    std::vector<float> drop_mask;
};

struct ConvBlock {
    ConvLayer conv;
    BnLayer bn;
    bool with_pool;
    float dropout_rate;

    ConvBlock(const std::string& prefix, int in_ch, int out_ch, bool with_pool_,
              float dropout_rate_, Rng& rng)
        : conv(prefix + ".conv", in_ch, out_ch, 3, 1, 1, rng),
          bn(prefix + ".bn", out_ch),
          with_pool(with_pool_),
          dropout_rate(dropout_rate_) {}

    Tensor forward(const Tensor& x, Mode mode, Rng& rng, ConvBlockCtx* ctx) {
        if (ctx) ctx->x = x;
        Tensor c = conv.forward(x);
        Tensor b = bn.forward(c, mode, ctx ? &ctx->bn : nullptr);
        if (ctx) ctx->conv_out = std::move(c);
        Tensor r = relu_forward(b);
        Tensor pooled =
            with_pool ? maxpool2x2_forward(r, ctx ? &ctx->pool_argmax : nullptr) : r;
        if (ctx) ctx->relu_out = std::move(r);
        return dropout_forward(pooled, dropout_rate, mode, rng,
                               ctx ? &ctx->drop_mask : nullptr);
    }

    Tensor infer(const Tensor& x) const {
        Tensor r = relu_forward(bn.infer(conv.forward(x)));
        if (with_pool) r = maxpool2x2_forward(r, nullptr);
        return r;  // dropout is identity in eval mode
    }

    Tensor backward(ConvBlockCtx& ctx, const Tensor& gout) {
        Tensor g = dropout_backward(ctx.drop_mask, gout);
        if (with_pool) g = maxpool2x2_backward(ctx.relu_out.shape(), ctx.pool_argmax, g);
        g = relu_backward(ctx.relu_out, g);
        g = bn.backward(ctx.conv_out, ctx.bn, g);
        return conv.backward(ctx.x, g);
    }

    void collect(std::vector<Param*>& params, std::vector<StateEntry>& state) {
        conv.collect(params);
        bn.collect(params, state);
    }
};

// ---------------------------------------------------------------------------
// Residual block. Shortcut: conv1x1 s2 -> BN. Main: conv3x3 s2 p1 -> BN ->
// relu -> conv3x3 s1 p1 -> BN. Output relu(shortcut + main); side halves.

struct ResBlockCtx {
    Tensor x;
    Tensor sc_conv_out;
    BnCache sc_bn;
    Tensor m1_conv_out;
    BnCache bn1;
    Tensor m1_relu_out;
    Tensor m2_conv_out;
    BnCache bn2;
    Tensor out;
};

struct ResBlock {
    ConvLayer shortcut;
    BnLayer sc_bn;
    ConvLayer conv1;
    BnLayer bn1;
    ConvLayer conv2;
    BnLayer bn2;

    ResBlock(const std::string& prefix, int in_ch, int out_ch, Rng& rng)
        : shortcut(prefix + ".short", in_ch, out_ch, 1, 2, 0, rng),
          sc_bn(prefix + ".short_bn", out_ch),
          conv1(prefix + ".conv1", in_ch, out_ch, 3, 2, 1, rng),
          bn1(prefix + ".bn1", out_ch),
          conv2(prefix + ".conv2", out_ch, out_ch, 3, 1, 1, rng),
          bn2(prefix + ".bn2", out_ch) {}

    static void check_side(const Tensor& x) {
        if (x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0)
            throw ShapeError("res block needs an even spatial side, got " +
                             std::to_string(x.dim(2)) + "x" + std::to_string(x.dim(3)));
    }

    Tensor forward(const Tensor& x, Mode mode, ResBlockCtx* ctx) {
        check_side(x);
        if (ctx) ctx->x = x;
        Tensor sc = shortcut.forward(x);
        Tensor sb = sc_bn.forward(sc, mode, ctx ? &ctx->sc_bn : nullptr);
        if (ctx) ctx->sc_conv_out = std::move(sc);
        Tensor m1 = conv1.forward(x);
        Tensor b1 = bn1.forward(m1, mode, ctx ? &ctx->bn1 : nullptr);
        if (ctx) ctx->m1_conv_out = std::move(m1);
        Tensor r1 = relu_forward(b1);
        Tensor m2 = conv2.forward(r1);
        if (ctx) ctx->m1_relu_out = std::move(r1);
        Tensor b2 = bn2.forward(m2, mode, ctx ? &ctx->bn2 : nullptr);
        if (ctx) ctx->m2_conv_out = std::move(m2);
        Tensor out = relu_forward(add(sb, b2));
        if (ctx) ctx->out = out;
        return out;
    }

    Tensor infer(const Tensor& x) const {
        check_side(x);
        Tensor sb = sc_bn.infer(shortcut.forward(x));
        Tensor r1 = relu_forward(bn1.infer(conv1.forward(x)));
        Tensor b2 = bn2.infer(conv2.forward(r1));
        return relu_forward(add(sb, b2));
    }

    Tensor backward(ResBlockCtx& ctx, const Tensor& gout) {
        Tensor g = relu_backward(ctx.out, gout);
        Tensor gsc = sc_bn.backward(ctx.sc_conv_out, ctx.sc_bn, g);
        Tensor gx = shortcut.backward(ctx.x, gsc);
        Tensor gm = bn2.backward(ctx.m2_conv_out, ctx.bn2, g);
        gm = conv2.backward(ctx.m1_relu_out, gm);
        gm = relu_backward(ctx.m1_relu_out, gm);
        gm = bn1.backward(ctx.m1_conv_out, ctx.bn1, gm);
        gm = conv1.backward(ctx.x, gm);
        return add(gx, gm);
    }

    void collect(std::vector<Param*>& params, std::vector<StateEntry>& state) {
        shortcut.collect(params);
        sc_bn.collect(params, state);
        conv1.collect(params);
        bn1.collect(params, state);
        conv2.collect(params);
        bn2.collect(params, state);
    }
};

// ---------------------------------------------------------------------------
// Inception block: parallel 1x1 / 3x3 / 5x5 convs (stride 1, side-preserving
// padding), each BN + relu, concatenated in that fixed order.

struct InceptionBranchCtx {
    Tensor conv_out;
    BnCache bn;
    Tensor relu_out;
};

struct InceptionCtx {
    Tensor x;
    InceptionBranchCtx branch[3];
};

struct InceptionBlock {
    ConvLayer conv1, conv3, conv5;
    BnLayer bn1, bn3, bn5;
    int branch_ch;

    InceptionBlock(const std::string& prefix, int in_ch, int branch_ch_, Rng& rng)
        : conv1(prefix + ".b1", in_ch, branch_ch_, 1, 1, 0, rng),
          conv3(prefix + ".b3", in_ch, branch_ch_, 3, 1, 1, rng),
          conv5(prefix + ".b5", in_ch, branch_ch_, 5, 1, 2, rng),
          bn1(prefix + ".b1_bn", branch_ch_),
          bn3(prefix + ".b3_bn", branch_ch_),
          bn5(prefix + ".b5_bn", branch_ch_),
          branch_ch(branch_ch_) {}

    Tensor forward(const Tensor& x, Mode mode, InceptionCtx* ctx) {
        if (ctx) ctx->x = x;
        ConvLayer* convs[3] = {&conv1, &conv3, &conv5};
        BnLayer* bns[3] = {&bn1, &bn3, &bn5};
        Tensor outs[3];
        for (int i = 0; i < 3; ++i) {
            Tensor c = convs[i]->forward(x);
            Tensor b = bns[i]->forward(c, mode, ctx ? &ctx->branch[i].bn : nullptr);
            if (ctx) ctx->branch[i].conv_out = std::move(c);
            outs[i] = relu_forward(b);
            if (ctx) ctx->branch[i].relu_out = outs[i];
        }
        return concat_channels({&outs[0], &outs[1], &outs[2]});
    }

    Tensor infer(const Tensor& x) const {
        Tensor o1 = relu_forward(bn1.infer(conv1.forward(x)));
        Tensor o3 = relu_forward(bn3.infer(conv3.forward(x)));
        Tensor o5 = relu_forward(bn5.infer(conv5.forward(x)));
        return concat_channels({&o1, &o3, &o5});
    }

    Tensor backward(InceptionCtx& ctx, const Tensor& gout) {
        auto parts = concat_channels_backward(gout, {branch_ch, branch_ch, branch_ch});
        ConvLayer* convs[3] = {&conv1, &conv3, &conv5};
        BnLayer* bns[3] = {&bn1, &bn3, &bn5};
        Tensor gx;
        for (int i = 0; i < 3; ++i) {
            Tensor g = relu_backward(ctx.branch[i].relu_out, parts[i]);
            g = bns[i]->backward(ctx.branch[i].conv_out, ctx.branch[i].bn, g);
            g = convs[i]->backward(ctx.x, g);
            gx = (i == 0) ? std::move(g) : add(gx, g);
        }
        return gx;
    }

    void collect(std::vector<Param*>& params, std::vector<StateEntry>& state) {
        conv1.collect(params);
        bn1.collect(params, state);
        conv3.collect(params);
        bn3.collect(params, state);
        conv5.collect(params);
        bn5.collect(params, state);
    }
};

// ---------------------------------------------------------------------------
// Heads

/// Auxiliary classifier: flatten -> dense -> relu -> dropout -> dense.
struct AuxHeadCtx {
    std::vector<int> in_shape;
    Tensor flat;
    Tensor fc1_out;
    Tensor relu_out;
    Tensor dropped;
    std::vector<float> drop_mask;
};

struct AuxHead {
    DenseLayer fc1;
    DenseLayer out;
    float dropout_rate;

    AuxHead(const std::string& prefix, int in_features, int hidden, int num_classes,
            float dropout_rate_, Rng& rng)
        : fc1(prefix + ".fc1", in_features, hidden, rng),
          out(prefix + ".out", hidden, num_classes, rng),
          dropout_rate(dropout_rate_) {}

    Tensor forward(const Tensor& x, Mode mode, Rng& rng, AuxHeadCtx* ctx) {
        Tensor flat = flatten(x);
        Tensor h = fc1.forward(flat);
        Tensor r = relu_forward(h);
        Tensor d = dropout_forward(r, dropout_rate, mode, rng,
                                   ctx ? &ctx->drop_mask : nullptr);
        Tensor logits = out.forward(d);
        if (ctx) {
            ctx->in_shape = x.shape();
            ctx->flat = std::move(flat);
            ctx->fc1_out = std::move(h);
            ctx->relu_out = std::move(r);
            ctx->dropped = std::move(d);
        }
        return logits;
    }

    Tensor infer(const Tensor& x) const {
        return out.forward(relu_forward(fc1.forward(flatten(x))));
    }

    /// Returns the gradient w.r.t. the (unflattened) brick output.
    Tensor backward(AuxHeadCtx& ctx, const Tensor& gout) {
        Tensor g = out.backward(ctx.dropped, gout);
        g = dropout_backward(ctx.drop_mask, g);
        g = relu_backward(ctx.relu_out, g);
        g = fc1.backward(ctx.flat, g);
        return g.reshaped(ctx.in_shape);
    }

    void collect(std::vector<Param*>& params) {
        fc1.collect(params);
        out.collect(params);
    }
};

/// Main classifier: flatten -> (dense -> relu -> dropout)* -> dense.
struct MainHeadCtx {
    std::vector<int> in_shape;
    Tensor flat;
    std::vector<Tensor> fc_out;
    std::vector<Tensor> relu_out;
    std::vector<Tensor> dropped;
    std::vector<std::vector<float>> drop_mask;
};

struct MainHead {
    std::vector<DenseLayer> hidden;
    DenseLayer out;
    float dropout_rate;

    static std::vector<DenseLayer> make_hidden(const std::string& prefix, int in_features,
                                               const std::vector<int>& units, Rng& rng) {
        std::vector<DenseLayer> layers;
        int in = in_features;
        for (std::size_t i = 0; i < units.size(); ++i) {
            layers.emplace_back(prefix + ".fc" + std::to_string(i + 1), in, units[i], rng);
            in = units[i];
        }
        return layers;
    }

    MainHead(const std::string& prefix, int in_features, const std::vector<int>& units,
             int num_classes, float dropout_rate_, Rng& rng)
        : hidden(make_hidden(prefix, in_features, units, rng)),
          out(prefix + ".out", units.empty() ? in_features : units.back(), num_classes,
              rng),
          dropout_rate(dropout_rate_) {}

    Tensor forward(const Tensor& x, Mode mode, Rng& rng, MainHeadCtx* ctx) {
        Tensor cur = flatten(x);
        if (ctx) {
            ctx->in_shape = x.shape();
            ctx->flat = cur;
            ctx->fc_out.clear();
            ctx->relu_out.clear();
            ctx->dropped.clear();
            ctx->drop_mask.assign(hidden.size(), {});
        }
        for (std::size_t i = 0; i < hidden.size(); ++i) {
            Tensor h = hidden[i].forward(cur);
            Tensor r = relu_forward(h);
            cur = dropout_forward(r, dropout_rate, mode, rng,
                                  ctx ? &ctx->drop_mask[i] : nullptr);
            if (ctx) {
                ctx->fc_out.push_back(std::move(h));
                ctx->relu_out.push_back(std::move(r));
                ctx->dropped.push_back(cur);
            }
        }
        return out.forward(cur);
    }

    Tensor infer(const Tensor& x) const {
        Tensor cur = flatten(x);
        for (const DenseLayer& layer : hidden) cur = relu_forward(layer.forward(cur));
        return out.forward(cur);
    }

    Tensor backward(MainHeadCtx& ctx, const Tensor& gout) {
        const Tensor& last_in = hidden.empty() ? ctx.flat : ctx.dropped.back();
        Tensor g = out.backward(last_in, gout);
        for (std::size_t i = hidden.size(); i-- > 0;) {
            g = dropout_backward(ctx.drop_mask[i], g);
            g = relu_backward(ctx.relu_out[i], g);
            const Tensor& in = (i == 0) ? ctx.flat : ctx.dropped[i - 1];
            g = hidden[i].backward(in, g);
        }
        return g.reshaped(ctx.in_shape);
    }

    void collect(std::vector<Param*>& params) {
        for (DenseLayer& layer : hidden) layer.collect(params);
        out.collect(params);
    }
};

}  // namespace hcr
