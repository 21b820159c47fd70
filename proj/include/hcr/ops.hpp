#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "hcr/common.hpp"
#include "hcr/parallel.hpp"
#include "hcr/rng.hpp"
#include "hcr/tensor.hpp"

namespace hcr {

namespace detail {

/// Dot product with four partial sums in a fixed combine order.
/// The order is part of the determinism contract: same inputs, same bits.
inline double dot(const float* a, const float* b, std::int64_t n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += static_cast<double>(a[i]) * b[i];
        s1 += static_cast<double>(a[i + 1]) * b[i + 1];
        s2 += static_cast<double>(a[i + 2]) * b[i + 2];
        s3 += static_cast<double>(a[i + 3]) * b[i + 3];
    }
    double s = (s0 + s1) + (s2 + s3);
    for (; i < n; ++i) s += static_cast<double>(a[i]) * b[i];
    return s;
}

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ShapeError(msg);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Convolution

inline std::pair<int, int> conv2d_output_hw(int h, int w, int kh, int kw, int stride,
                                            int padding) {
    const int oh = (h + 2 * padding - kh) / stride + 1;
    const int ow = (w + 2 * padding - kw) / stride + 1;
    detail::require(h + 2 * padding >= kh && w + 2 * padding >= kw,
                    "conv2d kernel exceeds padded input: input " + std::to_string(h) +
                        "x" + std::to_string(w) + ", kernel " + std::to_string(kh) + "x" +
                        std::to_string(kw) + ", padding " + std::to_string(padding));
    return {oh, ow};
}

/// Direct 2-D convolution (cross-correlation). x is NCHW, weights KCkhkw,
/// bias K. Output (N, K, (H+2p-kh)/s+1, (W+2p-kw)/s+1).
inline Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b,
                             int stride, int padding) {
    detail::require(x.ndim() == 4, "conv2d input must be rank 4 NCHW, got rank " +
                                       std::to_string(x.ndim()));
    detail::require(w.ndim() == 4, "conv2d weights must be rank 4");
    detail::require(stride >= 1, "conv2d stride must be >= 1");
    detail::require(padding >= 0, "conv2d padding must be >= 0");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int K = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    detail::require(w.dim(1) == C, "conv2d channel axis mismatch: input has " +
                                       std::to_string(C) + " channels, weights expect " +
                                       std::to_string(w.dim(1)));
    detail::require(b.ndim() == 1 && b.dim(0) == K,
                    "conv2d bias axis must have length " + std::to_string(K));
    const auto [OH, OW] = conv2d_output_hw(H, W, kh, kw, stride, padding);

    Tensor out({N, K, OH, OW});
    const float* xd = x.data();
    const float* wd = w.data();
    const float* bd = b.data();
    float* od = out.data();

    parallel_for(static_cast<std::int64_t>(N) * K, [&](std::int64_t lo, std::int64_t hi) {
        std::vector<double> acc(static_cast<std::size_t>(OH) * OW);
        for (std::int64_t nk = lo; nk < hi; ++nk) {
            const int n = static_cast<int>(nk / K);
            const int k = static_cast<int>(nk % K);
            std::fill(acc.begin(), acc.end(), static_cast<double>(bd[k]));
            for (int c = 0; c < C; ++c) {
                const float* xplane = xd + (static_cast<std::size_t>(n) * C + c) *
                                               static_cast<std::size_t>(H) * W;
                for (int ki = 0; ki < kh; ++ki) {
                    for (int kj = 0; kj < kw; ++kj) {
                        const float wv =
                            wd[((static_cast<std::size_t>(k) * C + c) * kh + ki) * kw + kj];
                        // ow range with the input column in bounds
                        int ow_lo = 0, ow_hi = OW;
                        while (ow_lo < OW && ow_lo * stride - padding + kj < 0) ++ow_lo;
                        while (ow_hi > ow_lo && (ow_hi - 1) * stride - padding + kj >= W)
                            --ow_hi;
                        for (int oh = 0; oh < OH; ++oh) {
                            const int ih = oh * stride - padding + ki;
                            if (ih < 0 || ih >= H) continue;
                            const float* xrow = xplane + static_cast<std::size_t>(ih) * W;
                            double* arow = acc.data() + static_cast<std::size_t>(oh) * OW;
                            const int off = kj - padding;
                            if (stride == 1) {
                                for (int ow = ow_lo; ow < ow_hi; ++ow)
                                    arow[ow] += static_cast<double>(wv) * xrow[ow + off];
                            } else {
                                for (int ow = ow_lo; ow < ow_hi; ++ow)
                                    arow[ow] +=
                                        static_cast<double>(wv) * xrow[ow * stride + off];
                            }
                        }
                    }
                }
            }
            float* oplane = od + static_cast<std::size_t>(nk) * OH * OW;
            for (std::size_t i = 0; i < acc.size(); ++i)
                oplane[i] = static_cast<float>(acc[i]);
        }
    });
    return out;
}

/// Backward pass of conv2d_forward. Returns the input gradient and
/// accumulates weight/bias gradients into w_grad / b_grad.
inline Tensor conv2d_backward(const Tensor& x, const Tensor& w, int stride, int padding,
                              const Tensor& gout, Tensor& w_grad, Tensor& b_grad) {
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int K = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int OH = gout.dim(2), OW = gout.dim(3);
    detail::require(gout.dim(0) == N && gout.dim(1) == K,
                    "conv2d backward gradient shape mismatch");

    const float* xd = x.data();
    const float* wd = w.data();
    const float* gd = gout.data();

    Tensor gx({N, C, H, W});
    float* gxd = gx.data();

    // input gradient, one image per task
    parallel_for(N, [&](std::int64_t lo, std::int64_t hi) {
        std::vector<double> buf(static_cast<std::size_t>(C) * H * W);
        for (std::int64_t n = lo; n < hi; ++n) {
            std::fill(buf.begin(), buf.end(), 0.0);
            for (int k = 0; k < K; ++k) {
                const float* gplane = gd + (static_cast<std::size_t>(n) * K + k) *
                                               static_cast<std::size_t>(OH) * OW;
                for (int c = 0; c < C; ++c) {
                    double* bplane = buf.data() + static_cast<std::size_t>(c) * H * W;
                    for (int ki = 0; ki < kh; ++ki) {
                        for (int kj = 0; kj < kw; ++kj) {
                            const float wv =
                                wd[((static_cast<std::size_t>(k) * C + c) * kh + ki) * kw +
                                   kj];
                            int ow_lo = 0, ow_hi = OW;
                            while (ow_lo < OW && ow_lo * stride - padding + kj < 0) ++ow_lo;
                            while (ow_hi > ow_lo &&
                                   (ow_hi - 1) * stride - padding + kj >= W)
                                --ow_hi;
                            for (int oh = 0; oh < OH; ++oh) {
                                const int ih = oh * stride - padding + ki;
                                if (ih < 0 || ih >= H) continue;
                                const float* grow =
                                    gplane + static_cast<std::size_t>(oh) * OW;
                                double* brow = bplane + static_cast<std::size_t>(ih) * W;
                                const int off = kj - padding;
                                for (int ow = ow_lo; ow < ow_hi; ++ow)
                                    brow[ow * stride + off] +=
                                        static_cast<double>(wv) * grow[ow];
                            }
                        }
                    }
                }
            }
            float* gxplane = gxd + static_cast<std::size_t>(n) * C * H * W;
            for (std::size_t i = 0; i < buf.size(); ++i)
                gxplane[i] = static_cast<float>(buf[i]);
        }
    });

    // weight and bias gradients, one output channel per task
    float* gwd = w_grad.data();
    float* gbd = b_grad.data();
    parallel_for(K, [&](std::int64_t lo, std::int64_t hi) {
        std::vector<double> wbuf(static_cast<std::size_t>(C) * kh * kw);
        for (std::int64_t k = lo; k < hi; ++k) {
            std::fill(wbuf.begin(), wbuf.end(), 0.0);
            double bsum = 0.0;
            for (int n = 0; n < N; ++n) {
                const float* gplane = gd + (static_cast<std::size_t>(n) * K + k) *
                                               static_cast<std::size_t>(OH) * OW;
                for (std::int64_t i = 0; i < static_cast<std::int64_t>(OH) * OW; ++i)
                    bsum += gplane[i];
                for (int c = 0; c < C; ++c) {
                    const float* xplane = xd + (static_cast<std::size_t>(n) * C + c) *
                                                   static_cast<std::size_t>(H) * W;
                    for (int ki = 0; ki < kh; ++ki) {
                        for (int kj = 0; kj < kw; ++kj) {
                            int ow_lo = 0, ow_hi = OW;
                            while (ow_lo < OW && ow_lo * stride - padding + kj < 0) ++ow_lo;
                            while (ow_hi > ow_lo &&
                                   (ow_hi - 1) * stride - padding + kj >= W)
                                --ow_hi;
                            double s = 0.0;
                            for (int oh = 0; oh < OH; ++oh) {
                                const int ih = oh * stride - padding + ki;
                                if (ih < 0 || ih >= H) continue;
                                const float* grow =
                                    gplane + static_cast<std::size_t>(oh) * OW;
                                const float* xrow =
                                    xplane + static_cast<std::size_t>(ih) * W;
                                const int off = kj - padding;
                                if (stride == 1) {
                                    s += detail::dot(grow + ow_lo, xrow + ow_lo + off,
                                                     ow_hi - ow_lo);
                                } else {
                                    for (int ow = ow_lo; ow < ow_hi; ++ow)
                                        s += static_cast<double>(grow[ow]) *
                                             xrow[ow * stride + off];
                                }
                            }
                            wbuf[(static_cast<std::size_t>(c) * kh + ki) * kw + kj] += s;
                        }
                    }
                }
            }
            float* gwrow = gwd + static_cast<std::size_t>(k) * C * kh * kw;
            for (std::size_t i = 0; i < wbuf.size(); ++i)
                gwrow[i] += static_cast<float>(wbuf[i]);
            gbd[k] += static_cast<float>(bsum);
        }
    });
    return gx;
}

// ---------------------------------------------------------------------------
// Batch normalization

/// Per-channel statistics saved by the train-mode forward pass.
struct BnCache {
    std::vector<double> mean;
    std::vector<double> inv_std;
    std::int64_t m = 0;  // elements per channel in the batch
};

/// Batch normalization over (N, H, W) per channel.
///
/// Train mode normalizes with batch statistics (biased variance) and blends
/// them into the running stats: running <- (1-momentum)*running + momentum*batch.
/// Eval mode normalizes with the running stats and leaves them untouched.
inline Tensor batchnorm2d_forward(const Tensor& x, const Tensor& scale,
                                  const Tensor& shift, Tensor& running_mean,
                                  Tensor& running_var, float eps, float momentum,
                                  Mode mode, BnCache* cache) {
    detail::require(x.ndim() == 4, "batchnorm input must be rank 4 NCHW");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    detail::require(scale.numel() == C && shift.numel() == C &&
                        running_mean.numel() == C && running_var.numel() == C,
                    "batchnorm parameter length must equal channel count " +
                        std::to_string(C));
    const std::int64_t m = static_cast<std::int64_t>(N) * H * W;
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;

    Tensor out({N, C, H, W});
    const float* xd = x.data();
    float* od = out.data();

    if (mode == Mode::kTrain) {
        if (m < 2)
            throw ShapeError(
                "batchnorm train mode needs at least 2 elements per channel, got " +
                std::to_string(m));
        if (cache) {
            cache->mean.assign(C, 0.0);
            cache->inv_std.assign(C, 0.0);
            cache->m = m;
        }
        for (int c = 0; c < C; ++c) {
            double sum = 0.0, sumsq = 0.0;
            for (int n = 0; n < N; ++n) {
                const float* row = xd + (static_cast<std::size_t>(n) * C + c) * plane;
                for (std::int64_t i = 0; i < plane; ++i) {
                    const double v = row[i];
                    sum += v;
                    sumsq += v * v;
                }
            }
            const double mean = sum / static_cast<double>(m);
            double var = sumsq / static_cast<double>(m) - mean * mean;
            if (var < 0.0) var = 0.0;  // rounding guard
            const double inv_std = 1.0 / std::sqrt(var + static_cast<double>(eps));
            const double g = scale[c], b = shift[c];
            for (int n = 0; n < N; ++n) {
                const float* row = xd + (static_cast<std::size_t>(n) * C + c) * plane;
                float* orow = od + (static_cast<std::size_t>(n) * C + c) * plane;
                for (std::int64_t i = 0; i < plane; ++i)
                    orow[i] = static_cast<float>((row[i] - mean) * inv_std * g + b);
            }
            running_mean[c] = static_cast<float>((1.0 - momentum) * running_mean[c] +
                                                 momentum * mean);
            running_var[c] =
                static_cast<float>((1.0 - momentum) * running_var[c] + momentum * var);
            if (cache) {
                cache->mean[c] = mean;
                cache->inv_std[c] = inv_std;
            }
        }
    } else {
        for (int c = 0; c < C; ++c) {
            const double inv_std =
                1.0 / std::sqrt(static_cast<double>(running_var[c]) + eps);
            const double mean = running_mean[c];
            const double g = scale[c], b = shift[c];
            for (int n = 0; n < N; ++n) {
                const float* row = xd + (static_cast<std::size_t>(n) * C + c) * plane;
                float* orow = od + (static_cast<std::size_t>(n) * C + c) * plane;
                for (std::int64_t i = 0; i < plane; ++i)
                    orow[i] = static_cast<float>((row[i] - mean) * inv_std * g + b);
            }
        }
    }
    return out;
}

/// Backward for the train-mode pass. Returns the input gradient and
/// accumulates scale/shift gradients.
inline Tensor batchnorm2d_backward(const Tensor& x, const Tensor& scale,
                                   const BnCache& cache, const Tensor& gout,
                                   Tensor& scale_grad, Tensor& shift_grad) {
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    const double m = static_cast<double>(cache.m);

    Tensor gx({N, C, H, W});
    const float* xd = x.data();
    const float* gd = gout.data();
    float* gxd = gx.data();

    for (int c = 0; c < C; ++c) {
        const double mean = cache.mean[c];
        const double inv_std = cache.inv_std[c];
        double sum_g = 0.0, sum_gx = 0.0;
        for (int n = 0; n < N; ++n) {
            const std::size_t base = (static_cast<std::size_t>(n) * C + c) * plane;
            for (std::int64_t i = 0; i < plane; ++i) {
                const double g = gd[base + i];
                sum_g += g;
                sum_gx += g * (xd[base + i] - mean) * inv_std;
            }
        }
        shift_grad[c] += static_cast<float>(sum_g);
        scale_grad[c] += static_cast<float>(sum_gx);
        const double gamma = scale[c];
        const double k1 = gamma * inv_std;
        for (int n = 0; n < N; ++n) {
            const std::size_t base = (static_cast<std::size_t>(n) * C + c) * plane;
            for (std::int64_t i = 0; i < plane; ++i) {
                const double xhat = (xd[base + i] - mean) * inv_std;
                const double g = gd[base + i];
                gxd[base + i] =
                    static_cast<float>(k1 * (g - sum_g / m - xhat * sum_gx / m));
            }
        }
    }
    return gx;
}

// ---------------------------------------------------------------------------
// Max pooling, fixed (2,2) window

/// 2x2 max pooling with stride 2. H and W must be even. argmax records the
/// flat input index of each window maximum (first position in row-major
/// order wins ties); it drives the backward routing.
inline Tensor maxpool2x2_forward(const Tensor& x, std::vector<std::int64_t>* argmax) {
    detail::require(x.ndim() == 4, "maxpool input must be rank 4 NCHW");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    detail::require(H % 2 == 0, "maxpool requires even height, got " + std::to_string(H));
    detail::require(W % 2 == 0, "maxpool requires even width, got " + std::to_string(W));
    const int OH = H / 2, OW = W / 2;
    Tensor out({N, C, OH, OW});
    if (argmax) argmax->assign(static_cast<std::size_t>(out.numel()), 0);
    const float* xd = x.data();
    float* od = out.data();
    std::int64_t oi = 0;
    for (std::int64_t nc = 0; nc < static_cast<std::int64_t>(N) * C; ++nc) {
        const float* plane = xd + nc * H * W;
        const std::int64_t pbase = nc * H * W;
        for (int oh = 0; oh < OH; ++oh) {
            for (int ow = 0; ow < OW; ++ow, ++oi) {
                const int ih = oh * 2, iw = ow * 2;
                std::int64_t best = static_cast<std::int64_t>(ih) * W + iw;
                float bv = plane[best];
                const std::int64_t cand[3] = {best + 1, best + W, best + W + 1};
                for (std::int64_t idx : cand) {
                    if (plane[idx] > bv) {
                        bv = plane[idx];
                        best = idx;
                    }
                }
                od[oi] = bv;
                if (argmax) (*argmax)[static_cast<std::size_t>(oi)] = pbase + best;
            }
        }
    }
    return out;
}

/// Routes each upstream gradient entirely to its window's argmax position.
inline Tensor maxpool2x2_backward(const std::vector<int>& input_shape,
                                  const std::vector<std::int64_t>& argmax,
                                  const Tensor& gout) {
    Tensor gx(input_shape);
    float* gxd = gx.data();
    const float* gd = gout.data();
    for (std::int64_t i = 0; i < gout.numel(); ++i)
        gxd[argmax[static_cast<std::size_t>(i)]] += gd[i];
    return gx;
}

// ---------------------------------------------------------------------------
// Dropout (inverted: survivors scaled by 1/(1-rate), eval is identity)

inline Tensor dropout_forward(const Tensor& x, float rate, Mode mode, Rng& rng,
                              std::vector<float>* mask) {
    if (rate < 0.0f || rate >= 1.0f)
        throw ConfigError("dropout rate must be in [0, 1), got " + std::to_string(rate));
    if (mode == Mode::kEval || rate == 0.0f) {
        if (mask) mask->clear();  // empty mask means identity
        return x;
    }
    const float keep_scale = 1.0f / (1.0f - rate);
    Tensor out(x.shape());
    if (mask) mask->assign(static_cast<std::size_t>(x.numel()), 0.0f);
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        if (rng.next_double() < rate) continue;  // dropped
        out[i] = x[i] * keep_scale;
        if (mask) (*mask)[static_cast<std::size_t>(i)] = keep_scale;
    }
    return out;
}

inline Tensor dropout_backward(const std::vector<float>& mask, const Tensor& gout) {
    if (mask.empty()) return gout;
    Tensor gx(gout.shape());
    for (std::int64_t i = 0; i < gout.numel(); ++i)
        gx[i] = gout[i] * mask[static_cast<std::size_t>(i)];
    return gx;
}

// ---------------------------------------------------------------------------
// Dense (affine) layer

inline Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
    detail::require(x.ndim() == 2, "dense input must be rank 2 (batch, features)");
    detail::require(w.ndim() == 2, "dense weights must be rank 2");
    const int N = x.dim(0), F = x.dim(1), U = w.dim(1);
    detail::require(w.dim(0) == F, "dense inner dimension mismatch: input features " +
                                       std::to_string(F) + ", weight rows " +
                                       std::to_string(w.dim(0)));
    detail::require(b.numel() == U, "dense bias length must equal output units");
    Tensor out({N, U});
    const float* xd = x.data();
    const float* wd = w.data();
    const float* bd = b.data();
    float* od = out.data();
    parallel_for(N, [&](std::int64_t lo, std::int64_t hi) {
        std::vector<double> acc(static_cast<std::size_t>(U));
        for (std::int64_t n = lo; n < hi; ++n) {
            for (int u = 0; u < U; ++u) acc[static_cast<std::size_t>(u)] = bd[u];
            const float* xrow = xd + n * F;
            for (int f = 0; f < F; ++f) {
                const double xv = xrow[f];
                if (xv == 0.0) continue;
                const float* wrow = wd + static_cast<std::size_t>(f) * U;
                for (int u = 0; u < U; ++u) acc[static_cast<std::size_t>(u)] += xv * wrow[u];
            }
            float* orow = od + n * U;
            for (int u = 0; u < U; ++u)
                orow[u] = static_cast<float>(acc[static_cast<std::size_t>(u)]);
        }
    });
    return out;
}

inline Tensor dense_backward(const Tensor& x, const Tensor& w, const Tensor& gout,
                             Tensor& w_grad, Tensor& b_grad) {
    const int N = x.dim(0), F = x.dim(1), U = w.dim(1);
    detail::require(gout.dim(0) == N && gout.dim(1) == U,
                    "dense backward gradient shape mismatch");
    const float* xd = x.data();
    const float* wd = w.data();
    const float* gd = gout.data();

    Tensor gx({N, F});
    float* gxd = gx.data();
    parallel_for(N, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t n = lo; n < hi; ++n) {
            const float* grow = gd + n * U;
            float* gxrow = gxd + n * F;
            for (int f = 0; f < F; ++f)
                gxrow[f] = static_cast<float>(
                    detail::dot(grow, wd + static_cast<std::size_t>(f) * U, U));
        }
    });

    float* gwd = w_grad.data();
    parallel_for(F, [&](std::int64_t lo, std::int64_t hi) {
        std::vector<double> acc(static_cast<std::size_t>(U));
        for (std::int64_t f = lo; f < hi; ++f) {
            std::fill(acc.begin(), acc.end(), 0.0);
            for (int n = 0; n < N; ++n) {
                const double xv = xd[static_cast<std::size_t>(n) * F + f];
                if (xv == 0.0) continue;
                const float* grow = gd + static_cast<std::size_t>(n) * U;
                for (int u = 0; u < U; ++u) acc[static_cast<std::size_t>(u)] += xv * grow[u];
            }
            float* gwrow = gwd + static_cast<std::size_t>(f) * U;
            for (int u = 0; u < U; ++u)
                gwrow[u] += static_cast<float>(acc[static_cast<std::size_t>(u)]);
        }
    });

    float* gbd = b_grad.data();
    for (int u = 0; u < U; ++u) {
        double s = 0.0;
        for (int n = 0; n < N; ++n) s += gd[static_cast<std::size_t>(n) * U + u];
        gbd[u] += static_cast<float>(s);
    }
    return gx;
}

// ---------------------------------------------------------------------------
// Elementwise and shape ops

inline Tensor relu_forward(const Tensor& x) {
    Tensor out(x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
    return out;
}

/// Gradient passes where the activation output is positive. At exactly 0
/// the derivative is taken as 0.
inline Tensor relu_backward(const Tensor& out, const Tensor& gout) {
    Tensor gx(gout.shape());
    for (std::int64_t i = 0; i < gout.numel(); ++i)
        gx[i] = out[i] > 0.0f ? gout[i] : 0.0f;
    return gx;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::require(a.same_shape(b), "add shape mismatch: " + a.shape_str() + " vs " +
                                         b.shape_str());
    Tensor out(a.shape());
    for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
    return out;
}

/// Concatenates NCHW tensors along the channel axis, in argument order.
inline Tensor concat_channels(const std::vector<const Tensor*>& parts) {
    detail::require(!parts.empty(), "concat_channels needs at least one input");
    const Tensor& first = *parts[0];
    detail::require(first.ndim() == 4, "concat_channels inputs must be rank 4");
    const int N = first.dim(0), H = first.dim(2), W = first.dim(3);
    int C = 0;
    for (const Tensor* p : parts) {
        detail::require(p->ndim() == 4 && p->dim(0) == N && p->dim(2) == H &&
                            p->dim(3) == W,
                        "concat_channels inputs must agree on batch, height, width");
        C += p->dim(1);
    }
    Tensor out({N, C, H, W});
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    for (int n = 0; n < N; ++n) {
        std::int64_t c_off = 0;
        for (const Tensor* p : parts) {
            const int pc = p->dim(1);
            const float* src = p->data() + static_cast<std::size_t>(n) * pc * plane;
            float* dst =
                out.data() + (static_cast<std::size_t>(n) * C + c_off) * plane;
            std::copy(src, src + static_cast<std::size_t>(pc) * plane, dst);
            c_off += pc;
        }
    }
    return out;
}

/// Splits a channel-concat gradient back into per-part gradients.
inline std::vector<Tensor> concat_channels_backward(const Tensor& gout,
                                                    const std::vector<int>& channels) {
    const int N = gout.dim(0), H = gout.dim(2), W = gout.dim(3);
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    const int C = gout.dim(1);
    std::vector<Tensor> parts;
    parts.reserve(channels.size());
    for (int pc : channels) parts.emplace_back(std::vector<int>{N, pc, H, W});
    for (int n = 0; n < N; ++n) {
        std::int64_t c_off = 0;
        for (std::size_t pi = 0; pi < channels.size(); ++pi) {
            const int pc = channels[pi];
            const float* src =
                gout.data() + (static_cast<std::size_t>(n) * C + c_off) * plane;
            float* dst = parts[pi].data() + static_cast<std::size_t>(n) * pc * plane;
            std::copy(src, src + static_cast<std::size_t>(pc) * plane, dst);
            c_off += pc;
        }
    }
    return parts;
}

/// NCHW -> (N, C*H*W)
inline Tensor flatten(const Tensor& x) {
    detail::require(x.ndim() == 4, "flatten expects rank 4 input");
    return x.reshaped({x.dim(0), x.dim(1) * x.dim(2) * x.dim(3)});
}

// ---------------------------------------------------------------------------
// Softmax

/// Row-wise softmax with max subtraction: invariant under adding a
/// constant to a row, rows sum to 1.
inline Tensor softmax(const Tensor& logits) {
    detail::require(logits.ndim() == 2, "softmax expects rank 2 (batch, classes)");
    const int N = logits.dim(0), K = logits.dim(1);
    Tensor out({N, K});
    for (int n = 0; n < N; ++n) {
        const float* row = logits.data() + static_cast<std::size_t>(n) * K;
        float* orow = out.data() + static_cast<std::size_t>(n) * K;
        double mx = row[0];
        for (int k = 1; k < K; ++k) mx = std::max(mx, static_cast<double>(row[k]));
        double denom = 0.0;
        for (int k = 0; k < K; ++k) denom += std::exp(static_cast<double>(row[k]) - mx);
        for (int k = 0; k < K; ++k)
            orow[k] = static_cast<float>(std::exp(static_cast<double>(row[k]) - mx) / denom);
    }
    return out;
}

}  // namespace hcr
