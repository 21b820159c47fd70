#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "hcr/common.hpp"
#include "hcr/gnt.hpp"
#include "hcr/image.hpp"
#include "hcr/rng.hpp"
#include "hcr/tensor.hpp"

namespace hcr {

/// Bijection between observed 2-byte tag codes and dense class indices.
/// Tags are sorted ascending, so the mapping depends only on the set of
/// codes, not on sample order.
struct LabelMap {
    std::vector<std::uint16_t> tags;
    std::unordered_map<std::uint16_t, int> index;

    static LabelMap from_tags(std::vector<std::uint16_t> distinct) {
        std::sort(distinct.begin(), distinct.end());
        distinct.erase(std::unique(distinct.begin(), distinct.end()),
                       distinct.end());
        LabelMap m;
        m.tags = std::move(distinct);
        for (std::size_t i = 0; i < m.tags.size(); ++i)
            m.index.emplace(m.tags[i], static_cast<int>(i));
        return m;
    }

    static LabelMap from_samples(const std::vector<Sample>& samples) {
        std::vector<std::uint16_t> t;
        t.reserve(samples.size());
        for (const Sample& s : samples) t.push_back(s.tag_code);
        return from_tags(std::move(t));
    }

    int num_classes() const { return static_cast<int>(tags.size()); }

    int index_of(std::uint16_t tag) const {
        auto it = index.find(tag);
        return it == index.end() ? -1 : it->second;
    }

    std::uint16_t tag_of(int idx) const {
        if (idx < 0 || idx >= num_classes())
            throw ConfigError("label index out of range");
        return tags[static_cast<std::size_t>(idx)];
    }
};

/// Labeled sample collection plus the polarity convention of its pixels:
/// ink_low means ink is dark (0) on a light background, the raw GNT
/// convention. make_batch normalizes so the model always sees high-valued
/// ink on a low background.
struct Dataset {
    std::vector<Sample> samples;
    LabelMap label_map;
    bool ink_low = true;
};

inline void apply_labels(std::vector<Sample>& samples, const LabelMap& map) {
    for (Sample& s : samples) {
        const int idx = map.index_of(s.tag_code);
        if (idx < 0)
            throw ConfigError("sample tag code not present in label map");
        s.label = idx;
    }
}

inline std::vector<std::int64_t> class_counts(const std::vector<Sample>& samples,
                                              int num_classes) {
    std::vector<std::int64_t> counts(static_cast<std::size_t>(num_classes), 0);
    for (const Sample& s : samples) {
        if (s.label < 0 || s.label >= num_classes)
            throw ConfigError("sample label outside class range");
        ++counts[static_cast<std::size_t>(s.label)];
    }
    return counts;
}

/// Resize to side x side, then blur per the variant. Variant 1's kernel is
/// the identity, so its output equals the resize-only pipeline bit-exactly.
inline std::vector<Sample> prepare_variant(const std::vector<Sample>& src,
                                           int side, const BlurSpec& blur) {
    blur.validate();
    std::vector<Sample> out;
    out.reserve(src.size());
    for (const Sample& s : src) {
        Sample p = s;
        p.image = gaussian_blur(resize(s.image, side), blur);
        out.push_back(std::move(p));
    }
    return out;
}

/// Seed-deterministic Fisher-Yates permutation split. Train size is
/// round(n * fraction); train and test are disjoint and cover 0..n-1.
struct DatasetSplit {
    std::vector<int> train;
    std::vector<int> test;
    std::uint64_t seed = 0;
    double train_fraction = 0.0;
};

inline DatasetSplit shuffle_split(int n, std::uint64_t seed,
                                  double train_fraction) {
    if (n < 0) throw ConfigError("split size must be nonnegative");
    if (!(train_fraction > 0.0) || !(train_fraction < 1.0))
        throw ConfigError("train fraction must be in (0, 1)");
    std::vector<int> perm(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
    Rng rng(seed);
    for (int i = n - 1; i > 0; --i) {
        const auto j = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(i) + 1));
        std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    }
    const auto train_count =
        static_cast<std::size_t>(std::llround(n * train_fraction));
    DatasetSplit split;
    split.seed = seed;
    split.train_fraction = train_fraction;
    split.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(train_count));
    split.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(train_count), perm.end());
    return split;
}

/// Stacks the indexed samples into a {N, 1, side, side} float tensor with
/// ink mapped high: raw value p becomes (255 - p) / 255 when ink_low, else
/// p / 255. All images must share one square side.
inline Tensor make_batch(const std::vector<Sample>& samples,
                         const std::vector<int>& indices, bool ink_low,
                         std::vector<int>* labels_out) {
    if (indices.empty()) throw ConfigError("batch must be nonempty");
    const GrayImage& first = samples[static_cast<std::size_t>(indices[0])].image;
    const int side = first.width;
    if (first.height != side) throw ShapeError("batch images must be square");
    Tensor x({static_cast<int>(indices.size()), 1, side, side});
    if (labels_out) labels_out->clear();
    std::int64_t pos = 0;
    for (const int idx : indices) {
        const Sample& s = samples[static_cast<std::size_t>(idx)];
        if (s.image.width != side || s.image.height != side)
            throw ShapeError("batch images must share one side");
        for (const std::uint8_t p : s.image.pixels) {
            const int v = ink_low ? 255 - p : p;
            x[pos++] = static_cast<float>(v) / 255.0f;
        }
        if (labels_out) labels_out->push_back(s.label);
    }
    return x;
}

// ---------------------------------------------------------------------------
// Synthetic glyph fixture

namespace detail {

struct Stroke {
    float x0, y0, x1, y1;
    bool arc;
};

/// Class motifs are four strokes, one per canvas band (top, bottom, left,
/// right). Each band offers four well separated options (two half lines, a
/// tilted full line, an inward arc) and the class id picks one per band as
/// base-4 digits, so any two classes differ by a whole stroke in some band.
/// The option gaps are several stroke widths, larger than the affine jitter,
/// which keeps the classes separable.
inline std::vector<Stroke> class_motif(int k) {
    // rows: band option 0..3; columns: x0, y0, x1, y1, arc flag
    static constexpr float kTop[4][5] = {{0.18f, 0.22f, 0.46f, 0.22f, 0},
                                         {0.54f, 0.22f, 0.82f, 0.22f, 0},
                                         {0.20f, 0.16f, 0.80f, 0.30f, 0},
                                         {0.20f, 0.26f, 0.80f, 0.26f, 1}};
    static constexpr float kBottom[4][5] = {{0.18f, 0.78f, 0.46f, 0.78f, 0},
                                            {0.54f, 0.78f, 0.82f, 0.78f, 0},
                                            {0.20f, 0.84f, 0.80f, 0.70f, 0},
                                            {0.80f, 0.74f, 0.20f, 0.74f, 1}};
    static constexpr float kLeft[4][5] = {{0.22f, 0.18f, 0.22f, 0.46f, 0},
                                          {0.22f, 0.54f, 0.22f, 0.82f, 0},
                                          {0.16f, 0.20f, 0.30f, 0.80f, 0},
                                          {0.26f, 0.80f, 0.26f, 0.20f, 1}};
    static constexpr float kRight[4][5] = {{0.78f, 0.18f, 0.78f, 0.46f, 0},
                                           {0.78f, 0.54f, 0.78f, 0.82f, 0},
                                           {0.84f, 0.20f, 0.70f, 0.80f, 0},
                                           {0.74f, 0.20f, 0.74f, 0.80f, 1}};
    const float(*bands[4])[5] = {kTop, kBottom, kLeft, kRight};
    std::vector<Stroke> strokes;
    int digits = k;
    for (const auto& band : bands) {
        const float* opt = band[digits & 3];
        digits >>= 2;
        strokes.push_back({opt[0], opt[1], opt[2], opt[3], opt[4] != 0.0f});
    }
    return strokes;
}

inline void stamp(GrayImage& img, float cx, float cy, float radius) {
    const int lo_y = std::max(0, static_cast<int>(cy - radius - 1.0f));
    const int hi_y = std::min(img.height - 1, static_cast<int>(cy + radius + 1.0f));
    const int lo_x = std::max(0, static_cast<int>(cx - radius - 1.0f));
    const int hi_x = std::min(img.width - 1, static_cast<int>(cx + radius + 1.0f));
    for (int y = lo_y; y <= hi_y; ++y)
        for (int x = lo_x; x <= hi_x; ++x) {
            const float dx = x - cx;
            const float dy = y - cy;
            const float dist = std::sqrt(dx * dx + dy * dy);
            const float cover = std::clamp(radius + 0.5f - dist, 0.0f, 1.0f);
            const auto ink = static_cast<std::uint8_t>(
                std::lround(255.0f * (1.0f - cover)));
            img.at(y, x) = std::min(img.at(y, x), ink);
        }
}

}  // namespace detail

/// Deterministic desk-scale stand-in dataset: each class is a distinct
/// 4-stroke banded motif (lines and arcs), each sample a jittered affine
/// rendering, dark ink on white. tag_code = 0x4e00 + class index.
inline Dataset synth_glyphs(int num_classes, int per_class, int side,
                            std::uint64_t seed) {
    constexpr std::int64_t kMotifCapacity = 4 * 4 * 4 * 4;
    constexpr int kTagCapacity = 0x10000 - 0x4e00;
    if (num_classes < 1 || num_classes > kTagCapacity ||
        static_cast<std::int64_t>(num_classes) > kMotifCapacity)
        throw ConfigError("num_classes outside motif capacity");
    if (per_class < 1) throw ConfigError("per_class must be positive");
    if (side < 8) throw ConfigError("side must be at least 8");

    Dataset ds;
    ds.ink_low = true;
    Rng base(seed);
    std::vector<std::uint16_t> tags;
    for (int k = 0; k < num_classes; ++k) {
        const std::vector<detail::Stroke> motif = detail::class_motif(k);
        tags.push_back(static_cast<std::uint16_t>(0x4e00 + k));
        for (int s = 0; s < per_class; ++s) {
            Rng rng = base.fork(static_cast<std::uint64_t>(k) * 1000003u + s);
            const float angle = (rng.next_float() - 0.5f) * 0.3f;
            const float scale = 0.85f + rng.next_float() * 0.25f;
            const float tx = (rng.next_float() - 0.5f) * 0.12f * side;
            const float ty = (rng.next_float() - 0.5f) * 0.12f * side;
            const float thick =
                side * (0.035f + rng.next_float() * 0.02f);
            const float ca = std::cos(angle) * scale * side;
            const float sa = std::sin(angle) * scale * side;
            const float cx = side * 0.5f;
            const float cy = side * 0.5f;
            const auto map = [&](float u, float v) {
                const float du = u - 0.5f;
                const float dv = v - 0.5f;
                return std::pair<float, float>{cx + ca * du - sa * dv + tx,
                                               cy + sa * du + ca * dv + ty};
            };
            Sample sample;
            sample.tag_code = tags.back();
            sample.label = k;
            sample.image = GrayImage(side, side, 255);
            for (const detail::Stroke& st : motif) {
                const auto [x0, y0] = map(st.x0, st.y0);
                const auto [x1, y1] = map(st.x1, st.y1);
                // arcs bow out along the perpendicular at the midpoint
                const float mx = 0.5f * (x0 + x1);
                const float my = 0.5f * (y0 + y1);
                const float px = -(y1 - y0) * 0.3f;
                const float py = (x1 - x0) * 0.3f;
                const int steps = 2 * side;
                for (int t = 0; t <= steps; ++t) {
                    const float u = static_cast<float>(t) / steps;
                    float sx, sy;
                    if (st.arc) {
                        const float w0 = (1 - u) * (1 - u);
                        const float w1 = 2 * u * (1 - u);
                        const float w2 = u * u;
                        sx = w0 * x0 + w1 * (mx + px) + w2 * x1;
                        sy = w0 * y0 + w1 * (my + py) + w2 * y1;
                    } else {
                        sx = x0 + u * (x1 - x0);
                        sy = y0 + u * (y1 - y0);
                    }
                    detail::stamp(sample.image, sx, sy, thick * 0.5f);
                }
            }
            ds.samples.push_back(std::move(sample));
        }
    }
    ds.label_map = LabelMap::from_tags(std::move(tags));
    return ds;
}

}  // namespace hcr
