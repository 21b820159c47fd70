#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "hcr/common.hpp"
#include "hcr/tensor.hpp"

namespace hcr {

/// Row-major 8-bit grayscale image. pixels[y * width + x].
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    GrayImage() = default;
    GrayImage(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h) {
        if (w < 1 || h < 1) throw ShapeError("image dims must be >= 1");
        pixels.assign(static_cast<std::size_t>(w) * h, fill);
    }

    std::uint8_t& at(int y, int x) {
        return pixels[static_cast<std::size_t>(y) * width + x];
    }
    std::uint8_t at(int y, int x) const {
        return pixels[static_cast<std::size_t>(y) * width + x];
    }
};

inline bool operator==(const GrayImage& a, const GrayImage& b) {
    return a.width == b.width && a.height == b.height && a.pixels == b.pixels;
}

/// Bilinear resize to a square target with corner-aligned sampling:
/// source coordinate u_i = i * (src - 1) / (dst - 1), so output corners hit
/// input corners exactly; a single-pixel target samples u = 0. Values are
/// interpolated in double and rounded to nearest.
inline GrayImage resize(const GrayImage& img, int target_side) {
    if (target_side < 1) throw ConfigError("resize target must be >= 1");
    if (img.width < 1 || img.height < 1)
        throw ShapeError("resize needs a nonempty image");
    GrayImage out(target_side, target_side);
    const double sy = target_side > 1
                          ? static_cast<double>(img.height - 1) / (target_side - 1)
                          : 0.0;
    const double sx = target_side > 1
                          ? static_cast<double>(img.width - 1) / (target_side - 1)
                          : 0.0;
    for (int y = 0; y < target_side; ++y) {
        const double v = y * sy;
        const int y0 = static_cast<int>(v);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const double fy = v - y0;
        for (int x = 0; x < target_side; ++x) {
            const double u = x * sx;
            const int x0 = static_cast<int>(u);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const double fx = u - x0;
            const double top = (1.0 - fx) * img.at(y0, x0) + fx * img.at(y0, x1);
            const double bot = (1.0 - fx) * img.at(y1, x0) + fx * img.at(y1, x1);
            const double val = (1.0 - fy) * top + fy * bot;
            out.at(y, x) = static_cast<std::uint8_t>(std::llround(val));
        }
    }
    return out;
}

/// Truncated Gaussian weights on an odd side x side grid, normalized to sum
/// to 1: weight(i, j) proportional to exp(-(di^2 + dj^2) / (2 sigma^2)) with
/// integer offsets from the center.
inline std::vector<double> gaussian_kernel(int side, double sigma) {
    if (side < 1 || side % 2 == 0)
        throw ConfigError("gaussian kernel side must be odd and positive");
    if (!(sigma > 0.0)) throw ConfigError("gaussian sigma must be positive");
    std::vector<double> k(static_cast<std::size_t>(side) * side);
    const int c = side / 2;
    double sum = 0.0;
    for (int i = 0; i < side; ++i)
        for (int j = 0; j < side; ++j) {
            const double di = i - c;
            const double dj = j - c;
            const double w = std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
            k[static_cast<std::size_t>(i) * side + j] = w;
            sum += w;
        }
    for (double& w : k) w /= sum;
    return k;
}

/// Training-variant blur settings. Variant 1 is a 1x1 kernel, which is the
/// identity; variants 2 and 3 follow the published parameters, with the
/// heavy-blur side configurable (defaults to 5).
struct BlurSpec {
    int variant = 1;
    int kernel_side = 1;
    float sigma = 1.0f;

    static BlurSpec for_variant(int v) {
        switch (v) {
            case 1: return {1, 1, 1.0f};
            case 2: return {2, 3, 20.0f};
            case 3: return {3, 5, 50.0f};
            default: throw ConfigError("blur variant must be 1, 2, or 3");
        }
    }

    void validate() const {
        if (variant < 1 || variant > 3)
            throw ConfigError("blur variant must be 1, 2, or 3");
        if (kernel_side < 1 || kernel_side % 2 == 0)
            throw ConfigError("blur kernel side must be odd and positive");
        if (!(sigma > 0.0f)) throw ConfigError("blur sigma must be positive");
    }
};

/// 2-D convolution with the requested Gaussian kernel, clamp-to-edge border
/// (border pixels replicate outward), same output size, rounded to nearest.
/// A 1x1 kernel returns the input bit-identically.
inline GrayImage gaussian_blur(const GrayImage& img, const BlurSpec& spec) {
    spec.validate();
    if (spec.kernel_side == 1) return img;
    const std::vector<double> k = gaussian_kernel(spec.kernel_side, spec.sigma);
    const int side = spec.kernel_side;
    const int c = side / 2;
    GrayImage out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            double acc = 0.0;
            for (int i = 0; i < side; ++i) {
                int yy = y + i - c;
                yy = yy < 0 ? 0 : (yy >= img.height ? img.height - 1 : yy);
                for (int j = 0; j < side; ++j) {
                    int xx = x + j - c;
                    xx = xx < 0 ? 0 : (xx >= img.width ? img.width - 1 : xx);
                    acc += k[static_cast<std::size_t>(i) * side + j] * img.at(yy, xx);
                }
            }
            long v = std::lround(acc);
            v = v < 0 ? 0 : (v > 255 ? 255 : v);
            out.at(y, x) = static_cast<std::uint8_t>(v);
        }
    return out;
}

/// Flips polarity (255 - v) so ink becomes high-valued on a low background.
inline GrayImage invert(const GrayImage& img) {
    GrayImage out = img;
    for (std::uint8_t& p : out.pixels) p = static_cast<std::uint8_t>(255 - p);
    return out;
}

/// Maps u8 pixels to [0, 1] floats as a {1, H, W} tensor.
inline Tensor to_float_chw(const GrayImage& img) {
    Tensor t({1, img.height, img.width});
    for (std::int64_t i = 0; i < t.numel(); ++i)
        t[i] = static_cast<float>(img.pixels[static_cast<std::size_t>(i)]) / 255.0f;
    return t;
}

// ---------------------------------------------------------------------------
// PGM (P5, maxval 255)

namespace detail {

inline int pgm_token(std::istream& in) {
    // skips whitespace and # comments, then reads one unsigned decimal
    int ch = in.get();
    while (ch != EOF) {
        if (ch == '#') {
            while (ch != EOF && ch != '\n') ch = in.get();
        } else if (std::isspace(ch)) {
            ch = in.get();
        } else {
            break;
        }
    }
    if (ch == EOF || !std::isdigit(ch)) {
        const auto pos = in.tellg();
        throw ParseError("pgm: expected integer",
                         pos < 0 ? 0 : static_cast<std::size_t>(pos));
    }
    long v = 0;
    while (ch != EOF && std::isdigit(ch)) {
        v = v * 10 + (ch - '0');
        if (v > 1 << 30) throw ParseError("pgm: integer out of range", 0);
        ch = in.get();
    }
    if (ch != EOF) in.unget();
    return static_cast<int>(v);
}

}  // namespace detail

inline GrayImage read_pgm(std::istream& in) {
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (!in || m0 != 'P' || m1 != '5')
        throw ParseError("pgm: bad magic, want P5", 0);
    const int w = detail::pgm_token(in);
    const int h = detail::pgm_token(in);
    const int maxval = detail::pgm_token(in);
    if (w < 1 || h < 1) throw ParseError("pgm: bad dimensions", 0);
    if (maxval != 255) throw ParseError("pgm: only maxval 255 supported", 0);
    in.get();  // single whitespace byte before the raster
    GrayImage img(w, h);
    in.read(reinterpret_cast<char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
    if (static_cast<std::size_t>(in.gcount()) != img.pixels.size())
        throw ParseError("pgm: truncated raster",
                         static_cast<std::size_t>(in.gcount()));
    return img;
}

inline void write_pgm(const GrayImage& img, std::ostream& out) {
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size()));
}

inline GrayImage read_pgm_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open " + path);
    return read_pgm(in);
}

inline void write_pgm_file(const GrayImage& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot open " + path + " for writing");
    write_pgm(img, out);
    if (!out) throw LoadError("short write to " + path);
}

}  // namespace hcr
