#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "hcr/common.hpp"
#include "hcr/image.hpp"

namespace hcr {

/// One labeled character image. label is -1 until a LabelMap assigns dense
/// class indices; tag_code carries the original 2-byte dataset code
/// opaquely (serialized low byte first).
struct Sample {
    GrayImage image;
    int label = -1;
    std::uint16_t tag_code = 0;
};

// Record layout, little-endian throughout:
//   u32 total record size | u16 tag code | u16 width | u16 height
//   | width*height raster bytes
// so total size must equal 10 + width*height. Records are concatenated
// back to back with no file header.
inline constexpr int kGntHeaderBytes = 10;

namespace detail {

inline std::uint32_t le32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) |
           (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t le16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline void put_le32(std::uint32_t v, std::ostream& out) {
    const unsigned char b[4] = {
        static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_le16(std::uint16_t v, std::ostream& out) {
    const unsigned char b[2] = {static_cast<unsigned char>(v),
                                static_cast<unsigned char>(v >> 8)};
    out.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace detail

/// Streaming record reader. next() yields samples in file order and returns
/// nullopt exactly at a record boundary; anything else (truncation, a size
/// field that disagrees with the header + raster, zero dims) throws
/// ParseError carrying the byte offset where the bad record starts.
class GntReader {
public:
    explicit GntReader(std::istream& in) : in_(in) {}

    std::optional<Sample> next() {
        const std::int64_t start = offset_;
        unsigned char header[kGntHeaderBytes];
        in_.read(reinterpret_cast<char*>(header), kGntHeaderBytes);
        const std::int64_t got = in_.gcount();
        if (got == 0) return std::nullopt;
        if (got < kGntHeaderBytes)
            throw ParseError("gnt: truncated record header", start);
        const std::uint32_t size = detail::le32(header);
        const std::uint16_t tag = detail::le16(header + 4);
        const std::uint16_t w = detail::le16(header + 6);
        const std::uint16_t h = detail::le16(header + 8);
        if (w == 0 || h == 0)
            throw ParseError("gnt: zero image dimension", start);
        const std::uint32_t raster =
            static_cast<std::uint32_t>(w) * static_cast<std::uint32_t>(h);
        if (size != raster + kGntHeaderBytes)
            throw ParseError("gnt: size field does not match header plus raster",
                             start);
        Sample s;
        s.tag_code = tag;
        s.image = GrayImage(w, h);
        in_.read(reinterpret_cast<char*>(s.image.pixels.data()),
                 static_cast<std::streamsize>(raster));
        if (static_cast<std::uint32_t>(in_.gcount()) != raster)
            throw ParseError("gnt: truncated raster", start);
        offset_ = start + size;
        return s;
    }

    std::int64_t offset() const { return offset_; }

private:
    std::istream& in_;
    std::int64_t offset_ = 0;
};

inline std::vector<Sample> parse_gnt(std::istream& in) {
    GntReader reader(in);
    std::vector<Sample> out;
    while (auto s = reader.next()) out.push_back(std::move(*s));
    return out;
}

inline std::vector<Sample> parse_gnt_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open " + path);
    return parse_gnt(in);
}

inline void write_gnt(const std::vector<Sample>& samples, std::ostream& out) {
    for (const Sample& s : samples) {
        const std::uint32_t raster =
            static_cast<std::uint32_t>(s.image.width) *
            static_cast<std::uint32_t>(s.image.height);
        detail::put_le32(raster + kGntHeaderBytes, out);
        detail::put_le16(s.tag_code, out);
        detail::put_le16(static_cast<std::uint16_t>(s.image.width), out);
        detail::put_le16(static_cast<std::uint16_t>(s.image.height), out);
        out.write(reinterpret_cast<const char*>(s.image.pixels.data()),
                  static_cast<std::streamsize>(raster));
    }
}

inline void write_gnt_file(const std::vector<Sample>& samples,
                           const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot open " + path + " for writing");
    write_gnt(samples, out);
    if (!out) throw LoadError("short write to " + path);
}

}  // namespace hcr
