#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <memory>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "hcr/config.hpp"
#include "hcr/model.hpp"

namespace hcr {

inline constexpr char kCheckpointMagic[4] = {'H', 'C', 'R', 'B'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Extra context stored beside the weights: the epoch the snapshot came
/// from and the class-index-to-tag mapping so prediction can report tags.
struct CheckpointMeta {
    int epoch = 0;
    std::vector<std::uint16_t> label_tags;
};

namespace detail {

inline void ckpt_write(std::ostream& out, const void* data, std::size_t n) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

inline void put_u8(std::ostream& out, std::uint8_t v) { ckpt_write(out, &v, 1); }

inline void put_u16le(std::ostream& out, std::uint16_t v) {
    const std::uint8_t b[2] = {static_cast<std::uint8_t>(v & 0xff),
                               static_cast<std::uint8_t>(v >> 8)};
    ckpt_write(out, b, 2);
}

inline void put_u32le(std::ostream& out, std::uint32_t v) {
    const std::uint8_t b[4] = {static_cast<std::uint8_t>(v & 0xff),
                               static_cast<std::uint8_t>((v >> 8) & 0xff),
                               static_cast<std::uint8_t>((v >> 16) & 0xff),
                               static_cast<std::uint8_t>(v >> 24)};
    ckpt_write(out, b, 4);
}

inline void ckpt_read(std::istream& in, void* dst, std::size_t n, const char* what) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
        throw LoadError(std::string("checkpoint truncated in ") + what);
}

inline std::uint8_t get_u8(std::istream& in, const char* what) {
    std::uint8_t v = 0;
    ckpt_read(in, &v, 1, what);
    return v;
}

inline std::uint16_t get_u16le(std::istream& in, const char* what) {
    std::uint8_t b[2];
    ckpt_read(in, b, 2, what);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

inline std::uint32_t get_u32le(std::istream& in, const char* what) {
    std::uint8_t b[4];
    ckpt_read(in, b, 4, what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace detail

inline void save_checkpoint(const Model& model, const CheckpointMeta& meta,
                            std::ostream& out) {
    detail::ckpt_write(out, kCheckpointMagic, 4);
    detail::put_u32le(out, kCheckpointVersion);

    Json header{{"model", to_json(model.spec())},
                {"epoch", meta.epoch},
                {"label_tags", meta.label_tags}};
    const std::string text = header.dump();
    detail::put_u32le(out, static_cast<std::uint32_t>(text.size()));
    detail::ckpt_write(out, text.data(), text.size());

    const auto entries = model.save_weights();
    detail::put_u32le(out, static_cast<std::uint32_t>(entries.size()));
    std::vector<std::uint8_t> buf;
    for (const auto& [name, tensor] : entries) {
        if (name.size() > 0xffff)
            throw ConfigError("tensor name too long for checkpoint: " + name);
        detail::put_u16le(out, static_cast<std::uint16_t>(name.size()));
        detail::ckpt_write(out, name.data(), name.size());
        detail::put_u8(out, static_cast<std::uint8_t>(tensor.ndim()));
        for (int d = 0; d < tensor.ndim(); ++d)
            detail::put_u32le(out, static_cast<std::uint32_t>(tensor.dim(d)));
        buf.resize(static_cast<std::size_t>(tensor.numel()) * 4);
        for (std::int64_t i = 0; i < tensor.numel(); ++i) {
            const auto bits = std::bit_cast<std::uint32_t>(tensor[i]);
            buf[static_cast<std::size_t>(i) * 4 + 0] = static_cast<std::uint8_t>(bits & 0xff);
            buf[static_cast<std::size_t>(i) * 4 + 1] =
                static_cast<std::uint8_t>((bits >> 8) & 0xff);
            buf[static_cast<std::size_t>(i) * 4 + 2] =
                static_cast<std::uint8_t>((bits >> 16) & 0xff);
            buf[static_cast<std::size_t>(i) * 4 + 3] = static_cast<std::uint8_t>(bits >> 24);
        }
        detail::ckpt_write(out, buf.data(), buf.size());
    }
    if (!out) throw LoadError("checkpoint write failed");
}

inline void save_checkpoint_file(const Model& model, const CheckpointMeta& meta,
                                 const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot open " + path + " for writing");
    save_checkpoint(model, meta, out);
    out.close();
    if (!out) throw LoadError("checkpoint write failed for " + path);
}

struct LoadedCheckpoint {
    ModelSpec spec;
    CheckpointMeta meta;
    std::vector<std::pair<std::string, Tensor>> tensors;
};

inline LoadedCheckpoint read_checkpoint(std::istream& in) {
    char magic[4];
    detail::ckpt_read(in, magic, 4, "magic");
    if (std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw LoadError("not a checkpoint file (bad magic)");
    const std::uint32_t version = detail::get_u32le(in, "version");
    if (version != kCheckpointVersion)
        throw LoadError("unsupported checkpoint version " + std::to_string(version));

    const std::uint32_t header_len = detail::get_u32le(in, "header length");
    std::string text(header_len, '\0');
    detail::ckpt_read(in, text.data(), text.size(), "header");
    LoadedCheckpoint loaded;
    try {
        const Json header = parse_json_text(text);
        detail::reject_unknown_keys(header, "checkpoint header",
                                    {"model", "epoch", "label_tags"});
        loaded.spec = model_spec_from_json(header.at("model"));
        loaded.meta.epoch = detail::field_or(header, "checkpoint header", "epoch", 0);
        loaded.meta.label_tags = detail::field_or(header, "checkpoint header",
                                                  "label_tags",
                                                  std::vector<std::uint16_t>{});
        loaded.spec.validate();
    } catch (const ConfigError& e) {
        throw LoadError(std::string("bad checkpoint header: ") + e.what());
    }

    const std::uint32_t count = detail::get_u32le(in, "tensor count");
    std::vector<std::uint8_t> buf;
    for (std::uint32_t t = 0; t < count; ++t) {
        const std::uint16_t name_len = detail::get_u16le(in, "tensor name length");
        std::string name(name_len, '\0');
        detail::ckpt_read(in, name.data(), name.size(), "tensor name");
        const std::uint8_t ndim = detail::get_u8(in, "tensor rank");
        if (ndim < 1 || ndim > 4)
            throw LoadError("tensor " + name + " has unsupported rank " +
                            std::to_string(ndim));
        std::vector<int> shape;
        std::int64_t numel = 1;
        for (int d = 0; d < ndim; ++d) {
            const std::uint32_t dim = detail::get_u32le(in, "tensor dims");
            if (dim == 0 || dim > 0x40000000u)
                throw LoadError("tensor " + name + " has implausible dim " +
                                std::to_string(dim));
            shape.push_back(static_cast<int>(dim));
            numel *= dim;
        }
        if (numel > (std::int64_t{1} << 33))
            throw LoadError("tensor " + name + " is implausibly large");
        Tensor tensor(shape);
        buf.resize(static_cast<std::size_t>(numel) * 4);
        detail::ckpt_read(in, buf.data(), buf.size(), "tensor data");
        for (std::int64_t i = 0; i < numel; ++i) {
            const std::uint32_t bits =
                static_cast<std::uint32_t>(buf[static_cast<std::size_t>(i) * 4 + 0]) |
                (static_cast<std::uint32_t>(buf[static_cast<std::size_t>(i) * 4 + 1]) << 8) |
                (static_cast<std::uint32_t>(buf[static_cast<std::size_t>(i) * 4 + 2]) << 16) |
                (static_cast<std::uint32_t>(buf[static_cast<std::size_t>(i) * 4 + 3]) << 24);
            tensor[i] = std::bit_cast<float>(bits);
        }
        loaded.tensors.emplace_back(std::move(name), std::move(tensor));
    }
    return loaded;
}

inline LoadedCheckpoint read_checkpoint_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open checkpoint " + path);
    return read_checkpoint(in);
}

/// Builds a model with the stored spec and installs the stored weights.
inline std::unique_ptr<Model> restore_model(const LoadedCheckpoint& loaded) {
    Rng rng(0);
    auto model = std::make_unique<Model>(loaded.spec, rng);
    model->load_weights(loaded.tensors);
    return model;
}

inline void require_spec_match(const ModelSpec& stored, const ModelSpec& expected) {
    if (!(stored == expected))
        throw LoadError("checkpoint spec does not match the expected model spec");
}

}  // namespace hcr
