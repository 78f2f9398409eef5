#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "relex/errors.hpp"
#include "relex/nn.hpp"

namespace relex {

// Flat named-tensor archive:
//   8-byte magic, u64 manifest length, JSON manifest, then each tensor's
//   coefficients as raw f64 in column-major order, in manifest order.
// All integers and doubles are little-endian; this implementation relies on
// running on a little-endian host.
static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

inline constexpr char kCheckpointMagic[8] = {'R', 'E', 'L', 'E', 'X', 'C', 'K', '1'};

struct CheckpointData {
    nlohmann::json meta; // manifest minus the tensor table
    std::map<std::string, nn::Matrix> tensors;
};

namespace detail {

inline void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i)
        bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(bytes), 8);
}

inline std::uint64_t read_u64(std::istream& in) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    if (!in)
        throw ParseError("checkpoint: truncated header");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return v;
}

} // namespace detail

/// Writes every tensor in `store` under `meta` extended with a "tensors"
/// table. Tensors are ordered by name, so equal parameters give
/// byte-identical files.
inline void write_checkpoint(const std::string& path, const nlohmann::json& meta,
                             const nn::ParameterStore& store) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw ParseError("cannot open checkpoint for writing: " + path);

    std::vector<const nn::Tensor*> tensors = store.all();
    std::sort(tensors.begin(), tensors.end(),
              [](const nn::Tensor* a, const nn::Tensor* b) { return a->name < b->name; });

    nlohmann::json manifest = meta;
    manifest["tensors"] = nlohmann::json::array();
    for (const nn::Tensor* t : tensors)
        manifest["tensors"].push_back(
            {{"name", t->name}, {"rows", t->value.rows()}, {"cols", t->value.cols()}});

    const std::string encoded = manifest.dump();
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::write_u64(out, encoded.size());
    out.write(encoded.data(), static_cast<std::streamsize>(encoded.size()));
    for (const nn::Tensor* t : tensors)
        out.write(reinterpret_cast<const char*>(t->value.data()),
                  static_cast<std::streamsize>(sizeof(double) *
                                               static_cast<std::size_t>(t->value.size())));
    if (!out)
        throw ParseError("checkpoint: write failed: " + path);
}

inline CheckpointData read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ParseError("cannot open checkpoint: " + path);

    char magic[sizeof(kCheckpointMagic)];
    in.read(magic, sizeof(magic));
    if (!in || !std::equal(magic, magic + sizeof(magic), kCheckpointMagic))
        throw ParseError("checkpoint: bad magic (not a checkpoint file?): " + path);

    const std::uint64_t manifest_len = detail::read_u64(in);
    std::string encoded(manifest_len, '\0');
    in.read(encoded.data(), static_cast<std::streamsize>(manifest_len));
    if (!in)
        throw ParseError("checkpoint: truncated manifest");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(encoded);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint: bad manifest: ") + e.what());
    }
    if (!manifest.is_object() || !manifest.contains("tensors") ||
        !manifest["tensors"].is_array())
        throw ParseError("checkpoint: manifest lacks a tensor table");

    CheckpointData data;
    for (const auto& entry : manifest["tensors"]) {
        if (!entry.contains("name") || !entry.contains("rows") || !entry.contains("cols"))
            throw ParseError("checkpoint: malformed tensor entry");
        const std::string name = entry["name"].get<std::string>();
        const Eigen::Index rows = entry["rows"].get<Eigen::Index>();
        const Eigen::Index cols = entry["cols"].get<Eigen::Index>();
        if (rows < 0 || cols < 0)
            throw ParseError("checkpoint: negative tensor shape for " + name);
        nn::Matrix m(rows, cols);
        in.read(reinterpret_cast<char*>(m.data()),
                static_cast<std::streamsize>(sizeof(double) *
                                             static_cast<std::size_t>(m.size())));
        if (!in)
            throw ParseError("checkpoint: truncated tensor data for " + name);
        if (!data.tensors.emplace(name, std::move(m)).second)
            throw ParseError("checkpoint: duplicate tensor " + name);
    }
    if (in.peek() != std::char_traits<char>::eof())
        throw ParseError("checkpoint: trailing bytes after tensor data");
    manifest.erase("tensors");
    data.meta = std::move(manifest);
    return data;
}

/// Copies archive tensors into an already-shaped store. The archive must
/// cover exactly the store's tensors with matching shapes.
inline void load_into_store(const CheckpointData& data, nn::ParameterStore& store) {
    std::size_t matched = 0;
    for (nn::Tensor* t : store.all()) {
        auto it = data.tensors.find(t->name);
        if (it == data.tensors.end())
            throw ConfigError("checkpoint does not cover tensor " + t->name);
        if (it->second.rows() != t->value.rows() || it->second.cols() != t->value.cols())
            throw ConfigError("checkpoint shape mismatch for " + t->name);
        t->value = it->second;
        t->grad.setZero();
        ++matched;
    }
    if (matched != data.tensors.size())
        throw ConfigError("checkpoint carries tensors unknown to the model");
}

} // namespace relex
