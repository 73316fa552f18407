#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "qxpand/error.hpp"
#include "qxpand/matrix.hpp"

namespace qx {

// Checkpoint container: 8-byte magic, u32 version, u64 manifest length,
// JSON manifest (tensor names, shapes, precision, per-tensor content
// hash, free-form meta), then raw little-endian payloads in manifest
// order.
inline constexpr char kCheckpointMagic[8] = {'Q', 'X', 'P', 'A', 'N', 'D', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline std::uint64_t fnv1a64(const std::vector<unsigned char>& bytes) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[i] = digits[v & 0xF];
        v >>= 4;
    }
    return s;
}

template <typename S>
constexpr const char* dtype_tag() {
    if constexpr (sizeof(S) == 8)
        return "f64";
    else
        return "f32";
}

template <typename S>
void append_le(std::vector<unsigned char>& bytes, S value) {
    using UInt = std::conditional_t<sizeof(S) == 8, std::uint64_t, std::uint32_t>;
    UInt u;
    std::memcpy(&u, &value, sizeof(S));
    for (std::size_t i = 0; i < sizeof(S); ++i) bytes.push_back(static_cast<unsigned char>((u >> (8 * i)) & 0xFF));
}

template <typename S>
S read_le(const unsigned char* p) {
    using UInt = std::conditional_t<sizeof(S) == 8, std::uint64_t, std::uint32_t>;
    UInt u = 0;
    for (std::size_t i = 0; i < sizeof(S); ++i) u |= static_cast<UInt>(p[i]) << (8 * i);
    S v;
    std::memcpy(&v, &u, sizeof(S));
    return v;
}

inline void write_u32_le(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64_le(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t read_uint_le(std::istream& in, int n, const char* what) {
    unsigned char b[8] = {0};
    if (!in.read(reinterpret_cast<char*>(b), n))
        throw checkpoint_truncated_error(std::string("checkpoint: truncated ") + what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace detail

template <typename S>
struct NamedTensor {
    std::string name;
    const Matrix<S>* tensor;
};

template <typename S>
void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& meta,
                     const std::vector<NamedTensor<S>>& tensors) {
    nlohmann::json manifest;
    manifest["meta"] = meta;
    manifest["tensors"] = nlohmann::json::array();
    std::vector<std::vector<unsigned char>> payloads;
    for (const auto& [name, m] : tensors) {
        std::vector<unsigned char> bytes;
        bytes.reserve(m->data.size() * sizeof(S));
        for (S v : m->data) detail::append_le<S>(bytes, v);
        manifest["tensors"].push_back({{"name", name},
                                       {"rows", m->rows},
                                       {"cols", m->cols},
                                       {"dtype", detail::dtype_tag<S>()},
                                       {"hash", detail::hex64(detail::fnv1a64(bytes))}});
        payloads.push_back(std::move(bytes));
    }
    const std::string manifest_str = manifest.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write checkpoint " + path.string());
    out.write(kCheckpointMagic, 8);
    detail::write_u32_le(out, kCheckpointVersion);
    detail::write_u64_le(out, manifest_str.size());
    out.write(manifest_str.data(), static_cast<std::streamsize>(manifest_str.size()));
    for (const auto& p : payloads) out.write(reinterpret_cast<const char*>(p.data()), static_cast<std::streamsize>(p.size()));
    if (!out) throw io_error("write failure on checkpoint " + path.string());
}

// Header + manifest without the payloads (used to pick precision/kind
// before committing to a scalar type).
inline nlohmann::json read_checkpoint_manifest(std::istream& in, const std::string& what) {
    char magic[8];
    if (!in.read(magic, 8)) throw checkpoint_truncated_error("checkpoint: truncated magic in " + what);
    if (std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw checkpoint_version_error("checkpoint: bad magic in " + what);
    const auto version = static_cast<std::uint32_t>(detail::read_uint_le(in, 4, "version"));
    if (version != kCheckpointVersion)
        throw checkpoint_version_error("checkpoint: version " + std::to_string(version) + " unsupported (reader is v" +
                                       std::to_string(kCheckpointVersion) + ")");
    const std::uint64_t len = detail::read_uint_le(in, 8, "manifest length");
    std::string manifest_str(len, '\0');
    if (!in.read(manifest_str.data(), static_cast<std::streamsize>(len)))
        throw checkpoint_truncated_error("checkpoint: truncated manifest in " + what);
    auto manifest = nlohmann::json::parse(manifest_str, nullptr, false);
    if (manifest.is_discarded() || !manifest.contains("tensors") || !manifest["tensors"].is_array())
        throw checkpoint_manifest_error("checkpoint: unreadable manifest in " + what);
    return manifest;
}

inline nlohmann::json peek_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot read checkpoint " + path.string());
    return read_checkpoint_manifest(in, path.string());
}

template <typename S>
struct LoadedCheckpoint {
    nlohmann::json meta;
    std::vector<std::pair<std::string, Matrix<S>>> tensors;

    const Matrix<S>& require(const std::string& name) const {
        for (const auto& [n, m] : tensors)
            if (n == name) return m;
        throw checkpoint_manifest_error("checkpoint: tensor '" + name + "' missing from manifest");
    }
};

template <typename S>
LoadedCheckpoint<S> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot read checkpoint " + path.string());
    auto manifest = read_checkpoint_manifest(in, path.string());

    LoadedCheckpoint<S> out;
    out.meta = manifest.value("meta", nlohmann::json::object());
    for (const auto& entry : manifest["tensors"]) {
        if (!entry.contains("name") || !entry.contains("rows") || !entry.contains("cols") ||
            !entry.contains("dtype") || !entry.contains("hash"))
            throw checkpoint_manifest_error("checkpoint: incomplete tensor entry in " + path.string());
        const std::string name = entry["name"];
        const int rows = entry["rows"];
        const int cols = entry["cols"];
        const std::string dtype = entry["dtype"];
        if (rows < 0 || cols < 0)
            throw checkpoint_manifest_error("checkpoint: negative shape for tensor '" + name + "'");
        if (dtype != detail::dtype_tag<S>())
            throw checkpoint_manifest_error("checkpoint: tensor '" + name + "' has dtype " + dtype +
                                            ", reader expects " + detail::dtype_tag<S>());
        const std::size_t nbytes = static_cast<std::size_t>(rows) * cols * sizeof(S);
        std::vector<unsigned char> bytes(nbytes);
        if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(nbytes)))
            throw checkpoint_truncated_error("checkpoint: truncated payload for tensor '" + name + "'");
        if (detail::hex64(detail::fnv1a64(bytes)) != entry["hash"].get<std::string>())
            throw checkpoint_manifest_error("checkpoint: content hash mismatch for tensor '" + name + "'");
        Matrix<S> m(rows, cols);
        for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = detail::read_le<S>(bytes.data() + i * sizeof(S));
        out.tensors.emplace_back(name, std::move(m));
    }
    return out;
}

}  // namespace qx
