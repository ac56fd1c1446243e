#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "softthink/common.hpp"

namespace softthink {

/// One named F32 tensor as stored in the weight container.
struct NamedTensor {
    std::vector<std::int64_t> shape;
    std::vector<float> data;
};

using TensorMap = std::map<std::string, NamedTensor>;

namespace safetensors {

/// Write a safetensors file: 8-byte little-endian header length, JSON
/// header mapping tensor names to dtype/shape/offsets, then the raw data
/// buffer. Only F32 is emitted. Tensors are laid out in sorted name order
/// so identical maps produce identical bytes.
inline void save(const std::string& path, const TensorMap& tensors) {
    nlohmann::json header = nlohmann::json::object();
    std::uint64_t offset = 0;
    for (const auto& [name, tensor] : tensors) {
        std::int64_t count = 1;
        for (const std::int64_t d : tensor.shape) count *= d;
        if (count != static_cast<std::int64_t>(tensor.data.size()))
            throw DataError("safetensors: shape does not match data size for " + name);
        const std::uint64_t bytes = tensor.data.size() * sizeof(float);
        header[name] = {
            {"dtype", "F32"},
            {"shape", tensor.shape},
            {"data_offsets", {offset, offset + bytes}},
        };
        offset += bytes;
    }
    const std::string header_str = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("safetensors: cannot open for writing: " + path);
    const std::uint64_t header_len = header_str.size();
    char len_bytes[8];
    for (int i = 0; i < 8; ++i) len_bytes[i] = static_cast<char>((header_len >> (8 * i)) & 0xFF);
    out.write(len_bytes, 8);
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (const auto& [name, tensor] : tensors) {
        (void)name;
        out.write(reinterpret_cast<const char*>(tensor.data.data()),
                  static_cast<std::streamsize>(tensor.data.size() * sizeof(float)));
    }
    if (!out) throw DataError("safetensors: write failed: " + path);
}

inline TensorMap load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("safetensors: cannot open: " + path);
    char len_bytes[8];
    in.read(len_bytes, 8);
    if (!in) throw DataError("safetensors: truncated header length: " + path);
    std::uint64_t header_len = 0;
    for (int i = 0; i < 8; ++i)
        header_len |= static_cast<std::uint64_t>(static_cast<unsigned char>(len_bytes[i])) << (8 * i);
    if (header_len == 0 || header_len > (1ull << 30))
        throw DataError("safetensors: implausible header length: " + path);
    std::string header_str(header_len, '\0');
    in.read(header_str.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw DataError("safetensors: truncated header: " + path);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_str);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("safetensors: bad header JSON: ") + e.what());
    }

    std::vector<char> buffer((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    TensorMap tensors;
    for (const auto& [name, meta] : header.items()) {
        if (name == "__metadata__") continue;
        const std::string dtype = meta.at("dtype").get<std::string>();
        if (dtype != "F32")
            throw DataError("safetensors: unsupported dtype " + dtype + " for tensor " + name);
        NamedTensor tensor;
        tensor.shape = meta.at("shape").get<std::vector<std::int64_t>>();
        const auto offsets = meta.at("data_offsets").get<std::vector<std::uint64_t>>();
        if (offsets.size() != 2 || offsets[1] < offsets[0] || offsets[1] > buffer.size())
            throw DataError("safetensors: bad data offsets for tensor " + name);
        std::int64_t count = 1;
        for (const std::int64_t d : tensor.shape) count *= d;
        const std::uint64_t bytes = offsets[1] - offsets[0];
        if (bytes != static_cast<std::uint64_t>(count) * sizeof(float))
            throw DataError("safetensors: shape/offset mismatch for tensor " + name);
        tensor.data.resize(static_cast<std::size_t>(count));
        std::memcpy(tensor.data.data(), buffer.data() + offsets[0], bytes);
        tensors.emplace(name, std::move(tensor));
    }
    return tensors;
}

} // namespace safetensors
} // namespace softthink
