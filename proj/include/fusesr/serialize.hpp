#pragma once

// Tensor container: 8-byte magic "FUSESR01", u64 little-endian manifest
// length, JSON manifest {dtype, meta, tensors:[{name, shape, offset,
// nbytes}]}, then raw little-endian scalar data. Offsets are relative to the
// start of the data section. Loading validates magic, dtype, and that every
// block lies inside the file.

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fusesr/tensor.hpp"

namespace fusesr {

inline constexpr char kTensorMagic[8] = {'F', 'U', 'S', 'E',
                                         'S', 'R', '0', '1'};

struct TensorFile {
    nlohmann::json meta;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor& find(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name) return t;
        throw FormatError("tensor file: missing tensor '" + name + "'");
    }
    bool contains(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name) return true;
        return false;
    }
};

inline void save_tensor_file(
    const std::string& path,
    const std::vector<std::pair<std::string, const Tensor*>>& tensors,
    const nlohmann::json& meta = nlohmann::json::object()) {
    static_assert(std::endian::native == std::endian::little,
                  "serialization assumes a little-endian host");
    nlohmann::json manifest;
    manifest["dtype"] = "float32";
    manifest["meta"] = meta;
    manifest["tensors"] = nlohmann::json::array();
    uint64_t offset = 0;
    for (const auto& [name, t] : tensors) {
        const uint64_t nbytes = static_cast<uint64_t>(t->numel()) * 4;
        manifest["tensors"].push_back({{"name", name},
                                       {"shape", {t->b, t->c, t->h, t->w}},
                                       {"offset", offset},
                                       {"nbytes", nbytes}});
        offset += nbytes;
    }
    const std::string mstr = manifest.dump();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("tensor file: cannot open for writing: " + path);
    os.write(kTensorMagic, sizeof(kTensorMagic));
    const uint64_t mlen = mstr.size();
    os.write(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
    os.write(mstr.data(), static_cast<std::streamsize>(mstr.size()));
    for (const auto& [name, t] : tensors)
        os.write(reinterpret_cast<const char*>(t->data.data()),
                 static_cast<std::streamsize>(t->data.size() * 4));
    if (!os) throw IoError("tensor file: write failed: " + path);
}

inline TensorFile load_tensor_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary | std::ios::ate);
    if (!is) throw IoError("tensor file: cannot open: " + path);
    const int64_t file_size = static_cast<int64_t>(is.tellg());
    is.seekg(0);
    char magic[sizeof(kTensorMagic)];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kTensorMagic, sizeof(magic)) != 0)
        throw FormatError("tensor file: bad magic in " + path);
    uint64_t mlen = 0;
    is.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
    const int64_t header = static_cast<int64_t>(sizeof(kTensorMagic)) +
                           static_cast<int64_t>(sizeof(mlen));
    if (!is || static_cast<int64_t>(mlen) > file_size - header)
        throw FormatError("tensor file: truncated manifest in " + path);
    std::string mstr(mlen, '\0');
    is.read(mstr.data(), static_cast<std::streamsize>(mlen));
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(mstr);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("tensor file: bad manifest JSON in " + path + ": " +
                          e.what());
    }
    if (manifest.value("dtype", "") != "float32")
        throw FormatError("tensor file: unsupported dtype in " + path);
    TensorFile out;
    out.meta = manifest.value("meta", nlohmann::json::object());
    const int64_t data_start = header + static_cast<int64_t>(mlen);
    const int64_t data_size = file_size - data_start;
    for (const auto& entry : manifest["tensors"]) {
        const std::string name = entry.at("name").get<std::string>();
        const auto shape = entry.at("shape").get<std::vector<int64_t>>();
        const uint64_t offset = entry.at("offset").get<uint64_t>();
        const uint64_t nbytes = entry.at("nbytes").get<uint64_t>();
        if (shape.size() != 4)
            throw FormatError("tensor file: tensor '" + name +
                              "' has non-4D shape");
        Tensor t(shape[0], shape[1], shape[2], shape[3]);
        if (nbytes != static_cast<uint64_t>(t.numel()) * 4)
            throw FormatError("tensor file: tensor '" + name +
                              "' nbytes does not match shape");
        if (offset + nbytes > static_cast<uint64_t>(data_size))
            throw FormatError("tensor file: tensor '" + name +
                              "' lies outside the file");
        is.seekg(data_start + static_cast<int64_t>(offset));
        is.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(nbytes));
        if (!is) throw FormatError("tensor file: truncated data in " + path);
        out.tensors.emplace_back(name, std::move(t));
    }
    return out;
}

}  // namespace fusesr
