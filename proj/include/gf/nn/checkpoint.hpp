#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include "gf/hash.hpp"
#include "gf/nn/tape.hpp"

// Model checkpoints: all parameters of a ParamStore plus a free-form JSON
// metadata string, content-hashed so frozen models can be identity-checked.
namespace gf::nn {

struct CheckpointError : std::runtime_error {
    explicit CheckpointError(const std::string& m)
        : std::runtime_error("CheckpointError: " + m) {}
};

// Hash of parameter names, shapes, and raw values; the identity of a model.
inline uint64_t params_hash(const ParamStore<float>& ps) {
    Hasher h;
    for (const auto& e : ps.entries()) {
        h.update(e.name);
        h.update_vec(e.value.shape());
        h.update(e.value.data(), static_cast<size_t>(e.value.numel()) * sizeof(float));
    }
    return h.digest();
}

// `with_opt_state` additionally stores the AdamW first/second moments so
// training can resume exactly.
inline void save_checkpoint(const ParamStore<float>& ps, const std::string& metadata_json,
                            const std::string& path, bool with_opt_state = false) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot write " + path);
    const char magic[4] = {'G', 'F', 'C', 'K'};
    uint32_t version = 1;
    uint32_t flags = with_opt_state ? 1u : 0u;
    uint64_t hash = params_hash(ps);
    uint64_t nparams = ps.entries().size();
    uint64_t meta_len = metadata_json.size();
    f.write(magic, 4);
    f.write(reinterpret_cast<const char*>(&version), 4);
    f.write(reinterpret_cast<const char*>(&flags), 4);
    f.write(reinterpret_cast<const char*>(&hash), 8);
    f.write(reinterpret_cast<const char*>(&meta_len), 8);
    f.write(metadata_json.data(), static_cast<std::streamsize>(meta_len));
    f.write(reinterpret_cast<const char*>(&nparams), 8);
    for (const auto& e : ps.entries()) {
        uint64_t name_len = e.name.size(), ndims = e.value.shape().size();
        f.write(reinterpret_cast<const char*>(&name_len), 8);
        f.write(e.name.data(), static_cast<std::streamsize>(name_len));
        f.write(reinterpret_cast<const char*>(&ndims), 8);
        for (int64_t d : e.value.shape()) f.write(reinterpret_cast<const char*>(&d), 8);
        auto blob = [&](const Tensor<float>& t) {
            f.write(reinterpret_cast<const char*>(t.data()),
                    static_cast<std::streamsize>(t.numel() * sizeof(float)));
        };
        blob(e.value);
        if (with_opt_state) {
            blob(e.adam_m);
            blob(e.adam_v);
        }
    }
    if (!f) throw CheckpointError("short write to " + path);
}

// Reads only the metadata string without touching any parameters.
inline std::string peek_checkpoint_metadata(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot read " + path);
    char magic[4];
    uint32_t version = 0, flags = 0;
    uint64_t hash = 0, meta_len = 0;
    f.read(magic, 4);
    f.read(reinterpret_cast<char*>(&version), 4);
    f.read(reinterpret_cast<char*>(&flags), 4);
    f.read(reinterpret_cast<char*>(&hash), 8);
    f.read(reinterpret_cast<char*>(&meta_len), 8);
    if (!f || std::memcmp(magic, "GFCK", 4) != 0 || version != 1)
        throw CheckpointError(path + ": bad header");
    std::string meta(meta_len, '\0');
    f.read(meta.data(), static_cast<std::streamsize>(meta_len));
    if (!f) throw CheckpointError(path + ": truncated metadata");
    return meta;
}

// Loads parameters into a ParamStore whose entries were already created with
// matching names/shapes (by building the model first). Returns the metadata.
inline std::string load_checkpoint(ParamStore<float>& ps, const std::string& path,
                                   bool* had_opt_state = nullptr) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot read " + path);
    char magic[4];
    uint32_t version = 0, flags = 0;
    uint64_t hash = 0, meta_len = 0, nparams = 0;
    f.read(magic, 4);
    f.read(reinterpret_cast<char*>(&version), 4);
    f.read(reinterpret_cast<char*>(&flags), 4);
    f.read(reinterpret_cast<char*>(&hash), 8);
    f.read(reinterpret_cast<char*>(&meta_len), 8);
    if (!f || std::memcmp(magic, "GFCK", 4) != 0 || version != 1)
        throw CheckpointError(path + ": bad header");
    bool with_opt = (flags & 1u) != 0;
    if (had_opt_state) *had_opt_state = with_opt;
    std::string meta(meta_len, '\0');
    f.read(meta.data(), static_cast<std::streamsize>(meta_len));
    f.read(reinterpret_cast<char*>(&nparams), 8);
    if (nparams != ps.entries().size())
        throw CheckpointError(path + ": parameter count mismatch");
    for (auto& e : ps.entries()) {
        uint64_t name_len = 0, ndims = 0;
        f.read(reinterpret_cast<char*>(&name_len), 8);
        std::string name(name_len, '\0');
        f.read(name.data(), static_cast<std::streamsize>(name_len));
        if (name != e.name) throw CheckpointError(path + ": expected param '" + e.name +
                                                  "', found '" + name + "'");
        f.read(reinterpret_cast<char*>(&ndims), 8);
        std::vector<int64_t> shape(ndims);
        for (auto& d : shape) f.read(reinterpret_cast<char*>(&d), 8);
        if (shape != e.value.shape())
            throw CheckpointError(path + ": shape mismatch for '" + name + "'");
        auto blob = [&](Tensor<float>& t) {
            f.read(reinterpret_cast<char*>(t.data()),
                   static_cast<std::streamsize>(t.numel() * sizeof(float)));
        };
        blob(e.value);
        if (with_opt) {
            blob(e.adam_m);
            blob(e.adam_v);
        }
    }
    if (!f) throw CheckpointError(path + ": truncated");
    if (params_hash(ps) != hash) throw CheckpointError(path + ": content hash mismatch");
    return meta;
}

}  // namespace gf::nn
