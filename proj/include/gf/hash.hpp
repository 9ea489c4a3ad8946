#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace gf {

// FNV-1a, 64-bit. Used for content hashes in manifests and checkpoints.
class Hasher {
public:
    Hasher& update(const void* p, size_t n) {
        const uint8_t* b = static_cast<const uint8_t*>(p);
        for (size_t i = 0; i < n; ++i) {
            h_ ^= b[i];
            h_ *= 0x100000001b3ULL;
        }
        return *this;
    }

    Hasher& update(const std::string& s) { return update(s.data(), s.size()); }

    template <class T>
    Hasher& update_pod(const T& v) {
        static_assert(std::is_trivially_copyable_v<T>);
        return update(&v, sizeof(v));
    }

    template <class T>
    Hasher& update_vec(const std::vector<T>& v) {
        static_assert(std::is_trivially_copyable_v<T>);
        update_pod<uint64_t>(v.size());
        return update(v.data(), v.size() * sizeof(T));
    }

    uint64_t digest() const { return h_; }

    std::string hex() const {
        static const char* k = "0123456789abcdef";
        std::string s(16, '0');
        uint64_t h = h_;
        for (int i = 15; i >= 0; --i) {
            s[static_cast<size_t>(i)] = k[h & 0xf];
            h >>= 4;
        }
        return s;
    }

private:
    uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::string hash_bytes_hex(const void* p, size_t n) {
    Hasher h;
    h.update(p, n);
    return h.hex();
}

}  // namespace gf
