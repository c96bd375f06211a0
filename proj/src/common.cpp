#include "geo2/common.hpp"

#include <cstdlib>

namespace geo2 {

uint64_t hash_string(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

uint64_t stream_seed(uint64_t seed, const std::string& purpose, uint64_t a, uint64_t b) {
    uint64_t h = mix64(seed);
    h = hash_combine(h, hash_string(purpose));
    h = hash_combine(h, mix64(a));
    h = hash_combine(h, mix64(b));
    return h;
}

uint64_t fnv1a(const void* data, size_t n, uint64_t h) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string cache_dir(const std::string& fallback) {
    if (const char* env = std::getenv("GEO2_CACHE"); env && *env) return env;
    return fallback;
}

}  // namespace geo2
