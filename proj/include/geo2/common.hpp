#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace geo2 {

// Error taxonomy, mirrored by the CLI exit codes:
//   UsageError  -> 1 (bad arguments, violated preconditions)
//   ConfigError -> 2 (bad config, malformed data, I/O failures)
//   NumericError-> 3 (non-finite values, degenerate numerics)
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DomainError : UsageError {
    explicit DomainError(const std::string& msg) : UsageError(msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : ConfigError {
    explicit IoError(const std::string& msg) : ConfigError(msg) {}
};

struct ParseError : ConfigError {
    explicit ParseError(const std::string& msg) : ConfigError(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

inline constexpr double kPi = 3.141592653589793238462643383279502884;

// splitmix64; used to derive independent RNG streams from (seed, tags).
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d4ecb5823a45a7ULL;
    return x ^ (x >> 31);
}

inline uint64_t hash_combine(uint64_t a, uint64_t b) {
    return mix64(a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
}

uint64_t hash_string(const std::string& s);

// Stream seed for (root seed, named purpose, optional epoch/index tags).
uint64_t stream_seed(uint64_t seed, const std::string& purpose, uint64_t a = 0, uint64_t b = 0);

// FNV-1a over raw bytes; used for freeze-contract parameter hashing and
// render determinism checks.
uint64_t fnv1a(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL);

// Scratch directory: $GEO2_CACHE if set, else fallback.
std::string cache_dir(const std::string& fallback = ".geo2_cache");

}  // namespace geo2
