#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace dynlab {

/// Counter-based pseudo-random stream built on the SplitMix64 output
/// function. A stream is keyed by (seed, stream id); the k-th output is a
/// pure function of (key, k), so per-path streams are reproducible
/// independently of scheduling and of how many draws other paths consume.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream)
        : key_(mix(seed ^ mix(stream + 0x9e3779b97f4a7c15ull))), counter_(0) {}

    /// Next raw 64-bit output.
    std::uint64_t next_u64() {
        std::uint64_t z = key_ + (++counter_) * 0x9e3779b97f4a7c15ull;
        return mix(z);
    }

    /// Uniform double in (0, 1]; never returns 0 so it is safe under log().
    double next_uniform() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller; draws are produced in pairs and the
    /// second one is cached.
    double next_normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = next_uniform();
        double u2 = next_uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double angle = 2.0 * std::numbers::pi * u2;
        cached_ = r * std::sin(angle);
        has_cached_ = true;
        return r * std::cos(angle);
    }

    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ull;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebull;
        z ^= z >> 31;
        return z;
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

/// Derives a named sub-seed so that every pipeline stage draws from its own
/// stream while all randomness still flows from the one scenario seed.
inline std::uint64_t derive_seed(std::uint64_t seed, const char* tag) {
    std::uint64_t h = 0xcbf29ce484222325ull ^ seed;
    for (const char* p = tag; *p; ++p) {
        h ^= static_cast<unsigned char>(*p);
        h *= 0x100000001b3ull;
    }
    return RngStream::mix(h);
}

}  // namespace dynlab
