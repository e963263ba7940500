#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace dintr {

// Deterministic, compiler-independent RNG. All randomness in the library flows
// through these helpers so identical seeds give bit-identical results anywhere.

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Order-sensitive mixing of stream identifiers into a single 64-bit seed.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t s = a;
    (void)splitmix64(s);
    s ^= b + 0x9e3779b97f4a7c15ull + (s << 6) + (s >> 2);
    return s;
}

inline std::uint64_t mix_seed(std::uint64_t a, std::string_view tag) {
    std::uint64_t h = 1469598103934665603ull; // FNV-1a over the tag
    for (unsigned char c : tag) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return mix_seed(a, h);
}

// Counter-based generator: a named stream positioned by (seed, tag, counters).
class rng {
public:
    explicit rng(std::uint64_t seed) : state_(seed) { (void)splitmix64(state_); }

    std::uint64_t next_u64() { return splitmix64(state_); }

    // Uniform in [0, 1): 53-bit mantissa.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [-a, a].
    double uniform_sym(double a) { return (2.0 * uniform01() - 1.0) * a; }

    // Standard normal via Box-Muller; pairs are cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        // Guard the log: uniform01 can return exactly 0.
        while (u1 <= 0.0) u1 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace dintr
