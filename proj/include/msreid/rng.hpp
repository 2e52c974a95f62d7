#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace msreid {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Stable sub-seed derivation so that every component of a run draws from its
// own stream while staying a pure function of (master seed, component tag).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
    return splitmix64(base ^ splitmix64(tag + 0x1ULL));
}

// Seed tags for the pipeline's independent streams.
namespace seed_tag {
constexpr std::uint64_t dataset = 1;
constexpr std::uint64_t division = 2;
constexpr std::uint64_t stage1 = 3;
constexpr std::uint64_t stage2 = 4;
constexpr std::uint64_t stage3 = 5;
constexpr std::uint64_t retention = 6;
constexpr std::uint64_t encoder_init = 7;
constexpr std::uint64_t text_encoder_init = 8;
}  // namespace seed_tag

// Deterministic random stream. mt19937_64 is fully specified by the standard,
// and the derived draws below avoid the implementation-defined std
// distributions, so identical seeds give identical streams on any platform.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t bits() { return engine_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller.
    double normal() {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Unbiased integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        if (n <= 1) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    // Fisher-Yates; std::shuffle is not seed-stable across implementations.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

    std::vector<double> normals(std::size_t n) {
        std::vector<double> out(n);
        for (auto& x : out) x = normal();
        return out;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace msreid
