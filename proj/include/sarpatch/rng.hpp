#pragma once

// xoshiro256** seeded through splitmix64. Both are implemented here rather
// than taken from <random> so that streams are bit-identical across
// platforms and language ports.

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>

namespace sarpatch {

constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// 64-bit FNV-1a; used for config hashes and per-raster seed derivation.
constexpr std::uint64_t fnv1a64(std::string_view bytes) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

/// Derive an independent stream seed for a named sub-task (e.g. one raster).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view name) noexcept {
    std::uint64_t s = seed ^ fnv1a64(name);
    return splitmix64(s);
}

class Xoshiro256ss {
public:
    using result_type = std::uint64_t;

    explicit constexpr Xoshiro256ss(std::uint64_t seed) noexcept {
        std::uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64(sm);
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~result_type{0}; }

    constexpr result_type operator()() noexcept {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform integer in [0, n). Rejection keeps the draw exactly unbiased.
    constexpr std::uint64_t bounded(std::uint64_t n) noexcept {
        if (n <= 1) return 0;
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const std::uint64_t r = (*this)();
            if (r >= threshold) return r % n;
        }
    }

    /// Uniform double in [0, 1) with 53 random bits.
    constexpr double uniform() noexcept {
        return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
    }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
        return (x << k) | (x >> (64 - k));
    }

    std::array<std::uint64_t, 4> s_{};
};

/// Fisher-Yates from the back; the swap sequence is part of the
/// reproducibility contract, so std::shuffle is not used.
template <typename T>
void seeded_shuffle(std::span<T> items, Xoshiro256ss& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.bounded(i));
        using std::swap;
        swap(items[i - 1], items[j]);
    }
}

}  // namespace sarpatch
