#pragma once

#include <cassert>
#include <cstdint>
#include <utility>
#include <vector>

namespace imfnd {

// Portable seeded RNG used for every sampling decision in the library.
//
// The generator is SplitMix64 (Steele, Lea & Flood; public domain), chosen so
// that an independent reimplementation in any language reproduces the exact
// split/support draws. The exact procedure:
//
//   next(state):
//     state += 0x9E3779B97F4A7C15
//     z = state
//     z = (z XOR (z >> 30)) * 0xBF58476D1CE4E5B9
//     z = (z XOR (z >> 27)) * 0x94D049BB133111EB
//     return z XOR (z >> 31)
//
//   stream derivation for (seed, tag):
//     initial state = once(once(seed) + tag)
//   where once(x) runs a single next() step with state = x.
//
//   uniform_below(n):
//     zone = (2^64 - 1) / n * n   (integer division)
//     draw x = next() until x < zone; return x mod n
//
//   shuffle(a) is an ascending Fisher-Yates:
//     for i in [0, len-1): j = i + uniform_below(len - i); swap a[i], a[j]
//
// Stream tags in use: 1 = split REAL class, 2 = split FAKE class,
// 3 = support REAL class, 4 = support FAKE class, 5 = classifier init.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    SplitMix64(std::uint64_t seed, std::uint64_t stream_tag)
        : state_(once(once(seed) + stream_tag)) {}

    std::uint64_t next() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Unbiased draw from [0, n).
    std::uint64_t uniform_below(std::uint64_t n) {
        assert(n > 0);
        const std::uint64_t zone = (UINT64_MAX / n) * n;
        std::uint64_t x = next();
        while (x >= zone) {
            x = next();
        }
        return x % n;
    }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform01() {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    // Uniform double in [-1, 1).
    double uniform_symmetric() { return 2.0 * uniform01() - 1.0; }

    static std::uint64_t once(std::uint64_t x) {
        return SplitMix64(x).next();
    }

private:
    std::uint64_t state_;
};

namespace rng_stream {
inline constexpr std::uint64_t kSplitReal = 1;
inline constexpr std::uint64_t kSplitFake = 2;
inline constexpr std::uint64_t kSupportReal = 3;
inline constexpr std::uint64_t kSupportFake = 4;
inline constexpr std::uint64_t kClassifierInit = 5;
}  // namespace rng_stream

template <typename T>
void fisher_yates_shuffle(std::vector<T>& items, SplitMix64& rng) {
    if (items.size() < 2) return;
    for (std::size_t i = 0; i + 1 < items.size(); ++i) {
        const std::size_t j = i + static_cast<std::size_t>(
            rng.uniform_below(static_cast<std::uint64_t>(items.size() - i)));
        std::swap(items[i], items[j]);
    }
}

}  // namespace imfnd
