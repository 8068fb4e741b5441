#pragma once

#include "common.hpp"

#include <cmath>
#include <cstdint>
#include <string_view>

namespace gradfix {

// xoshiro256** seeded through splitmix64. Self-contained so that seeded runs
// reproduce byte-identically regardless of the standard library in use.
class Rng {
public:
    explicit Rng(uint64_t seed) {
        uint64_t x = seed;
        for (auto & word : state_) {
            word = splitmix64(x);
        }
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // uniform in [0, 1), 53-bit resolution
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // unbiased integer in [0, n)
    uint64_t next_below(uint64_t n) {
        const uint64_t threshold = (0 - n) % n;
        for (;;) {
            const uint64_t r = next_u64();
            if (r >= threshold) {
                return r % n;
            }
        }
    }

    // standard normal, Box-Muller with cached spare
    double next_normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u = 1.0 - next_double();  // (0, 1], keeps log finite
        const double v = next_double();
        const double r = std::sqrt(-2.0 * std::log(u));
        const double a = 6.283185307179586476925286766559 * v;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    int next_sign() {
        return (next_u64() >> 63) ? +1 : -1;
    }

    static uint64_t splitmix64(uint64_t & x) {
        uint64_t z = (x += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

private:
    static uint64_t rotl(uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    uint64_t state_[4] = {};
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Derives a named substream seed. Parallel and serial execution see the same
// streams as long as they use the same (seed, tag, index) keys.
inline uint64_t derive_seed(uint64_t seed, std::string_view tag, uint64_t index = 0) {
    uint64_t x = seed ^ fnv1a64(tag.data(), tag.size());
    x ^= 0x9e3779b97f4a7c15ull * (index + 1);
    return Rng::splitmix64(x);
}

} // namespace gradfix
