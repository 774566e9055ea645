#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace icbs {

// splitmix64 mixer, used both for seed expansion and stream derivation.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Derive an independent stream seed from a base seed and a stream tag.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
    return mix64(base ^ mix64(tag));
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag, std::uint64_t sub) {
    return derive_seed(derive_seed(base, tag), sub);
}

// xoshiro256++ with explicit distributions. std::<random> engines are
// portable but the distributions are not; everything downstream needs
// identical streams across compilers, so the few draws we use are spelled
// out here.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t s = seed;
        for (auto& word : state_) {
            s = mix64(s);
            word = s;
        }
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1), 53-bit resolution.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, bound), rejection-sampled to avoid modulo bias.
    std::uint64_t bounded(std::uint64_t bound) {
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % bound;
        }
    }

    // Standard normal via Box-Muller; draws in pairs.
    double next_normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = next_double();
        } while (u1 <= 0.0);
        const double u2 = next_double();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        have_spare_ = true;
        return radius * std::cos(angle);
    }

    Rng substream(std::uint64_t tag) const { return Rng(derive_seed(state_[0], tag)); }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t state_[4] = {};
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Stream tags for the run-level seed split. Every consumer of randomness
// owns one tag, so adding or removing draws in one consumer never shifts
// the streams seen by the others.
namespace stream {
inline constexpr std::uint64_t kModelInit = 1;
inline constexpr std::uint64_t kSgdShuffle = 2;
inline constexpr std::uint64_t kCalibrationBatch = 3;
inline constexpr std::uint64_t kInitScores = 4;
inline constexpr std::uint64_t kPruningBatches = 5;
inline constexpr std::uint64_t kLayerPick = 6;
inline constexpr std::uint64_t kSelectionScores = 7;
inline constexpr std::uint64_t kSolver = 8;
inline constexpr std::uint64_t kSyntheticTrain = 9;
inline constexpr std::uint64_t kSyntheticValid = 10;
}  // namespace stream

}  // namespace icbs
