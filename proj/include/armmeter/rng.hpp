#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace armmeter {

// SplitMix64 (Steele/Lea/Vigna). The algorithm is fully pinned here, so every
// platform and compiler produces the same stream for the same seed. All
// randomness in the project goes through this generator.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1).
    double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, bound). bound must be > 0.
    std::uint64_t next_below(std::uint64_t bound) { return next() % bound; }

    /// Standard normal via Box-Muller (one spare cached per generator).
    double next_normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // u1 in (0, 1] so the log is finite.
        double u1 = 1.0 - next_double();
        double u2 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Derives the seed of an independent substream. Streams are used for
/// per-image corruption noise (stream id = sample index), per-epoch shuffles,
/// and per-cell experiment seeds, so results never depend on scheduling.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream_id) {
    SplitMix64 a(seed);
    SplitMix64 b(stream_id ^ 0x632BE59BD9B4E019ULL);
    return a.next() ^ b.next();
}

inline SplitMix64 stream_rng(std::uint64_t seed, std::uint64_t stream_id) {
    return SplitMix64(mix_seed(seed, stream_id));
}

/// Fisher-Yates shuffle driven by SplitMix64 (std::shuffle is not portable
/// across standard library implementations).
template <typename T>
void shuffle(std::vector<T>& v, SplitMix64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.next_below(i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace armmeter
