#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "armmeter/tensor_io.hpp"

namespace armmeter {

enum class NoiseKind { gaussian = 0, salt_pepper = 1, blur = 2 };

std::string to_string(NoiseKind kind);
NoiseKind noise_kind_from_string(const std::string& s);

/// Severity parameters per level (level 1 = index 0 = mildest). The defaults
/// below are the canonical ladder; a key-value config file can override them
/// (ladder.* keys, applied by the CLI). A ladder may hold 1..9 levels.
struct SeverityLadder {
    std::vector<double> gaussian_sigma{0.02, 0.04, 0.08, 0.12, 0.16, 0.20, 0.25};
    std::vector<double> salt_pepper_p{0.01, 0.02, 0.04, 0.06, 0.08, 0.12, 0.16};
    std::vector<int> blur_radius{1, 2, 3, 4, 5, 6, 7};

    std::size_t levels(NoiseKind kind) const;
    void validate() const;
};

struct CorruptionSpec {
    NoiseKind kind = NoiseKind::gaussian;
    int level = 1;  // 1-based
    std::uint64_t seed = 0;
};

/// Adds clamp(p + N(0, sigma^2), 0, 1) noise per pixel. Per-image RNG streams
/// (stream id = sample index), so the result is independent of iteration or
/// scheduling order.
Dataset gaussian_noise(const Dataset& ds, double sigma, std::uint64_t seed);

/// Replaces each pixel, with probability p, by 0 or 1 (equal chance).
Dataset salt_pepper(const Dataset& ds, double p, std::uint64_t seed);

/// Per-channel Gaussian blur: kernel std = radius/3, size 2*radius+1,
/// reflect padding. radius 0 is the identity.
Dataset blur(const Dataset& ds, int radius);

/// The severity parameter for (kind, level) under the given ladder.
double severity_param(NoiseKind kind, int level, const SeverityLadder& ladder = {});

/// All levels of one kind, mildest first, each carrying `seed`.
std::vector<CorruptionSpec> severity_ladder(NoiseKind kind, std::uint64_t seed = 0,
                                            const SeverityLadder& ladder = {});

/// Applies one corruption spec; output name gets a "+<kind>L<level>" suffix.
Dataset apply_corruption(const Dataset& ds, const CorruptionSpec& spec,
                         const SeverityLadder& ladder = {});

}  // namespace armmeter
