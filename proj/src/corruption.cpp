#include "armmeter/corruption.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "armmeter/rng.hpp"

namespace armmeter {

std::string to_string(NoiseKind kind) {
    switch (kind) {
        case NoiseKind::gaussian: return "gaussian";
        case NoiseKind::salt_pepper: return "salt_pepper";
        case NoiseKind::blur: return "blur";
    }
    throw std::invalid_argument("unknown noise kind");
}

NoiseKind noise_kind_from_string(const std::string& s) {
    if (s == "gaussian") return NoiseKind::gaussian;
    if (s == "salt_pepper") return NoiseKind::salt_pepper;
    if (s == "blur") return NoiseKind::blur;
    throw std::invalid_argument("unknown noise kind: " + s);
}

std::size_t SeverityLadder::levels(NoiseKind kind) const {
    switch (kind) {
        case NoiseKind::gaussian: return gaussian_sigma.size();
        case NoiseKind::salt_pepper: return salt_pepper_p.size();
        case NoiseKind::blur: return blur_radius.size();
    }
    return 0;
}

void SeverityLadder::validate() const {
    auto check_size = [](std::size_t n, const char* what) {
        if (n < 1 || n > 9)
            throw std::invalid_argument(std::string("ladder for ") + what +
                                        " must have 1..9 levels");
    };
    check_size(gaussian_sigma.size(), "gaussian");
    check_size(salt_pepper_p.size(), "salt_pepper");
    check_size(blur_radius.size(), "blur");
    for (double s : gaussian_sigma)
        if (!(s >= 0.0)) throw std::invalid_argument("gaussian sigma must be >= 0");
    for (double p : salt_pepper_p)
        if (!(p >= 0.0 && p <= 1.0))
            throw std::invalid_argument("salt_pepper p must be in [0,1]");
    for (int r : blur_radius)
        if (r < 0) throw std::invalid_argument("blur radius must be >= 0");
    // Severity must not fall as the level rises, or level ordering loses
    // its meaning.
    auto nondecreasing = [](const auto& v) {
        for (std::size_t i = 1; i < v.size(); ++i)
            if (v[i] < v[i - 1]) return false;
        return true;
    };
    if (!nondecreasing(gaussian_sigma) || !nondecreasing(salt_pepper_p) ||
        !nondecreasing(blur_radius))
        throw std::invalid_argument("ladder parameters must be nondecreasing in level");
}

namespace {

float clamp01(double v) {
    return static_cast<float>(std::min(1.0, std::max(0.0, v)));
}

}  // namespace

Dataset gaussian_noise(const Dataset& ds, double sigma, std::uint64_t seed) {
    if (!(sigma >= 0.0)) throw std::invalid_argument("gaussian sigma must be >= 0");
    Dataset out = ds;
    if (sigma == 0.0) return out;
    for (std::size_t s = 0; s < out.samples.size(); ++s) {
        SplitMix64 rng = stream_rng(seed, s);
        for (float& p : out.samples[s].pixels) {
            p = clamp01(static_cast<double>(p) + sigma * rng.next_normal());
        }
    }
    return out;
}

Dataset salt_pepper(const Dataset& ds, double p, std::uint64_t seed) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("salt_pepper p must be in [0,1]");
    Dataset out = ds;
    for (std::size_t s = 0; s < out.samples.size(); ++s) {
        SplitMix64 rng = stream_rng(seed, s);
        for (float& px : out.samples[s].pixels) {
            if (rng.next_double() < p) px = rng.next_double() < 0.5 ? 0.0f : 1.0f;
        }
    }
    return out;
}

namespace {

// Mirror an out-of-range index back into [0, n) without repeating the border
// pixel (reflect-101). Collapses to 0 when n == 1.
int reflect_index(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * (n - 1) - i;
    }
    return i;
}

std::vector<double> gaussian_kernel(int radius) {
    const double sigma = radius / 3.0;
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        double w = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
        k[i + radius] = w;
        sum += w;
    }
    for (double& w : k) w /= sum;
    return k;
}

}  // namespace

Dataset blur(const Dataset& ds, int radius) {
    if (radius < 0) throw std::invalid_argument("blur radius must be >= 0");
    Dataset out = ds;
    if (radius == 0 || ds.samples.empty()) return out;
    const Image& first = ds.samples.front();
    if (radius > std::min(first.height, first.width))
        throw std::invalid_argument("blur radius exceeds image size");

    const std::vector<double> kernel = gaussian_kernel(radius);
    const int h = first.height, w = first.width, c = first.channels;
    std::vector<double> tmp(static_cast<std::size_t>(h) * w);
    for (Image& img : out.samples) {
        for (int ch = 0; ch < c; ++ch) {
            // horizontal pass
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    double acc = 0.0;
                    for (int k = -radius; k <= radius; ++k)
                        acc += kernel[k + radius] * img.at(ch, y, reflect_index(x + k, w));
                    tmp[static_cast<std::size_t>(y) * w + x] = acc;
                }
            }
            // vertical pass
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    double acc = 0.0;
                    for (int k = -radius; k <= radius; ++k)
                        acc += kernel[k + radius] *
                               tmp[static_cast<std::size_t>(reflect_index(y + k, h)) * w + x];
                    img.at(ch, y, x) = clamp01(acc);
                }
            }
        }
    }
    return out;
}

double severity_param(NoiseKind kind, int level, const SeverityLadder& ladder) {
    const std::size_t n = ladder.levels(kind);
    if (level < 1 || static_cast<std::size_t>(level) > n)
        throw std::invalid_argument("corruption level " + std::to_string(level) +
                                    " outside ladder for " + to_string(kind));
    switch (kind) {
        case NoiseKind::gaussian: return ladder.gaussian_sigma[level - 1];
        case NoiseKind::salt_pepper: return ladder.salt_pepper_p[level - 1];
        case NoiseKind::blur: return ladder.blur_radius[level - 1];
    }
    throw std::invalid_argument("unknown noise kind");
}

std::vector<CorruptionSpec> severity_ladder(NoiseKind kind, std::uint64_t seed,
                                            const SeverityLadder& ladder) {
    ladder.validate();
    std::vector<CorruptionSpec> specs;
    for (std::size_t i = 0; i < ladder.levels(kind); ++i)
        specs.push_back(CorruptionSpec{kind, static_cast<int>(i + 1), seed});
    return specs;
}

Dataset apply_corruption(const Dataset& ds, const CorruptionSpec& spec,
                         const SeverityLadder& ladder) {
    const double param = severity_param(spec.kind, spec.level, ladder);
    Dataset out;
    switch (spec.kind) {
        case NoiseKind::gaussian: out = gaussian_noise(ds, param, spec.seed); break;
        case NoiseKind::salt_pepper: out = salt_pepper(ds, param, spec.seed); break;
        case NoiseKind::blur: out = blur(ds, static_cast<int>(param)); break;
    }
    out.name = ds.name + "+" + to_string(spec.kind) + "L" + std::to_string(spec.level);
    return out;
}

}  // namespace armmeter
