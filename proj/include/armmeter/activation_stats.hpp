#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "armmeter/tensor_io.hpp"

namespace armmeter {

/// Normalized probability distribution on an equal-width bin grid.
struct Histogram {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<double> mass;

    int bins() const { return static_cast<int>(mass.size()); }
    double bin_width() const { return (hi - lo) / bins(); }
    double bin_center(int i) const { return lo + (i + 0.5) * bin_width(); }
    bool same_grid(const Histogram& other) const {
        return lo == other.lo && hi == other.hi && mass.size() == other.mass.size();
    }
};

/// Throws std::invalid_argument unless mass is nonnegative and sums to 1
/// within 1e-9.
void validate(const Histogram& h);

struct BinningPolicy {
    int bins = 256;
    enum class RangeRule { joint_min_max } range_rule = RangeRule::joint_min_max;
};

struct ValueRange {
    double lo = 0.0;
    double hi = 0.0;
};

/// Arithmetic mean of an h x w feature map.
double average_activation(std::span<const float> feature_map, int h, int w);

/// Histogram of `values` on [lo, hi) with policy.bins equal-width bins.
/// Out-of-range values are clamped into the end bins, so no mass is dropped.
Histogram filter_distribution(std::span<const float> values, double lo, double hi,
                              const BinningPolicy& policy = {});

/// Bin-wise mean of filter histograms sharing one grid (the averaged layer
/// distribution).
Histogram layer_distribution(const std::vector<Histogram>& filters);

/// Joint min/max of each layer's values across both traces; degenerate ranges
/// widen to [v - 1e-6, v + 1e-6]. Traces must have the same layer count.
std::vector<ValueRange> joint_layer_ranges(const ActivationTrace& a,
                                           const ActivationTrace& b);

/// Per-layer averaged distributions for a whole trace, in layer order.
/// grids[i] is the bin range for layer i; a missing grid is an error.
std::vector<std::pair<std::string, Histogram>> trace_to_distributions(
    const ActivationTrace& trace, const std::vector<ValueRange>& grids,
    const BinningPolicy& policy = {});

}  // namespace armmeter
