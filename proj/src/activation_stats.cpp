#include "armmeter/activation_stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace armmeter {

void validate(const Histogram& h) {
    if (!(h.lo < h.hi)) throw std::invalid_argument("histogram range empty");
    if (h.mass.size() < 1) throw std::invalid_argument("histogram has no bins");
    double sum = 0.0;
    for (double m : h.mass) {
        if (!(m >= 0.0)) throw std::invalid_argument("histogram mass negative");
        sum += m;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("histogram mass does not sum to 1");
}

double average_activation(std::span<const float> feature_map, int h, int w) {
    if (h < 1 || w < 1) throw std::invalid_argument("empty feature map");
    if (feature_map.size() != static_cast<std::size_t>(h) * w)
        throw std::invalid_argument("feature map size does not match dimensions");
    double sum = 0.0;
    for (float v : feature_map) sum += v;
    return sum / (static_cast<double>(h) * w);
}

Histogram filter_distribution(std::span<const float> values, double lo, double hi,
                              const BinningPolicy& policy) {
    if (values.empty()) throw std::invalid_argument("empty values");
    if (!(lo < hi)) throw std::invalid_argument("invalid range: lo must be < hi");
    if (policy.bins < 2) throw std::invalid_argument("need at least 2 bins");

    const int bins = policy.bins;
    std::vector<std::uint64_t> counts(bins, 0);
    const double scale = bins / (hi - lo);
    for (float v : values) {
        int idx = static_cast<int>((static_cast<double>(v) - lo) * scale);
        idx = std::clamp(idx, 0, bins - 1);  // clamp keeps out-of-range mass
        ++counts[idx];
    }
    Histogram h;
    h.lo = lo;
    h.hi = hi;
    h.mass.resize(bins);
    const double n = static_cast<double>(values.size());
    for (int i = 0; i < bins; ++i) h.mass[i] = counts[i] / n;
    return h;
}

Histogram layer_distribution(const std::vector<Histogram>& filters) {
    if (filters.empty()) throw std::invalid_argument("no filter histograms");
    const Histogram& first = filters.front();
    for (const Histogram& f : filters)
        if (!f.same_grid(first)) throw std::invalid_argument("histogram grid mismatch");

    Histogram out;
    out.lo = first.lo;
    out.hi = first.hi;
    out.mass.assign(first.mass.size(), 0.0);
    for (const Histogram& f : filters)
        for (std::size_t i = 0; i < out.mass.size(); ++i) out.mass[i] += f.mass[i];
    const double n = static_cast<double>(filters.size());
    for (double& m : out.mass) m /= n;
    return out;
}

std::vector<ValueRange> joint_layer_ranges(const ActivationTrace& a,
                                           const ActivationTrace& b) {
    if (a.layers.size() != b.layers.size())
        throw std::invalid_argument("layer structure mismatch");
    std::vector<ValueRange> ranges(a.layers.size());
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        for (const LayerTrace* t : {&a.layers[l], &b.layers[l]}) {
            for (float v : t->values) {
                lo = std::min(lo, static_cast<double>(v));
                hi = std::max(hi, static_cast<double>(v));
            }
        }
        if (lo == hi) {  // all values identical in both traces
            lo -= 1e-6;
            hi += 1e-6;
        }
        ranges[l] = ValueRange{lo, hi};
    }
    return ranges;
}

std::vector<std::pair<std::string, Histogram>> trace_to_distributions(
    const ActivationTrace& trace, const std::vector<ValueRange>& grids,
    const BinningPolicy& policy) {
    if (grids.size() < trace.layers.size())
        throw std::invalid_argument("missing grid for a layer");
    std::vector<std::pair<std::string, Histogram>> out;
    out.reserve(trace.layers.size());
    for (std::size_t l = 0; l < trace.layers.size(); ++l) {
        const LayerTrace& layer = trace.layers[l];
        std::vector<Histogram> filters;
        filters.reserve(layer.n_filters);
        for (std::uint32_t f = 0; f < layer.n_filters; ++f) {
            filters.push_back(filter_distribution(
                std::span<const float>(layer.filter_row(f), layer.n_samples),
                grids[l].lo, grids[l].hi, policy));
        }
        out.emplace_back(layer.name, layer_distribution(filters));
    }
    return out;
}

}  // namespace armmeter
