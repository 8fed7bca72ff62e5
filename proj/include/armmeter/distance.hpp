#pragma once

#include <string>
#include <utility>
#include <vector>

#include "armmeter/activation_stats.hpp"
#include "armmeter/tensor_io.hpp"

namespace armmeter {

struct LayerDistance {
    std::string layer;
    double wd = 0.0;  // Wasserstein-1 on this layer's shared grid
    double lo = 0.0;  // grid range, kept so raw activation units can be
    double hi = 0.0;  // renormalized downstream
};

/// Per-layer Wasserstein distances and their mean (the aggregate measure).
struct ArmReport {
    std::string model_id;
    std::pair<std::string, std::string> dataset_pair;
    std::vector<LayerDistance> per_layer;
    double arm = 0.0;
};

/// W1 between two histograms on one grid: bin width times the summed absolute
/// CDF difference (exact for histograms with mass at bin centers).
double wasserstein1(const Histogram& a, const Histogram& b);

/// Jensen-Shannon divergence in nats, in [0, ln 2]. Diagnostic only.
double jensen_shannon(const Histogram& a, const Histogram& b);

/// Builds joint per-layer grids over both traces, forms each trace's averaged
/// layer distributions, and returns per-layer W1 plus their mean.
ArmReport arm(const ActivationTrace& t1, const ActivationTrace& t2,
              const BinningPolicy& policy = {});

}  // namespace armmeter
