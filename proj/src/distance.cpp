#include "armmeter/distance.hpp"

#include <cmath>
#include <stdexcept>

namespace armmeter {

double wasserstein1(const Histogram& a, const Histogram& b) {
    if (!a.same_grid(b)) throw std::invalid_argument("histogram grid mismatch");
    double cdf_a = 0.0, cdf_b = 0.0, total = 0.0;
    for (int i = 0; i < a.bins(); ++i) {
        cdf_a += a.mass[i];
        cdf_b += b.mass[i];
        total += std::abs(cdf_a - cdf_b);
    }
    return a.bin_width() * total;
}

double jensen_shannon(const Histogram& a, const Histogram& b) {
    if (!a.same_grid(b)) throw std::invalid_argument("histogram grid mismatch");
    double js = 0.0;
    for (int i = 0; i < a.bins(); ++i) {
        const double pa = a.mass[i], pb = b.mass[i];
        const double m = 0.5 * (pa + pb);
        if (pa > 0.0) js += 0.5 * pa * std::log(pa / m);
        if (pb > 0.0) js += 0.5 * pb * std::log(pb / m);
    }
    return js;
}

ArmReport arm(const ActivationTrace& t1, const ActivationTrace& t2,
              const BinningPolicy& policy) {
    if (t1.layers.size() != t2.layers.size())
        throw std::invalid_argument("layer structure mismatch");
    for (std::size_t l = 0; l < t1.layers.size(); ++l) {
        if (t1.layers[l].name != t2.layers[l].name)
            throw std::invalid_argument("layer structure mismatch: name differs at layer " +
                                        std::to_string(l));
        if (t1.layers[l].n_filters != t2.layers[l].n_filters)
            throw std::invalid_argument("differing filter counts in layer " +
                                        t1.layers[l].name);
    }

    const std::vector<ValueRange> grids = joint_layer_ranges(t1, t2);
    const auto dists1 = trace_to_distributions(t1, grids, policy);
    const auto dists2 = trace_to_distributions(t2, grids, policy);

    ArmReport report;
    report.model_id = t1.model_id;
    report.dataset_pair = {t1.dataset_id, t2.dataset_id};
    report.per_layer.reserve(grids.size());
    double sum = 0.0;
    for (std::size_t l = 0; l < grids.size(); ++l) {
        const double wd = wasserstein1(dists1[l].second, dists2[l].second);
        report.per_layer.push_back(
            LayerDistance{dists1[l].first, wd, grids[l].lo, grids[l].hi});
        sum += wd;
    }
    report.arm = sum / static_cast<double>(report.per_layer.size());
    return report;
}

}  // namespace armmeter
