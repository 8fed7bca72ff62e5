#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "armmeter/corruption.hpp"

namespace armmeter {

// One aggregated experiment cell: the representation shift measured for a
// (model, corruption kind, severity level) and the retraining cost it
// incurred. epochs is real-valued because rows average over repeats.
struct Observation {
    std::string model_id;
    NoiseKind noise_kind = NoiseKind::gaussian;
    int level = 0;
    double arm = 0.0;
    double epochs = 0.0;
    std::optional<double> energy_kwh;
    std::optional<double> co2_g;
};

// Shared-slope linear predictor with one intercept per model.
struct Predictor {
    double slope = 0.0;
    std::map<std::string, double> intercepts;
    std::vector<std::string> fitted_on;
};

struct PowerProfile {
    double avg_power_watts = 150.0;
    double epoch_seconds = 1.0;
    double carbon_intensity_g_per_kwh = 400.0;
    std::string region = "default";
};

void validate(const PowerProfile& profile);

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
};

// Least squares for epochs = slope*arm + intercept_m with the slope shared
// across models (within estimator). Throws std::invalid_argument on fewer
// than 2 observations or when no model shows any arm variation.
Predictor fit_predictor(std::span<const Observation> obs);

// Ordinary least squares on one series (per-model charts).
LineFit fit_line(std::span<const double> xs, std::span<const double> ys);

// Adds an intercept for a new model from a single observation, keeping the
// fitted slope: intercept = epochs - slope*arm.
Predictor anchor_intercept(const Predictor& pred, const std::string& model_id,
                           const Observation& one_obs, bool overwrite = false);

// slope*arm + intercept, floored at 0. Unknown model_id throws.
double predict_epochs(const Predictor& pred, const std::string& model_id, double arm);

// kwh = epochs * epoch_seconds * avg_power_watts / 3.6e6
double energy_estimate(double epochs, const PowerProfile& profile);
// grams = kwh * carbon_intensity_g_per_kwh
double carbon_estimate(double kwh, const PowerProfile& profile);

struct Correlation {
    double r = 0.0;
    double p = 1.0;
};

// Sample Pearson correlation with a two-sided p-value from the Student-t
// distribution with n-2 degrees of freedom.
Correlation pearson(std::span<const double> xs, std::span<const double> ys);

// Regularized incomplete beta function I_x(a, b) (continued fraction).
double regularized_incomplete_beta(double a, double b, double x);

// obs.csv: header model_id,noise_kind,level,arm,epochs,energy_kwh,co2_g.
// Doubles are written with shortest round-trip formatting; optional columns
// are left empty when absent. Malformed input raises io_error with a
// row/column diagnostic.
std::string observations_to_csv(std::span<const Observation> obs);
std::vector<Observation> observations_from_csv(const std::string& text);
void write_observations(std::span<const Observation> obs, const std::filesystem::path& path);
std::vector<Observation> read_observations(const std::filesystem::path& path);

}  // namespace armmeter
