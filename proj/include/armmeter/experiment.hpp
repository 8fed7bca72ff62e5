#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "armmeter/corruption.hpp"
#include "armmeter/cost_model.hpp"
#include "armmeter/json_io.hpp"
#include "armmeter/model.hpp"

namespace armmeter {

// Deterministic labeled image generator: each class is a fixed sum of three
// cosine cues (a low-frequency orientation, a shared-frequency texture whose
// amplitude encodes the class, and a fragile high-frequency detail) under
// per-sample brightness jitter, small translation jitter, and pixel noise.
// Blur attenuates the shared texture frequency equally for every class, so
// the amplitude ladder survives any severity and corrupted data always stays
// learnable; a fraction of samples carry a wrong orientation, keeping that
// cue imperfect so models cannot lean on it alone. Every sample draws from
// its own seed stream, so sample i is identical regardless of how many
// samples are generated.
struct SyntheticDataSpec {
    int classes = 4;
    int channels = 1;
    int height = 16;
    int width = 16;
    int samples = 5000;
    double orientation_amplitude = 0.11;
    double orientation_flip = 0.05;  // chance a sample carries a wrong orientation
    double primary_amplitude = 0.35;  // top of the texture amplitude ladder
    double detail_amplitude = 0.08;
    double brightness_jitter = 0.08;
    double pixel_noise = 0.02;
    int shift_jitter = 1;  // max translation in pixels, per axis
    std::uint64_t seed = 1;
};

void validate(const SyntheticDataSpec& spec);
Dataset make_synthetic_dataset(const SyntheticDataSpec& spec);

// A model entry in a plan: either one of the built-in architectures
// (instantiated against the dataset's shape at run time) or an explicit spec.
struct PlanModel {
    std::string model_id;
    bool builtin = true;
    ModelSpec spec;                     // used when !builtin
    double learning_rate = 0;           // base training; 0 inherits the plan rate
    double retrain_learning_rate = 0;  // 0 means inherit the plan-level rate
};

struct ExperimentPlan {
    std::string name = "toy";
    std::vector<PlanModel> models;
    std::vector<NoiseKind> noise_kinds = {NoiseKind::gaussian, NoiseKind::salt_pepper,
                                          NoiseKind::blur};
    std::vector<int> levels = {1, 2, 3, 4, 5, 6, 7};
    double target_accuracy = 0.85;
    // 0 means "derive": the clean model trains to min(0.97, target + 0.10)
    // so corruption has headroom to push accuracy under the retrain target.
    double base_target_accuracy = 0.0;
    int repeats = 3;
    std::uint64_t seed = 1;
    std::vector<std::uint64_t> seeds;  // explicit per-repeat seeds; else seed+i
    PowerProfile power;
    std::filesystem::path output_dir;
    std::optional<SyntheticDataSpec> synthetic;  // default when dataset_path empty
    std::filesystem::path dataset_path;
    double learning_rate = 1e-2;
    double retrain_learning_rate = 0.0;  // 0 means "same as learning_rate"
    int batch_size = 32;
    int base_max_epochs = 80;
    int retrain_max_epochs = 40;
    bool from_scratch = false;  // retrain cells from fresh init instead of warm start
    int bins = 256;
    SeverityLadder ladder;
};

void validate(const ExperimentPlan& plan);
std::vector<std::uint64_t> resolved_seeds(const ExperimentPlan& plan);
double resolved_base_target(const ExperimentPlan& plan);

json to_json(const ExperimentPlan& plan);
ExperimentPlan plan_from_json(const json& j);

// A stage failure carries the stage name so the driver can report it and
// record it in the partial manifest.
class experiment_error : public std::runtime_error {
public:
    experiment_error(std::string stage, const std::string& message)
        : std::runtime_error("stage " + stage + ": " + message), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

struct ExperimentResult {
    std::vector<Observation> observations;
    std::filesystem::path obs_csv;
    std::filesystem::path correlation_csv;
    std::filesystem::path manifest_path;
};

// Runs the full grid: per repeat, train each model on the clean data, then
// for every (noise kind, level) corrupt, trace, measure the representation
// shift, and retrain to target. Artifacts land under plan.output_dir; the
// manifest records every seed and artifact hash for exact rerun and resume.
ExperimentResult run_experiment(const ExperimentPlan& plan, int jobs = 1);

// Reloads the plan recorded in a manifest (seeds already resolved).
ExperimentPlan plan_from_manifest(const std::filesystem::path& manifest_path);

struct CorrelationRow {
    std::string model_id;   // "*" when not grouped by model
    std::string noise_kind; // "*" when not grouped by kind
    int n = 0;
    double r = 0.0;
    double p = 1.0;
    bool defined = false;   // false when n < 3 or variance is zero
};

// group_by may contain "model" and/or "noise_kind".
std::vector<CorrelationRow> correlation_table(std::span<const Observation> obs,
                                              std::span<const std::string> group_by);
std::string correlation_to_csv(std::span<const CorrelationRow> rows);

// Renders report.md, correlation.csv and plot_data.json into out_dir.
// When a predictor is supplied the report adds predicted-vs-actual epochs
// with signed residuals and flags systematic over-estimation.
void write_report(std::span<const Observation> obs, const Predictor* predictor,
                  const std::filesystem::path& out_dir);

// Plain key=value config files ('#' comments). Recognized keys:
// ladder.gaussian / ladder.salt_pepper / ladder.blur (space- or
// comma-separated level lists) and power.* overrides.
std::map<std::string, std::string> read_config(const std::filesystem::path& path);
void apply_config(const std::map<std::string, std::string>& cfg, SeverityLadder& ladder);
void apply_config(const std::map<std::string, std::string>& cfg, PowerProfile& power);

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes);
std::uint64_t fnv1a_file(const std::filesystem::path& path);

}  // namespace armmeter
