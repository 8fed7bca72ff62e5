#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "armmeter/activation_stats.hpp"
#include "armmeter/corruption.hpp"
#include "armmeter/cost_model.hpp"
#include "armmeter/distance.hpp"
#include "armmeter/experiment.hpp"
#include "armmeter/json_io.hpp"
#include "armmeter/model.hpp"
#include "armmeter/tensor_io.hpp"

namespace {

using namespace armmeter;

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) return "nan";
    return std::string(buf, ptr);
}

// Relative paths resolve against ARM_METER_DATA_DIR when it is set, so all
// artifacts can be routed to one place without absolute paths everywhere.
std::filesystem::path resolve(const std::string& arg) {
    std::filesystem::path p(arg);
    if (p.is_absolute()) return p;
    if (const char* root = std::getenv("ARM_METER_DATA_DIR"); root && *root)
        return std::filesystem::path(root) / p;
    return p;
}

struct GlobalOpts {
    std::uint64_t seed = 1;
    bool seed_given = false;
    int jobs = 1;
    std::map<std::string, std::string> config;
};

// `--model` accepts a built-in id (shaped to the dataset) or a path to a
// model spec JSON (which must already match the dataset).
ModelSpec resolve_model(const std::string& model_arg, const Dataset& ds,
                        const GlobalOpts& g) {
    ModelSpec spec;
    if (is_builtin_model(model_arg)) {
        const Image& first = ds.samples.front();
        spec = builtin_model_spec(model_arg, {first.channels, first.height, first.width},
                                  ds.class_count, g.seed);
    } else {
        spec = model_spec_from_json(load_json(resolve(model_arg)));
        if (g.seed_given) spec.seed = g.seed;
        const Image& first = ds.samples.front();
        if (spec.input.channels != first.channels || spec.input.height != first.height ||
            spec.input.width != first.width)
            throw std::invalid_argument("model input does not match the dataset");
        const auto shapes = validate_model_spec(spec);
        if (shapes.back().c != static_cast<int>(ds.class_count))
            throw std::invalid_argument("model logits do not match the dataset class count");
    }
    return spec;
}

Model load_model(const std::string& model_arg, const std::string& weights_arg,
                 const Dataset& ds, const GlobalOpts& g) {
    Model model(resolve_model(model_arg, ds, g));
    if (!weights_arg.empty()) {
        model.set_parameters_f32(read_weights(resolve(weights_arg)));
    } else {
        model.init_parameters();
    }
    return model;
}

SeverityLadder config_ladder(const GlobalOpts& g) {
    SeverityLadder ladder;
    apply_config(g.config, ladder);
    return ladder;
}

PowerProfile config_power(const GlobalOpts& g) {
    PowerProfile power;
    apply_config(g.config, power);
    return power;
}

double trace_accuracy(const std::vector<int>& predictions, const Dataset& ds) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i)
        if (predictions[i] == static_cast<int>(ds.labels[i])) ++hits;
    return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

int run_cli(int argc, char** argv) {
    CLI::App app{"arm-meter: measures a model's representation shift under input "
                 "corruption and predicts retraining cost (epochs, energy, carbon)"};
    app.require_subcommand(1);

    GlobalOpts g;
    std::string config_path;
    auto* seed_opt =
        app.add_option("--seed", g.seed, "Seed for any randomized step (default 1)");
    app.add_option("--jobs", g.jobs, "Worker threads for the experiment driver")
        ->check(CLI::PositiveNumber);
    app.add_option("--config", config_path,
                   "key=value file overriding ladder.* and power.* defaults");

    // --- corrupt ---
    auto* corrupt_cmd = app.add_subcommand("corrupt", "Apply a corruption to a dataset");
    struct {
        std::string in, out, kind;
        int level = 1;
    } corrupt_args;
    corrupt_cmd->add_option("--in", corrupt_args.in, "Input dataset (.armd)")->required();
    corrupt_cmd->add_option("--out", corrupt_args.out, "Output dataset (.armd)")->required();
    corrupt_cmd->add_option("--kind", corrupt_args.kind, "gaussian | salt_pepper | blur")
        ->required();
    corrupt_cmd->add_option("--level", corrupt_args.level, "Severity level (1-based)")
        ->required();

    // --- trace ---
    auto* trace_cmd =
        app.add_subcommand("trace", "Record per-layer activation traces over a dataset");
    struct {
        std::string model, weights, data, out;
    } trace_args;
    trace_cmd->add_option("--model", trace_args.model, "Built-in model id or spec JSON path")
        ->required();
    trace_cmd->add_option("--weights", trace_args.weights, "Weights file (.armw); "
                          "otherwise weights are drawn from the seed");
    trace_cmd->add_option("--data", trace_args.data, "Dataset (.armd)")->required();
    trace_cmd->add_option("--out", trace_args.out, "Output trace (.atf)")->required();

    // --- train ---
    auto* train_cmd = app.add_subcommand("train", "Train a model to a target accuracy");
    struct {
        std::string model, data, weights_in, weights_out, report;
        double target = 0.9, lr = 1e-3;
        int max_epochs = 100, batch = 32;
    } train_args;
    train_cmd->add_option("--model", train_args.model, "Built-in model id or spec JSON path")
        ->required();
    train_cmd->add_option("--data", train_args.data, "Dataset (.armd)")->required();
    train_cmd->add_option("--weights-in", train_args.weights_in,
                          "Warm-start weights (.armw); otherwise fresh init from the seed");
    train_cmd->add_option("--weights-out", train_args.weights_out,
                          "Where to write the trained weights (.armw)");
    train_cmd->add_option("--report", train_args.report, "Training report JSON path");
    train_cmd->add_option("--target-acc", train_args.target, "Holdout accuracy target");
    train_cmd->add_option("--max-epochs", train_args.max_epochs, "Epoch budget");
    train_cmd->add_option("--lr", train_args.lr, "SGD learning rate");
    train_cmd->add_option("--batch", train_args.batch, "Minibatch size");

    // --- arm ---
    auto* arm_cmd = app.add_subcommand(
        "arm", "Aggregate representation measure between two traces");
    struct {
        std::string a, b, out;
        int bins = 256;
    } arm_args;
    arm_cmd->add_option("--a", arm_args.a, "First trace (.atf)")->required();
    arm_cmd->add_option("--b", arm_args.b, "Second trace (.atf)")->required();
    arm_cmd->add_option("--bins", arm_args.bins, "Histogram bins (default 256)");
    arm_cmd->add_option("--out", arm_args.out, "Report JSON path");

    // --- stats ---
    auto* stats_cmd = app.add_subcommand(
        "stats", "Per-layer summary of a trace; with --other, per-layer divergences");
    struct {
        std::string trace, other;
        int bins = 256;
    } stats_args;
    stats_cmd->add_option("--trace", stats_args.trace, "Trace (.atf)")->required();
    stats_cmd->add_option("--other", stats_args.other, "Second trace to compare against");
    stats_cmd->add_option("--bins", stats_args.bins, "Histogram bins (default 256)");

    // --- fit ---
    auto* fit_cmd = app.add_subcommand(
        "fit", "Fit the shared-slope predictor from an observations CSV");
    struct {
        std::string obs, out, anchor_model;
        double anchor_arm = 0.0, anchor_epochs = 0.0;
        bool overwrite_anchor = false;
    } fit_args;
    fit_cmd->add_option("--obs", fit_args.obs, "Observations CSV")->required();
    fit_cmd->add_option("--out", fit_args.out, "Predictor JSON path");
    auto* am = fit_cmd->add_option("--anchor-model", fit_args.anchor_model,
                                   "Add an intercept for this model from one observation");
    auto* aa = fit_cmd->add_option("--anchor-arm", fit_args.anchor_arm,
                                   "Anchor observation: measured shift");
    auto* ae = fit_cmd->add_option("--anchor-epochs", fit_args.anchor_epochs,
                                   "Anchor observation: measured epochs");
    fit_cmd->add_flag("--overwrite-anchor", fit_args.overwrite_anchor,
                      "Replace the model's fitted intercept with the anchored one");
    am->needs(aa)->needs(ae);
    aa->needs(am);
    ae->needs(am);

    // --- predict ---
    auto* predict_cmd = app.add_subcommand(
        "predict", "Predict retraining cost for a model at a measured shift");
    struct {
        std::string predictor, model, power, out;
        double arm = 0.0;
    } predict_args;
    predict_cmd->add_option("--predictor", predict_args.predictor, "Predictor JSON")
        ->required();
    predict_cmd->add_option("--model", predict_args.model, "Model id in the predictor")
        ->required();
    predict_cmd->add_option("--arm", predict_args.arm, "Measured shift value")->required();
    predict_cmd->add_option("--power", predict_args.power, "Power profile JSON");
    predict_cmd->add_option("--out", predict_args.out, "Prediction JSON path");

    // --- correlate ---
    auto* correlate_cmd = app.add_subcommand(
        "correlate", "Pearson correlation of shift vs epochs from an observations CSV");
    struct {
        std::string obs, group_by = "model,noise_kind", out;
    } correlate_args;
    correlate_cmd->add_option("--obs", correlate_args.obs, "Observations CSV")->required();
    correlate_cmd->add_option("--group-by", correlate_args.group_by,
                              "Comma-separated keys: model, noise_kind (empty pools all)");
    correlate_cmd->add_option("--out", correlate_args.out, "Correlation CSV path");

    // --- experiment ---
    auto* experiment_cmd = app.add_subcommand(
        "experiment", "Run the full corruption/retraining grid from a plan");
    struct {
        std::string plan, manifest, out;
    } experiment_args;
    auto* plan_opt =
        experiment_cmd->add_option("--plan", experiment_args.plan, "Experiment plan JSON");
    auto* manifest_opt = experiment_cmd->add_option(
        "--manifest", experiment_args.manifest, "Rerun/resume from a recorded manifest");
    experiment_cmd->add_option("--out", experiment_args.out,
                               "Output directory (overrides the plan)");
    plan_opt->excludes(manifest_opt);

    // --- report ---
    auto* report_cmd = app.add_subcommand(
        "report", "Render markdown + CSV + plot-data JSON from observations");
    struct {
        std::string obs, predictor, out_dir;
    } report_args;
    report_cmd->add_option("--obs", report_args.obs, "Observations CSV")->required();
    report_cmd->add_option("--predictor", report_args.predictor, "Predictor JSON");
    report_cmd->add_option("--out-dir", report_args.out_dir, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    g.seed_given = seed_opt->count() > 0;
    if (!config_path.empty()) g.config = read_config(resolve(config_path));

    if (corrupt_cmd->parsed()) {
        const Dataset ds = read_dataset(resolve(corrupt_args.in));
        CorruptionSpec spec;
        spec.kind = noise_kind_from_string(corrupt_args.kind);
        spec.level = corrupt_args.level;
        spec.seed = g.seed;
        const Dataset out = apply_corruption(ds, spec, config_ladder(g));
        write_dataset(out, resolve(corrupt_args.out));
        std::cout << "wrote " << resolve(corrupt_args.out).string() << " ("
                  << out.samples.size() << " samples, " << corrupt_args.kind << " L"
                  << corrupt_args.level << ")\n";
        return 0;
    }

    if (trace_cmd->parsed()) {
        const Dataset ds = read_dataset(resolve(trace_args.data));
        Model model = load_model(trace_args.model, trace_args.weights, ds, g);
        const auto capture = model.forward_with_capture(ds);
        write_trace(capture.trace, resolve(trace_args.out));
        std::cout << "wrote " << resolve(trace_args.out).string() << " ("
                  << capture.trace.layers.size() << " layers, " << ds.samples.size()
                  << " samples, accuracy "
                  << format_double(trace_accuracy(capture.predictions, ds)) << ")\n";
        return 0;
    }

    if (train_cmd->parsed()) {
        const Dataset ds = read_dataset(resolve(train_args.data));
        Model model = load_model(train_args.model, train_args.weights_in, ds, g);
        TrainConfig cfg;
        cfg.learning_rate = train_args.lr;
        cfg.batch_size = train_args.batch;
        cfg.target_accuracy = train_args.target;
        cfg.max_epochs = train_args.max_epochs;
        cfg.seed = g.seed;
        const RetrainingReport report = model.train_to_accuracy(ds, cfg);
        if (!train_args.weights_out.empty())
            write_weights(model.parameters_f32(), resolve(train_args.weights_out));
        if (!train_args.report.empty())
            save_json(to_json(report), resolve(train_args.report));
        std::cout << (report.reached_target ? "reached" : "missed") << " target "
                  << format_double(train_args.target) << ": holdout accuracy "
                  << format_double(report.accuracy_curve.back()) << " after "
                  << report.epochs_used << " epochs (" << format_double(report.wall_seconds)
                  << " s)\n";
        return 0;
    }

    if (arm_cmd->parsed()) {
        const ActivationTrace a = read_trace(resolve(arm_args.a));
        const ActivationTrace b = read_trace(resolve(arm_args.b));
        ArmReport report =
            arm(a, b, BinningPolicy{arm_args.bins, BinningPolicy::RangeRule::joint_min_max});
        report.dataset_pair = {resolve(arm_args.a).string(), resolve(arm_args.b).string()};
        if (!arm_args.out.empty()) save_json(to_json(report), resolve(arm_args.out));
        for (const LayerDistance& ld : report.per_layer)
            std::cout << ld.layer << " wd " << format_double(ld.wd) << "\n";
        std::cout << "arm " << format_double(report.arm) << "\n";
        return 0;
    }

    if (stats_cmd->parsed()) {
        const ActivationTrace a = read_trace(resolve(stats_args.trace));
        if (stats_args.other.empty()) {
            for (const LayerTrace& layer : a.layers) {
                double lo = layer.values.front(), hi = lo, sum = 0.0;
                for (float v : layer.values) {
                    lo = std::min(lo, static_cast<double>(v));
                    hi = std::max(hi, static_cast<double>(v));
                    sum += v;
                }
                std::cout << layer.name << " filters " << layer.n_filters << " samples "
                          << layer.n_samples << " min " << format_double(lo) << " max "
                          << format_double(hi) << " mean "
                          << format_double(sum / layer.values.size()) << "\n";
            }
            return 0;
        }
        const ActivationTrace b = read_trace(resolve(stats_args.other));
        const BinningPolicy policy{stats_args.bins, BinningPolicy::RangeRule::joint_min_max};
        const auto ranges = joint_layer_ranges(a, b);
        const auto pa = trace_to_distributions(a, ranges, policy);
        const auto pb = trace_to_distributions(b, ranges, policy);
        double total = 0.0;
        for (std::size_t i = 0; i < pa.size(); ++i) {
            const double wd = wasserstein1(pa[i].second, pb[i].second);
            const double js = jensen_shannon(pa[i].second, pb[i].second);
            total += wd;
            std::cout << pa[i].first << " wd " << format_double(wd) << " js "
                      << format_double(js) << "\n";
        }
        std::cout << "arm " << format_double(total / static_cast<double>(pa.size())) << "\n";
        return 0;
    }

    if (fit_cmd->parsed()) {
        const auto obs = read_observations(resolve(fit_args.obs));
        Predictor pred = fit_predictor(obs);
        if (!fit_args.anchor_model.empty()) {
            Observation anchor;
            anchor.model_id = fit_args.anchor_model;
            anchor.arm = fit_args.anchor_arm;
            anchor.epochs = fit_args.anchor_epochs;
            pred = anchor_intercept(pred, fit_args.anchor_model, anchor,
                                    fit_args.overwrite_anchor);
        }
        if (!fit_args.out.empty()) save_json(to_json(pred), resolve(fit_args.out));
        std::cout << "slope " << format_double(pred.slope) << "\n";
        for (const auto& [model_id, intercept] : pred.intercepts)
            std::cout << model_id << " intercept " << format_double(intercept) << "\n";
        return 0;
    }

    if (predict_cmd->parsed()) {
        const Predictor pred = predictor_from_json(load_json(resolve(predict_args.predictor)));
        PowerProfile power = config_power(g);
        if (!predict_args.power.empty())
            power = power_profile_from_json(load_json(resolve(predict_args.power)));
        const double epochs = predict_epochs(pred, predict_args.model, predict_args.arm);
        const double kwh = energy_estimate(epochs, power);
        const double co2 = carbon_estimate(kwh, power);
        if (!predict_args.out.empty())
            save_json(json{{"model_id", predict_args.model},
                           {"arm", predict_args.arm},
                           {"epochs", epochs},
                           {"energy_kwh", kwh},
                           {"co2_g", co2}},
                      resolve(predict_args.out));
        std::cout << "epochs " << format_double(epochs) << "\n";
        std::cout << "energy_kwh " << format_double(kwh) << "\n";
        std::cout << "co2_g " << format_double(co2) << "\n";
        return 0;
    }

    if (correlate_cmd->parsed()) {
        const auto obs = read_observations(resolve(correlate_args.obs));
        std::vector<std::string> keys;
        std::string token;
        std::istringstream in(correlate_args.group_by);
        while (std::getline(in, token, ','))
            if (!token.empty()) keys.push_back(token);
        const auto table = correlation_table(obs, keys);
        const std::string csv = correlation_to_csv(table);
        if (!correlate_args.out.empty()) {
            std::ofstream out(resolve(correlate_args.out), std::ios::binary | std::ios::trunc);
            if (!out)
                throw io_error("cannot open file for writing: " +
                               resolve(correlate_args.out).string());
            out.write(csv.data(), static_cast<std::streamsize>(csv.size()));
        } else {
            std::cout << csv;
        }
        return 0;
    }

    if (experiment_cmd->parsed()) {
        ExperimentPlan plan;
        if (!experiment_args.manifest.empty()) {
            plan = plan_from_manifest(resolve(experiment_args.manifest));
        } else if (!experiment_args.plan.empty()) {
            plan = plan_from_json(load_json(resolve(experiment_args.plan)));
        } else {
            std::cerr << "error: experiment needs --plan or --manifest\n";
            return 2;
        }
        if (!experiment_args.out.empty()) plan.output_dir = resolve(experiment_args.out);
        if (plan.output_dir.empty() && std::getenv("ARM_METER_DATA_DIR"))
            plan.output_dir = resolve(plan.name);
        if (g.seed_given) {
            plan.seed = g.seed;
            plan.seeds.clear();
        }
        if (!g.config.empty()) {
            apply_config(g.config, plan.ladder);
            apply_config(g.config, plan.power);
        }
        const ExperimentResult result = run_experiment(plan, g.jobs);
        std::cout << "wrote " << result.obs_csv.string() << " ("
                  << result.observations.size() << " rows)\n";
        std::cout << "wrote " << result.correlation_csv.string() << "\n";
        std::cout << "wrote " << result.manifest_path.string() << "\n";
        return 0;
    }

    if (report_cmd->parsed()) {
        const auto obs = read_observations(resolve(report_args.obs));
        Predictor pred;
        const bool have_pred = !report_args.predictor.empty();
        if (have_pred) pred = predictor_from_json(load_json(resolve(report_args.predictor)));
        write_report(obs, have_pred ? &pred : nullptr, resolve(report_args.out_dir));
        std::cout << "wrote " << (resolve(report_args.out_dir) / "report.md").string()
                  << "\n";
        return 0;
    }

    std::cerr << "error: no subcommand\n";
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_cli(argc, argv);
    } catch (const armmeter::experiment_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const armmeter::io_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
