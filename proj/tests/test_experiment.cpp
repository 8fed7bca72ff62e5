#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "armmeter/experiment.hpp"
#include "armmeter/tensor_io.hpp"

using namespace armmeter;

namespace {

std::filesystem::path fresh_dir(const std::string& leaf) {
    auto dir = std::filesystem::temp_directory_path() / "armmeter-exp-tests" / leaf;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::string slurp_text(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

// Small, fast plan: one tiny MLP, one noise kind, two levels, one repeat.
ExperimentPlan micro_plan(const std::filesystem::path& out) {
    ExperimentPlan plan;
    plan.name = "micro";
    PlanModel pm;
    pm.model_id = "toy-mlp";
    plan.models = {pm};
    plan.noise_kinds = {NoiseKind::gaussian};
    plan.levels = {1, 4};
    plan.target_accuracy = 0.6;
    plan.base_target_accuracy = 0.65;
    plan.repeats = 1;
    plan.seed = 5;
    plan.output_dir = out;
    SyntheticDataSpec sds;
    sds.classes = 2;
    sds.height = 8;
    sds.width = 8;
    sds.samples = 240;
    plan.synthetic = sds;
    plan.learning_rate = 0.05;
    plan.base_max_epochs = 40;
    plan.retrain_max_epochs = 20;
    return plan;
}

}  // namespace

TEST_CASE("synthetic dataset is deterministic with per-sample streams") {
    SyntheticDataSpec spec;
    spec.classes = 3;
    spec.height = 8;
    spec.width = 8;
    spec.samples = 30;
    spec.seed = 11;
    Dataset a = make_synthetic_dataset(spec);
    Dataset b = make_synthetic_dataset(spec);
    REQUIRE(a.size() == 30);
    CHECK(a.class_count == 3);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.samples[i].pixels == b.samples[i].pixels);
        CHECK(a.labels[i] == b.labels[i]);
        CHECK(a.labels[i] == static_cast<std::uint32_t>(i % 3));
        for (float p : a.samples[i].pixels) {
            CHECK(p >= 0.0f);
            CHECK(p <= 1.0f);
        }
    }

    // Sample i never depends on how many samples were generated.
    SyntheticDataSpec longer = spec;
    longer.samples = 60;
    Dataset c = make_synthetic_dataset(longer);
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(c.samples[i].pixels == a.samples[i].pixels);

    SyntheticDataSpec other = spec;
    other.seed = 12;
    Dataset d = make_synthetic_dataset(other);
    CHECK(d.samples[0].pixels != a.samples[0].pixels);
}

TEST_CASE("synthetic spec validation") {
    SyntheticDataSpec spec;
    CHECK_NOTHROW(validate(spec));

    SyntheticDataSpec bad = spec;
    bad.classes = 1;
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);
    bad = spec;
    bad.classes = 9;
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);
    bad = spec;
    bad.height = 3;
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);
    bad = spec;
    bad.samples = bad.classes - 1;
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);
    bad = spec;
    bad.orientation_flip = 1.0;
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);
    bad = spec;
    bad.pixel_noise = -0.1;
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);
}

TEST_CASE("plan JSON round-trips every field") {
    ExperimentPlan plan = micro_plan("/tmp/somewhere");
    plan.models[0].learning_rate = 0.002;
    plan.models[0].retrain_learning_rate = 0.004;
    PlanModel custom;
    custom.model_id = "mini";
    custom.builtin = false;
    custom.spec.model_id = "mini";
    custom.spec.input = {1, 8, 8};
    custom.spec.layers = {{LayerType::dense, 4}, {LayerType::dense, 2}};
    plan.models.push_back(custom);
    plan.retrain_learning_rate = 0.02;
    plan.from_scratch = true;
    plan.seeds = {77};
    plan.power.region = "test-region";
    plan.power.carbon_intensity_g_per_kwh = 123.0;

    ExperimentPlan back = plan_from_json(to_json(plan));
    CHECK(back.name == plan.name);
    REQUIRE(back.models.size() == 2);
    CHECK(back.models[0].model_id == "toy-mlp");
    CHECK(back.models[0].builtin);
    CHECK(back.models[0].learning_rate == plan.models[0].learning_rate);
    CHECK(back.models[0].retrain_learning_rate == plan.models[0].retrain_learning_rate);
    CHECK_FALSE(back.models[1].builtin);
    CHECK(back.models[1].spec.layers.size() == 2);
    CHECK(back.noise_kinds == plan.noise_kinds);
    CHECK(back.levels == plan.levels);
    CHECK(back.target_accuracy == plan.target_accuracy);
    CHECK(back.base_target_accuracy == plan.base_target_accuracy);
    CHECK(back.repeats == plan.repeats);
    CHECK(back.seed == plan.seed);
    CHECK(back.seeds == plan.seeds);
    CHECK(back.power.region == "test-region");
    CHECK(back.power.carbon_intensity_g_per_kwh == 123.0);
    CHECK(back.output_dir == plan.output_dir);
    REQUIRE(back.synthetic.has_value());
    CHECK(back.synthetic->samples == plan.synthetic->samples);
    CHECK(back.synthetic->classes == plan.synthetic->classes);
    CHECK(back.learning_rate == plan.learning_rate);
    CHECK(back.retrain_learning_rate == plan.retrain_learning_rate);
    CHECK(back.batch_size == plan.batch_size);
    CHECK(back.base_max_epochs == plan.base_max_epochs);
    CHECK(back.retrain_max_epochs == plan.retrain_max_epochs);
    CHECK(back.from_scratch == plan.from_scratch);
    CHECK(back.bins == plan.bins);
    CHECK(back.ladder.gaussian_sigma == plan.ladder.gaussian_sigma);

    // Round-trip again through a dump to catch non-serializable views.
    ExperimentPlan twice = plan_from_json(json::parse(to_json(back).dump()));
    CHECK(to_json(twice) == to_json(plan));
}

TEST_CASE("plan validation and seed resolution") {
    ExperimentPlan plan = micro_plan("/tmp/x");
    CHECK_NOTHROW(validate(plan));

    // seed+i default; explicit list wins; wrong length rejected.
    plan.repeats = 3;
    CHECK(resolved_seeds(plan) == std::vector<std::uint64_t>{5, 6, 7});
    plan.seeds = {9, 8, 7};
    CHECK(resolved_seeds(plan) == std::vector<std::uint64_t>{9, 8, 7});
    plan.seeds = {1, 2};
    CHECK_THROWS_AS(resolved_seeds(plan), std::invalid_argument);
    CHECK_THROWS_AS(validate(plan), std::invalid_argument);
    plan.seeds.clear();

    // Derived base target: min(0.97, target + 0.10); explicit value wins.
    CHECK(resolved_base_target(plan) == 0.65);
    plan.base_target_accuracy = 0.0;
    CHECK(resolved_base_target(plan) == doctest::Approx(0.70));
    plan.target_accuracy = 0.95;
    CHECK(resolved_base_target(plan) == doctest::Approx(0.97));
    plan.target_accuracy = 0.6;

    ExperimentPlan bad = micro_plan("/tmp/x");
    bad.models.clear();
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);

    bad = micro_plan("/tmp/x");
    bad.models.push_back(bad.models[0]);  // duplicate id
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);

    bad = micro_plan("/tmp/x");
    bad.models[0].model_id = "resnet50";  // unknown builtin
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);

    bad = micro_plan("/tmp/x");
    bad.levels = {9};  // outside the 7-level ladders
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);

    bad = micro_plan("/tmp/x");
    bad.base_target_accuracy = 0.5;  // below the retrain target
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);

    bad = micro_plan("/tmp/x");
    bad.output_dir.clear();
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);

    bad = micro_plan("/tmp/x");
    bad.dataset_path = "/tmp/data.armd";  // both sources set
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);

    bad = micro_plan("/tmp/x");
    bad.models[0].retrain_learning_rate = -1.0;
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);
}

TEST_CASE("correlation_table groups observations") {
    std::vector<Observation> obs;
    auto add = [&](const char* m, NoiseKind k, int level, double arm, double ep) {
        Observation o;
        o.model_id = m;
        o.noise_kind = k;
        o.level = level;
        o.arm = arm;
        o.epochs = ep;
        obs.push_back(o);
    };
    for (int l = 1; l <= 4; ++l) {
        add("a", NoiseKind::gaussian, l, 0.1 * l, 2.0 * l);      // perfectly rising
        add("a", NoiseKind::blur, l, 0.1 * l, 8.0 - 2.0 * l);    // perfectly falling
        add("b", NoiseKind::gaussian, l, 0.1 * l, 3.0 * l + 1);  // rising
    }

    const std::vector<std::string> both{"model", "noise_kind"};
    auto rows = correlation_table(obs, both);
    REQUIRE(rows.size() == 3);
    for (const auto& row : rows) {
        CHECK(row.n == 4);
        REQUIRE(row.defined);
        if (row.model_id == "a" && row.noise_kind == "blur") {
            CHECK(row.r == doctest::Approx(-1.0));
        } else {
            CHECK(row.r == doctest::Approx(1.0));
        }
    }

    const std::vector<std::string> none{};
    auto pooled = correlation_table(obs, none);
    REQUIRE(pooled.size() == 1);
    CHECK(pooled[0].model_id == "*");
    CHECK(pooled[0].noise_kind == "*");
    CHECK(pooled[0].n == 12);

    // Two-point groups are reported undefined rather than dropped.
    std::vector<Observation> two(obs.begin(), obs.begin() + 2);
    auto tiny = correlation_table(two, both);
    for (const auto& row : tiny) CHECK_FALSE(row.defined);

    const std::vector<std::string> bogus{"dataset"};
    CHECK_THROWS_AS(correlation_table(obs, bogus), std::invalid_argument);

    const std::string csv = correlation_to_csv(rows);
    CHECK(csv.find("model_id,noise_kind,n,r,p") == 0);
}

TEST_CASE("config files parse and apply overrides") {
    auto dir = fresh_dir("config");
    const auto path = dir / "arm.cfg";
    {
        std::ofstream out(path);
        out << "# severity overrides\n";
        out << "ladder.gaussian = 0.1 0.2 0.3\n";
        out << "ladder.blur = 1, 2, 3\n";
        out << "power.avg_power_watts = 200\n";
        out << "power.region = testland  # trailing comment\n";
    }
    auto cfg = read_config(path);
    CHECK(cfg.at("ladder.gaussian") == "0.1 0.2 0.3");
    CHECK(cfg.at("power.region") == "testland");

    SeverityLadder ladder;
    apply_config(cfg, ladder);
    CHECK(ladder.gaussian_sigma == std::vector<double>{0.1, 0.2, 0.3});
    CHECK(ladder.blur_radius == std::vector<int>{1, 2, 3});
    CHECK(ladder.salt_pepper_p.size() == 7);  // untouched default

    PowerProfile power;
    apply_config(cfg, power);
    CHECK(power.avg_power_watts == 200.0);
    CHECK(power.region == "testland");
    CHECK(power.epoch_seconds == 1.0);  // untouched default

    {
        std::ofstream out(path, std::ios::trunc);
        out << "ladder.blur = 1.5\n";  // radii must be integers
    }
    SeverityLadder l2;
    CHECK_THROWS_AS(apply_config(read_config(path), l2), io_error);

    {
        std::ofstream out(path, std::ios::trunc);
        out << "no equals sign here\n";
    }
    CHECK_THROWS_AS(read_config(path), io_error);
    CHECK_THROWS_AS(read_config(dir / "missing.cfg"), io_error);
}

TEST_CASE("fnv1a hashes bytes and files identically") {
    const std::vector<std::uint8_t> bytes = {'a', 'r', 'm'};
    const std::uint64_t h = fnv1a(bytes);
    CHECK(h != fnv1a(std::vector<std::uint8_t>{'a', 'r'}));
    // FNV-1a offset basis for the empty input.
    CHECK(fnv1a(std::vector<std::uint8_t>{}) == 0xcbf29ce484222325ULL);

    auto dir = fresh_dir("fnv");
    {
        std::ofstream out(dir / "f.bin", std::ios::binary);
        out.write("arm", 3);
    }
    CHECK(fnv1a_file(dir / "f.bin") == h);
    CHECK_THROWS_AS(fnv1a_file(dir / "nope.bin"), io_error);
}

TEST_CASE("experiment runs, resumes, reruns and parallelizes identically") {
    auto out1 = fresh_dir("run1");
    ExperimentPlan plan = micro_plan(out1);
    ExperimentResult res = run_experiment(plan);

    // One observation row per (model, kind, level).
    REQUIRE(res.observations.size() == 2);
    CHECK(res.observations[0].model_id == "toy-mlp");
    CHECK(res.observations[0].level == 1);
    CHECK(res.observations[1].level == 4);
    for (const Observation& o : res.observations) {
        CHECK(o.arm >= 0.0);
        CHECK(o.epochs >= 0.0);
        REQUIRE(o.energy_kwh.has_value());
        REQUIRE(o.co2_g.has_value());
    }
    // Heavier corruption shifts representations further on this plan.
    CHECK(res.observations[1].arm > res.observations[0].arm);

    CHECK(std::filesystem::exists(res.obs_csv));
    CHECK(std::filesystem::exists(res.correlation_csv));
    CHECK(std::filesystem::exists(res.manifest_path));
    CHECK(std::filesystem::exists(out1 / "runs" / "m0-toy-mlp" / "base.armw"));
    CHECK(std::filesystem::exists(out1 / "runs" / "m0-toy-mlp" / "clean.atf"));
    CHECK(std::filesystem::exists(out1 / "runs" / "m0-toy-mlp" / "gaussian-L1-r0.atf"));
    const std::string obs1 = slurp_text(res.obs_csv);

    // Resume in place: artifacts verify against the manifest, bytes identical.
    ExperimentResult res2 = run_experiment(plan);
    CHECK(slurp_text(res2.obs_csv) == obs1);

    // Rerun from the manifest plan into a fresh directory: byte-identical.
    ExperimentPlan replay = plan_from_manifest(res.manifest_path);
    CHECK(replay.seeds == std::vector<std::uint64_t>{5});
    auto out2 = fresh_dir("run2");
    replay.output_dir = out2;
    ExperimentResult res3 = run_experiment(replay);
    CHECK(slurp_text(res3.obs_csv) == obs1);

    // Parallel workers must not change any result.
    auto out3 = fresh_dir("run3");
    ExperimentPlan par = plan;
    par.output_dir = out3;
    ExperimentResult res4 = run_experiment(par, 2);
    CHECK(slurp_text(res4.obs_csv) == obs1);

    CHECK_THROWS_AS(plan_from_manifest(out1 / "obs.csv"), io_error);
}

TEST_CASE("report renders markdown, csv and plot data") {
    std::vector<Observation> obs;
    for (int l = 1; l <= 5; ++l) {
        Observation o;
        o.model_id = "toy-mlp";
        o.noise_kind = NoiseKind::gaussian;
        o.level = l;
        o.arm = 0.01 * l;
        o.epochs = 3.0 * l;
        o.energy_kwh = 0.001 * l;
        o.co2_g = 0.4 * l;
        obs.push_back(o);
    }
    Predictor pred = fit_predictor(obs);

    auto dir = fresh_dir("report");
    write_report(obs, &pred, dir);
    CHECK(std::filesystem::exists(dir / "report.md"));
    CHECK(std::filesystem::exists(dir / "correlation.csv"));
    CHECK(std::filesystem::exists(dir / "plot_data.json"));

    const std::string md = slurp_text(dir / "report.md");
    CHECK(md.find("toy-mlp") != std::string::npos);
    CHECK(md.find("gaussian") != std::string::npos);
    const json plot = load_json(dir / "plot_data.json");
    CHECK(plot.is_object());

    // Without a predictor the report still renders.
    auto dir2 = fresh_dir("report2");
    write_report(obs, nullptr, dir2);
    CHECK(std::filesystem::exists(dir2 / "report.md"));
}
