#include "armmeter/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include "armmeter/distance.hpp"
#include "armmeter/rng.hpp"

namespace armmeter {

namespace {

// Class cue tables for the synthetic generator. Each class layers three
// cues that corruption erodes at different rates but never erases outright:
// a unit-frequency orientation cue (occasionally flipped, so no model can
// lean on it alone), a shared-frequency texture whose AMPLITUDE grows with
// the class index (global-average-pooled conv nets read the energy ladder;
// blur attenuates every class equally so the ordering survives any level,
// while noise progressively masks the gaps), and a fragile high-frequency
// per-class detail that is the first to go.
constexpr int kOrientFreq[8][2] = {{1, 0}, {0, 1}, {1, 1},  {1, -1},
                                   {2, 1}, {1, 2}, {2, -1}, {1, -2}};
// Texture bundle shared by every class: two fixed mid frequencies whose
// cells collide with neither the orientation nor the detail tables.
constexpr int kTextureFreq[2][2] = {{2, 0}, {0, 2}};
constexpr int kDetailFreq[8][2] = {{6, 1}, {1, 6}, {6, 3},  {3, 6},
                                   {1, -6}, {6, -1}, {3, -6}, {6, 6}};

// Texture amplitude multiplier for class c: a geometric ladder ending at 1.
// Log spacing staggers the noise thresholds of adjacent class boundaries, so
// rising corruption severity peels classes apart one boundary at a time
// instead of all at once.
double texture_scale(int cls, int classes) {
    return std::pow(0.70, static_cast<double>(classes - 1 - cls));
}

std::uint64_t fnv1a_str(const std::string& s) {
    return fnv1a(std::span<const std::uint8_t>(
        reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string sanitize(const std::string& s) {
    std::string out;
    for (char c : s) {
        const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' ||
                        c == '_' || c == '.';
        out += ok ? c : '_';
    }
    return out.empty() ? std::string("model") : out;
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) return "nan";
    return std::string(buf, ptr);
}

json synthetic_to_json(const SyntheticDataSpec& s) {
    return json{{"classes", s.classes},
                {"channels", s.channels},
                {"height", s.height},
                {"width", s.width},
                {"samples", s.samples},
                {"orientation_amplitude", s.orientation_amplitude},
                {"orientation_flip", s.orientation_flip},
                {"primary_amplitude", s.primary_amplitude},
                {"detail_amplitude", s.detail_amplitude},
                {"brightness_jitter", s.brightness_jitter},
                {"pixel_noise", s.pixel_noise},
                {"shift_jitter", s.shift_jitter},
                {"seed", s.seed}};
}

SyntheticDataSpec synthetic_from_json(const json& j) {
    SyntheticDataSpec s;
    s.classes = j.value("classes", s.classes);
    s.channels = j.value("channels", s.channels);
    s.height = j.value("height", s.height);
    s.width = j.value("width", s.width);
    s.samples = j.value("samples", s.samples);
    s.orientation_amplitude = j.value("orientation_amplitude", s.orientation_amplitude);
    s.orientation_flip = j.value("orientation_flip", s.orientation_flip);
    s.primary_amplitude = j.value("primary_amplitude", s.primary_amplitude);
    s.detail_amplitude = j.value("detail_amplitude", s.detail_amplitude);
    s.brightness_jitter = j.value("brightness_jitter", s.brightness_jitter);
    s.pixel_noise = j.value("pixel_noise", s.pixel_noise);
    s.shift_jitter = j.value("shift_jitter", s.shift_jitter);
    s.seed = j.value("seed", s.seed);
    return s;
}

}  // namespace

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::uint8_t b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open file: " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const std::streamsize n = in.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<std::uint8_t>(buf[i]);
            h *= 0x100000001b3ULL;
        }
        if (!in) break;
    }
    if (in.bad()) throw io_error("cannot read file: " + path.string());
    return h;
}

void validate(const SyntheticDataSpec& spec) {
    if (spec.classes < 2 || spec.classes > 8)
        throw std::invalid_argument("synthetic classes must lie in [2, 8]");
    if (spec.channels < 1) throw std::invalid_argument("synthetic channels must be positive");
    if (spec.height < 4 || spec.width < 4)
        throw std::invalid_argument("synthetic images must be at least 4x4");
    if (spec.samples < spec.classes)
        throw std::invalid_argument("need at least one sample per class");
    if (spec.orientation_amplitude < 0 || spec.primary_amplitude < 0 ||
        spec.detail_amplitude < 0 || spec.brightness_jitter < 0 || spec.pixel_noise < 0)
        throw std::invalid_argument("synthetic amplitudes must be non-negative");
    if (spec.orientation_flip < 0 || spec.orientation_flip >= 1)
        throw std::invalid_argument("orientation flip chance must lie in [0, 1)");
    if (spec.shift_jitter < 0)
        throw std::invalid_argument("shift jitter must be non-negative");
}

Dataset make_synthetic_dataset(const SyntheticDataSpec& spec) {
    validate(spec);
    Dataset ds;
    ds.name = "synthetic";
    ds.class_count = static_cast<std::uint32_t>(spec.classes);
    ds.samples.resize(static_cast<std::size_t>(spec.samples));
    ds.labels.resize(static_cast<std::size_t>(spec.samples));

    const double tau = 2.0 * std::numbers::pi;
    for (int i = 0; i < spec.samples; ++i) {
        const int cls = i % spec.classes;
        SplitMix64 rng = stream_rng(spec.seed, static_cast<std::uint64_t>(i));
        const int span = 2 * spec.shift_jitter + 1;
        const int sx = spec.shift_jitter == 0
                           ? 0
                           : static_cast<int>(rng.next_below(span)) - spec.shift_jitter;
        const int sy = spec.shift_jitter == 0
                           ? 0
                           : static_cast<int>(rng.next_below(span)) - spec.shift_jitter;
        const double brightness = (rng.next_double() * 2.0 - 1.0) * spec.brightness_jitter;
        int ocls = cls;
        if (spec.orientation_flip > 0 && rng.next_double() < spec.orientation_flip)
            ocls = (cls + 1 + static_cast<int>(rng.next_below(
                                  static_cast<std::uint64_t>(spec.classes - 1)))) %
                   spec.classes;

        Image& img = ds.samples[static_cast<std::size_t>(i)];
        img.channels = spec.channels;
        img.height = spec.height;
        img.width = spec.width;
        img.pixels.resize(static_cast<std::size_t>(img.pixel_count()));

        const double oa = kOrientFreq[ocls][0], ob = kOrientFreq[ocls][1];
        const double tex_amp = spec.primary_amplitude * texture_scale(cls, spec.classes) /
                               std::sqrt(2.0);
        const double da = kDetailFreq[cls][0], db = kDetailFreq[cls][1];
        std::size_t at = 0;
        for (int c = 0; c < spec.channels; ++c) {
            for (int y = 0; y < spec.height; ++y) {
                const double fy = static_cast<double>(y - sy) / spec.height;
                for (int x = 0; x < spec.width; ++x) {
                    const double fx = static_cast<double>(x - sx) / spec.width;
                    double v = 0.5 + brightness;
                    v += spec.orientation_amplitude * std::cos(tau * (oa * fx + ob * fy));
                    for (const auto& tf : kTextureFreq)
                        v += tex_amp * std::cos(tau * (tf[0] * fx + tf[1] * fy));
                    v += spec.detail_amplitude * std::cos(tau * (da * fx + db * fy));
                    v += spec.pixel_noise * rng.next_normal();
                    img.pixels[at++] = static_cast<float>(std::clamp(v, 0.0, 1.0));
                }
            }
        }
        ds.labels[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(cls);
    }
    return ds;
}

std::vector<std::uint64_t> resolved_seeds(const ExperimentPlan& plan) {
    if (!plan.seeds.empty()) {
        if (plan.seeds.size() != static_cast<std::size_t>(plan.repeats))
            throw std::invalid_argument("seed list length must equal repeats");
        return plan.seeds;
    }
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < plan.repeats; ++i)
        seeds.push_back(plan.seed + static_cast<std::uint64_t>(i));
    return seeds;
}

double resolved_base_target(const ExperimentPlan& plan) {
    if (plan.base_target_accuracy > 0) return plan.base_target_accuracy;
    return std::min(0.97, plan.target_accuracy + 0.10);
}

void validate(const ExperimentPlan& plan) {
    if (plan.models.empty()) throw std::invalid_argument("plan needs at least one model");
    std::set<std::string> ids;
    for (const PlanModel& pm : plan.models) {
        if (pm.model_id.empty()) throw std::invalid_argument("plan model needs a model_id");
        if (!ids.insert(pm.model_id).second)
            throw std::invalid_argument("duplicate model_id in plan: " + pm.model_id);
        if (pm.builtin) {
            if (!is_builtin_model(pm.model_id))
                throw std::invalid_argument("unknown builtin model: " + pm.model_id);
        } else {
            validate_model_spec(pm.spec);
        }
    }
    if (plan.noise_kinds.empty()) throw std::invalid_argument("plan needs at least one noise kind");
    std::set<int> kinds;
    for (NoiseKind k : plan.noise_kinds)
        if (!kinds.insert(static_cast<int>(k)).second)
            throw std::invalid_argument("duplicate noise kind in plan");
    plan.ladder.validate();
    if (plan.levels.empty()) throw std::invalid_argument("plan needs at least one level");
    for (NoiseKind k : plan.noise_kinds) {
        const int top = static_cast<int>(plan.ladder.levels(k));
        for (int level : plan.levels)
            if (level < 1 || level > top)
                throw std::invalid_argument("level " + std::to_string(level) +
                                            " outside the " + to_string(k) + " ladder");
    }
    if (!(plan.target_accuracy > 0.0 && plan.target_accuracy <= 1.0))
        throw std::invalid_argument("target accuracy must lie in (0, 1]");
    if (plan.base_target_accuracy != 0.0) {
        if (!(plan.base_target_accuracy > 0.0 && plan.base_target_accuracy <= 1.0))
            throw std::invalid_argument("base target accuracy must lie in (0, 1]");
        if (plan.base_target_accuracy < plan.target_accuracy)
            throw std::invalid_argument("base target must be at least the retrain target");
    }
    if (plan.repeats < 1) throw std::invalid_argument("repeats must be positive");
    if (!plan.seeds.empty() && plan.seeds.size() != static_cast<std::size_t>(plan.repeats))
        throw std::invalid_argument("seed list length must equal repeats");
    validate(plan.power);
    if (plan.output_dir.empty()) throw std::invalid_argument("plan needs an output_dir");
    if (!plan.dataset_path.empty() && plan.synthetic)
        throw std::invalid_argument("plan specifies both a dataset path and a synthetic spec");
    if (plan.synthetic) validate(*plan.synthetic);
    if (!(plan.learning_rate > 0)) throw std::invalid_argument("learning rate must be positive");
    if (plan.retrain_learning_rate < 0)
        throw std::invalid_argument("retrain learning rate must be non-negative");
    for (const PlanModel& pm : plan.models)
        if (pm.retrain_learning_rate < 0 || pm.learning_rate < 0)
            throw std::invalid_argument("model learning rates must be non-negative");
    if (plan.batch_size < 1) throw std::invalid_argument("batch size must be positive");
    if (plan.base_max_epochs < 1 || plan.retrain_max_epochs < 1)
        throw std::invalid_argument("epoch limits must be positive");
    if (plan.bins < 2) throw std::invalid_argument("need at least 2 bins");
}

json to_json(const ExperimentPlan& plan) {
    json models = json::array();
    for (const PlanModel& pm : plan.models) {
        json jm;
        if (pm.builtin) {
            jm = json{{"model_id", pm.model_id}};
        } else {
            jm = to_json(pm.spec);
            jm["model_id"] = pm.model_id;
        }
        if (pm.learning_rate > 0) jm["learning_rate"] = pm.learning_rate;
        if (pm.retrain_learning_rate > 0)
            jm["retrain_learning_rate"] = pm.retrain_learning_rate;
        models.push_back(std::move(jm));
    }
    json kinds = json::array();
    for (NoiseKind k : plan.noise_kinds) kinds.push_back(to_string(k));

    json dataset;
    if (!plan.dataset_path.empty()) {
        dataset = json{{"path", plan.dataset_path.string()}};
    } else {
        dataset = json{{"synthetic",
                        synthetic_to_json(plan.synthetic ? *plan.synthetic
                                                         : SyntheticDataSpec{})}};
    }

    return json{{"name", plan.name},
                {"models", models},
                {"noise_kinds", kinds},
                {"levels", plan.levels},
                {"target_accuracy", plan.target_accuracy},
                {"base_target_accuracy", plan.base_target_accuracy},
                {"repeats", plan.repeats},
                {"seed", plan.seed},
                {"seeds", resolved_seeds(plan)},
                {"power_profile", to_json(plan.power)},
                {"output_dir", plan.output_dir.string()},
                {"dataset", dataset},
                {"learning_rate", plan.learning_rate},
                {"retrain_learning_rate", plan.retrain_learning_rate},
                {"batch_size", plan.batch_size},
                {"base_max_epochs", plan.base_max_epochs},
                {"retrain_max_epochs", plan.retrain_max_epochs},
                {"from_scratch", plan.from_scratch},
                {"bins", plan.bins},
                {"ladder", json{{"gaussian", plan.ladder.gaussian_sigma},
                                {"salt_pepper", plan.ladder.salt_pepper_p},
                                {"blur", plan.ladder.blur_radius}}}};
}

ExperimentPlan plan_from_json(const json& j) {
    try {
        ExperimentPlan plan;
        plan.name = j.value("name", plan.name);
        plan.models.clear();
        for (const json& jm : j.at("models")) {
            PlanModel pm;
            pm.model_id = jm.at("model_id").get<std::string>();
            if (jm.contains("layers")) {
                pm.builtin = false;
                pm.spec = model_spec_from_json(jm);
                pm.spec.model_id = pm.model_id;
            } else {
                pm.builtin = true;
            }
            pm.learning_rate = jm.value("learning_rate", pm.learning_rate);
            pm.retrain_learning_rate =
                jm.value("retrain_learning_rate", pm.retrain_learning_rate);
            plan.models.push_back(std::move(pm));
        }
        if (j.contains("noise_kinds")) {
            plan.noise_kinds.clear();
            for (const json& jk : j.at("noise_kinds"))
                plan.noise_kinds.push_back(noise_kind_from_string(jk.get<std::string>()));
        }
        if (j.contains("levels")) plan.levels = j.at("levels").get<std::vector<int>>();
        plan.target_accuracy = j.value("target_accuracy", plan.target_accuracy);
        plan.base_target_accuracy = j.value("base_target_accuracy", plan.base_target_accuracy);
        plan.repeats = j.value("repeats", plan.repeats);
        plan.seed = j.value("seed", plan.seed);
        if (j.contains("seeds")) plan.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        if (j.contains("power_profile"))
            plan.power = power_profile_from_json(j.at("power_profile"));
        if (j.contains("output_dir"))
            plan.output_dir = j.at("output_dir").get<std::string>();
        if (j.contains("dataset")) {
            const json& jd = j.at("dataset");
            if (jd.contains("path")) {
                plan.dataset_path = jd.at("path").get<std::string>();
            } else if (jd.contains("synthetic")) {
                plan.synthetic = synthetic_from_json(jd.at("synthetic"));
            }
        }
        plan.learning_rate = j.value("learning_rate", plan.learning_rate);
        plan.retrain_learning_rate =
            j.value("retrain_learning_rate", plan.retrain_learning_rate);
        plan.batch_size = j.value("batch_size", plan.batch_size);
        plan.base_max_epochs = j.value("base_max_epochs", plan.base_max_epochs);
        plan.retrain_max_epochs = j.value("retrain_max_epochs", plan.retrain_max_epochs);
        plan.from_scratch = j.value("from_scratch", plan.from_scratch);
        plan.bins = j.value("bins", plan.bins);
        if (j.contains("ladder")) {
            const json& jl = j.at("ladder");
            if (jl.contains("gaussian"))
                plan.ladder.gaussian_sigma = jl.at("gaussian").get<std::vector<double>>();
            if (jl.contains("salt_pepper"))
                plan.ladder.salt_pepper_p = jl.at("salt_pepper").get<std::vector<double>>();
            if (jl.contains("blur"))
                plan.ladder.blur_radius = jl.at("blur").get<std::vector<int>>();
        }
        return plan;
    } catch (const json::exception& e) {
        throw io_error(std::string("experiment plan: ") + e.what());
    }
}

namespace {

struct Artifact {
    std::string rel;
    std::uint64_t hash = 0;
};

struct StageRecord {
    std::string name;
    std::vector<Artifact> artifacts;
};

// Tracks completed stages and rewrites manifest.json after each one, so a
// crash or failure leaves a usable partial manifest and a later run can
// resume by hash-checking artifacts.
class ManifestBook {
public:
    ManifestBook(std::filesystem::path root, json plan_json, std::uint64_t fingerprint)
        : root_(std::move(root)),
          path_(root_ / "manifest.json"),
          plan_json_(std::move(plan_json)),
          fingerprint_(fingerprint) {}

    void load_previous() {
        if (!std::filesystem::exists(path_)) return;
        json j;
        try {
            j = load_json(path_);
        } catch (const io_error&) {
            return;  // unreadable old manifest: start fresh
        }
        if (j.value("format", std::string{}) != "arm-meter-manifest") return;
        if (j.value("plan_fingerprint", std::string{}) != hex64(fingerprint_)) return;
        if (!j.contains("stages")) return;
        for (const json& js : j.at("stages")) {
            StageRecord rec;
            rec.name = js.value("name", std::string{});
            if (!js.contains("artifacts")) continue;
            for (const json& ja : js.at("artifacts")) {
                Artifact a;
                a.rel = ja.value("path", std::string{});
                const std::string hx = ja.value("fnv1a", std::string{});
                a.hash = std::strtoull(hx.c_str(), nullptr, 16);
                rec.artifacts.push_back(std::move(a));
            }
            if (!rec.name.empty()) previous_[rec.name] = std::move(rec);
        }
    }

    // True when the stage completed before and every artifact still matches
    // its recorded hash.
    bool completed_previously(const std::string& stage,
                              const std::vector<std::string>& rels) const {
        auto it = previous_.find(stage);
        if (it == previous_.end()) return false;
        if (it->second.artifacts.size() != rels.size()) return false;
        for (const std::string& rel : rels) {
            const Artifact* found = nullptr;
            for (const Artifact& a : it->second.artifacts)
                if (a.rel == rel) found = &a;
            if (!found) return false;
            const std::filesystem::path p = root_ / rel;
            if (!std::filesystem::exists(p)) return false;
            try {
                if (fnv1a_file(p) != found->hash) return false;
            } catch (const io_error&) {
                return false;
            }
        }
        return true;
    }

    void record(const std::string& stage, const std::vector<std::string>& rels) {
        StageRecord rec;
        rec.name = stage;
        for (const std::string& rel : rels)
            rec.artifacts.push_back({rel, fnv1a_file(root_ / rel)});
        std::lock_guard<std::mutex> lock(mu_);
        stages_[stage] = std::move(rec);
        write_locked();
    }

    void fail(const std::string& stage) {
        std::lock_guard<std::mutex> lock(mu_);
        failed_stage_ = stage;
        write_locked();
    }

    void finish(double wall_seconds) {
        std::lock_guard<std::mutex> lock(mu_);
        wall_seconds_ = wall_seconds;
        write_locked();
    }

    const std::filesystem::path& path() const { return path_; }

private:
    void write_locked() {
        json stages = json::array();
        for (const auto& [name, rec] : stages_) {
            json arts = json::array();
            for (const Artifact& a : rec.artifacts)
                arts.push_back(json{{"path", a.rel}, {"fnv1a", hex64(a.hash)}});
            stages.push_back(json{{"name", name}, {"artifacts", arts}});
        }
        json j{{"format", "arm-meter-manifest"},
               {"version", 1},
               {"plan_fingerprint", hex64(fingerprint_)},
               {"plan", plan_json_},
               {"stages", stages}};
        if (!failed_stage_.empty()) j["failed_stage"] = failed_stage_;
        if (wall_seconds_ >= 0) j["wall_seconds"] = wall_seconds_;
        save_json(j, path_);
    }

    std::filesystem::path root_;
    std::filesystem::path path_;
    json plan_json_;
    std::uint64_t fingerprint_ = 0;
    std::map<std::string, StageRecord> previous_;
    std::map<std::string, StageRecord> stages_;
    std::string failed_stage_;
    double wall_seconds_ = -1.0;
    std::mutex mu_;
};

template <typename Fn>
void staged(const std::string& stage, Fn&& fn) {
    try {
        fn();
    } catch (const experiment_error&) {
        throw;
    } catch (const std::exception& e) {
        throw experiment_error(stage, e.what());
    }
}

// Runs fn over tasks with up to `jobs` threads. With one job this is a plain
// loop. On exceptions, the one raised by the earliest task wins, so failure
// reporting does not depend on scheduling.
template <typename Task, typename Fn>
void parallel_run(const std::vector<Task>& tasks, int jobs, Fn&& fn) {
    if (tasks.empty()) return;
    const int threads = std::max(1, std::min<int>(jobs, static_cast<int>(tasks.size())));
    if (threads == 1) {
        for (const Task& t : tasks) fn(t);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> bail{false};
    std::mutex mu;
    std::size_t first_bad = tasks.size();
    std::exception_ptr first_error;
    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= tasks.size() || bail.load()) break;
            try {
                fn(tasks[i]);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (i < first_bad) {
                    first_bad = i;
                    first_error = std::current_exception();
                }
                bail.store(true);
            }
        }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

std::uint64_t model_stream_seed(std::uint64_t repeat_seed, const std::string& model_id) {
    return mix_seed(repeat_seed, fnv1a_str("model/" + model_id));
}

}  // namespace

ExperimentPlan plan_from_manifest(const std::filesystem::path& manifest_path) {
    const json j = load_json(manifest_path);
    if (j.value("format", std::string{}) != "arm-meter-manifest")
        throw io_error("not an experiment manifest: " + manifest_path.string());
    if (!j.contains("plan")) throw io_error("manifest has no plan: " + manifest_path.string());
    return plan_from_json(j.at("plan"));
}

ExperimentResult run_experiment(const ExperimentPlan& plan_in, int jobs) {
    ExperimentPlan plan = plan_in;
    plan.seeds = resolved_seeds(plan);
    validate(plan);
    if (jobs < 1) jobs = 1;
    const auto t0 = std::chrono::steady_clock::now();

    const std::filesystem::path root = plan.output_dir;
    std::filesystem::create_directories(root / "runs");

    json plan_json = to_json(plan);
    json fp_json = plan_json;
    fp_json.erase("output_dir");  // the same plan may live anywhere
    const std::uint64_t fingerprint = fnv1a_str(fp_json.dump());

    ManifestBook book(root, plan_json, fingerprint);
    book.load_previous();

    try {
        // --- dataset ---
        Dataset ds;
        const std::string ds_rel = "dataset.armd";
        staged("dataset", [&] {
            const std::filesystem::path ds_path = root / ds_rel;
            if (book.completed_previously("dataset", {ds_rel})) {
                ds = read_dataset(ds_path);
            } else {
                if (!plan.dataset_path.empty()) {
                    ds = read_dataset(plan.dataset_path);
                } else {
                    ds = make_synthetic_dataset(plan.synthetic ? *plan.synthetic
                                                               : SyntheticDataSpec{});
                }
                write_dataset(ds, ds_path);
            }
            ds.name = "clean";
            book.record("dataset", {ds_rel});
        });

        // --- resolve model specs against the dataset shape ---
        std::vector<ModelSpec> specs;
        staged("resolve-models", [&] {
            const Image& first = ds.samples.front();
            const InputDims dims{first.channels, first.height, first.width};
            for (const PlanModel& pm : plan.models) {
                ModelSpec spec;
                if (pm.builtin) {
                    spec = builtin_model_spec(pm.model_id, dims, ds.class_count, 0);
                } else {
                    spec = pm.spec;
                    if (spec.input.channels != dims.channels ||
                        spec.input.height != dims.height || spec.input.width != dims.width)
                        throw std::invalid_argument("model " + pm.model_id +
                                                    " input does not match the dataset");
                    const auto shapes = validate_model_spec(spec);
                    if (shapes.back().c != static_cast<int>(ds.class_count))
                        throw std::invalid_argument("model " + pm.model_id +
                                                    " logits do not match the class count");
                }
                specs.push_back(std::move(spec));
            }
        });

        std::vector<std::string> mtags;
        for (std::size_t mi = 0; mi < specs.size(); ++mi) {
            mtags.push_back("m" + std::to_string(mi) + "-" + sanitize(specs[mi].model_id));
            std::filesystem::create_directories(root / "runs" / mtags[mi]);
        }

        // --- phase 1: one clean ("base") model per architecture. Repeats
        // share it: the measure-then-retrain protocol studies a single
        // trained model, so repeats vary only corruption draws and the
        // retraining path, never the base weights. ---
        struct BaseResult {
            std::vector<float> weights;
            ActivationTrace clean_trace;
        };
        std::map<std::size_t, BaseResult> bases;
        std::mutex bases_mu;

        std::vector<std::size_t> base_tasks;
        for (std::size_t mi = 0; mi < specs.size(); ++mi) base_tasks.push_back(mi);

        const double base_target = resolved_base_target(plan);

        parallel_run(base_tasks, jobs, [&](std::size_t mi) {
            const std::string stage = "base/m" + std::to_string(mi);
            staged(stage, [&] {
                const std::string dir = "runs/" + mtags[mi] + "/";
                const std::string rel_w = dir + "base.armw";
                const std::string rel_j = dir + "base.json";
                const std::string rel_t = dir + "clean.atf";

                ModelSpec spec = specs[mi];
                spec.seed = model_stream_seed(plan.seed, spec.model_id);

                if (book.completed_previously(stage, {rel_w, rel_j, rel_t})) {
                    BaseResult base;
                    base.weights = read_weights(root / rel_w);
                    base.clean_trace = read_trace(root / rel_t);
                    base.clean_trace.model_id = spec.model_id;
                    base.clean_trace.dataset_id = "clean";
                    {
                        std::lock_guard<std::mutex> lock(bases_mu);
                        bases[mi] = std::move(base);
                    }
                    book.record(stage, {rel_w, rel_j, rel_t});
                    return;
                }

                Model model = init_model(spec);
                TrainConfig cfg;
                const double base_lr = plan.models[mi].learning_rate;
                cfg.learning_rate = base_lr > 0 ? base_lr : plan.learning_rate;
                cfg.batch_size = plan.batch_size;
                cfg.target_accuracy = base_target;
                cfg.max_epochs = plan.base_max_epochs;
                cfg.seed = mix_seed(spec.seed, fnv1a_str("base-train"));
                const RetrainingReport report = model.train_to_accuracy(ds, cfg);
                if (!report.reached_target)
                    throw experiment_error(
                        stage, "clean training stopped at accuracy " +
                                   format_double(report.accuracy_curve.back()) + " after " +
                                   std::to_string(report.epochs_used) +
                                   " epochs without reaching " + format_double(base_target));

                auto capture = model.forward_with_capture(ds);

                write_weights(model.parameters_f32(), root / rel_w);
                write_trace(capture.trace, root / rel_t);
                json jb{{"model_id", spec.model_id},
                        {"init_seed", spec.seed},
                        {"train_seed", cfg.seed},
                        {"base_target", base_target},
                        {"training", to_json(report)}};
                save_json(jb, root / rel_j);

                BaseResult base;
                base.weights = model.parameters_f32();
                base.clean_trace = std::move(capture.trace);
                {
                    std::lock_guard<std::mutex> lock(bases_mu);
                    bases[mi] = std::move(base);
                }
                book.record(stage, {rel_w, rel_j, rel_t});
            });
        });

        // --- phase 2: corruption cells ---
        struct CellKey {
            std::size_t mi;
            int kind;
            int level;
            int rep;
            bool operator<(const CellKey& o) const {
                return std::tie(mi, kind, level, rep) < std::tie(o.mi, o.kind, o.level, o.rep);
            }
        };
        struct CellOut {
            double arm = 0.0;
            int epochs = 0;
            bool reached = false;
        };
        std::map<CellKey, CellOut> cells;
        std::mutex cells_mu;

        std::vector<CellKey> cell_tasks;
        for (std::size_t mi = 0; mi < specs.size(); ++mi)
            for (NoiseKind kind : plan.noise_kinds)
                for (int level : plan.levels)
                    for (int rep = 0; rep < plan.repeats; ++rep)
                        cell_tasks.push_back({mi, static_cast<int>(kind), level, rep});

        parallel_run(cell_tasks, jobs, [&](const CellKey& key) {
            const NoiseKind kind = static_cast<NoiseKind>(key.kind);
            const std::string kind_name = to_string(kind);
            const std::string stage = "cell/m" + std::to_string(key.mi) + "/" + kind_name +
                                      "/L" + std::to_string(key.level) + "/r" +
                                      std::to_string(key.rep);
            staged(stage, [&] {
                const std::string dir = "runs/" + mtags[key.mi] + "/";
                const std::string tag = kind_name + "-L" + std::to_string(key.level) + "-r" +
                                        std::to_string(key.rep);
                const std::string rel_t = dir + tag + ".atf";
                const std::string rel_j = dir + tag + ".json";

                if (book.completed_previously(stage, {rel_t, rel_j})) {
                    try {
                        const json jc = load_json(root / rel_j);
                        CellOut out;
                        out.arm = jc.at("shift").at("arm").get<double>();
                        out.epochs = jc.at("retraining").at("epochs_used").get<int>();
                        out.reached = jc.at("retraining").at("reached_target").get<bool>();
                        {
                            std::lock_guard<std::mutex> lock(cells_mu);
                            cells[key] = out;
                        }
                        book.record(stage, {rel_t, rel_j});
                        return;
                    } catch (const std::exception&) {
                        // fall through and recompute
                    }
                }

                const std::uint64_t repeat_seed = plan.seeds[static_cast<std::size_t>(key.rep)];
                const std::uint64_t corrupt_seed = mix_seed(
                    repeat_seed, fnv1a_str("corrupt/" + kind_name + "/L" +
                                           std::to_string(key.level)));

                CorruptionSpec cspec;
                cspec.kind = kind;
                cspec.level = key.level;
                cspec.seed = corrupt_seed;
                const Dataset shifted = apply_corruption(ds, cspec, plan.ladder);

                ModelSpec spec = specs[key.mi];
                spec.seed = model_stream_seed(plan.seed, spec.model_id);

                const BaseResult& base = bases.at(key.mi);
                Model model(spec);
                model.set_parameters_f32(base.weights);

                auto capture = model.forward_with_capture(shifted);
                const ArmReport shift_report =
                    arm(base.clean_trace, capture.trace,
                        BinningPolicy{plan.bins, BinningPolicy::RangeRule::joint_min_max});

                ModelSpec scratch_spec = spec;  // fresh init varies per repeat
                scratch_spec.seed =
                    mix_seed(repeat_seed, fnv1a_str("scratch-init/" + spec.model_id));
                Model retrain_model =
                    plan.from_scratch ? init_model(scratch_spec) : std::move(model);
                TrainConfig cfg;
                const double model_lr = plan.models[static_cast<std::size_t>(key.mi)]
                                            .retrain_learning_rate;
                cfg.learning_rate = model_lr > 0           ? model_lr
                                    : plan.retrain_learning_rate > 0 ? plan.retrain_learning_rate
                                                                     : plan.learning_rate;
                cfg.batch_size = plan.batch_size;
                cfg.target_accuracy = plan.target_accuracy;
                cfg.max_epochs = plan.retrain_max_epochs;
                cfg.seed = mix_seed(repeat_seed,
                                    fnv1a_str("retrain/" + spec.model_id + "/" + kind_name +
                                              "/L" + std::to_string(key.level)));
                const RetrainingReport rr = retrain_model.train_to_accuracy(shifted, cfg);

                write_trace(capture.trace, root / rel_t);
                json jc{{"model_id", spec.model_id},
                        {"noise_kind", kind_name},
                        {"level", key.level},
                        {"repeat", key.rep},
                        {"corrupt_seed", corrupt_seed},
                        {"retrain_seed", cfg.seed},
                        {"from_scratch", plan.from_scratch},
                        {"shift", to_json(shift_report)},
                        {"retraining", to_json(rr)}};
                save_json(jc, root / rel_j);

                CellOut out{shift_report.arm, rr.epochs_used, rr.reached_target};
                {
                    std::lock_guard<std::mutex> lock(cells_mu);
                    cells[key] = out;
                }
                book.record(stage, {rel_t, rel_j});
            });
        });

        // --- aggregate ---
        ExperimentResult result;
        staged("aggregate", [&] {
            std::vector<Observation> obs;
            for (std::size_t mi = 0; mi < specs.size(); ++mi) {
                for (NoiseKind kind : plan.noise_kinds) {
                    for (int level : plan.levels) {
                        double arm_sum = 0.0, epoch_sum = 0.0;
                        for (int rep = 0; rep < plan.repeats; ++rep) {
                            const CellOut& c =
                                cells.at({mi, static_cast<int>(kind), level, rep});
                            arm_sum += c.arm;
                            epoch_sum += static_cast<double>(c.epochs);
                        }
                        Observation o;
                        o.model_id = specs[mi].model_id;
                        o.noise_kind = kind;
                        o.level = level;
                        o.arm = arm_sum / plan.repeats;
                        o.epochs = epoch_sum / plan.repeats;
                        o.energy_kwh = energy_estimate(o.epochs, plan.power);
                        o.co2_g = carbon_estimate(*o.energy_kwh, plan.power);
                        obs.push_back(std::move(o));
                    }
                }
            }
            std::sort(obs.begin(), obs.end(), [](const Observation& a, const Observation& b) {
                return std::tie(a.model_id, a.noise_kind, a.level) <
                       std::tie(b.model_id, b.noise_kind, b.level);
            });
            write_observations(obs, root / "obs.csv");

            const std::vector<std::string> keys{"model", "noise_kind"};
            const auto table = correlation_table(obs, keys);
            const std::string csv = correlation_to_csv(table);
            {
                std::ofstream out(root / "correlation.csv", std::ios::binary | std::ios::trunc);
                if (!out) throw io_error("cannot open file for writing: " +
                                         (root / "correlation.csv").string());
                out.write(csv.data(), static_cast<std::streamsize>(csv.size()));
            }
            book.record("aggregate", {"obs.csv", "correlation.csv"});

            result.observations = std::move(obs);
            result.obs_csv = root / "obs.csv";
            result.correlation_csv = root / "correlation.csv";
            result.manifest_path = book.path();
        });

        book.finish(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        return result;
    } catch (const experiment_error& e) {
        book.fail(e.stage());
        throw;
    } catch (const std::exception& e) {
        book.fail("run");
        throw experiment_error("run", e.what());
    }
}

std::vector<CorrelationRow> correlation_table(std::span<const Observation> obs,
                                              std::span<const std::string> group_by) {
    bool by_model = false, by_kind = false;
    for (const std::string& key : group_by) {
        if (key == "model") {
            by_model = true;
        } else if (key == "noise_kind") {
            by_kind = true;
        } else {
            throw std::invalid_argument("unknown group key: " + key);
        }
    }

    std::map<std::pair<std::string, int>, std::vector<std::pair<double, double>>> groups;
    for (const Observation& o : obs) {
        const std::pair<std::string, int> key{by_model ? o.model_id : "*",
                                              by_kind ? static_cast<int>(o.noise_kind) : -1};
        groups[key].emplace_back(o.arm, o.epochs);
    }

    std::vector<CorrelationRow> rows;
    for (const auto& [key, points] : groups) {
        CorrelationRow row;
        row.model_id = key.first;
        row.noise_kind = key.second < 0 ? "*" : to_string(static_cast<NoiseKind>(key.second));
        row.n = static_cast<int>(points.size());
        if (points.size() >= 3) {
            std::vector<double> xs, ys;
            for (const auto& [x, y] : points) {
                xs.push_back(x);
                ys.push_back(y);
            }
            try {
                const Correlation c = pearson(xs, ys);
                row.r = c.r;
                row.p = c.p;
                row.defined = true;
            } catch (const std::invalid_argument&) {
                row.defined = false;
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string correlation_to_csv(std::span<const CorrelationRow> rows) {
    std::string out = "model_id,noise_kind,n,r,p\n";
    for (const CorrelationRow& row : rows) {
        out += row.model_id;
        out += ',';
        out += row.noise_kind;
        out += ',';
        out += std::to_string(row.n);
        out += ',';
        if (row.defined) out += format_double(row.r);
        out += ',';
        if (row.defined) out += format_double(row.p);
        out += '\n';
    }
    return out;
}

void write_report(std::span<const Observation> obs, const Predictor* predictor,
                  const std::filesystem::path& out_dir) {
    if (obs.empty()) throw std::invalid_argument("no observations to report on");
    std::filesystem::create_directories(out_dir);

    const std::vector<std::string> keys{"model", "noise_kind"};
    const auto table = correlation_table(obs, keys);

    // Group observations into (model, kind) series, keeping input order.
    std::map<std::pair<std::string, int>, std::vector<const Observation*>> series;
    for (const Observation& o : obs)
        series[{o.model_id, static_cast<int>(o.noise_kind)}].push_back(&o);

    std::ostringstream md;
    md << "# Retraining cost report\n\n";
    md << obs.size() << " observations across " << series.size()
       << " (model, noise kind) series.\n\n";

    md << "## Correlation between representation shift and retraining epochs\n\n";
    md << "| model | noise kind | n | r | p |\n";
    md << "|---|---|---|---|---|\n";
    for (const CorrelationRow& row : table) {
        md << "| " << row.model_id << " | " << row.noise_kind << " | " << row.n << " | ";
        if (row.defined) {
            md << format_double(row.r) << " | " << format_double(row.p);
        } else {
            md << "n/a | n/a";
        }
        md << " |\n";
    }
    md << "\n";

    md << "## Series\n\n";
    for (const auto& [key, points] : series) {
        md << "### " << key.first << " / " << to_string(static_cast<NoiseKind>(key.second))
           << "\n\n";
        md << "| level | arm | epochs | energy_kwh | co2_g |\n";
        md << "|---|---|---|---|---|\n";
        for (const Observation* o : points) {
            md << "| " << o->level << " | " << format_double(o->arm) << " | "
               << format_double(o->epochs) << " | "
               << (o->energy_kwh ? format_double(*o->energy_kwh) : "n/a") << " | "
               << (o->co2_g ? format_double(*o->co2_g) : "n/a") << " |\n";
        }
        md << "\n";
    }

    json plot;
    plot["series"] = json::array();
    for (const auto& [key, points] : series) {
        json js;
        js["model_id"] = key.first;
        js["noise_kind"] = to_string(static_cast<NoiseKind>(key.second));
        json levels = json::array(), arms = json::array(), epochs = json::array(),
             energy = json::array(), co2 = json::array();
        for (const Observation* o : points) {
            levels.push_back(o->level);
            arms.push_back(o->arm);
            epochs.push_back(o->epochs);
            if (o->energy_kwh) energy.push_back(*o->energy_kwh); else energy.push_back(nullptr);
            if (o->co2_g) co2.push_back(*o->co2_g); else co2.push_back(nullptr);
        }
        js["levels"] = levels;
        js["arm"] = arms;
        js["epochs"] = epochs;
        js["energy_kwh"] = energy;
        js["co2_g"] = co2;
        plot["series"].push_back(js);
    }

    if (predictor) {
        md << "## Predictions\n\n";
        md << "Shared slope " << format_double(predictor->slope) << ".\n\n";
        md << "| model | noise kind | level | arm | epochs | predicted | residual |\n";
        md << "|---|---|---|---|---|---|---|\n";
        json jres = json::array();
        bool any = false, all_over = true, all_under = true;
        for (const Observation& o : obs) {
            if (!predictor->intercepts.count(o.model_id)) continue;
            const double pred = predict_epochs(*predictor, o.model_id, o.arm);
            const double residual = pred - o.epochs;
            any = true;
            all_over = all_over && residual > 0;
            all_under = all_under && residual < 0;
            md << "| " << o.model_id << " | " << to_string(o.noise_kind) << " | " << o.level
               << " | " << format_double(o.arm) << " | " << format_double(o.epochs) << " | "
               << format_double(pred) << " | " << format_double(residual) << " |\n";
            jres.push_back(json{{"model_id", o.model_id},
                                {"noise_kind", to_string(o.noise_kind)},
                                {"level", o.level},
                                {"arm", o.arm},
                                {"epochs", o.epochs},
                                {"predicted", pred},
                                {"residual", residual}});
        }
        md << "\n";
        if (any && all_over)
            md << "All residuals are positive: the predictor systematically over-estimates "
                  "retraining cost on this data.\n\n";
        else if (any && all_under)
            md << "All residuals are negative: the predictor systematically under-estimates "
                  "retraining cost on this data.\n\n";
        plot["predicted"] = jres;
        plot["predictor"] = to_json(*predictor);
    }

    {
        std::ofstream out(out_dir / "report.md", std::ios::binary | std::ios::trunc);
        if (!out)
            throw io_error("cannot open file for writing: " + (out_dir / "report.md").string());
        out << md.str();
        if (!out) throw io_error("write failed: " + (out_dir / "report.md").string());
    }
    {
        const std::string csv = correlation_to_csv(table);
        std::ofstream out(out_dir / "correlation.csv", std::ios::binary | std::ios::trunc);
        if (!out)
            throw io_error("cannot open file for writing: " +
                           (out_dir / "correlation.csv").string());
        out.write(csv.data(), static_cast<std::streamsize>(csv.size()));
    }
    save_json(plot, out_dir / "plot_data.json");
}

std::map<std::string, std::string> read_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open file: " + path.string());
    std::map<std::string, std::string> cfg;
    std::string line;
    std::size_t lineno = 0;
    auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        const auto b = s.find_last_not_of(" \t\r");
        if (a == std::string::npos) return std::string{};
        return s.substr(a, b - a + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw io_error("config file line " + std::to_string(lineno) +
                           ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw io_error("config file line " + std::to_string(lineno) + ": empty key");
        cfg[key] = value;
    }
    return cfg;
}

namespace {

std::vector<double> parse_number_list(const std::string& value, const std::string& key) {
    std::vector<double> out;
    std::string token;
    std::string normalized = value;
    std::replace(normalized.begin(), normalized.end(), ',', ' ');
    std::istringstream nin(normalized);
    while (nin >> token) {
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
        if (ec != std::errc() || ptr != token.data() + token.size())
            throw io_error("config value for " + key + ": bad number '" + token + "'");
        out.push_back(v);
    }
    if (out.empty()) throw io_error("config value for " + key + " is empty");
    return out;
}

double parse_number(const std::string& value, const std::string& key) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc() || ptr != value.data() + value.size())
        throw io_error("config value for " + key + ": bad number '" + value + "'");
    return v;
}

}  // namespace

void apply_config(const std::map<std::string, std::string>& cfg, SeverityLadder& ladder) {
    if (auto it = cfg.find("ladder.gaussian"); it != cfg.end())
        ladder.gaussian_sigma = parse_number_list(it->second, it->first);
    if (auto it = cfg.find("ladder.salt_pepper"); it != cfg.end())
        ladder.salt_pepper_p = parse_number_list(it->second, it->first);
    if (auto it = cfg.find("ladder.blur"); it != cfg.end()) {
        ladder.blur_radius.clear();
        for (double v : parse_number_list(it->second, it->first)) {
            if (v != std::floor(v) || v < 0)
                throw io_error("config value for ladder.blur: radii must be whole numbers");
            ladder.blur_radius.push_back(static_cast<int>(v));
        }
    }
    ladder.validate();
}

void apply_config(const std::map<std::string, std::string>& cfg, PowerProfile& power) {
    if (auto it = cfg.find("power.avg_power_watts"); it != cfg.end())
        power.avg_power_watts = parse_number(it->second, it->first);
    if (auto it = cfg.find("power.epoch_seconds"); it != cfg.end())
        power.epoch_seconds = parse_number(it->second, it->first);
    if (auto it = cfg.find("power.carbon_intensity_g_per_kwh"); it != cfg.end())
        power.carbon_intensity_g_per_kwh = parse_number(it->second, it->first);
    if (auto it = cfg.find("power.region"); it != cfg.end()) power.region = it->second;
    validate(power);
}

}  // namespace armmeter
