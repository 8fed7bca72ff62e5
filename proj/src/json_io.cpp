#include "armmeter/json_io.hpp"

#include <cmath>
#include <fstream>

#include "armmeter/tensor_io.hpp"

namespace armmeter {

namespace {

// Wraps nlohmann's exceptions so callers see one error family for bad files.
template <typename Fn>
auto shaped(const char* what, Fn&& fn) {
    try {
        return fn();
    } catch (const json::exception& e) {
        throw io_error(std::string(what) + ": " + e.what());
    }
}

}  // namespace

json to_json(const ModelSpec& spec) {
    json layers = json::array();
    for (const LayerSpec& l : spec.layers) {
        json jl;
        jl["type"] = to_string(l.type);
        if (l.type != LayerType::global_average_pool) jl["units"] = l.units;
        layers.push_back(jl);
    }
    return json{{"model_id", spec.model_id},
                {"input", {{"channels", spec.input.channels},
                           {"height", spec.input.height},
                           {"width", spec.input.width}}},
                {"layers", layers},
                {"seed", spec.seed}};
}

ModelSpec model_spec_from_json(const json& j) {
    return shaped("model spec", [&] {
        ModelSpec spec;
        spec.model_id = j.at("model_id").get<std::string>();
        spec.input.channels = j.at("input").at("channels").get<int>();
        spec.input.height = j.at("input").at("height").get<int>();
        spec.input.width = j.at("input").at("width").get<int>();
        for (const json& jl : j.at("layers")) {
            LayerSpec l;
            l.type = layer_type_from_string(jl.at("type").get<std::string>());
            l.units = jl.value("units", 0);
            spec.layers.push_back(l);
        }
        spec.seed = j.value("seed", std::uint64_t{0});
        validate_model_spec(spec);
        return spec;
    });
}

json to_json(const Predictor& pred) {
    return json{{"slope", pred.slope},
                {"intercepts", pred.intercepts},
                {"fitted_on", pred.fitted_on}};
}

Predictor predictor_from_json(const json& j) {
    return shaped("predictor file", [&] {
        Predictor pred;
        pred.slope = j.at("slope").get<double>();
        pred.intercepts = j.at("intercepts").get<std::map<std::string, double>>();
        pred.fitted_on = j.value("fitted_on", std::vector<std::string>{});
        if (pred.intercepts.empty()) throw io_error("predictor file: no intercepts");
        if (!std::isfinite(pred.slope)) throw io_error("predictor file: slope is not finite");
        return pred;
    });
}

json to_json(const PowerProfile& profile) {
    return json{{"avg_power_watts", profile.avg_power_watts},
                {"epoch_seconds", profile.epoch_seconds},
                {"carbon_intensity_g_per_kwh", profile.carbon_intensity_g_per_kwh},
                {"region", profile.region}};
}

PowerProfile power_profile_from_json(const json& j) {
    return shaped("power profile", [&] {
        PowerProfile profile;
        profile.avg_power_watts = j.at("avg_power_watts").get<double>();
        profile.epoch_seconds = j.at("epoch_seconds").get<double>();
        profile.carbon_intensity_g_per_kwh = j.at("carbon_intensity_g_per_kwh").get<double>();
        profile.region = j.value("region", std::string{"default"});
        validate(profile);
        return profile;
    });
}

json to_json(const ArmReport& report) {
    json per_layer = json::array();
    for (const LayerDistance& l : report.per_layer) {
        per_layer.push_back(json{{"layer", l.layer},
                                 {"wd", l.wd},
                                 {"range_lo", l.lo},
                                 {"range_hi", l.hi}});
    }
    return json{{"model_id", report.model_id},
                {"dataset_pair", report.dataset_pair},
                {"per_layer", per_layer},
                {"arm", report.arm}};
}

ArmReport arm_report_from_json(const json& j) {
    return shaped("arm report", [&] {
        ArmReport report;
        report.model_id = j.value("model_id", std::string{});
        if (j.contains("dataset_pair"))
            report.dataset_pair = j.at("dataset_pair").get<std::pair<std::string, std::string>>();
        for (const json& jl : j.at("per_layer")) {
            LayerDistance l;
            l.layer = jl.at("layer").get<std::string>();
            l.wd = jl.at("wd").get<double>();
            l.lo = jl.value("range_lo", 0.0);
            l.hi = jl.value("range_hi", 0.0);
            report.per_layer.push_back(std::move(l));
        }
        report.arm = j.at("arm").get<double>();
        return report;
    });
}

json to_json(const RetrainingReport& report) {
    return json{{"epochs_used", report.epochs_used},
                {"reached_target", report.reached_target},
                {"accuracy_curve", report.accuracy_curve},
                {"loss_curve", report.loss_curve},
                {"wall_seconds", report.wall_seconds}};
}

RetrainingReport retraining_report_from_json(const json& j) {
    return shaped("training report", [&] {
        RetrainingReport report;
        report.epochs_used = j.at("epochs_used").get<int>();
        report.reached_target = j.at("reached_target").get<bool>();
        report.accuracy_curve = j.value("accuracy_curve", std::vector<double>{});
        report.loss_curve = j.value("loss_curve", std::vector<double>{});
        report.wall_seconds = j.value("wall_seconds", 0.0);
        return report;
    });
}

json load_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open file: " + path.string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw io_error("invalid JSON in " + path.string());
    return j;
}

void save_json(const json& j, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open file for writing: " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw io_error("write failed: " + path.string());
}

}  // namespace armmeter
