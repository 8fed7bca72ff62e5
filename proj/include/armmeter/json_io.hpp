#pragma once

#include <filesystem>

#include <json.hpp>

#include "armmeter/cost_model.hpp"
#include "armmeter/distance.hpp"
#include "armmeter/model.hpp"

namespace armmeter {

using json = nlohmann::json;

json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const json& j);

json to_json(const Predictor& pred);
Predictor predictor_from_json(const json& j);

json to_json(const PowerProfile& profile);
PowerProfile power_profile_from_json(const json& j);

json to_json(const ArmReport& report);
ArmReport arm_report_from_json(const json& j);

json to_json(const RetrainingReport& report);
RetrainingReport retraining_report_from_json(const json& j);

// File helpers; parse/shape problems surface as io_error.
json load_json(const std::filesystem::path& path);
void save_json(const json& j, const std::filesystem::path& path);

}  // namespace armmeter
