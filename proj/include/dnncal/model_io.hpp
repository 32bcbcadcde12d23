#pragma once

// JSON persistence for trained models: config, every weight block in
// row-major order, normalization statistics and quantile heads.

#include <filesystem>
#include <string>

#include "dnncal/calibration.hpp"

namespace dnncal {

inline constexpr int kModelSchemaVersion = 1;

std::string model_to_json(const TrainedModel& model);
TrainedModel model_from_json(const std::string& text, const std::string& source = "<model>");

void save_model(const std::filesystem::path& path, const TrainedModel& model);
TrainedModel load_model(const std::filesystem::path& path);

}  // namespace dnncal
