#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "primfit/types.hpp"

namespace primfit {

/// Serializes JSON with every floating-point value printed as %.17g, so the
/// decimal text parses back to the identical double. Arrays of scalars stay on
/// one line; everything else is indented by two spaces.
std::string dump_json(const nlohmann::ordered_json& j);

/// Writes `content` to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

nlohmann::ordered_json params_to_json(const PrimitiveParams& params);
/// Throws std::invalid_argument on unknown type names or missing fields.
PrimitiveParams params_from_json(std::string_view type, const nlohmann::json& j);

nlohmann::ordered_json scene_to_json(const GroundTruthScene& scene);
GroundTruthScene scene_from_json(const nlohmann::json& j);

nlohmann::ordered_json fit_to_json(const FitResult& fit);
FitResult fit_from_json(const nlohmann::json& j);

void write_scene(const std::filesystem::path& path, const GroundTruthScene& scene);
GroundTruthScene read_scene(const std::filesystem::path& path);
void write_fit(const std::filesystem::path& path, const FitResult& fit);
FitResult read_fit(const std::filesystem::path& path);

}  // namespace primfit
