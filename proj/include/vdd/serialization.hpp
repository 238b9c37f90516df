#pragma once

// JSON mappings for the configuration-bearing types.

#include "vdd/cnn.hpp"
#include "vdd/detector.hpp"
#include "vdd/features.hpp"
#include "vdd/segmentation.hpp"

#include <json.hpp>

namespace vdd {

void to_json(nlohmann::json& j, const FeatureParams& p);
void from_json(const nlohmann::json& j, FeatureParams& p);
void to_json(nlohmann::json& j, const SnippetSpec& s);
void from_json(const nlohmann::json& j, SnippetSpec& s);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const CnnArchitecture& a);
void from_json(const nlohmann::json& j, CnnArchitecture& a);
void to_json(nlohmann::json& j, const DetectorConfig& c);
void from_json(const nlohmann::json& j, DetectorConfig& c);

}  // namespace vdd
