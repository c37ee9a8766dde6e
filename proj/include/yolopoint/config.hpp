#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "yolopoint/evalsuite.hpp"
#include "yolopoint/labeling.hpp"
#include "yolopoint/trainer.hpp"
#include "yolopoint/vo.hpp"

namespace yolopoint {

using Json = nlohmann::ordered_json;

// Defaults merged with an optional JSON config file and "a.b.c=value"
// overrides. Keys absent from the defaults and type changes are rejected with
// UsageError.
Json resolve_config(const Json& defaults, const std::optional<std::filesystem::path>& file,
                    const std::vector<std::string>& overrides);

// "a.b.c" -> default value (compact JSON), in declaration order.
std::vector<std::pair<std::string, std::string>> config_keys(const Json& defaults);

void write_json(const std::filesystem::path& path, const Json& j);
Json read_json(const std::filesystem::path& path);

Json to_json(const HomographySamplingConfig& c);
HomographySamplingConfig homography_config_from_json(const Json& j);

Json to_json(const SyntheticConfig& c);
SyntheticConfig synthetic_config_from_json(const Json& j);

Json to_json(const AdaptationConfig& c);
AdaptationConfig adaptation_config_from_json(const Json& j);

Json to_json(const EvalConfig& c);
EvalConfig eval_config_from_json(const Json& j);

Json to_json(const VoConfig& c);
VoConfig vo_config_from_json(const Json& j);

Json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const Json& j);

}  // namespace yolopoint
