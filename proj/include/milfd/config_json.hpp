#pragma once

// JSON views of the configuration structs. Readers apply only the keys that
// are present, on top of whatever the struct already holds, and reject
// unknown keys so typos do not pass silently.

#include <json.hpp>

#include "milfd/bag_model.hpp"
#include "milfd/qnet.hpp"
#include "milfd/synthetic.hpp"

namespace milfd {

nlohmann::json to_json(const ShortTermConfig& cfg);
nlohmann::json to_json(const ModelConfig& cfg);
nlohmann::json to_json(const QNetConfig& cfg);
nlohmann::json to_json(const SyntheticConfig& cfg);

void apply_json(const nlohmann::json& j, ShortTermConfig& cfg);
void apply_json(const nlohmann::json& j, ModelConfig& cfg);
void apply_json(const nlohmann::json& j, QNetConfig& cfg);

}  // namespace milfd
