#pragma once

#include "json.hpp"

#include "mtlfno/model.hpp"
#include "mtlfno/training.hpp"

// JSON forms of the configuration structs. Readers start from the defaults and
// override present keys; unknown keys are rejected.
namespace mtlfno::detail {

nlohmann::json model_json(const ModelConfig& cfg);
ModelConfig model_from_json(const nlohmann::json& j);

nlohmann::json train_json(const TrainConfig& cfg);
TrainConfig train_from_json(const nlohmann::json& j);

/// Throws ConfigError naming the first key of `j` outside `allowed`.
void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                         const char* what);

}  // namespace mtlfno::detail
