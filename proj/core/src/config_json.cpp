#include "config_json.hpp"

#include <algorithm>
#include <string>
#include <type_traits>

#include "mtlfno/error.hpp"

namespace mtlfno::detail {

using json = nlohmann::json;

namespace {

ad::GeluMode parse_gelu(const std::string& name) {
  if (name == "tanh") return ad::GeluMode::tanh;
  if (name == "erf") return ad::GeluMode::erf;
  throw ConfigError("unknown gelu mode '" + name + "'");
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
    if (!j.at(key).is_number_unsigned()) {
      throw ConfigError(std::string("'") + key + "' must be a non-negative integer");
    }
  }
  out = j.at(key).get<T>();
}

}  // namespace

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + ": expected a JSON object");
  for (const auto& item : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return item.key() == k; })) {
      throw ConfigError(std::string(what) + ": unknown key '" + item.key() + "'");
    }
  }
}

json model_json(const ModelConfig& c) {
  return {{"k1", c.k1},
          {"k2", c.k2},
          {"channels", c.channels},
          {"layers", c.layers},
          {"rank", c.rank},
          {"tasks", c.tasks},
          {"hidden", c.hidden},
          {"grid", {c.grid_h, c.grid_w}},
          {"n_sensors", c.n_sensors},
          {"variant", to_string(c.variant)},
          {"amplitude", to_string(c.amplitude)},
          {"gelu", c.gelu == ad::GeluMode::tanh ? "tanh" : "erf"}};
}

ModelConfig model_from_json(const json& j) {
  reject_unknown_keys(j,
                      {"k1", "k2", "channels", "layers", "rank", "tasks", "hidden", "grid",
                       "n_sensors", "variant", "amplitude", "gelu"},
                      "model config");
  ModelConfig c;
  try {
    read(j, "k1", c.k1);
    read(j, "k2", c.k2);
    read(j, "channels", c.channels);
    read(j, "layers", c.layers);
    read(j, "rank", c.rank);
    read(j, "tasks", c.tasks);
    read(j, "hidden", c.hidden);
    if (j.contains("grid")) {
      c.grid_h = j.at("grid").at(0).get<std::size_t>();
      c.grid_w = j.at("grid").at(1).get<std::size_t>();
    }
    read(j, "n_sensors", c.n_sensors);
    if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
    if (j.contains("amplitude")) c.amplitude = parse_amplitude_mode(j.at("amplitude").get<std::string>());
    if (j.contains("gelu")) c.gelu = parse_gelu(j.at("gelu").get<std::string>());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return c;
}

json train_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"lr0", c.lr0},
          {"decay_factor", c.decay_factor},
          {"decay_every", c.decay_every},
          {"batch_size", c.batch_size},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"eps", c.eps},
          {"seed", c.seed},
          {"squared_loss", c.squared_loss},
          {"task_weights", c.task_weights}};
}

TrainConfig train_from_json(const json& j) {
  reject_unknown_keys(j,
                      {"epochs", "lr0", "decay_factor", "decay_every", "batch_size", "beta1",
                       "beta2", "eps", "seed", "squared_loss", "task_weights"},
                      "train config");
  TrainConfig c;
  try {
    read(j, "epochs", c.epochs);
    read(j, "lr0", c.lr0);
    read(j, "decay_factor", c.decay_factor);
    read(j, "decay_every", c.decay_every);
    read(j, "batch_size", c.batch_size);
    read(j, "beta1", c.beta1);
    read(j, "beta2", c.beta2);
    read(j, "eps", c.eps);
    read(j, "seed", c.seed);
    read(j, "squared_loss", c.squared_loss);
    read(j, "task_weights", c.task_weights);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  return c;
}

}  // namespace mtlfno::detail
