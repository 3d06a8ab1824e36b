#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mtlfno/autodiff.hpp"
#include "mtlfno/spectral.hpp"
#include "mtlfno/tensor.hpp"
#include "mtlfno/weight_factory.hpp"

namespace mtlfno {

struct ModelConfig {
  std::size_t k1 = 16;
  std::size_t k2 = 16;
  std::size_t channels = 32;
  std::size_t layers = 4;
  std::size_t rank = 8;
  std::size_t tasks = 1;
  std::size_t hidden = 128;
  std::size_t grid_h = 64;
  std::size_t grid_w = 64;
  std::size_t n_sensors = 4;
  ModelVariant variant = ModelVariant::full;
  AmplitudeMode amplitude = AmplitudeMode::softplus;
  ad::GeluMode gelu = ad::GeluMode::tanh;

  /// Throws ConfigError on non-positive extents or an invalid mode layout.
  void validate() const;
  spectral::ModeLayout layout() const { return {k1, k2, grid_h, grid_w}; }

  bool operator==(const ModelConfig&) const = default;
};

/// Name and shape of every trainable tensor, in canonical order.
struct ParamSpec {
  std::string name;
  Shape shape;
};
std::vector<ParamSpec> parameter_layout(const ModelConfig& cfg);

/// Name prefix of task `task`'s parameters in layer `layer`.
std::string task_prefix(std::size_t layer, std::size_t task);

/// Named tensors in insertion order.
class ParamStore {
 public:
  void add(std::string name, Tensor value);
  bool contains(std::string_view name) const;
  const Tensor& at(std::string_view name) const;
  Tensor& at(std::string_view name);

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t scalar_count() const;
  const std::vector<std::pair<std::string, Tensor>>& entries() const noexcept { return entries_; }
  std::vector<std::pair<std::string, Tensor>>& entries() noexcept { return entries_; }

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

struct ParamCount {
  std::size_t total = 0;
  std::size_t shared = 0;
  std::vector<std::size_t> per_task;
};

/// Sensor vector broadcast to every grid point followed by the normalized
/// coordinates x/(W-1) and y/(H-1). [n] -> [H, W, n+2]; [B, n] -> [B, H, W, n+2].
Tensor encode_input(const Tensor& sensors, std::size_t grid_h, std::size_t grid_w);

/// GeLU(v W + irfft2(pad(R . truncate(rfft2(v)))) + b) on [H,W,C] or [B,H,W,C].
Tensor fno_layer(const Tensor& v, const ComplexTensor& r, const Tensor& w, const Tensor& b,
                 const spectral::ModeLayout& layout, ad::GeluMode gelu = ad::GeluMode::tanh);

namespace ad {

Var fno_layer(Var v, CVar r, Var w, Var b, const spectral::ModeLayout& layout, GeluMode gelu);

/// Parameters placed on a tape, looked up by name.
class Binding {
 public:
  Binding(Tape& tape, const ParamStore& params, const std::vector<std::string>& names,
          bool trainable);

  Var at(std::string_view name) const;
  bool contains(std::string_view name) const;
  const std::vector<std::pair<std::string, Var>>& vars() const noexcept { return vars_; }

 private:
  std::vector<std::pair<std::string, Var>> vars_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// Spectral weight of one layer for one task.
CVar spectral_weight(const ModelConfig& cfg, const Binding& p, std::size_t layer,
                     std::size_t task);

/// Field prediction [B, H, W] for encoded inputs [B, H, W, n+2].
Var forward(const ModelConfig& cfg, const Binding& p, std::size_t task, Var encoded);

}  // namespace ad

class Model {
 public:
  /// Validates that `params` matches parameter_layout(cfg) exactly.
  Model(ModelConfig cfg, ParamStore params);

  static Model initialize(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return cfg_; }
  const ParamStore& params() const noexcept { return params_; }
  ParamStore& params() noexcept { return params_; }

  /// Parameters that task `task`'s forward pass reads: shared ones plus its own.
  std::vector<std::string> names_for_task(std::size_t task) const;

  /// [n] -> [H, W]; [B, n] -> [B, H, W].
  Tensor predict(std::size_t task, const Tensor& sensors) const;

  /// Final spectral weight R of one layer and task.
  ComplexTensor spectral_weight(std::size_t layer, std::size_t task) const;
  /// Pre-amplitude factor (Cayley output or aggregated K); amplitude variants only.
  ComplexTensor unitary_part(std::size_t layer, std::size_t task) const;

  ParamCount count_params() const;

 private:
  ModelConfig cfg_;
  ParamStore params_;
};

}  // namespace mtlfno
