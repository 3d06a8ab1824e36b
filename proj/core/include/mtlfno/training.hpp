#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtlfno/autodiff.hpp"
#include "mtlfno/dataset.hpp"
#include "mtlfno/model.hpp"

namespace mtlfno {

struct TrainConfig {
  std::size_t epochs = 100;
  double lr0 = 1e-3;
  double decay_factor = 0.5;
  std::size_t decay_every = 20;
  std::size_t batch_size = 10;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  /// Mean squared error per sample instead of the unsquared residual norm.
  bool squared_loss = false;
  /// Static per-task loss weights; empty means all ones.
  std::vector<double> task_weights;

  /// Throws ConfigError.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// lr0 * decay_factor^floor(epoch / decay_every).
double lr_schedule(std::size_t epoch, const TrainConfig& cfg);

namespace ad {

/// Mean over the batch of ||pred_b - target_b||_2 over the flattened field
/// (or the mean squared residual when `squared`). pred, target: [B, ...].
Var task_loss(Var pred, Var target, bool squared = false);

/// Weighted sum of per-task losses; empty weights mean a plain sum.
Var total_loss(std::span<const Var> per_task, std::span<const double> weights = {});

}  // namespace ad

using GradientMap = std::map<std::string, Tensor, std::less<>>;

class Adam {
 public:
  explicit Adam(const TrainConfig& cfg);

  /// One bias-corrected update of every parameter named in `grads`.
  /// Throws ContractError for names absent from `params`, ShapeError on shape mismatch.
  void step(ParamStore& params, const GradientMap& grads, double lr);

  std::size_t steps() const noexcept { return t_; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::map<std::string, Moments, std::less<>> state_;
};

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  /// Mean per-step loss of each task over the epoch.
  std::vector<double> task_loss;
  double total = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> history;
  double seconds = 0.0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Joint training: every step draws one batch per task and descends the summed
/// loss over the shared and all task-specific parameters. `data[t]` holds
/// task t's (normalized) training samples. Throws NumericError naming the first
/// non-finite tensor when the loss or a gradient stops being finite, or when a
/// Cayley system becomes singular.
TrainResult train(Model& model, std::span<const Samples> data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

struct TaskMetrics {
  double mse = 0.0;
  double mae = 0.0;
  /// Missing when the targets have zero variance.
  std::optional<double> r2;
};

/// Pooled metrics over every point of every sample.
TaskMetrics compute_metrics(std::span<const double> pred, std::span<const double> target);

/// Metrics of task `task` on normalized samples, reported in field units via `norm`.
TaskMetrics evaluate(const Model& model, std::size_t task, const Samples& data, const ZScore& norm);

/// Predictions [N, H, W] in normalized units, in chunks of `batch`.
Tensor predict_all(const Model& model, std::size_t task, const Tensor& sensors, std::size_t batch = 10);

struct FlopBreakdown {
  double fft = 0.0;
  double spectral = 0.0;
  double spatial = 0.0;
  double pointwise = 0.0;
  double total() const { return fft + spectral + spatial + pointwise; }
};

/// Per-sample forward cost: per layer FFT 2*5*H*W*log2(H*W)*C, spectral mixing
/// 8*k1*k2*C^2 and spatial mixing 2*H*W*C^2; lifting and projection 2*H*W*(in*out)
/// per dense layer.
FlopBreakdown flop_estimate(const ModelConfig& cfg);

/// Raises the glibc malloc mmap, trim and top-pad thresholds once per process.
/// No-op on other C libraries.
void tune_allocator();

}  // namespace mtlfno
