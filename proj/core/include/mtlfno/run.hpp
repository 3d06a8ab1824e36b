#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mtlfno/checkpoint.hpp"
#include "mtlfno/dataset.hpp"
#include "mtlfno/model.hpp"
#include "mtlfno/training.hpp"
#include "mtlfno/weight_factory.hpp"

namespace mtlfno {

/// `mtl` trains one model over every task; `independent` trains one vanilla
/// FNO (the noshare variant with a single task) per task.
enum class TrainMode { mtl, independent };

std::string to_string(TrainMode m);
TrainMode parse_train_mode(std::string_view name);

/// Everything a training run needs. The model's task count, grid and sensor
/// count are taken from the dataset at run time.
struct RunSpec {
  std::filesystem::path dataset;
  /// Empty: runs/<timestamp>-seed<seed> under the working directory.
  std::filesystem::path out;
  ModelConfig model;
  TrainConfig train;
  TrainMode mode = TrainMode::mtl;
  /// Training samples per task, a prefix of one seeded shuffle; empty uses all.
  std::optional<std::size_t> train_size;
  /// Subset of {"json", "csv", "table"}.
  std::vector<std::string> reports{"json", "csv", "table"};

  bool wants(std::string_view report) const;
};

std::string run_spec_to_json(const RunSpec& spec);
/// Missing keys keep their defaults; unknown keys throw ConfigError.
RunSpec run_spec_from_json(std::string_view text);
RunSpec load_run_spec(const std::filesystem::path& path);

/// The first `n` indices of a seeded permutation of [0, total), one per task in
/// task order. Prefixes are nested: a smaller `n` selects a subset of a larger one.
std::vector<std::vector<std::size_t>> training_subsets(const Dataset& data, std::size_t n,
                                                       std::uint64_t seed);

/// Normalized training samples per task, restricted to `train_size` if set.
/// Throws ConfigError when `train_size` exceeds a task's training split.
std::vector<Samples> training_samples(const Dataset& data, std::optional<std::size_t> train_size,
                                      std::uint64_t seed);

/// Model config bound to the dataset's task count, grid and sensors.
ModelConfig bind_to_dataset(ModelConfig cfg, const Dataset& data);

struct TrainedModels {
  /// One checkpoint for mtl mode, one per task for independent mode.
  std::vector<Checkpoint> models;
  /// Per-epoch losses; in independent mode task t's column comes from model t.
  std::vector<EpochLog> history;
  double seconds = 0.0;
};

/// Trains per `spec` on already loaded data. Throws ConfigError or NumericError.
TrainedModels train_models(const RunSpec& spec, const Dataset& data,
                           const EpochCallback& on_epoch = {});

struct TaskReport {
  std::string name;
  TaskMetrics metrics;
};

struct MetricsReport {
  std::vector<TaskReport> tasks;
  ParamCount params;
  double gflops = 0.0;
  /// Median wall time of single-sample forwards, in milliseconds.
  double inference_ms = 0.0;
  std::size_t timed_forwards = 0;
  std::string split;

  std::optional<double> mean_r2() const;
};

/// Metrics of every checkpoint task on the dataset task with the same name,
/// in field units. `split` is "train" or "test". `timed_forwards` = 0 skips timing.
/// Throws ConfigError when grids, sensors or task names do not match.
MetricsReport evaluate_models(const std::vector<Checkpoint>& models, const Dataset& data,
                              std::string_view split = "test", std::size_t timed_forwards = 21);

std::string metrics_to_json(const MetricsReport& report);
void print_metrics_table(std::ostream& os, const MetricsReport& report);

struct UnitarityEntry {
  std::size_t layer = 0;
  std::size_t task = 0;
  UnitarityStats stats;
};

struct InspectReport {
  ModelConfig config;
  std::vector<std::string> task_names;
  ParamCount params;
  /// Empty for variants without a polar factor.
  std::vector<UnitarityEntry> unitarity;
  /// True only for the Cayley-parameterized variant.
  bool unitarity_guaranteed = false;
  /// Largest |sv - 1| over all entries.
  double max_deviation = 0.0;
};

InspectReport inspect_model(const Checkpoint& ckpt);
std::string inspect_to_json(const InspectReport& report);
void print_inspect(std::ostream& os, const InspectReport& report);

enum class SweepAxis { rank, train_size };

std::string to_string(SweepAxis a);
SweepAxis parse_sweep_axis(std::string_view name);

struct SweepRow {
  std::string setting;
  std::string task;
  TaskMetrics metrics;
  std::size_t params = 0;
};

/// One training run per axis value, in the given order, all from `spec`'s seed;
/// every run is evaluated on the test split. Throws ConfigError when a
/// train size exceeds the dataset.
std::vector<SweepRow> sweep(const RunSpec& spec, const Dataset& data, SweepAxis axis,
                            const std::vector<std::size_t>& values);

/// CSV header "setting,task,r2,mse,mae,params"; missing R^2 is an empty field.
std::string sweep_to_csv(const std::vector<SweepRow>& rows);

/// "epoch,task,loss" with one row per task and epoch.
std::string losses_to_csv(const std::vector<EpochLog>& history,
                          const std::vector<std::string>& task_names);

/// runs/<UTC timestamp>-seed<seed>, relative to the working directory.
std::filesystem::path default_run_dir(std::uint64_t seed);

/// Writes the checkpoints, losses.csv and manifest.json of a finished run into
/// `dir` (created if missing). The manifest records the configs, derived seeds,
/// per-epoch losses, timings and, when given, the final metrics. Returns the
/// checkpoint files with their stored CRC-32.
std::vector<SavedFile> write_run(const std::filesystem::path& dir, const RunSpec& spec,
                                 const TrainedModels& trained, const MetricsReport* metrics = nullptr);

/// Checkpoint paths of a run directory, from its manifest.
std::vector<std::filesystem::path> run_checkpoints(const std::filesystem::path& run_dir);

}  // namespace mtlfno
