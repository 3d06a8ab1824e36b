#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mtlfno/tensor.hpp"

// Synthetic multi-field data, persistence and loaders.
namespace mtlfno {

enum class FieldKind { potential, grad_x, grad_y, squared };

std::string to_string(FieldKind k);
FieldKind parse_field_kind(std::string_view name);

/// Grid index of a sensor; (row, col) maps to (y, x) = (row/(H-1), col/(W-1)).
struct GridPoint {
  std::size_t row = 0;
  std::size_t col = 0;
  bool operator==(const GridPoint&) const = default;
};

struct TaskSpec {
  FieldKind kind = FieldKind::potential;
  std::vector<GridPoint> sensors;
  bool operator==(const TaskSpec&) const = default;
};

struct SyntheticSpec {
  std::size_t grid_h = 64;
  std::size_t grid_w = 64;
  /// Source centres (x, y) on the unit square; J = sources.size().
  std::vector<std::array<double, 2>> sources;
  double amp_min = 0.5;
  double amp_max = 2.0;
  double sigma = 0.12;
  std::vector<TaskSpec> tasks;
  std::size_t train_count = 100;
  std::size_t test_count = 20;
  std::uint64_t seed = 0;

  /// Throws ConfigError.
  void validate() const;
  bool operator==(const SyntheticSpec&) const = default;
};

/// Five fixed sources, four tasks with four sensors each, 100/20 split.
SyntheticSpec default_spec();

std::string spec_to_json(const SyntheticSpec& spec);
/// Missing keys keep their defaults from default_spec(). Throws ConfigError.
SyntheticSpec spec_from_json(std::string_view text);
SyntheticSpec load_spec(const std::filesystem::path& path);

/// Samples of one task: sensors [N, n], fields [N, H, W], conditions [N, J].
struct Samples {
  Tensor sensors;
  Tensor fields;
  Tensor conditions;

  std::size_t size() const { return fields.rank() == 0 ? 0 : fields.dim(0); }
  /// Samples at the given indices, in that order.
  Samples select(const std::vector<std::size_t>& indices) const;
};

/// Per-task z-score statistics of the training fields.
struct ZScore {
  double mean = 0.0;
  double std = 1.0;

  static ZScore fit(const Tensor& fields);
  Tensor apply(const Tensor& t) const;
  Tensor invert(const Tensor& t) const;
  bool operator==(const ZScore&) const = default;
};

struct TaskDataset {
  std::string name;
  std::vector<GridPoint> sensor_points;
  Samples train;
  Samples test;
  ZScore norm;

  /// Sensors and fields z-scored with `norm`.
  Samples normalized_train() const;
  Samples normalized_test() const;
};

struct Dataset {
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  std::vector<TaskDataset> tasks;
  /// JSON of the generating spec; empty for external data.
  std::string spec_json;
  std::uint64_t seed = 0;
};

/// Analytic field of one kind for amplitudes `amps` (size J), on the spec grid.
Tensor synthetic_field(const SyntheticSpec& spec, FieldKind kind, const std::vector<double>& amps);

/// Deterministic in spec (including its seed). Throws ConfigError on an invalid spec.
Dataset generate(const SyntheticSpec& spec);

inline constexpr std::uint32_t kDatasetVersion = 1;

struct SavedFile {
  std::string name;
  std::uint32_t crc32 = 0;
};

/// Writes manifest.json plus one MTLD file per task into `dir`.
std::vector<SavedFile> save_dataset(const Dataset& data, const std::filesystem::path& dir);

/// Throws ChecksumError, VersionError, TruncatedFileError or LoadError.
Dataset load_dataset(const std::filesystem::path& dir);

/// CRC-32 of a file's bytes.
std::uint32_t file_crc32(const std::filesystem::path& path);

/// Reads raw grids described by a JSON descriptor file:
/// {"dtype": "f64"|"f32", "endian": "little"|"big", "grid": [H, W],
///  "tasks": [{"name", "file", "offset", "n_train", "n_test",
///             "record_prefix", "sensors": [[row, col], ...]}]}
/// Each record holds `record_prefix` skipped values followed by the H*W field,
/// row-major; files are resolved relative to the descriptor. Sensors are read
/// off the field. Throws LoadError.
Dataset load_external_grid(const std::filesystem::path& descriptor);

/// Size in bytes of an MTLD header, for descriptors that point into one.
std::size_t dataset_header_bytes();

}  // namespace mtlfno
