#include "mtlfno/dataset.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>

#include "json.hpp"

#include "mtlfno/error.hpp"
#include "mtlfno/random.hpp"

#include "binary_io.hpp"

namespace mtlfno {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::array<FieldKind, 4> kKinds{FieldKind::potential, FieldKind::grad_x,
                                          FieldKind::grad_y, FieldKind::squared};

}  // namespace

std::string to_string(FieldKind k) {
  switch (k) {
    case FieldKind::potential: return "potential";
    case FieldKind::grad_x: return "grad_x";
    case FieldKind::grad_y: return "grad_y";
    case FieldKind::squared: return "squared";
  }
  return "?";
}

FieldKind parse_field_kind(std::string_view name) {
  for (const FieldKind k : kKinds) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown task field '" + std::string(name) +
                    "' (expected potential, grad_x, grad_y or squared)");
}

void SyntheticSpec::validate() const {
  if (grid_h < 2 || grid_w < 2) throw ConfigError("spec: grid must be at least 2x2");
  if (sources.empty()) throw ConfigError("spec: at least one source is required (J >= 1)");
  for (const auto& s : sources) {
    if (!std::isfinite(s[0]) || !std::isfinite(s[1])) {
      throw ConfigError("spec: source positions must be finite");
    }
  }
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("spec: sigma must be positive");
  if (!std::isfinite(amp_min) || !std::isfinite(amp_max) || amp_min > amp_max) {
    throw ConfigError("spec: amplitude range must satisfy amp_min <= amp_max");
  }
  if (tasks.empty()) throw ConfigError("spec: at least one task is required");
  if (train_count == 0 || test_count == 0) {
    throw ConfigError("spec: train_count and test_count must be positive");
  }
  const std::size_t n = tasks.front().sensors.size();
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const auto& sensors = tasks[t].sensors;
    if (sensors.empty()) throw ConfigError("spec: task " + std::to_string(t) + " has no sensors");
    if (sensors.size() != n) {
      throw ConfigError("spec: every task needs the same sensor count (task " +
                        std::to_string(t) + " has " + std::to_string(sensors.size()) + ", task 0 has " +
                        std::to_string(n) + ")");
    }
    for (const auto& p : sensors) {
      if (p.row >= grid_h || p.col >= grid_w) {
        throw ConfigError("spec: sensor (" + std::to_string(p.row) + ", " + std::to_string(p.col) +
                          ") of task " + std::to_string(t) + " lies outside the " +
                          std::to_string(grid_h) + "x" + std::to_string(grid_w) + " grid");
      }
    }
  }
}

SyntheticSpec default_spec() {
  SyntheticSpec s;
  s.sources = {{0.25, 0.25}, {0.75, 0.30}, {0.50, 0.55}, {0.30, 0.78}, {0.72, 0.75}};
  s.tasks = {
      {FieldKind::potential, {{12, 20}, {22, 44}, {40, 30}, {52, 48}}},
      {FieldKind::grad_x, {{16, 10}, {20, 54}, {36, 38}, {50, 14}}},
      {FieldKind::grad_y, {{8, 16}, {28, 46}, {30, 28}, {56, 44}}},
      {FieldKind::squared, {{18, 18}, {24, 40}, {42, 22}, {46, 50}}},
  };
  return s;
}

namespace {

json spec_json(const SyntheticSpec& s) {
  json tasks = json::array();
  for (const auto& t : s.tasks) {
    json sensors = json::array();
    for (const auto& p : t.sensors) sensors.push_back({p.row, p.col});
    tasks.push_back({{"field", to_string(t.kind)}, {"sensors", sensors}});
  }
  json sources = json::array();
  for (const auto& src : s.sources) sources.push_back({src[0], src[1]});
  return {{"grid", {s.grid_h, s.grid_w}},
          {"sources", sources},
          {"amplitude", {s.amp_min, s.amp_max}},
          {"sigma", s.sigma},
          {"tasks", tasks},
          {"train_count", s.train_count},
          {"test_count", s.test_count},
          {"seed", s.seed}};
}

SyntheticSpec spec_from(const json& j) {
  SyntheticSpec s = default_spec();
  if (!j.is_object()) throw ConfigError("spec: expected a JSON object");
  if (j.contains("grid")) {
    s.grid_h = j.at("grid").at(0).get<std::size_t>();
    s.grid_w = j.at("grid").at(1).get<std::size_t>();
  }
  if (j.contains("sources")) {
    s.sources.clear();
    for (const auto& p : j.at("sources")) s.sources.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  }
  if (j.contains("amplitude")) {
    s.amp_min = j.at("amplitude").at(0).get<double>();
    s.amp_max = j.at("amplitude").at(1).get<double>();
  }
  if (j.contains("sigma")) s.sigma = j.at("sigma").get<double>();
  if (j.contains("tasks")) {
    s.tasks.clear();
    for (const auto& t : j.at("tasks")) {
      TaskSpec ts;
      ts.kind = parse_field_kind(t.at("field").get<std::string>());
      for (const auto& p : t.at("sensors")) {
        ts.sensors.push_back({p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>()});
      }
      s.tasks.push_back(std::move(ts));
    }
  }
  if (j.contains("train_count")) s.train_count = j.at("train_count").get<std::size_t>();
  if (j.contains("test_count")) s.test_count = j.at("test_count").get<std::size_t>();
  if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

}  // namespace

std::string spec_to_json(const SyntheticSpec& spec) { return spec_json(spec).dump(2); }

SyntheticSpec spec_from_json(std::string_view text) {
  try {
    return spec_from(json::parse(text));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("spec: ") + e.what());
  }
}

SyntheticSpec load_spec(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read spec file " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return spec_from_json(text);
}

Samples Samples::select(const std::vector<std::size_t>& indices) const {
  const std::size_t n = size();
  const auto rows = [&](const Tensor& t) {
    if (t.rank() == 0) return Tensor();
    Shape shape = t.shape();
    const std::size_t stride = n == 0 ? 0 : t.size() / n;
    shape[0] = indices.size();
    Tensor out(shape);
    for (std::size_t i = 0; i < indices.size(); ++i) {
      if (indices[i] >= n) {
        throw ContractError("sample index " + std::to_string(indices[i]) + " out of range for " +
                            std::to_string(n) + " samples");
      }
      std::copy_n(t.data().begin() + static_cast<std::ptrdiff_t>(indices[i] * stride), stride,
                  out.data().begin() + static_cast<std::ptrdiff_t>(i * stride));
    }
    return out;
  };
  return {rows(sensors), rows(fields), rows(conditions)};
}

ZScore ZScore::fit(const Tensor& fields) {
  if (fields.size() == 0) throw ContractError("z-score of an empty tensor");
  double mean = 0.0;
  for (const double x : fields.data()) mean += x;
  mean /= static_cast<double>(fields.size());
  double var = 0.0;
  for (const double x : fields.data()) var += (x - mean) * (x - mean);
  var /= static_cast<double>(fields.size());
  const double sd = std::sqrt(var);
  return {mean, sd > 0.0 ? sd : 1.0};
}

Tensor ZScore::apply(const Tensor& t) const {
  Tensor out = t;
  for (double& x : out.data()) x = (x - mean) / std;
  return out;
}

Tensor ZScore::invert(const Tensor& t) const {
  Tensor out = t;
  for (double& x : out.data()) x = x * std + mean;
  return out;
}

Samples TaskDataset::normalized_train() const {
  return {norm.apply(train.sensors), norm.apply(train.fields), train.conditions};
}

Samples TaskDataset::normalized_test() const {
  return {norm.apply(test.sensors), norm.apply(test.fields), test.conditions};
}

Tensor synthetic_field(const SyntheticSpec& spec, FieldKind kind, const std::vector<double>& amps) {
  if (amps.size() != spec.sources.size()) {
    throw ContractError("synthetic_field: " + std::to_string(amps.size()) + " amplitudes for " +
                        std::to_string(spec.sources.size()) + " sources");
  }
  const std::size_t h = spec.grid_h, w = spec.grid_w;
  const double two_s2 = 2.0 * spec.sigma * spec.sigma;
  const double s2 = spec.sigma * spec.sigma;
  Tensor out({h, w});
  for (std::size_t r = 0; r < h; ++r) {
    const double y = static_cast<double>(r) / static_cast<double>(h - 1);
    for (std::size_t c = 0; c < w; ++c) {
      const double x = static_cast<double>(c) / static_cast<double>(w - 1);
      double phi = 0.0, dx = 0.0, dy = 0.0;
      for (std::size_t j = 0; j < amps.size(); ++j) {
        const double ex = x - spec.sources[j][0], ey = y - spec.sources[j][1];
        const double g = amps[j] * std::exp(-(ex * ex + ey * ey) / two_s2);
        phi += g;
        dx -= g * ex / s2;
        dy -= g * ey / s2;
      }
      double v = phi;
      switch (kind) {
        case FieldKind::potential: v = phi; break;
        case FieldKind::grad_x: v = dx; break;
        case FieldKind::grad_y: v = dy; break;
        case FieldKind::squared: v = phi * phi; break;
      }
      out[r * w + c] = v;
    }
  }
  return out;
}

namespace {

std::vector<std::string> task_names(const std::vector<FieldKind>& kinds) {
  std::vector<std::string> names;
  for (std::size_t t = 0; t < kinds.size(); ++t) {
    const std::size_t same = static_cast<std::size_t>(std::count(kinds.begin(), kinds.end(), kinds[t]));
    names.push_back(same > 1 ? to_string(kinds[t]) + "_" + std::to_string(t) : to_string(kinds[t]));
  }
  return names;
}

Samples draw(const SyntheticSpec& spec, const TaskSpec& task,
             const std::vector<std::vector<double>>& amps) {
  const std::size_t n = amps.size(), h = spec.grid_h, w = spec.grid_w;
  const std::size_t ns = task.sensors.size(), nj = spec.sources.size();
  Samples s{Tensor({n, ns}), Tensor({n, h, w}), Tensor({n, nj})};
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor field = synthetic_field(spec, task.kind, amps[i]);
    std::copy(field.data().begin(), field.data().end(),
              s.fields.data().begin() + static_cast<std::ptrdiff_t>(i * h * w));
    for (std::size_t k = 0; k < ns; ++k) {
      s.sensors[i * ns + k] = field[task.sensors[k].row * w + task.sensors[k].col];
    }
    for (std::size_t j = 0; j < nj; ++j) s.conditions[i * nj + j] = amps[i][j];
  }
  return s;
}

}  // namespace

Dataset generate(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(derive_seeds(spec.seed).generator);
  std::uniform_real_distribution<double> amp(spec.amp_min, spec.amp_max);
  const auto draw_amps = [&](std::size_t count) {
    std::vector<std::vector<double>> out(count, std::vector<double>(spec.sources.size()));
    for (auto& a : out) {
      for (double& x : a) x = spec.amp_min == spec.amp_max ? spec.amp_min : amp(rng);
    }
    return out;
  };
  const auto train_amps = draw_amps(spec.train_count);
  const auto test_amps = draw_amps(spec.test_count);

  std::vector<FieldKind> kinds;
  for (const auto& t : spec.tasks) kinds.push_back(t.kind);
  const auto names = task_names(kinds);

  Dataset data;
  data.grid_h = spec.grid_h;
  data.grid_w = spec.grid_w;
  data.spec_json = spec_to_json(spec);
  data.seed = spec.seed;
  for (std::size_t t = 0; t < spec.tasks.size(); ++t) {
    TaskDataset td;
    td.name = names[t];
    td.sensor_points = spec.tasks[t].sensors;
    td.train = draw(spec, spec.tasks[t], train_amps);
    td.test = draw(spec, spec.tasks[t], test_amps);
    td.norm = ZScore::fit(td.train.fields);
    data.tasks.push_back(std::move(td));
  }
  return data;
}

// ---------------------------------------------------------------------------
// MTLD files: "MTLD", u32 version, u64 n_train, n_test, n_sensors, H, W, J,
// then each sample (train first) as sensors followed by the field, then the
// condition parameters of every sample. All little-endian.

namespace {

using io::Reader;
using io::Writer;
using io::crc_of;
using io::read_file;
using io::write_file;

constexpr char kMagic[4] = {'M', 'T', 'L', 'D'};
constexpr std::size_t kHeaderBytes = 4 + 4 + 6 * 8;


std::vector<char> encode_task(const TaskDataset& t, std::size_t h, std::size_t w) {
  const std::size_t ns = t.sensor_points.size();
  const std::size_t nj = t.train.conditions.rank() == 2 ? t.train.conditions.dim(1) : 0;
  Writer wr;
  wr.put_bytes(kMagic, 4);
  wr.put<std::uint32_t>(kDatasetVersion);
  for (const std::uint64_t v : {t.train.size(), t.test.size(), ns, h, w, nj}) wr.put(v);
  for (const Samples* s : {&t.train, &t.test}) {
    for (std::size_t i = 0; i < s->size(); ++i) {
      wr.put_doubles(s->sensors.data().subspan(i * ns, ns));
      wr.put_doubles(s->fields.data().subspan(i * h * w, h * w));
    }
  }
  if (nj > 0) {
    for (const Samples* s : {&t.train, &t.test}) wr.put_doubles(s->conditions.data());
  }
  return wr.bytes();
}

void decode_task(const std::vector<char>& bytes, const std::string& file, TaskDataset& t,
                 std::size_t& h, std::size_t& w) {
  Reader rd(bytes, file);
  rd.need(kHeaderBytes);
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw LoadError(file + ": not an MTLD file");
  rd.get<std::uint32_t>();
  const auto version = rd.get<std::uint32_t>();
  if (version != kDatasetVersion) {
    throw VersionError(file + ": format version " + std::to_string(version) + ", expected " +
                       std::to_string(kDatasetVersion));
  }
  const auto n_train = rd.get<std::uint64_t>(), n_test = rd.get<std::uint64_t>();
  const auto ns = rd.get<std::uint64_t>();
  h = rd.get<std::uint64_t>();
  w = rd.get<std::uint64_t>();
  const auto nj = rd.get<std::uint64_t>();
  const std::uint64_t expected =
      kHeaderBytes + 8 * ((n_train + n_test) * (ns + h * w) + (n_train + n_test) * nj);
  rd.need(expected - kHeaderBytes);
  if (bytes.size() != expected) {
    throw LoadError(file + ": " + std::to_string(bytes.size() - expected) + " unexpected trailing bytes");
  }
  for (auto [s, n] : {std::pair{&t.train, n_train}, std::pair{&t.test, n_test}}) {
    s->sensors = Tensor({n, ns});
    s->fields = Tensor({n, h, w});
    s->conditions = nj > 0 ? Tensor({n, nj}) : Tensor();
    for (std::size_t i = 0; i < n; ++i) {
      rd.get_doubles(s->sensors.data().subspan(i * ns, ns));
      rd.get_doubles(s->fields.data().subspan(i * h * w, h * w));
    }
  }
  if (nj > 0) {
    rd.get_doubles(t.train.conditions.data());
    rd.get_doubles(t.test.conditions.data());
  }
}

// Compares the file length with the size its header declares.
void check_length(const std::vector<char>& bytes, const std::string& file) {
  if (bytes.size() < kHeaderBytes) {
    throw TruncatedFileError(file + ": truncated header (" + std::to_string(bytes.size()) + " bytes)");
  }
  Reader rd(bytes, file);
  rd.get<std::uint32_t>();
  rd.get<std::uint32_t>();
  std::uint64_t dims[6];
  for (auto& d : dims) d = rd.get<std::uint64_t>();
  const std::uint64_t n = dims[0] + dims[1];
  const std::uint64_t expected = kHeaderBytes + 8 * (n * (dims[2] + dims[3] * dims[4]) + n * dims[5]);
  if (bytes.size() < expected) {
    throw TruncatedFileError(file + ": truncated (" + std::to_string(bytes.size()) + " of " +
                             std::to_string(expected) + " bytes)");
  }
}

std::string task_file(std::size_t t, const std::string& name) {
  return "task" + std::to_string(t) + "_" + name + ".mtld";
}

json points_json(const std::vector<GridPoint>& pts) {
  json out = json::array();
  for (const auto& p : pts) out.push_back({p.row, p.col});
  return out;
}

std::vector<GridPoint> points_from(const json& j) {
  std::vector<GridPoint> out;
  for (const auto& p : j) out.push_back({p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>()});
  return out;
}

}  // namespace

std::size_t dataset_header_bytes() { return kHeaderBytes; }

std::uint32_t file_crc32(const fs::path& path) { return crc_of(read_file(path)); }

std::vector<SavedFile> save_dataset(const Dataset& data, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw LoadError("cannot create " + dir.string() + ": " + ec.message());
  std::vector<SavedFile> saved;
  json tasks = json::array();
  for (std::size_t t = 0; t < data.tasks.size(); ++t) {
    const TaskDataset& td = data.tasks[t];
    const std::string file = task_file(t, td.name);
    const auto bytes = encode_task(td, data.grid_h, data.grid_w);
    write_file(dir / file, bytes);
    const std::uint32_t crc = crc_of(bytes);
    saved.push_back({file, crc});
    tasks.push_back({{"name", td.name},
                     {"file", file},
                     {"crc32", crc},
                     {"n_train", td.train.size()},
                     {"n_test", td.test.size()},
                     {"sensors", points_json(td.sensor_points)},
                     {"normalization", {{"mean", td.norm.mean}, {"std", td.norm.std}}}});
  }
  json manifest = {{"format", "MTLD"},
                   {"version", kDatasetVersion},
                   {"rng", "mt19937_64 (splitmix64-derived generator stream)"},
                   {"seed", data.seed},
                   {"grid", {data.grid_h, data.grid_w}},
                   {"tasks", tasks}};
  manifest["spec"] = data.spec_json.empty() ? json(nullptr) : json::parse(data.spec_json);
  const std::string text = manifest.dump(2) + "\n";
  write_file(dir / "manifest.json", std::vector<char>(text.begin(), text.end()));
  return saved;
}

Dataset load_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw LoadError("no manifest.json in " + dir.string());
  json manifest;
  try {
    const auto bytes = read_file(manifest_path);
    manifest = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw LoadError(manifest_path.string() + ": " + e.what());
  }
  try {
    const auto version = manifest.at("version").get<std::uint32_t>();
    if (version != kDatasetVersion) {
      throw VersionError(manifest_path.string() + ": dataset version " + std::to_string(version) +
                         ", this build reads version " + std::to_string(kDatasetVersion));
    }
    Dataset data;
    data.seed = manifest.value("seed", std::uint64_t{0});
    data.grid_h = manifest.at("grid").at(0).get<std::size_t>();
    data.grid_w = manifest.at("grid").at(1).get<std::size_t>();
    if (manifest.contains("spec") && !manifest.at("spec").is_null()) {
      data.spec_json = spec_to_json(spec_from(manifest.at("spec")));
    }
    for (const auto& entry : manifest.at("tasks")) {
      const std::string file = entry.at("file").get<std::string>();
      const auto bytes = read_file(dir / file);
      check_length(bytes, file);
      const std::uint32_t crc = crc_of(bytes);
      const auto want = entry.at("crc32").get<std::uint32_t>();
      if (crc != want) {
        throw ChecksumError(file + ": checksum mismatch (crc32 " + std::to_string(crc) +
                            ", manifest " + std::to_string(want) + ")");
      }
      TaskDataset td;
      td.name = entry.at("name").get<std::string>();
      td.sensor_points = points_from(entry.at("sensors"));
      std::size_t h = 0, w = 0;
      decode_task(bytes, file, td, h, w);
      if (h != data.grid_h || w != data.grid_w || td.train.sensors.dim(1) != td.sensor_points.size()) {
        throw LoadError(file + ": dimensions disagree with the manifest");
      }
      td.norm = ZScore::fit(td.train.fields);
      data.tasks.push_back(std::move(td));
    }
    if (data.tasks.empty()) throw LoadError(manifest_path.string() + ": no tasks");
    return data;
  } catch (const json::exception& e) {
    throw LoadError(manifest_path.string() + ": " + e.what());
  }
}

Dataset load_external_grid(const fs::path& descriptor) {
  json desc;
  try {
    const auto bytes = read_file(descriptor);
    desc = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw LoadError(descriptor.string() + ": " + e.what());
  }
  try {
    const std::string dtype = desc.value("dtype", std::string("f64"));
    const std::string endian = desc.value("endian", std::string("little"));
    if (dtype != "f64" && dtype != "f32") throw LoadError(descriptor.string() + ": unsupported dtype " + dtype);
    if (endian != "little" && endian != "big") {
      throw LoadError(descriptor.string() + ": unsupported endianness " + endian);
    }
    const std::size_t width = dtype == "f64" ? 8 : 4;
    const bool swap = (endian == "big") != (std::endian::native == std::endian::big);
    Dataset data;
    data.grid_h = desc.at("grid").at(0).get<std::size_t>();
    data.grid_w = desc.at("grid").at(1).get<std::size_t>();
    const std::size_t h = data.grid_h, w = data.grid_w;
    if (h == 0 || w == 0) throw LoadError(descriptor.string() + ": empty grid");

    const auto value_at = [&](const std::vector<char>& buf, std::size_t off) {
      std::array<unsigned char, 8> b{};
      std::memcpy(b.data(), buf.data() + off, width);
      if (swap) std::reverse(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(width));
      if (width == 8) return std::bit_cast<double>(b);
      std::array<unsigned char, 4> f{};
      std::copy_n(b.begin(), 4, f.begin());
      return static_cast<double>(std::bit_cast<float>(f));
    };

    for (const auto& entry : desc.at("tasks")) {
      TaskDataset td;
      td.name = entry.at("name").get<std::string>();
      td.sensor_points = points_from(entry.at("sensors"));
      if (td.sensor_points.empty()) throw LoadError(td.name + ": no sensors declared");
      for (const auto& p : td.sensor_points) {
        if (p.row >= h || p.col >= w) {
          throw LoadError(td.name + ": sensor (" + std::to_string(p.row) + ", " +
                          std::to_string(p.col) + ") outside the " + std::to_string(h) + "x" +
                          std::to_string(w) + " grid");
        }
      }
      const fs::path file = descriptor.parent_path() / entry.at("file").get<std::string>();
      const std::size_t offset = entry.value("offset", std::size_t{0});
      const std::size_t prefix = entry.value("record_prefix", std::size_t{0});
      const std::size_t n_train = entry.at("n_train").get<std::size_t>();
      const std::size_t n_test = entry.at("n_test").get<std::size_t>();
      if (n_train == 0 || n_test == 0) throw LoadError(td.name + ": n_train and n_test must be positive");
      const auto bytes = read_file(file);
      const std::size_t record = (prefix + h * w) * width;
      const std::size_t need = offset + (n_train + n_test) * record;
      if (bytes.size() < need) {
        throw LoadError(file.string() + ": descriptor expects at least " + std::to_string(need) +
                        " bytes, file has " + std::to_string(bytes.size()));
      }
      const std::size_t ns = td.sensor_points.size();
      std::size_t next = 0;
      for (auto [s, n] : {std::pair{&td.train, n_train}, std::pair{&td.test, n_test}}) {
        s->sensors = Tensor({n, ns});
        s->fields = Tensor({n, h, w});
        s->conditions = Tensor();
        for (std::size_t i = 0; i < n; ++i, ++next) {
          const std::size_t base = offset + next * record + prefix * width;
          for (std::size_t k = 0; k < h * w; ++k) s->fields[i * h * w + k] = value_at(bytes, base + k * width);
          for (std::size_t k = 0; k < ns; ++k) {
            const auto& p = td.sensor_points[k];
            s->sensors[i * ns + k] = s->fields[i * h * w + p.row * w + p.col];
          }
        }
      }
      td.norm = ZScore::fit(td.train.fields);
      data.tasks.push_back(std::move(td));
    }
    if (data.tasks.empty()) throw LoadError(descriptor.string() + ": no tasks");
    return data;
  } catch (const json::exception& e) {
    throw LoadError(descriptor.string() + ": " + e.what());
  }
}

}  // namespace mtlfno
