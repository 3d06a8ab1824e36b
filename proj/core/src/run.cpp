#include "mtlfno/run.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iterator>
#include <ostream>

#include "json.hpp"

#include "mtlfno/error.hpp"
#include "mtlfno/random.hpp"

#include "config_json.hpp"

namespace mtlfno {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fixed(const char* fmt, double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
  if (!out) throw ConfigError("write failed for " + path.string());
}

std::string utc_stamp(const char* fmt) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  char buf[32];
  std::strftime(buf, sizeof buf, fmt, &utc);
  return buf;
}

std::vector<std::string> task_names(const Dataset& data) {
  std::vector<std::string> names;
  for (const auto& t : data.tasks) names.push_back(t.name);
  return names;
}

}  // namespace

std::string to_string(TrainMode m) { return m == TrainMode::mtl ? "mtl" : "independent"; }

TrainMode parse_train_mode(std::string_view name) {
  if (name == "mtl") return TrainMode::mtl;
  if (name == "independent") return TrainMode::independent;
  throw ConfigError("unknown mode '" + std::string(name) + "'");
}

bool RunSpec::wants(std::string_view report) const {
  return std::find(reports.begin(), reports.end(), report) != reports.end();
}

std::string run_spec_to_json(const RunSpec& s) {
  json j{{"dataset", s.dataset.string()},
         {"out", s.out.string()},
         {"mode", to_string(s.mode)},
         {"model", detail::model_json(s.model)},
         {"train", detail::train_json(s.train)},
         {"train_size", s.train_size ? json(*s.train_size) : json(nullptr)},
         {"reports", s.reports}};
  return j.dump(2);
}

RunSpec run_spec_from_json(std::string_view text) {
  RunSpec s;
  try {
    const json j = json::parse(text);
    detail::reject_unknown_keys(j, {"dataset", "out", "mode", "model", "train", "train_size", "reports"},
                                "run config");
    if (j.contains("dataset")) s.dataset = j.at("dataset").get<std::string>();
    if (j.contains("out")) s.out = j.at("out").get<std::string>();
    if (j.contains("mode")) s.mode = parse_train_mode(j.at("mode").get<std::string>());
    if (j.contains("model")) s.model = detail::model_from_json(j.at("model"));
    if (j.contains("train")) s.train = detail::train_from_json(j.at("train"));
    if (j.contains("train_size") && !j.at("train_size").is_null()) {
      if (!j.at("train_size").is_number_unsigned()) throw ConfigError("'train_size' must be a non-negative integer");
      s.train_size = j.at("train_size").get<std::size_t>();
    }
    if (j.contains("reports")) s.reports = j.at("reports").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  for (const auto& r : s.reports) {
    if (r != "json" && r != "csv" && r != "table") throw ConfigError("unknown report format '" + r + "'");
  }
  return s;
}

RunSpec load_run_spec(const fs::path& path) { return run_spec_from_json(read_text(path)); }

std::vector<std::vector<std::size_t>> training_subsets(const Dataset& data, std::size_t n,
                                                       std::uint64_t seed) {
  Rng rng(derive_seeds(seed).generator);
  std::vector<std::vector<std::size_t>> out;
  for (const auto& t : data.tasks) {
    const std::size_t total = t.train.size();
    if (n > total) {
      throw ConfigError("train size " + std::to_string(n) + " exceeds the " + std::to_string(total) +
                        " training samples of task '" + t.name + "'");
    }
    std::vector<std::size_t> order(total);
    for (std::size_t i = 0; i < total; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(n);
    out.push_back(std::move(order));
  }
  return out;
}

std::vector<Samples> training_samples(const Dataset& data, std::optional<std::size_t> train_size,
                                      std::uint64_t seed) {
  if (train_size && *train_size == 0) throw ConfigError("train size must be positive");
  std::vector<Samples> out;
  const auto subsets = train_size ? training_subsets(data, *train_size, seed)
                                  : std::vector<std::vector<std::size_t>>{};
  for (std::size_t t = 0; t < data.tasks.size(); ++t) {
    Samples s = data.tasks[t].normalized_train();
    out.push_back(train_size ? s.select(subsets[t]) : std::move(s));
  }
  return out;
}

ModelConfig bind_to_dataset(ModelConfig cfg, const Dataset& data) {
  if (data.tasks.empty()) throw ConfigError("dataset has no tasks");
  cfg.tasks = data.tasks.size();
  cfg.grid_h = data.grid_h;
  cfg.grid_w = data.grid_w;
  cfg.n_sensors = data.tasks.front().sensor_points.size();
  cfg.validate();
  return cfg;
}

TrainedModels train_models(const RunSpec& spec, const Dataset& data, const EpochCallback& on_epoch) {
  const std::vector<Samples> samples = training_samples(data, spec.train_size, spec.train.seed);
  const ModelConfig cfg = bind_to_dataset(spec.model, data);
  const auto names = task_names(data);
  TrainedModels out;

  if (spec.mode == TrainMode::mtl) {
    Model model = Model::initialize(cfg, spec.train.seed);
    TrainResult r = train(model, samples, spec.train, on_epoch);
    out.models.push_back({std::move(model), names});
    out.history = std::move(r.history);
    out.seconds = r.seconds;
    return out;
  }

  ModelConfig single = cfg;
  single.variant = ModelVariant::noshare;
  single.tasks = 1;
  TrainConfig tc = spec.train;
  tc.task_weights.clear();
  for (std::size_t t = 0; t < names.size(); ++t) {
    Model model = Model::initialize(single, spec.train.seed);
    const TrainResult r = train(model, std::span<const Samples>(&samples[t], 1), tc, on_epoch);
    out.models.push_back({std::move(model), {names[t]}});
    out.seconds += r.seconds;
    if (out.history.empty()) {
      out.history.resize(r.history.size());
      for (std::size_t e = 0; e < r.history.size(); ++e) {
        out.history[e].epoch = r.history[e].epoch;
        out.history[e].lr = r.history[e].lr;
      }
    }
    for (std::size_t e = 0; e < r.history.size(); ++e) {
      out.history[e].task_loss.push_back(r.history[e].task_loss.at(0));
      out.history[e].total += r.history[e].total;
    }
  }
  return out;
}

std::optional<double> MetricsReport::mean_r2() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& t : tasks) {
    if (t.metrics.r2) {
      sum += *t.metrics.r2;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

MetricsReport evaluate_models(const std::vector<Checkpoint>& models, const Dataset& data,
                              std::string_view split, std::size_t timed_forwards) {
  if (split != "train" && split != "test") throw ConfigError("unknown split '" + std::string(split) + "'");
  if (models.empty()) throw ConfigError("no models to evaluate");
  MetricsReport report;
  report.split = split;
  for (const auto& ckpt : models) {
    const ModelConfig& cfg = ckpt.model.config();
    if (cfg.grid_h != data.grid_h || cfg.grid_w != data.grid_w) {
      throw ConfigError("model grid " + std::to_string(cfg.grid_h) + "x" + std::to_string(cfg.grid_w) +
                        " does not match dataset grid " + std::to_string(data.grid_h) + "x" +
                        std::to_string(data.grid_w));
    }
    const ParamCount pc = ckpt.model.count_params();
    report.params.total += pc.total;
    if (cfg.tasks == 1) {
      report.params.per_task.push_back(pc.total);
    } else {
      report.params.shared += pc.shared;
      report.params.per_task.insert(report.params.per_task.end(), pc.per_task.begin(), pc.per_task.end());
    }
    for (std::size_t k = 0; k < ckpt.task_names.size(); ++k) {
      const auto it = std::find_if(data.tasks.begin(), data.tasks.end(),
                                   [&](const TaskDataset& t) { return t.name == ckpt.task_names[k]; });
      if (it == data.tasks.end()) {
        throw ConfigError("dataset has no task '" + ckpt.task_names[k] + "'");
      }
      if (it->sensor_points.size() != cfg.n_sensors) {
        throw ConfigError("task '" + it->name + "' has " + std::to_string(it->sensor_points.size()) +
                          " sensors, model expects " + std::to_string(cfg.n_sensors));
      }
      const Samples s = split == "train" ? it->normalized_train() : it->normalized_test();
      report.tasks.push_back({it->name, evaluate(ckpt.model, k, s, it->norm)});
    }
  }
  const Model& first = models.front().model;
  report.gflops = flop_estimate(first.config()).total() * 1e-9;
  report.timed_forwards = timed_forwards;
  if (timed_forwards > 0) {
    const auto& td = *std::find_if(data.tasks.begin(), data.tasks.end(), [&](const TaskDataset& t) {
      return t.name == models.front().task_names.front();
    });
    const Samples s = td.normalized_test().select({0});
    first.predict(0, s.sensors);
    std::vector<double> ms;
    for (std::size_t i = 0; i < timed_forwards; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      const Tensor y = first.predict(0, s.sensors);
      const auto t1 = std::chrono::steady_clock::now();
      if (!y.all_finite()) throw NumericError("non-finite prediction while timing");
      ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::nth_element(ms.begin(), ms.begin() + static_cast<std::ptrdiff_t>(ms.size() / 2), ms.end());
    report.inference_ms = ms[ms.size() / 2];
  }
  return report;
}

std::string metrics_to_json(const MetricsReport& r) {
  json tasks = json::array();
  for (const auto& t : r.tasks) {
    tasks.push_back({{"name", t.name}, {"mse", t.metrics.mse}, {"mae", t.metrics.mae}, {"r2", optional_number(t.metrics.r2)}});
  }
  const json j{{"schema_version", 1},
               {"split", r.split},
               {"params", {{"total", r.params.total}, {"shared", r.params.shared}, {"per_task", r.params.per_task}}},
               {"gflops", r.gflops},
               {"inference_ms", r.inference_ms},
               {"timed_forwards", r.timed_forwards},
               {"tasks", tasks},
               {"mean_r2", optional_number(r.mean_r2())}};
  return j.dump(2);
}

void print_metrics_table(std::ostream& os, const MetricsReport& r) {
  char line[160];
  std::snprintf(line, sizeof line, "%-14s %10s %9s %10s %12s %12s %8s\n", "Task", "Params", "GFLOPs",
                "Time(ms)", "MSE", "MAE", "R2");
  os << line;
  for (const auto& t : r.tasks) {
    const std::string r2 = t.metrics.r2 ? fixed("%.4f", *t.metrics.r2) : "n/a";
    std::snprintf(line, sizeof line, "%-14s %10zu %9.4f %10.3f %12.4e %12.4e %8s\n", t.name.c_str(),
                  r.params.total, r.gflops, r.inference_ms, t.metrics.mse, t.metrics.mae, r2.c_str());
    os << line;
  }
  const auto mean = r.mean_r2();
  os << "mean R2 (" << r.split << "): " << (mean ? fixed("%.4f", *mean) : "n/a") << '\n';
}

InspectReport inspect_model(const Checkpoint& ckpt) {
  const Model& m = ckpt.model;
  InspectReport r;
  r.config = m.config();
  r.task_names = ckpt.task_names;
  r.params = m.count_params();
  r.unitarity_guaranteed = r.config.variant == ModelVariant::full;
  if (!has_amplitude(r.config.variant)) return r;
  for (std::size_t l = 0; l < r.config.layers; ++l) {
    for (std::size_t t = 0; t < r.config.tasks; ++t) {
      const UnitarityStats s = unitarity_stats(m.unitary_part(l, t));
      r.unitarity.push_back({l, t, s});
      r.max_deviation = std::max({r.max_deviation, std::abs(s.mean_max_sv - 1.0), std::abs(s.mean_min_sv - 1.0)});
    }
  }
  return r;
}

namespace {

std::string unitarity_note(const InspectReport& r) {
  if (r.unitarity_guaranteed) return "unitary by construction";
  if (r.unitarity.empty()) return "no polar factor";
  return "no unitarity guarantee (pre-amplitude tensor)";
}

}  // namespace

std::string inspect_to_json(const InspectReport& r) {
  json entries = json::array();
  for (const auto& e : r.unitarity) {
    entries.push_back({{"layer", e.layer}, {"task", e.task}, {"mean_max_sv", e.stats.mean_max_sv},
                       {"mean_min_sv", e.stats.mean_min_sv}});
  }
  const json j{{"model", detail::model_json(r.config)},
               {"tasks", r.task_names},
               {"params", {{"total", r.params.total}, {"shared", r.params.shared}, {"per_task", r.params.per_task}}},
               {"unitarity", entries},
               {"unitarity_guaranteed", r.unitarity_guaranteed},
               {"max_deviation", r.max_deviation},
               {"note", unitarity_note(r)}};
  return j.dump(2);
}

void print_inspect(std::ostream& os, const InspectReport& r) {
  os << "variant " << to_string(r.config.variant) << ", " << r.config.layers << " layers, " << r.config.tasks
     << " tasks\n";
  os << "params total " << r.params.total << ", shared " << r.params.shared << '\n';
  for (std::size_t t = 0; t < r.params.per_task.size(); ++t) {
    os << "  task " << t << " (" << r.task_names.at(t) << "): " << r.params.per_task[t] << '\n';
  }
  os << unitarity_note(r) << '\n';
  char line[128];
  for (const auto& e : r.unitarity) {
    std::snprintf(line, sizeof line, "  layer %zu task %zu: mean max sv %.12f, mean min sv %.12f\n", e.layer,
                  e.task, e.stats.mean_max_sv, e.stats.mean_min_sv);
    os << line;
  }
  if (!r.unitarity.empty()) os << "max |sv - 1| = " << fixed("%.3e", r.max_deviation) << '\n';
}

std::string to_string(SweepAxis a) { return a == SweepAxis::rank ? "rank" : "train_size"; }

SweepAxis parse_sweep_axis(std::string_view name) {
  if (name == "rank") return SweepAxis::rank;
  if (name == "train_size") return SweepAxis::train_size;
  throw ConfigError("unknown sweep axis '" + std::string(name) + "'");
}

std::vector<SweepRow> sweep(const RunSpec& spec, const Dataset& data, SweepAxis axis,
                            const std::vector<std::size_t>& values) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  if (axis == SweepAxis::train_size) {
    for (const std::size_t v : values) {
      if (v == 0) throw ConfigError("train size must be positive");
      training_subsets(data, v, spec.train.seed);
    }
  }
  std::vector<SweepRow> rows;
  for (const std::size_t v : values) {
    RunSpec s = spec;
    if (axis == SweepAxis::rank) {
      s.model.rank = v;
    } else {
      s.train_size = v;
    }
    const TrainedModels trained = train_models(s, data);
    const MetricsReport report = evaluate_models(trained.models, data, "test", 0);
    const std::string setting = to_string(axis) + "=" + std::to_string(v);
    for (const auto& t : report.tasks) rows.push_back({setting, t.name, t.metrics, report.params.total});
  }
  return rows;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::string out = "setting,task,r2,mse,mae,params\n";
  for (const auto& r : rows) {
    out += r.setting + "," + r.task + "," + (r.metrics.r2 ? num(*r.metrics.r2) : "") + "," + num(r.metrics.mse) +
           "," + num(r.metrics.mae) + "," + std::to_string(r.params) + "\n";
  }
  return out;
}

std::string losses_to_csv(const std::vector<EpochLog>& history, const std::vector<std::string>& names) {
  std::string out = "epoch,task,loss\n";
  for (const auto& e : history) {
    for (std::size_t t = 0; t < e.task_loss.size(); ++t) {
      out += std::to_string(e.epoch) + "," + names.at(t) + "," + num(e.task_loss[t]) + "\n";
    }
  }
  return out;
}

fs::path default_run_dir(std::uint64_t seed) {
  return fs::path("runs") / (utc_stamp("%Y%m%d-%H%M%S") + "-seed" + std::to_string(seed));
}

std::vector<SavedFile> write_run(const fs::path& dir, const RunSpec& spec, const TrainedModels& trained,
                                 const MetricsReport* metrics) {
  fs::create_directories(dir);
  std::vector<SavedFile> files;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < trained.models.size(); ++i) {
    const Checkpoint& c = trained.models[i];
    names.insert(names.end(), c.task_names.begin(), c.task_names.end());
    const std::string file = trained.models.size() == 1 ? "model.mtlf"
                                                        : "model_task" + std::to_string(i) + "_" +
                                                              c.task_names.front() + ".mtlf";
    files.push_back({file, save_checkpoint(dir / file, c)});
  }
  write_text(dir / "losses.csv", losses_to_csv(trained.history, names));

  json ckpts = json::array();
  std::size_t total = 0;
  for (std::size_t i = 0; i < files.size(); ++i) {
    const ParamCount pc = trained.models[i].model.count_params();
    total += pc.total;
    ckpts.push_back({{"file", files[i].name},
                     {"crc32", files[i].crc32},
                     {"tasks", trained.models[i].task_names},
                     {"params", pc.total}});
  }
  json history = json::array();
  for (const auto& e : trained.history) {
    json losses = json::object();
    for (std::size_t t = 0; t < e.task_loss.size(); ++t) losses[names.at(t)] = e.task_loss[t];
    history.push_back({{"epoch", e.epoch}, {"lr", e.lr}, {"losses", losses}, {"total", e.total}});
  }
  const SeedStreams seeds = derive_seeds(spec.train.seed);
  json manifest{{"format", "mtlfno-run"},
                {"version", 1},
                {"created", utc_stamp("%Y-%m-%dT%H:%M:%SZ")},
                {"mode", to_string(spec.mode)},
                {"variant", to_string(trained.models.front().model.config().variant)},
                {"seed", spec.train.seed},
                {"seeds", {{"init", seeds.init}, {"shuffle", seeds.shuffle}, {"generator", seeds.generator}}},
                {"run", json::parse(run_spec_to_json(spec))},
                {"model", detail::model_json(trained.models.front().model.config())},
                {"params", total},
                {"checkpoints", ckpts},
                {"losses", "losses.csv"},
                {"epochs", trained.history.size()},
                {"history", history},
                {"final_loss", trained.history.empty() ? json(nullptr) : json(trained.history.back().total)},
                {"train_seconds", trained.seconds}};
  if (metrics) manifest["metrics"] = json::parse(metrics_to_json(*metrics));
  const fs::path dataset_manifest = spec.dataset / "manifest.json";
  if (fs::exists(dataset_manifest)) manifest["dataset_manifest_crc32"] = file_crc32(dataset_manifest);
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  return files;
}

std::vector<fs::path> run_checkpoints(const fs::path& run_dir) {
  std::vector<fs::path> out;
  try {
    const json m = json::parse(read_text(run_dir / "manifest.json"));
    for (const auto& c : m.at("checkpoints")) out.push_back(run_dir / c.at("file").get<std::string>());
  } catch (const json::exception& e) {
    throw LoadError(run_dir.string() + "/manifest.json: " + e.what());
  } catch (const ConfigError& e) {
    throw LoadError(e.what());
  }
  if (out.empty()) throw LoadError(run_dir.string() + "/manifest.json lists no checkpoints");
  return out;
}

}  // namespace mtlfno
