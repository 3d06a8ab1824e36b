// mtlfno: generate datasets, train, evaluate, inspect and sweep multi-task FNOs.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "mtlfno/checkpoint.hpp"
#include "mtlfno/dataset.hpp"
#include "mtlfno/error.hpp"
#include "mtlfno/run.hpp"
#include "mtlfno/training.hpp"

namespace fs = std::filesystem;
using namespace mtlfno;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

struct Overrides {
  std::string config;
  std::string dataset;
  std::string out;
  std::string variant;
  std::string mode;
  std::string amplitude;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> rank;
  std::optional<std::size_t> train_size;
  std::optional<std::uint64_t> seed;
};

void add_run_options(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "Run config JSON")->check(CLI::ExistingFile);
  cmd->add_option("--dataset", o.dataset, "Dataset directory");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--variant", o.variant, "full, noshare, nopolar or nocayley")
      ->check(CLI::IsMember({"full", "noshare", "nopolar", "nocayley"}));
  cmd->add_option("--mode", o.mode, "mtl or independent")->check(CLI::IsMember({"mtl", "independent"}));
  cmd->add_option("--epochs", o.epochs, "Training epochs");
  cmd->add_option("--rank", o.rank, "CP rank of the task deltas");
  cmd->add_option("--train-size", o.train_size, "Training samples per task");
  cmd->add_option("--seed", o.seed, "Run seed");
  cmd->add_option("--amplitude", o.amplitude, "softplus or raw")->check(CLI::IsMember({"softplus", "raw"}));
}

RunSpec resolve(const Overrides& o) {
  RunSpec s = o.config.empty() ? RunSpec{} : load_run_spec(o.config);
  if (!o.dataset.empty()) s.dataset = o.dataset;
  if (!o.out.empty()) s.out = o.out;
  if (!o.variant.empty()) s.model.variant = parse_variant(o.variant);
  if (!o.mode.empty()) s.mode = parse_train_mode(o.mode);
  if (!o.amplitude.empty()) s.model.amplitude = parse_amplitude_mode(o.amplitude);
  if (o.epochs) s.train.epochs = *o.epochs;
  if (o.rank) s.model.rank = *o.rank;
  if (o.train_size) s.train_size = *o.train_size;
  if (o.seed) s.train.seed = *o.seed;
  if (s.dataset.empty()) throw ConfigError("no dataset given (--dataset or \"dataset\" in --config)");
  s.train.validate();
  return s;
}

Dataset open_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("dataset directory " + dir.string() + " does not exist");
  return load_dataset(dir);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out) throw ConfigError("cannot write " + path.string());
}

std::string hex(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

std::vector<Checkpoint> open_checkpoints(const fs::path& path) {
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    files = run_checkpoints(path);
  } else {
    files.push_back(path);
  }
  std::vector<Checkpoint> out;
  for (const auto& f : files) out.push_back(load_checkpoint(f));
  return out;
}

int cmd_gen(const std::string& config, const std::string& out, std::optional<std::uint64_t> seed) {
  SyntheticSpec spec = config.empty() ? default_spec() : load_spec(config);
  if (seed) spec.seed = *seed;
  const Dataset data = generate(spec);
  const fs::path dir = out.empty() ? fs::path("data") / ("synthetic-seed" + std::to_string(spec.seed)) : fs::path(out);
  const auto files = save_dataset(data, dir);
  std::cout << dir.string() << '\n';
  for (const auto& f : files) std::cout << "  " << f.name << "  crc32 " << hex(f.crc32) << '\n';
  for (const auto& t : data.tasks) {
    std::cout << "  task " << t.name << ": " << t.train.size() << " train / " << t.test.size() << " test\n";
  }
  return 0;
}

int cmd_train(const Overrides& o, bool quiet) {
  RunSpec spec = resolve(o);
  const Dataset data = open_dataset(spec.dataset);
  const fs::path dir = spec.out.empty() ? default_run_dir(spec.train.seed) : spec.out;
  const EpochCallback progress = [&](const EpochLog& e) {
    if (quiet) return;
    if (e.epoch % 10 == 0 || e.epoch + 1 == spec.train.epochs) {
      std::printf("epoch %4zu  lr %.3e  loss %.6f\n", e.epoch, e.lr, e.total);
      std::fflush(stdout);
    }
  };
  tune_allocator();
  const TrainedModels trained = train_models(spec, data, progress);
  const MetricsReport metrics = evaluate_models(trained.models, data, "test");
  const auto files = write_run(dir, spec, trained, &metrics);
  std::cout << dir.string() << '\n';
  for (const auto& f : files) std::cout << "  " << f.name << "  crc32 " << hex(f.crc32) << '\n';
  std::size_t params = 0;
  for (const auto& m : trained.models) params += m.model.count_params().total;
  std::cout << "  params " << params << ", " << trained.history.size() << " epochs in " << trained.seconds << " s\n";
  const auto mean = metrics.mean_r2();
  if (mean) std::printf("  test mean R2 %.4f\n", *mean);
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& dataset, const std::string& out,
             const std::string& split, const std::string& config) {
  const RunSpec spec = config.empty() ? RunSpec{} : load_run_spec(config);
  if (!fs::exists(checkpoint)) throw ConfigError("checkpoint " + checkpoint + " does not exist");
  const auto models = open_checkpoints(checkpoint);
  const Dataset data = open_dataset(dataset);
  const MetricsReport report = evaluate_models(models, data, split);
  const fs::path dir = !out.empty()                     ? fs::path(out)
                       : fs::is_directory(checkpoint)   ? fs::path(checkpoint)
                                                        : fs::path(checkpoint).parent_path();
  if (spec.wants("json") || spec.wants("csv")) fs::create_directories(dir.empty() ? "." : dir);
  if (spec.wants("json")) write_text(dir / "metrics.json", metrics_to_json(report) + "\n");
  if (spec.wants("csv")) {
    std::string csv = "task,mse,mae,r2\n";
    for (const auto& t : report.tasks) {
      char line[160];
      std::snprintf(line, sizeof line, "%s,%.17g,%.17g,", t.name.c_str(), t.metrics.mse, t.metrics.mae);
      csv += line;
      if (t.metrics.r2) {
        std::snprintf(line, sizeof line, "%.17g", *t.metrics.r2);
        csv += line;
      }
      csv += "\n";
    }
    write_text(dir / "metrics.csv", csv);
  }
  if (spec.wants("table")) print_metrics_table(std::cout, report);
  return 0;
}

int cmd_inspect(const std::string& checkpoint, const std::string& out) {
  if (!fs::exists(checkpoint)) throw ConfigError("checkpoint " + checkpoint + " does not exist");
  const auto models = open_checkpoints(checkpoint);
  int status = 0;
  std::string json = "[";
  for (std::size_t i = 0; i < models.size(); ++i) {
    const InspectReport r = inspect_model(models[i]);
    print_inspect(std::cout, r);
    json += (i ? ",\n" : "\n") + inspect_to_json(r);
    if (r.unitarity_guaranteed && r.max_deviation > 1e-6) {
      std::cerr << "unitarity violated: max |sv - 1| = " << r.max_deviation << '\n';
      status = kExitNumeric;
    }
  }
  json += "\n]\n";
  if (!out.empty()) {
    fs::create_directories(out);
    write_text(fs::path(out) / "inspect.json", json);
  }
  return status;
}

int cmd_sweep(const Overrides& o, const std::string& axis, const std::vector<std::size_t>& values) {
  RunSpec spec = resolve(o);
  const Dataset data = open_dataset(spec.dataset);
  const fs::path dir = spec.out.empty() ? default_run_dir(spec.train.seed) : spec.out;
  tune_allocator();
  const auto rows = sweep(spec, data, parse_sweep_axis(axis), values);
  fs::create_directories(dir);
  write_text(dir / "sweep.csv", sweep_to_csv(rows));
  if (spec.wants("table")) {
    std::printf("%-16s %-14s %8s %12s %12s %10s\n", "Setting", "Task", "R2", "MSE", "MAE", "Params");
    for (const auto& r : rows) {
      const std::string r2 = r.metrics.r2 ? std::to_string(*r.metrics.r2) : "n/a";
      std::printf("%-16s %-14s %8.8s %12.4e %12.4e %10zu\n", r.setting.c_str(), r.task.c_str(), r2.c_str(),
                  r.metrics.mse, r.metrics.mae, r.params);
    }
  }
  std::cout << (dir / "sweep.csv").string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task Fourier neural operators on sparse sensor data"};
  app.require_subcommand(1);

  std::string gen_config, gen_out;
  std::optional<std::uint64_t> gen_seed;
  auto* gen = app.add_subcommand("gen", "Generate a synthetic multi-task dataset");
  gen->add_option("--config", gen_config, "Synthetic spec JSON (default spec if omitted)")->check(CLI::ExistingFile);
  gen->add_option("--out", gen_out, "Output directory");
  gen->add_option("--seed", gen_seed, "Override the spec seed");

  Overrides train_opts;
  bool quiet = false;
  auto* train_cmd = app.add_subcommand("train", "Train a model (or independent baselines)");
  add_run_options(train_cmd, train_opts);
  train_cmd->add_flag("--quiet", quiet, "No per-epoch progress");

  std::string eval_ckpt, eval_dataset, eval_out, eval_split = "test", eval_config;
  auto* eval = app.add_subcommand("eval", "Evaluate checkpoints on a dataset");
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file or run directory")->required();
  eval->add_option("--dataset", eval_dataset, "Dataset directory")->required();
  eval->add_option("--out", eval_out, "Directory for metrics.json");
  eval->add_option("--split", eval_split, "train or test")->check(CLI::IsMember({"train", "test"}));
  eval->add_option("--config", eval_config, "Run config JSON (report formats)")->check(CLI::ExistingFile);

  std::string inspect_ckpt, inspect_out;
  auto* inspect = app.add_subcommand("inspect", "Unitarity and parameter report of a checkpoint");
  inspect->add_option("--checkpoint", inspect_ckpt, "Checkpoint file or run directory")->required();
  inspect->add_option("--out", inspect_out, "Directory for inspect.json");

  Overrides sweep_opts;
  std::string axis;
  std::vector<std::size_t> values;
  auto* sweep_cmd = app.add_subcommand("sweep", "Train and evaluate over a rank or train-size axis");
  add_run_options(sweep_cmd, sweep_opts);
  sweep_cmd->add_option("--axis", axis, "rank or train_size")
      ->required()
      ->check(CLI::IsMember({"rank", "train_size"}));
  sweep_cmd->add_option("--values", values, "Comma-separated axis values")->required()->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen) return cmd_gen(gen_config, gen_out, gen_seed);
    if (*train_cmd) return cmd_train(train_opts, quiet);
    if (*eval) return cmd_eval(eval_ckpt, eval_dataset, eval_out, eval_split, eval_config);
    if (*inspect) return cmd_inspect(inspect_ckpt, inspect_out);
    if (*sweep_cmd) return cmd_sweep(sweep_opts, axis, values);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
