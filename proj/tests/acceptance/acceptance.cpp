// Acceptance checks 1-10. Prints one PASS/FAIL line per criterion on stdout;
// supporting numbers go to stderr. Exit status is non-zero if any selected
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstring>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "CLI11.hpp"

#include "mtlfno/checkpoint.hpp"
#include "mtlfno/dataset.hpp"
#include "mtlfno/error.hpp"
#include "mtlfno/model.hpp"
#include "mtlfno/run.hpp"
#include "mtlfno/spectral.hpp"
#include "mtlfno/training.hpp"
#include "mtlfno/weight_factory.hpp"

namespace fs = std::filesystem;
using namespace mtlfno;

namespace {

// Tolerances and protocol constants.
constexpr double kUnitaryTol = 1e-8;
constexpr double kTrainedSvTol = 1e-6;
constexpr int kCayleyTrials = 1000;
constexpr double kPolarTol = 1e-7;
constexpr int kPolarTrials = 200;
constexpr double kMinAmplitude = 1e-3;
constexpr double kGradTol = 1e-3;
constexpr double kFdStep = 1e-5;
constexpr double kFdFloor = 1e-6;
constexpr double kOracleTol = 1e-10;
constexpr int kOracleSeeds = 100;
constexpr double kRatioT5 = 0.35;
constexpr double kRatioT3 = 0.50;
constexpr std::size_t kFewShotSize = 30;
constexpr int kFewShotSeeds = 5;
constexpr int kAblationSeeds = 3;
constexpr int kRankSeeds = 3;

struct Outcome {
  bool pass = false;
  std::string summary;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string sci(double v) { return fmt("%.2e", v); }

Tensor uniform(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t(shape);
  for (double& x : t.data()) x = d(rng);
  return t;
}

ComplexTensor uniform_complex(const Shape& shape, std::mt19937_64& rng, double scale = 1.0) {
  return {uniform(shape, rng, -scale, scale), uniform(shape, rng, -scale, scale)};
}

// Desk-scale model used for the training criteria.
RunSpec desk_run() {
  RunSpec r;
  r.model.k1 = 8;
  r.model.k2 = 8;
  r.model.channels = 8;
  r.model.layers = 3;
  r.model.rank = 8;
  r.model.hidden = 8;
  r.train.epochs = 100;
  return r;
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
  std::mt19937_64 rng(101);
  double worst = 0.0;
  const std::size_t channels[] = {2, 4, 8};
  for (int trial = 0; trial < kCayleyTrials; ++trial) {
    const std::size_t c = channels[trial % 3];
    const ComplexTensor k = skew_hermitian(uniform_complex({2, 3, c, c}, rng, 2.0));
    worst = std::max(worst, max_unitarity_error(cayley(k).slices));
  }

  SyntheticSpec spec = default_spec();
  spec.grid_h = 16;
  spec.grid_w = 16;
  for (auto& t : spec.tasks) {
    for (auto& p : t.sensors) p = {p.row / 4, p.col / 4};
  }
  spec.train_count = 20;
  spec.test_count = 5;
  const Dataset data = generate(spec);
  RunSpec run = desk_run();
  run.train.epochs = 100;
  const TrainedModels trained = train_models(run, data);
  const InspectReport report = inspect_model(trained.models.front());
  double max_sv = 0.0, min_sv = 0.0;
  for (const auto& e : report.unitarity) {
    max_sv += e.stats.mean_max_sv;
    min_sv += e.stats.mean_min_sv;
  }
  max_sv /= static_cast<double>(report.unitarity.size());
  min_sv /= static_cast<double>(report.unitarity.size());
  std::fprintf(stderr, "  trained: %zu epochs, final loss %.4f, mean max sv %.15f, mean min sv %.15f\n",
               trained.history.size(), trained.history.back().total, max_sv, min_sv);
  const bool pass = worst <= kUnitaryTol && report.max_deviation <= kTrainedSvTol;
  return {pass, "unitarity: max ||U^H U - I||_F " + sci(worst) + " over " + std::to_string(kCayleyTrials) +
                    " inputs (tol " + sci(kUnitaryTol) + "); after 100 epochs max |sv - 1| " +
                    sci(report.max_deviation) + " (tol " + sci(kTrainedSvTol) + ")"};
}

Outcome criterion2() {
  std::mt19937_64 rng(202);
  double worst_u = 0.0, worst_p = 0.0;
  for (int trial = 0; trial < kPolarTrials; ++trial) {
    const std::size_t c = 2 + static_cast<std::size_t>(trial % 7);
    const UnitaryTensor u = cayley(skew_hermitian(uniform_complex({1, 1, c, c}, rng, 1.5)));
    // Distinct amplitudes above the floor: sorted uniform draws pushed apart.
    Tensor p({1, 1, c});
    std::uniform_real_distribution<double> d(0.0, 1.0);
    std::vector<double> vals(c);
    for (auto& v : vals) v = d(rng);
    std::sort(vals.begin(), vals.end());
    for (std::size_t i = 0; i < c; ++i) p[i] = kMinAmplitude + 0.05 * static_cast<double>(i + 1) + 3.0 * vals[i];
    Tensor raw(p.shape());
    for (std::size_t i = 0; i < c; ++i) raw[i] = std::log(std::expm1(p[i]));
    const Tensor amp = build_amplitude(raw, AmplitudeMode::softplus);
    const ComplexTensor r = compose(u, amp);
    const PolarFactors f = polar_decompose(matrix_slice(r, 0));
    worst_u = std::max(worst_u, max_abs_diff(f.unitary, matrix_slice(u.slices, 0)));
    ComplexTensor diag(Shape{c, c});
    for (std::size_t i = 0; i < c; ++i) diag.re[i * c + i] = amp[i];
    worst_p = std::max(worst_p, max_abs_diff(f.positive, diag));
    worst_p = std::max(worst_p, max_abs_diff(amp, p));
  }
  const bool pass = worst_u <= kPolarTol && worst_p <= kPolarTol;
  return {pass, "polar round trip: max |U - U*| " + sci(worst_u) + ", max |P - diag(p)| " + sci(worst_p) + " over " +
                    std::to_string(kPolarTrials) + " trials (tol " + sci(kPolarTol) + ")"};
}

std::string param_class(const std::string& name) {
  if (name.rfind("lift.", 0) == 0) return "lifting";
  if (name.rfind("proj.", 0) == 0) return "projection";
  const auto last = name.substr(name.find('.') + 1);
  if (last.rfind("shared.K", 0) == 0) return "K_share";
  if (last.rfind("shared.P", 0) == 0) return "P_share";
  const auto leaf = name.substr(name.rfind(".task") + 1);
  const auto field = leaf.substr(leaf.find('.') + 1);
  if (field == "W") return "W";
  if (field == "b") return "b";
  if (field == "lambda_k") return "lambda_k";
  if (field == "lambda_p") return "lambda_p";
  return "cp." + field.substr(0, 2);
}

Outcome criterion3() {
  ModelConfig cfg;
  cfg.k1 = 2;
  cfg.k2 = 2;
  cfg.channels = 2;
  cfg.layers = 1;
  cfg.rank = 2;
  cfg.tasks = 2;
  cfg.hidden = 3;
  cfg.grid_h = 8;
  cfg.grid_w = 8;
  cfg.n_sensors = 2;
  Model m = Model::initialize(cfg, 303);
  std::mt19937_64 rng(304);
  for (auto& [name, value] : m.params().entries()) {
    if (name.find(".task") != std::string::npos) value = uniform(value.shape(), rng, -0.6, 0.6);
  }
  std::vector<Tensor> sensors, fields;
  for (std::size_t t = 0; t < cfg.tasks; ++t) {
    sensors.push_back(uniform({2, cfg.n_sensors}, rng));
    fields.push_back(uniform({2, cfg.grid_h, cfg.grid_w}, rng));
  }
  const auto loss_value = [&] {
    double s = 0.0;
    for (std::size_t t = 0; t < cfg.tasks; ++t) {
      ad::Tape tape;
      s += ad::task_loss(tape.constant(m.predict(t, sensors[t])), tape.constant(fields[t])).value()[0];
    }
    return s;
  };

  ad::Tape tape;
  std::vector<std::string> names;
  for (const auto& e : m.params().entries()) names.push_back(e.first);
  const ad::Binding p(tape, m.params(), names, true);
  std::vector<ad::Var> terms;
  for (std::size_t t = 0; t < cfg.tasks; ++t) {
    const ad::Var pred = ad::forward(cfg, p, t, tape.constant(encode_input(sensors[t], cfg.grid_h, cfg.grid_w)));
    terms.push_back(ad::task_loss(pred, tape.constant(fields[t])));
  }
  const ad::Gradients g = tape.backward(ad::total_loss(terms));

  std::map<std::string, double> worst;
  for (const auto& [name, var] : p.vars()) {
    const Tensor an = g.of(var);
    Tensor& value = m.params().at(name);
    double& w = worst[param_class(name)];
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double keep = value[i];
      value[i] = keep + kFdStep;
      const double up = loss_value();
      value[i] = keep - kFdStep;
      const double down = loss_value();
      value[i] = keep;
      const double fd = (up - down) / (2.0 * kFdStep);
      w = std::max(w, std::abs(fd - an[i]) / std::max({std::abs(fd), std::abs(an[i]), kFdFloor}));
    }
  }
  double overall = 0.0;
  for (const auto& [cls, err] : worst) {
    std::fprintf(stderr, "  %-11s max rel error %.3e\n", cls.c_str(), err);
    overall = std::max(overall, err);
  }
  const bool complete = worst.size() == 15;
  return {complete && overall <= kGradTol, "gradient fidelity: " + std::to_string(worst.size()) +
                                               " parameter classes, max rel error " + sci(overall) + " (tol " +
                                               sci(kGradTol) + ")"};
}

Outcome criterion4() {
  constexpr std::size_t h = 8, w = 8, c = 3, b = 2;
  const spectral::ModeLayout layout{4, 3, h, w};
  const std::size_t wh = w / 2 + 1;
  double err_fft = 0.0, err_trunc = 0.0, err_conv = 0.0, err_inv = 0.0;
  for (int seed = 0; seed < kOracleSeeds; ++seed) {
    std::mt19937_64 rng(400 + static_cast<std::uint64_t>(seed));
    const Tensor v = uniform({b, h, w, c}, rng);

    // Direct double sum for every half-spectrum bin.
    ComplexTensor direct(Shape{b, h, wh, c});
    for (std::size_t n = 0; n < b; ++n) {
      for (std::size_t k = 0; k < h; ++k) {
        for (std::size_t l = 0; l < wh; ++l) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            std::complex<double> acc = 0.0;
            for (std::size_t y = 0; y < h; ++y) {
              for (std::size_t x = 0; x < w; ++x) {
                const double ang = -2.0 * std::numbers::pi *
                                   (static_cast<double>(k * y) / h + static_cast<double>(l * x) / w);
                acc += v[((n * h + y) * w + x) * c + ch] * std::polar(1.0, ang);
              }
            }
            const std::size_t i = ((n * h + k) * wh + l) * c + ch;
            direct.re[i] = acc.real();
            direct.im[i] = acc.imag();
          }
        }
      }
    }
    err_fft = std::max(err_fft, max_abs_diff(spectral::rfft2(v), direct));

    // Explicit-loop truncation of the direct spectrum.
    const std::size_t k1 = layout.k1, k2 = layout.k2;
    ComplexTensor kept(Shape{b, k1, k2, c});
    for (std::size_t n = 0; n < b; ++n) {
      for (std::size_t r = 0; r < k1; ++r) {
        const std::size_t src = r < k1 / 2 ? r : h - k1 + r;
        for (std::size_t l = 0; l < k2; ++l) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            kept.re[((n * k1 + r) * k2 + l) * c + ch] = direct.re[((n * h + src) * wh + l) * c + ch];
            kept.im[((n * k1 + r) * k2 + l) * c + ch] = direct.im[((n * h + src) * wh + l) * c + ch];
          }
        }
      }
    }
    err_trunc = std::max(err_trunc, max_abs_diff(spectral::truncate_modes(direct, layout), kept));
    err_trunc = std::max(err_trunc, max_abs_diff(spectral::truncated_rfft2(v, layout), kept));

    // Explicit-loop channel mixing.
    const ComplexTensor weight = uniform_complex({k1, k2, c, c}, rng);
    ComplexTensor mixed(Shape{b, k1, k2, c});
    for (std::size_t n = 0; n < b; ++n) {
      for (std::size_t m = 0; m < k1 * k2; ++m) {
        for (std::size_t o = 0; o < c; ++o) {
          std::complex<double> acc = 0.0;
          for (std::size_t i = 0; i < c; ++i) {
            const std::complex<double> r(weight.re[(m * c + o) * c + i], weight.im[(m * c + o) * c + i]);
            const std::complex<double> x(kept.re[(n * k1 * k2 + m) * c + i], kept.im[(n * k1 * k2 + m) * c + i]);
            acc += r * x;
          }
          mixed.re[(n * k1 * k2 + m) * c + o] = acc.real();
          mixed.im[(n * k1 * k2 + m) * c + o] = acc.imag();
        }
      }
    }
    err_conv = std::max(err_conv, max_abs_diff(spectral::spectral_conv(kept, weight), mixed));

    // Inverse: the full spectrum of a real grid must come back to the grid.
    err_inv = std::max(err_inv, max_abs_diff(spectral::irfft2(direct, h, w), v));
  }
  const double worst = std::max({err_fft, err_trunc, err_conv, err_inv});
  return {worst <= kOracleTol, "spectral oracles on 8x8, " + std::to_string(kOracleSeeds) + " seeds: rfft2 " +
                                   sci(err_fft) + ", truncate " + sci(err_trunc) + ", spectral_conv " +
                                   sci(err_conv) + ", irfft2 " + sci(err_inv) + " (tol " + sci(kOracleTol) + ")"};
}

std::size_t layout_total(const ModelConfig& cfg) {
  std::size_t n = 0;
  for (const auto& p : parameter_layout(cfg)) {
    std::size_t s = 1;
    for (const std::size_t d : p.shape) s *= d;
    n += s;
  }
  return n;
}

Outcome criterion5() {
  ModelConfig single;
  single.variant = ModelVariant::noshare;
  single.tasks = 1;
  const std::size_t one = layout_total(single);
  ModelConfig mtl;
  mtl.tasks = 5;
  const std::size_t t5 = layout_total(mtl);
  mtl.tasks = 3;
  const std::size_t t3 = layout_total(mtl);
  const double r5 = static_cast<double>(t5) / (5.0 * static_cast<double>(one));
  const double r3 = static_cast<double>(t3) / (3.0 * static_cast<double>(one));
  std::fprintf(stderr, "  single FNO %zu, MTL T=5 %zu, MTL T=3 %zu\n", one, t5, t3);
  return {r5 <= kRatioT5 && r3 <= kRatioT3, "parameter compression: T=5 ratio " + fmt("%.4f", r5) + " (<= " +
                                                fmt("%.2f", kRatioT5) + "), T=3 ratio " + fmt("%.4f", r3) +
                                                " (<= " + fmt("%.2f", kRatioT3) + ")"};
}

// Mean over seeds of each task's test R^2.
std::vector<double> seed_averaged_r2(RunSpec run, const Dataset& data, int seeds) {
  std::vector<double> sum(data.tasks.size(), 0.0);
  for (int s = 0; s < seeds; ++s) {
    run.train.seed = static_cast<std::uint64_t>(s);
    const TrainedModels trained = train_models(run, data);
    const MetricsReport report = evaluate_models(trained.models, data, "test", 0);
    std::fprintf(stderr, "    seed %d:", s);
    for (std::size_t t = 0; t < report.tasks.size(); ++t) {
      const double r2 = report.tasks[t].metrics.r2.value_or(0.0);
      sum[t] += r2;
      std::fprintf(stderr, " %s %.4f", report.tasks[t].name.c_str(), r2);
    }
    std::fprintf(stderr, "\n");
  }
  for (double& v : sum) v /= seeds;
  return sum;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (const double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::string list(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt("%.4f", v[i]);
  return s + "]";
}

Outcome criterion6() {
  const Dataset data = generate(default_spec());
  RunSpec run = desk_run();
  run.train_size = kFewShotSize;
  std::fprintf(stderr, "  MTL-FNO (full):\n");
  const auto mtl = seed_averaged_r2(run, data, kFewShotSeeds);
  run.mode = TrainMode::independent;
  std::fprintf(stderr, "  independent FNOs:\n");
  const auto ind = seed_averaged_r2(run, data, kFewShotSeeds);
  int better = 0;
  for (std::size_t t = 0; t < mtl.size(); ++t) better += mtl[t] > ind[t];
  const bool pass = mean(mtl) >= mean(ind) && better >= 2;
  return {pass, "few-shot (30/task, 5 seeds): MTL mean R2 " + fmt("%.4f", mean(mtl)) + " " + list(mtl) +
                    " vs independent " + fmt("%.4f", mean(ind)) + " " + list(ind) + ", higher on " +
                    std::to_string(better) + "/4 tasks"};
}

Outcome criterion7() {
  const Dataset data = generate(default_spec());
  std::map<ModelVariant, double> score;
  for (const ModelVariant v : {ModelVariant::full, ModelVariant::noshare, ModelVariant::nopolar, ModelVariant::nocayley}) {
    RunSpec run = desk_run();
    run.model.variant = v;
    std::fprintf(stderr, "  %s:\n", to_string(v).c_str());
    score[v] = mean(seed_averaged_r2(run, data, kAblationSeeds));
  }
  const double full = score[ModelVariant::full];
  const bool pass = full >= score[ModelVariant::noshare] && full >= score[ModelVariant::nopolar] &&
                    full >= score[ModelVariant::nocayley];
  return {pass, "ablation (100/task, 3 seeds) mean R2: full " + fmt("%.4f", full) + ", noshare " +
                    fmt("%.4f", score[ModelVariant::noshare]) + ", nopolar " +
                    fmt("%.4f", score[ModelVariant::nopolar]) + ", nocayley " +
                    fmt("%.4f", score[ModelVariant::nocayley])};
}

Outcome criterion8() {
  const Dataset data = generate(default_spec());
  std::map<std::size_t, double> curve;
  for (const std::size_t r : {1, 4, 8, 16}) {
    RunSpec run = desk_run();
    run.model.rank = r;
    std::fprintf(stderr, "  R=%zu:\n", r);
    curve[r] = mean(seed_averaged_r2(run, data, kRankSeeds));
  }
  std::string shape;
  for (const auto& [r, v] : curve) shape += (shape.empty() ? "" : ", ") + ("R=" + std::to_string(r) + " " + fmt("%.4f", v));
  return {curve[8] >= curve[1], "rank sweep (3 seeds) mean R2: " + shape};
}

Outcome criterion9() {
  const double y[] = {1, 2, 3}, yhat[] = {1, 2, 4};
  const TaskMetrics m = compute_metrics(yhat, y);
  const bool metrics_ok = m.r2 && *m.r2 == 0.5 && m.mse == 1.0 / 3.0 && m.mae == 1.0 / 3.0;
  const TrainConfig cfg;
  const bool lr_ok = lr_schedule(0, cfg) == 0.001 && lr_schedule(19, cfg) == 0.001 && lr_schedule(20, cfg) == 0.0005;
  return {metrics_ok && lr_ok, "metrics: R2 " + fmt("%.17g", m.r2.value_or(NAN)) + ", MSE " + fmt("%.17g", m.mse) +
                                   ", MAE " + fmt("%.17g", m.mae) + "; lr epoch 19 " +
                                   fmt("%g", lr_schedule(19, cfg)) + ", epoch 20 " + fmt("%g", lr_schedule(20, cfg))};
}

bool same_bits(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin(), [](double x, double y) {
           return std::memcmp(&x, &y, sizeof x) == 0;
         });
}

Outcome criterion10() {
  const fs::path root = fs::temp_directory_path() / ("mtlfno_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  SyntheticSpec spec = default_spec();
  spec.train_count = 12;
  spec.test_count = 4;
  const auto gen1 = save_dataset(generate(spec), root / "d1");
  const auto gen2 = save_dataset(generate(spec), root / "d2");
  bool gen_same = gen1.size() == gen2.size();
  for (std::size_t i = 0; gen_same && i < gen1.size(); ++i) gen_same = gen1[i].crc32 == gen2[i].crc32;

  const Dataset original = generate(spec);
  const Dataset loaded = load_dataset(root / "d1");
  bool data_exact = loaded.tasks.size() == original.tasks.size();
  for (std::size_t t = 0; data_exact && t < original.tasks.size(); ++t) {
    const auto& a = original.tasks[t];
    const auto& b = loaded.tasks[t];
    data_exact = same_bits(a.train.sensors, b.train.sensors) && same_bits(a.train.fields, b.train.fields) &&
                 same_bits(a.test.sensors, b.test.sensors) && same_bits(a.test.fields, b.test.fields) &&
                 same_bits(a.train.conditions, b.train.conditions);
  }

  RunSpec run = desk_run();
  run.train.epochs = 2;
  run.train.seed = 7;
  const auto ck1 = write_run(root / "r1", run, train_models(run, loaded));
  const auto ck2 = write_run(root / "r2", run, train_models(run, loaded));
  const bool train_same = ck1.size() == 1 && ck2.size() == 1 && ck1[0].crc32 == ck2[0].crc32;
  for (const auto& f : ck1) std::fprintf(stderr, "  run 1: %s %08x\n", f.name.c_str(), f.crc32);
  for (const auto& f : ck2) std::fprintf(stderr, "  run 2: %s %08x\n", f.name.c_str(), f.crc32);

  const Checkpoint back = load_checkpoint(root / "r1" / ck1[0].name);
  const std::uint32_t resaved = save_checkpoint(root / "resave.mtlf", back);
  bool ckpt_exact = resaved == ck1[0].crc32;
  const Checkpoint again = load_checkpoint(root / "resave.mtlf");
  for (std::size_t i = 0; ckpt_exact && i < back.model.params().size(); ++i) {
    ckpt_exact = same_bits(back.model.params().entries()[i].second, again.model.params().entries()[i].second);
  }
  fs::remove_all(root);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%08x", ck1[0].crc32);
  return {gen_same && data_exact && train_same && ckpt_exact,
          std::string("determinism: gen checksums ") + (gen_same ? "identical" : "differ") + ", dataset round trip " +
              (data_exact ? "bit-exact" : "differs") + ", train checkpoint crc " + buf + " " +
              (train_same ? "identical" : "differs") + ", checkpoint round trip " + (ckpt_exact ? "bit-exact" : "differs")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> selected;
  app.add_option("--criterion,-c", selected, "Criteria to run (default: all)")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);
  if (selected.empty()) {
    for (int i = 1; i <= 10; ++i) selected.push_back(i);
  }

  const std::function<Outcome()> criteria[] = {criterion1, criterion2, criterion3, criterion4, criterion5,
                                               criterion6, criterion7, criterion8, criterion9, criterion10};
  tune_allocator();
  int failures = 0;
  for (const int id : selected) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[id - 1]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %2d %s  %s [%.1f s]\n", id, o.pass ? "PASS" : "FAIL", o.summary.c_str(), secs);
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
