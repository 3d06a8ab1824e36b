#include "mtlfno/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <mutex>
#include <numeric>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "mtlfno/error.hpp"
#include "mtlfno/random.hpp"

namespace mtlfno {

void TrainConfig::validate() const {
  if (!(lr0 > 0.0) || !std::isfinite(lr0)) throw ConfigError("train config: lr0 must be positive");
  if (!(decay_factor > 0.0) || decay_factor > 1.0) {
    throw ConfigError("train config: decay_factor must lie in (0, 1]");
  }
  if (decay_every == 0) throw ConfigError("train config: decay_every must be positive");
  if (batch_size == 0) throw ConfigError("train config: batch_size must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("train config: Adam betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("train config: eps must be positive");
  for (const double w : task_weights) {
    if (!std::isfinite(w) || w < 0.0) throw ConfigError("train config: task weights must be finite and >= 0");
  }
}

double lr_schedule(std::size_t epoch, const TrainConfig& cfg) {
  return cfg.lr0 * std::pow(cfg.decay_factor, static_cast<double>(epoch / cfg.decay_every));
}

namespace ad {

Var task_loss(Var pred, Var target, bool squared) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("task_loss: prediction " + shape_string(pred.shape()) + " vs target " +
                     shape_string(target.shape()));
  }
  const Shape& s = pred.shape();
  const std::size_t batch = s.empty() ? 1 : s[0];
  const std::size_t per = pred.value().size() / batch;
  const Var residual = reshape(sub(pred, target), {batch, per});
  if (squared) return mean(mul(residual, residual));
  return mean(row_norms(residual));
}

Var total_loss(std::span<const Var> per_task, std::span<const double> weights) {
  if (per_task.empty()) throw ContractError("total_loss: no task losses");
  if (!weights.empty() && weights.size() != per_task.size()) {
    throw ContractError("total_loss: " + std::to_string(weights.size()) + " weights for " +
                        std::to_string(per_task.size()) + " tasks");
  }
  Var total;
  for (std::size_t t = 0; t < per_task.size(); ++t) {
    const Var term = weights.empty() ? per_task[t] : scale(per_task[t], weights[t]);
    total = t == 0 ? term : add(total, term);
  }
  return total;
}

}  // namespace ad

Adam::Adam(const TrainConfig& cfg) : beta1_(cfg.beta1), beta2_(cfg.beta2), eps_(cfg.eps) {}

void Adam::step(ParamStore& params, const GradientMap& grads, double lr) {
  for (const auto& [name, g] : grads) {
    if (!params.contains(name)) throw ContractError("Adam: gradient for unknown parameter '" + name + "'");
    if (params.at(name).shape() != g.shape()) {
      throw ShapeError("Adam: gradient " + shape_string(g.shape()) + " for parameter '" + name +
                       "' of shape " + shape_string(params.at(name).shape()));
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& [name, g] : grads) {
    Tensor& p = params.at(name);
    auto [it, fresh] = state_.try_emplace(name);
    Moments& s = it->second;
    if (fresh) {
      s.m.assign(p.size(), 0.0);
      s.v.assign(p.size(), 0.0);
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * g[i];
      s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * g[i] * g[i];
      p[i] -= lr * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + eps_);
    }
  }
}

void tune_allocator() {
#if defined(__GLIBC__)
  static std::once_flag once;
  std::call_once(once, [] {
    mallopt(M_MMAP_THRESHOLD, 32 << 20);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    mallopt(M_TOP_PAD, 256 << 20);
  });
#endif
}

namespace {

void check_data(const ModelConfig& mc, std::span<const Samples> data) {
  if (data.size() != mc.tasks) {
    throw ContractError("train: " + std::to_string(data.size()) + " task datasets for a " +
                        std::to_string(mc.tasks) + "-task model");
  }
  for (std::size_t t = 0; t < data.size(); ++t) {
    const Samples& s = data[t];
    if (s.size() == 0) throw ContractError("train: task " + std::to_string(t) + " has no samples");
    if (s.sensors.shape() != Shape{s.size(), mc.n_sensors} ||
        s.fields.shape() != Shape{s.size(), mc.grid_h, mc.grid_w}) {
      throw ShapeError("train: task " + std::to_string(t) + " samples " +
                       shape_string(s.sensors.shape()) + " / " + shape_string(s.fields.shape()) +
                       " do not match the model config");
    }
  }
}

Tensor gather_rows(const Tensor& t, std::span<const std::size_t> idx) {
  const std::size_t stride = t.size() / t.dim(0);
  Shape shape = t.shape();
  shape[0] = idx.size();
  Tensor out(shape);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(t.data().begin() + static_cast<std::ptrdiff_t>(idx[i] * stride), stride,
                out.data().begin() + static_cast<std::ptrdiff_t>(i * stride));
  }
  return out;
}

std::size_t batch_count(std::size_t n, std::size_t b) { return (n + b - 1) / b; }

}  // namespace

TrainResult train(Model& model, std::span<const Samples> data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  const ModelConfig& mc = model.config();
  check_data(mc, data);
  if (!cfg.task_weights.empty() && cfg.task_weights.size() != mc.tasks) {
    throw ConfigError("train config: " + std::to_string(cfg.task_weights.size()) +
                      " task weights for " + std::to_string(mc.tasks) + " tasks");
  }
  tune_allocator();
  const auto start = std::chrono::steady_clock::now();

  Rng rng(derive_seeds(cfg.seed).shuffle);
  Adam adam(cfg);
  std::vector<std::vector<std::size_t>> order(mc.tasks);
  std::vector<std::vector<std::string>> names(mc.tasks);
  std::size_t steps = 0;
  for (std::size_t t = 0; t < mc.tasks; ++t) {
    order[t].resize(data[t].size());
    std::iota(order[t].begin(), order[t].end(), 0);
    names[t] = model.names_for_task(t);
    steps = std::max(steps, batch_count(data[t].size(), cfg.batch_size));
  }

  TrainResult result;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, cfg);
    for (auto& o : order) std::shuffle(o.begin(), o.end(), rng);
    EpochLog log{epoch, lr, std::vector<double>(mc.tasks, 0.0), 0.0};
    for (std::size_t step = 0; step < steps; ++step) {
      GradientMap grads;
      for (std::size_t t = 0; t < mc.tasks; ++t) {
        const std::size_t n = data[t].size();
        const std::size_t first = (step % batch_count(n, cfg.batch_size)) * cfg.batch_size;
        const std::span<const std::size_t> idx(order[t].data() + first,
                                               std::min(cfg.batch_size, n - first));
        const Tensor sensors = gather_rows(data[t].sensors, idx);
        const Tensor target = gather_rows(data[t].fields, idx);

        ad::Tape tape;
        const ad::Binding params(tape, model.params(), names[t], true);
        ad::Var loss;
        try {
          const ad::Var pred =
              ad::forward(mc, params, t, tape.constant(encode_input(sensors, mc.grid_h, mc.grid_w)));
          loss = ad::task_loss(pred, tape.constant(target), cfg.squared_loss);
        } catch (const SingularMatrixError& e) {
          throw NumericError("task " + std::to_string(t) + " at epoch " + std::to_string(epoch) + ", step " +
                             std::to_string(step) + ": " + e.what());
        }
        const double raw = loss.value()[0];
        if (!cfg.task_weights.empty()) loss = ad::scale(loss, cfg.task_weights[t]);
        if (!std::isfinite(loss.value()[0])) {
          const auto where = tape.first_non_finite();
          throw NumericError("non-finite loss for task " + std::to_string(t) + " at epoch " +
                             std::to_string(epoch) + ", step " + std::to_string(step) + ": " +
                             where.value_or("no non-finite tensor recorded"));
        }
        const ad::Gradients g = tape.backward(loss);
        for (const auto& [name, var] : params.vars()) {
          Tensor gv = g.of(var);
          for (const double x : gv.data()) {
            if (!std::isfinite(x)) {
              throw NumericError("non-finite gradient for '" + name + "' (task " + std::to_string(t) +
                                 ", epoch " + std::to_string(epoch) + ", step " + std::to_string(step) + ")");
            }
          }
          auto it = grads.find(name);
          if (it == grads.end()) {
            grads.emplace(name, std::move(gv));
          } else {
            for (std::size_t i = 0; i < gv.size(); ++i) it->second[i] += gv[i];
          }
        }
        log.task_loss[t] += raw;
      }
      adam.step(model.params(), grads, lr);
    }
    for (std::size_t t = 0; t < mc.tasks; ++t) {
      log.task_loss[t] /= static_cast<double>(steps);
      log.total += (cfg.task_weights.empty() ? 1.0 : cfg.task_weights[t]) * log.task_loss[t];
    }
    if (on_epoch) on_epoch(log);
    result.history.push_back(std::move(log));
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

TaskMetrics compute_metrics(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size() || target.empty()) {
    throw ShapeError("metrics: " + std::to_string(pred.size()) + " predictions for " +
                     std::to_string(target.size()) + " targets");
  }
  const double n = static_cast<double>(target.size());
  double sq = 0.0, abs = 0.0, mean = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double r = pred[i] - target[i];
    sq += r * r;
    abs += std::abs(r);
    mean += target[i];
  }
  mean /= n;
  double tot = 0.0;
  for (const double y : target) tot += (y - mean) * (y - mean);
  TaskMetrics m{sq / n, abs / n, std::nullopt};
  if (tot > 0.0) m.r2 = 1.0 - sq / tot;
  return m;
}

Tensor predict_all(const Model& model, std::size_t task, const Tensor& sensors, std::size_t batch) {
  const ModelConfig& mc = model.config();
  const std::size_t n = sensors.dim(0), per = mc.grid_h * mc.grid_w;
  Tensor out({n, mc.grid_h, mc.grid_w});
  std::vector<std::size_t> idx;
  for (std::size_t first = 0; first < n; first += batch) {
    idx.clear();
    for (std::size_t i = first; i < std::min(n, first + batch); ++i) idx.push_back(i);
    const Tensor pred = model.predict(task, gather_rows(sensors, idx));
    std::copy(pred.data().begin(), pred.data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(first * per));
  }
  return out;
}

TaskMetrics evaluate(const Model& model, std::size_t task, const Samples& data, const ZScore& norm) {
  if (data.size() == 0) throw ContractError("evaluate: no test samples");
  const Tensor pred = norm.invert(predict_all(model, task, data.sensors));
  const Tensor target = norm.invert(data.fields);
  return compute_metrics(pred.data(), target.data());
}

FlopBreakdown flop_estimate(const ModelConfig& cfg) {
  const double hw = static_cast<double>(cfg.grid_h * cfg.grid_w);
  const double c = static_cast<double>(cfg.channels), l = static_cast<double>(cfg.layers);
  const double h = static_cast<double>(cfg.hidden), in = static_cast<double>(cfg.n_sensors + 2);
  FlopBreakdown f;
  f.fft = l * 2.0 * 5.0 * hw * std::log2(hw) * c;
  f.spectral = l * 8.0 * static_cast<double>(cfg.k1 * cfg.k2) * c * c;
  f.spatial = l * 2.0 * hw * c * c;
  f.pointwise = 2.0 * hw * (in * h + h * c + c * h + h);
  return f;
}

}  // namespace mtlfno
