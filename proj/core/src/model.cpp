#include "mtlfno/model.hpp"

#include <cmath>

#include "mtlfno/complex_ops.hpp"
#include "mtlfno/error.hpp"
#include "mtlfno/random.hpp"

namespace mtlfno {

void ModelConfig::validate() const {
  const std::pair<const char*, std::size_t> extents[] = {
      {"k1", k1},         {"k2", k2},         {"channels", channels}, {"layers", layers},
      {"rank", rank},     {"tasks", tasks},   {"hidden", hidden},     {"grid_h", grid_h},
      {"grid_w", grid_w}, {"n_sensors", n_sensors}};
  for (const auto& [name, value] : extents) {
    if (value == 0) throw ConfigError(std::string("model config: ") + name + " must be positive");
  }
  if (grid_h < 2 || grid_w < 2) throw ConfigError("model config: grid must be at least 2x2");
  try {
    layout().validate();
  } catch (const ShapeError& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
}

std::string task_prefix(std::size_t layer, std::size_t task) {
  return "layer" + std::to_string(layer) + ".task" + std::to_string(task) + ".";
}

namespace {

std::string layer_prefix(std::size_t layer) { return "layer" + std::to_string(layer) + "."; }

bool is_task_param(std::string_view name, std::size_t* task) {
  const auto pos = name.find(".task");
  if (pos == std::string_view::npos) return false;
  if (task) {
    std::size_t t = 0;
    for (std::size_t i = pos + 5; i < name.size() && name[i] != '.'; ++i) {
      t = t * 10 + static_cast<std::size_t>(name[i] - '0');
    }
    *task = t;
  }
  return true;
}

}  // namespace

std::vector<ParamSpec> parameter_layout(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t c = cfg.channels, r = cfg.rank, h = cfg.hidden;
  std::vector<ParamSpec> out{
      {"lift.0.weight", {cfg.n_sensors + 2, h}}, {"lift.0.bias", {h}},
      {"lift.1.weight", {h, c}},                 {"lift.1.bias", {c}},
      {"proj.0.weight", {c, h}},                 {"proj.0.bias", {h}},
      {"proj.1.weight", {h, 1}},                 {"proj.1.bias", {1}},
  };
  const Shape weight{cfg.k1, cfg.k2, c, c};
  const std::size_t ext[4] = {cfg.k1, cfg.k2, c, c};
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string lp = layer_prefix(l);
    out.push_back({lp + "shared.K.re", weight});
    out.push_back({lp + "shared.K.im", weight});
    if (has_amplitude(cfg.variant)) out.push_back({lp + "shared.P", {cfg.k1, cfg.k2, c}});
    if (!has_task_deltas(cfg.variant)) {
      out.push_back({lp + "W", {c, c}});
      out.push_back({lp + "b", {c}});
      continue;
    }
    for (std::size_t t = 0; t < cfg.tasks; ++t) {
      const std::string tp = task_prefix(l, t);
      for (std::size_t j = 0; j < 4; ++j) {
        out.push_back({tp + "k" + std::to_string(j + 1) + ".re", {r, ext[j]}});
        out.push_back({tp + "k" + std::to_string(j + 1) + ".im", {r, ext[j]}});
      }
      out.push_back({tp + "lambda_k", {r}});
      if (has_amplitude(cfg.variant)) {
        for (std::size_t j = 0; j < 3; ++j) {
          out.push_back({tp + "p" + std::to_string(j + 1), {r, ext[j]}});
        }
        out.push_back({tp + "lambda_p", {r}});
      }
      out.push_back({tp + "W", {c, c}});
      out.push_back({tp + "b", {c}});
    }
  }
  return out;
}

void ParamStore::add(std::string name, Tensor value) {
  if (index_.count(name)) throw ContractError("duplicate parameter '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(value));
}

bool ParamStore::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

const Tensor& ParamStore::at(std::string_view name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + std::string(name) + "'");
  return entries_[it->second].second;
}

Tensor& ParamStore::at(std::string_view name) {
  return const_cast<Tensor&>(std::as_const(*this).at(name));
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.size();
  return n;
}

Tensor encode_input(const Tensor& sensors, std::size_t grid_h, std::size_t grid_w) {
  if (sensors.rank() != 1 && sensors.rank() != 2) {
    throw ShapeError("encode_input: sensors must be [n] or [B, n], got " +
                     shape_string(sensors.shape()));
  }
  if (grid_h < 2 || grid_w < 2) throw ShapeError("encode_input: grid must be at least 2x2");
  const bool batched = sensors.rank() == 2;
  const std::size_t b = batched ? sensors.dim(0) : 1;
  const std::size_t n = sensors.shape().back();
  const std::size_t ch = n + 2;
  Shape shape{grid_h, grid_w, ch};
  if (batched) shape.insert(shape.begin(), b);
  Tensor out(shape);
  for (std::size_t s = 0; s < b; ++s) {
    for (std::size_t y = 0; y < grid_h; ++y) {
      for (std::size_t x = 0; x < grid_w; ++x) {
        double* px = out.data().data() + ((s * grid_h + y) * grid_w + x) * ch;
        for (std::size_t j = 0; j < n; ++j) px[j] = sensors[s * n + j];
        px[n] = static_cast<double>(x) / static_cast<double>(grid_w - 1);
        px[n + 1] = static_cast<double>(y) / static_cast<double>(grid_h - 1);
      }
    }
  }
  return out;
}

namespace ad {

Var fno_layer(Var v, CVar r, Var w, Var b, const spectral::ModeLayout& layout, GeluMode gelu) {
  return fourier_layer(v, r, w, b, layout, gelu);
}

Binding::Binding(Tape& tape, const ParamStore& params, const std::vector<std::string>& names,
                 bool trainable) {
  for (const auto& name : names) {
    const Tensor& value = params.at(name);
    index_.emplace(name, vars_.size());
    vars_.emplace_back(name, trainable ? tape.parameter(value) : tape.constant(value));
  }
}

Var Binding::at(std::string_view name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("parameter '" + std::string(name) + "' not bound");
  return vars_[it->second].second;
}

bool Binding::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

namespace {

SharedSpectralVars shared_vars(const ModelConfig& cfg, const Binding& p, std::size_t layer) {
  const std::string lp = layer_prefix(layer);
  SharedSpectralVars s{{p.at(lp + "shared.K.re"), p.at(lp + "shared.K.im")}, {}};
  if (has_amplitude(cfg.variant)) s.P = p.at(lp + "shared.P");
  return s;
}

TaskCPVars task_vars(const ModelConfig& cfg, const Binding& p, std::size_t layer,
                     std::size_t task) {
  const std::string tp = task_prefix(layer, task);
  TaskCPVars t;
  for (std::size_t j = 0; j < 4; ++j) {
    const std::string k = tp + "k" + std::to_string(j + 1);
    t.k[j] = {p.at(k + ".re"), p.at(k + ".im")};
  }
  t.lambda_k = p.at(tp + "lambda_k");
  if (has_amplitude(cfg.variant)) {
    for (std::size_t j = 0; j < 3; ++j) t.p[j] = p.at(tp + "p" + std::to_string(j + 1));
    t.lambda_p = p.at(tp + "lambda_p");
  }
  return t;
}

void check_task(const ModelConfig& cfg, std::size_t task) {
  if (task >= cfg.tasks) {
    throw ContractError("task " + std::to_string(task) + " out of range for " +
                        std::to_string(cfg.tasks) + " tasks");
  }
}

}  // namespace

CVar spectral_weight(const ModelConfig& cfg, const Binding& p, std::size_t layer,
                     std::size_t task) {
  check_task(cfg, task);
  const SharedSpectralVars shared = shared_vars(cfg, p, layer);
  if (!has_task_deltas(cfg.variant)) {
    return build_spectral_weight(shared, nullptr, cfg.variant, cfg.amplitude);
  }
  const TaskCPVars t = task_vars(cfg, p, layer, task);
  return build_spectral_weight(shared, &t, cfg.variant, cfg.amplitude);
}

Var forward(const ModelConfig& cfg, const Binding& p, std::size_t task, Var encoded) {
  check_task(cfg, task);
  const Shape& s = encoded.shape();
  if (s.size() != 4 || s[1] != cfg.grid_h || s[2] != cfg.grid_w || s[3] != cfg.n_sensors + 2) {
    throw ShapeError("forward: encoded input " + shape_string(s) + " does not match config");
  }
  Var v = gelu(linear(encoded, p.at("lift.0.weight"), p.at("lift.0.bias")), cfg.gelu);
  v = linear(v, p.at("lift.1.weight"), p.at("lift.1.bias"));
  const spectral::ModeLayout layout = cfg.layout();
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string owner = has_task_deltas(cfg.variant) ? task_prefix(l, task) : layer_prefix(l);
    const CVar r = spectral_weight(cfg, p, l, task);
    v = fno_layer(v, r, p.at(owner + "W"), p.at(owner + "b"), layout, cfg.gelu);
  }
  v = gelu(linear(v, p.at("proj.0.weight"), p.at("proj.0.bias")), cfg.gelu);
  v = linear(v, p.at("proj.1.weight"), p.at("proj.1.bias"));
  return reshape(v, {s[0], s[1], s[2]});
}

}  // namespace ad

Tensor fno_layer(const Tensor& v, const ComplexTensor& r, const Tensor& w, const Tensor& b,
                 const spectral::ModeLayout& layout, ad::GeluMode gelu) {
  ad::Tape tape;
  const bool batched = v.rank() == 4;
  const Tensor in = batched ? v : v.reshaped([&] {
    Shape s = v.shape();
    s.insert(s.begin(), 1);
    return s;
  }());
  const Tensor out = ad::fno_layer(tape.constant(in), tape.constant(r), tape.constant(w),
                                   tape.constant(b), layout, gelu)
                         .value();
  return batched ? out : out.reshaped(v.shape());
}

Model::Model(ModelConfig cfg, ParamStore params) : cfg_(cfg), params_(std::move(params)) {
  const auto layout = parameter_layout(cfg_);
  if (layout.size() != params_.size()) {
    throw ConfigError("parameter set has " + std::to_string(params_.size()) +
                      " tensors, config expects " + std::to_string(layout.size()));
  }
  for (const auto& spec : layout) {
    if (!params_.contains(spec.name)) throw ConfigError("missing parameter '" + spec.name + "'");
    const Tensor& t = params_.at(spec.name);
    if (t.shape() != spec.shape) {
      throw ConfigError("parameter '" + spec.name + "' has shape " + shape_string(t.shape()) +
                        ", expected " + shape_string(spec.shape));
    }
  }
}

namespace {

Tensor uniform(const Shape& shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(shape);
  for (auto& x : t.data()) x = dist(rng);
  return t;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

Model Model::initialize(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  const double c = static_cast<double>(cfg.channels);
  const double cp_bound = 1.0 / (c * std::sqrt(static_cast<double>(cfg.rank)));
  ParamStore params;
  for (const auto& spec : parameter_layout(cfg)) {
    const std::string& n = spec.name;
    Tensor value;
    if (n.find(".shared.K.") != std::string::npos) {
      value = uniform(spec.shape, 1.0 / c, rng);
    } else if (ends_with(n, "shared.P")) {
      value = Tensor::full(spec.shape, std::log(std::exp(1.0) - 1.0));
    } else if (ends_with(n, "lambda_k") || ends_with(n, "lambda_p")) {
      value = Tensor::full(spec.shape, 1.0 / static_cast<double>(cfg.rank));
    } else if (is_task_param(n, nullptr) && !ends_with(n, ".W") && !ends_with(n, ".b")) {
      value = uniform(spec.shape, cp_bound, rng);
    } else if (ends_with(n, ".W") || ends_with(n, ".b")) {
      value = uniform(spec.shape, 1.0 / std::sqrt(c), rng);
    } else {
      // Lifting/projection: a bias shares the fan-in of the weight added before it.
      const std::size_t fan_in = ends_with(n, ".weight")
                                     ? spec.shape[0]
                                     : params.at(n.substr(0, n.rfind('.')) + ".weight").dim(0);
      value = uniform(spec.shape, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
    }
    params.add(n, std::move(value));
  }
  return Model(cfg, std::move(params));
}

std::vector<std::string> Model::names_for_task(std::size_t task) const {
  if (task >= cfg_.tasks) {
    throw ContractError("task " + std::to_string(task) + " out of range for " +
                        std::to_string(cfg_.tasks) + " tasks");
  }
  std::vector<std::string> names;
  for (const auto& [name, value] : params_.entries()) {
    std::size_t owner = 0;
    if (!is_task_param(name, &owner) || owner == task) names.push_back(name);
  }
  return names;
}

Tensor Model::predict(std::size_t task, const Tensor& sensors) const {
  const bool batched = sensors.rank() == 2;
  const Tensor s = batched ? sensors : sensors.reshaped({1, sensors.size()});
  if (s.dim(1) != cfg_.n_sensors) {
    throw ShapeError("predict: expected " + std::to_string(cfg_.n_sensors) + " sensors, got " +
                     std::to_string(s.dim(1)));
  }
  ad::Tape tape;
  const ad::Binding p(tape, params_, names_for_task(task), false);
  const Tensor out =
      ad::forward(cfg_, p, task, tape.constant(encode_input(s, cfg_.grid_h, cfg_.grid_w))).value();
  return batched ? out : out.reshaped({cfg_.grid_h, cfg_.grid_w});
}

ComplexTensor Model::spectral_weight(std::size_t layer, std::size_t task) const {
  ad::Tape tape;
  const ad::Binding p(tape, params_, names_for_task(task), false);
  return ad::spectral_weight(cfg_, p, layer, task).value();
}

ComplexTensor Model::unitary_part(std::size_t layer, std::size_t task) const {
  if (!has_amplitude(cfg_.variant)) {
    throw ContractError("variant " + to_string(cfg_.variant) + " has no unitary factor");
  }
  ad::Tape tape;
  const ad::Binding p(tape, params_, names_for_task(task), false);
  const std::string lp = layer_prefix(layer);
  const ad::SharedSpectralVars shared{{p.at(lp + "shared.K.re"), p.at(lp + "shared.K.im")},
                                      p.at(lp + "shared.P")};
  const std::string tp = task_prefix(layer, task);
  ad::TaskCPVars t;
  for (std::size_t j = 0; j < 4; ++j) {
    const std::string k = tp + "k" + std::to_string(j + 1);
    t.k[j] = {p.at(k + ".re"), p.at(k + ".im")};
  }
  t.lambda_k = p.at(tp + "lambda_k");
  return ad::build_unitary_part(shared, &t, cfg_.variant).value();
}

ParamCount Model::count_params() const {
  ParamCount count;
  count.per_task.assign(cfg_.tasks, 0);
  for (const auto& [name, value] : params_.entries()) {
    std::size_t owner = 0;
    if (is_task_param(name, &owner)) {
      count.per_task.at(owner) += value.size();
    } else {
      count.shared += value.size();
    }
    count.total += value.size();
  }
  return count;
}

}  // namespace mtlfno
