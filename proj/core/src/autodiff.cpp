#include "mtlfno/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <sstream>

#include "kernels.hpp"
#include "linalg.hpp"
#include "mtlfno/error.hpp"

namespace mtlfno::ad {

const Tensor& Var::value() const { return tape->value(id); }

ComplexTensor CVar::value() const { return ComplexTensor(re.value(), im.value()); }

Gradients::Gradients(const Tape* tape, std::vector<Tensor> grads)
    : tape_(tape), grads_(std::move(grads)) {}

Tensor Gradients::of(Var param) const {
  if (param.tape != tape_ || param.id >= grads_.size()) {
    throw ContractError("gradient requested for a variable of another tape");
  }
  if (grads_[param.id].empty()) return Tensor(param.shape());
  return grads_[param.id];
}

std::pair<Tensor, Tensor> Gradients::of(CVar param) const {
  return {of(param.re), of(param.im)};
}

Var Tape::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  node.leaf = true;
  node.op = "constant";
  node.group_first = nodes_.size();
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Tape::parameter(Tensor value) {
  Var v = constant(std::move(value));
  nodes_[v.id].requires_grad = true;
  nodes_[v.id].op = "parameter";
  return v;
}

CVar Tape::constant(ComplexTensor value) {
  Var re = constant(std::move(value.re));
  Var im = constant(std::move(value.im));
  return {re, im};
}

CVar Tape::parameter(ComplexTensor value) {
  Var re = parameter(std::move(value.re));
  Var im = parameter(std::move(value.im));
  return {re, im};
}

Var Tape::record(Tensor value, std::initializer_list<Var> parents,
                 BackwardFn backward, const char* op) {
  std::vector<Tensor> values;
  values.push_back(std::move(value));
  std::vector<Var> ps(parents);
  return record(std::move(values), ps, std::move(backward), op).front();
}

std::vector<Var> Tape::record(std::vector<Tensor> values,
                              std::span<const Var> parents, BackwardFn backward,
                              const char* op) {
  if (in_backward_) throw ContractError("cannot record while differentiating");
  bool needs_grad = false;
  for (const Var& p : parents) {
    if (p.tape != this) throw ContractError(std::string(op) + ": operand from another tape");
    needs_grad = needs_grad || nodes_[p.id].requires_grad;
  }
  const std::size_t first = nodes_.size();
  std::vector<Var> out;
  out.reserve(values.size());
  for (auto& v : values) {
    Node node;
    node.value = std::move(v);
    node.requires_grad = needs_grad;
    node.op = op;
    node.group_first = first;
    node.group_size = values.size();
    nodes_.push_back(std::move(node));
    out.push_back(Var{this, nodes_.size() - 1});
  }
  if (needs_grad) nodes_.back().backward = std::move(backward);
  return out;
}

void Tape::accumulate(Var target, Tensor grad) {
  if (!in_backward_) throw ContractError("accumulate outside backward pass");
  Node& node = nodes_[target.id];
  if (!node.requires_grad) return;
  if (grad.shape() != node.value.shape()) {
    throw ShapeError(std::string("gradient shape ") + shape_string(grad.shape()) +
                     " does not match node '" + node.op + "' of shape " +
                     shape_string(node.value.shape()));
  }
  Tensor& slot = pending_[target.id];
  if (slot.empty()) {
    slot = std::move(grad);
  } else {
    auto dst = slot.data();
    auto src = grad.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
}

Gradients Tape::backward(Var loss) {
  if (loss.tape != this) throw ContractError("loss belongs to another tape");
  if (nodes_[loss.id].value.size() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " +
                        shape_string(nodes_[loss.id].value.shape()));
  }
  pending_.assign(nodes_.size(), Tensor{});
  in_backward_ = true;
  if (nodes_[loss.id].requires_grad) {
    pending_[loss.id] = Tensor::full(nodes_[loss.id].value.shape(), 1.0);
  }
  std::vector<const Tensor*> grad_ptrs;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.backward) continue;
    grad_ptrs.clear();
    bool any = false;
    for (std::size_t j = node.group_first; j < node.group_first + node.group_size; ++j) {
      const Tensor* g = pending_[j].empty() ? nullptr : &pending_[j];
      any = any || g != nullptr;
      grad_ptrs.push_back(g);
    }
    if (!any) continue;
    try {
      node.backward(grad_ptrs, *this);
    } catch (...) {
      in_backward_ = false;
      throw;
    }
    for (std::size_t j = node.group_first; j < node.group_first + node.group_size; ++j) {
      if (!nodes_[j].leaf) pending_[j] = Tensor{};
    }
  }
  in_backward_ = false;
  std::vector<Tensor> grads(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].leaf && nodes_[i].requires_grad) grads[i] = std::move(pending_[i]);
  }
  pending_.clear();
  return Gradients(this, std::move(grads));
}

std::optional<std::string> Tape::first_non_finite() const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].value.all_finite()) {
      std::ostringstream os;
      os << "node #" << i << " (" << nodes_[i].op << ", shape "
         << shape_string(nodes_[i].value.shape()) << ")";
      return os.str();
    }
  }
  return std::nullopt;
}

namespace {

Tape& tape_of(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) {
    throw ContractError("operands belong to different tapes");
  }
  return *a.tape;
}

bool broadcastable(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  const std::size_t off = big.size() - small.size();
  for (std::size_t i = 0; i < small.size(); ++i) {
    if (small[i] != big[off + i] && small[i] != 1) return false;
  }
  return true;
}

// Maps flat indices of the broadcast result onto the smaller operand. When the
// smaller shape is a plain suffix of the larger one, the result is a sequence
// of contiguous blocks each aligned with the whole smaller operand.
class Expansion {
 public:
  Expansion(const Shape& small, const Shape& big) : size_(shape_size(small)) {
    const std::size_t off = big.size() - small.size();
    suffix_ = std::equal(small.begin(), small.end(), big.begin() + off);
    if (suffix_) return;
    map_.resize(shape_size(big));
    std::vector<std::size_t> stride(big.size(), 0);
    std::size_t s = 1;
    for (std::size_t i = small.size(); i-- > 0;) {
      stride[off + i] = small[i] == 1 ? 0 : s;
      s *= small[i];
    }
    std::vector<std::size_t> idx(big.size(), 0);
    std::size_t pos = 0;
    for (std::size_t flat = 0; flat < map_.size(); ++flat) {
      map_[flat] = pos;
      for (std::size_t ax = big.size(); ax-- > 0;) {
        ++idx[ax];
        pos += stride[ax];
        if (idx[ax] < big[ax]) break;
        pos -= stride[ax] * idx[ax];
        idx[ax] = 0;
      }
    }
  }

  bool suffix() const noexcept { return suffix_; }
  std::size_t block() const noexcept { return size_; }
  std::size_t operator()(std::size_t flat) const { return map_[flat]; }

 private:
  std::size_t size_;
  bool suffix_ = true;
  std::vector<std::size_t> map_;
};

enum class BinaryKind { add, sub, mul };

const char* binary_name(BinaryKind kind) {
  switch (kind) {
    case BinaryKind::add: return "add";
    case BinaryKind::sub: return "sub";
    case BinaryKind::mul: return "mul";
  }
  return "?";
}

template <BinaryKind K>
inline double apply(double p, double q) {
  if constexpr (K == BinaryKind::add) return p + q;
  if constexpr (K == BinaryKind::sub) return p - q;
  return p * q;
}

// out = big (op) small, or small (op) big when `swapped`.
template <BinaryKind K>
void broadcast_apply(const double* big, const double* small, double* out, std::size_t n,
                     const Expansion& ex, bool swapped) {
  if (ex.suffix()) {
    const std::size_t blk = ex.block();
    for (std::size_t base = 0; base < n; base += blk) {
      const double* x = big + base;
      double* o = out + base;
      if (swapped) {
        for (std::size_t j = 0; j < blk; ++j) o[j] = apply<K>(small[j], x[j]);
      } else {
        for (std::size_t j = 0; j < blk; ++j) o[j] = apply<K>(x[j], small[j]);
      }
    }
    return;
  }
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = swapped ? apply<K>(small[ex(i)], big[i]) : apply<K>(big[i], small[ex(i)]);
  }
}

template <BinaryKind K>
void forward_kernel(const Tensor& av, const Tensor& bv, int mode, Tensor& out) {
  const double* x = av.data().data();
  const double* y = bv.data().data();
  double* o = out.data().data();
  const std::size_t n = out.size();
  if (mode == 0) {
    for (std::size_t i = 0; i < n; ++i) o[i] = apply<K>(x[i], y[i]);
  } else if (mode == 1) {
    broadcast_apply<K>(x, y, o, n, Expansion(bv.shape(), out.shape()), false);
  } else {
    broadcast_apply<K>(y, x, o, n, Expansion(av.shape(), out.shape()), true);
  }
}

// Sums `src` (shaped like the broadcast result) down onto the small operand,
// multiplied elementwise by `weight` (same shape as src) when given.
void reduce_onto(const double* src, const double* weight, double factor, std::size_t n,
                 const Expansion& ex, double* dst) {
  if (ex.suffix()) {
    const std::size_t blk = ex.block();
    for (std::size_t base = 0; base < n; base += blk) {
      if (weight) {
        for (std::size_t j = 0; j < blk; ++j) dst[j] += factor * src[base + j] * weight[base + j];
      } else {
        for (std::size_t j = 0; j < blk; ++j) dst[j] += factor * src[base + j];
      }
    }
    return;
  }
  for (std::size_t i = 0; i < n; ++i) {
    dst[ex(i)] += factor * src[i] * (weight ? weight[i] : 1.0);
  }
}

// Elementwise product with the small operand broadcast: dst = g * small.
void scale_by_small(const double* g, const double* small, std::size_t n, const Expansion& ex,
                    double* dst) {
  if (ex.suffix()) {
    const std::size_t blk = ex.block();
    for (std::size_t base = 0; base < n; base += blk) {
      for (std::size_t j = 0; j < blk; ++j) dst[base + j] = g[base + j] * small[j];
    }
    return;
  }
  for (std::size_t i = 0; i < n; ++i) dst[i] = g[i] * small[ex(i)];
}

Var binary(Var a, Var b, BinaryKind kind) {
  Tape& tape = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  // 0: same shape, 1: b expands to a, 2: a expands to b
  int mode = 0;
  if (av.shape() != bv.shape()) {
    if (broadcastable(bv.shape(), av.shape())) {
      mode = 1;
    } else if (broadcastable(av.shape(), bv.shape())) {
      mode = 2;
    } else {
      throw ShapeError(std::string(binary_name(kind)) + ": cannot broadcast " +
                       shape_string(av.shape()) + " with " +
                       shape_string(bv.shape()));
    }
  }
  Tensor out(mode == 2 ? bv.shape() : av.shape());
  switch (kind) {
    case BinaryKind::add: forward_kernel<BinaryKind::add>(av, bv, mode, out); break;
    case BinaryKind::sub: forward_kernel<BinaryKind::sub>(av, bv, mode, out); break;
    case BinaryKind::mul: forward_kernel<BinaryKind::mul>(av, bv, mode, out); break;
  }

  auto backward = [a, b, kind, mode](std::span<const Tensor* const> g, Tape& t) {
    const Tensor& go = *g[0];
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const std::size_t n = go.size();
    const double* gp = go.data().data();
    const double sign_b = kind == BinaryKind::sub ? -1.0 : 1.0;
    const bool is_mul = kind == BinaryKind::mul;
    // Gradient for an operand with the full output shape.
    auto full_grad = [&](const Tensor* other, bool other_small, double factor,
                         const Shape& small_shape) {
      if (!is_mul) {
        if (factor == 1.0) return go;
        Tensor r(go.shape());
        for (std::size_t i = 0; i < n; ++i) r[i] = factor * gp[i];
        return r;
      }
      Tensor r(go.shape());
      if (other_small) {
        scale_by_small(gp, other->data().data(), n, Expansion(small_shape, go.shape()),
                       r.data().data());
      } else {
        const double* o = other->data().data();
        for (std::size_t i = 0; i < n; ++i) r[i] = gp[i] * o[i];
      }
      return r;
    };
    // Gradient for an operand that was broadcast (mode != 0).
    auto small_grad = [&](const Tensor& self, const Tensor* other, double factor) {
      Tensor r(self.shape());
      reduce_onto(gp, is_mul ? other->data().data() : nullptr, factor, n,
                  Expansion(self.shape(), go.shape()), r.data().data());
      return r;
    };
    if (t.requires_grad(a)) {
      if (mode == 2) {
        t.accumulate(a, small_grad(av, &bv, 1.0));
      } else {
        t.accumulate(a, full_grad(&bv, mode == 1, 1.0, bv.shape()));
      }
    }
    if (t.requires_grad(b)) {
      if (mode == 1) {
        t.accumulate(b, small_grad(bv, &av, sign_b));
      } else {
        t.accumulate(b, full_grad(&av, mode == 2, sign_b, av.shape()));
      }
    }
  };
  return tape.record(std::move(out), {a, b}, std::move(backward), binary_name(kind));
}

template <class F, class D>
Var unary(Var a, const char* name, F f, D dfdx) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  auto backward = [a, dfdx](std::span<const Tensor* const> g, Tape& t) {
    const Tensor& av = a.value();
    Tensor ga(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) ga[i] = (*g[0])[i] * dfdx(av[i]);
    t.accumulate(a, std::move(ga));
  };
  return a.tape->record(std::move(out), {a}, std::move(backward), name);
}

using detail::kGeluCubic;
using detail::kSqrt2OverPi;

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

double gelu_value(double x, GeluMode mode) {
  if (mode == GeluMode::erf) return 0.5 * x * std::erfc(-x / std::numbers::sqrt2);
  return 0.5 * x * (1.0 + std::tanh(kSqrt2OverPi * (x + kGeluCubic * x * x * x)));
}

double gelu_grad(double x, GeluMode mode) {
  if (mode == GeluMode::erf) {
    const double cdf = 0.5 * std::erfc(-x / std::numbers::sqrt2);
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return cdf + x * pdf;
  }
  const double u = kSqrt2OverPi * (x + kGeluCubic * x * x * x);
  const double th = std::tanh(u);
  const double du = kSqrt2OverPi * (1.0 + 3.0 * kGeluCubic * x * x);
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
}

double softplus_value(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

Var add(Var a, Var b) { return binary(a, b, BinaryKind::add); }
Var sub(Var a, Var b) { return binary(a, b, BinaryKind::sub); }
Var mul(Var a, Var b) { return binary(a, b, BinaryKind::mul); }

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double factor) {
  return unary(
      a, "scale", [factor](double x) { return factor * x; },
      [factor](double) { return factor; });
}

Var gelu(Var a, GeluMode mode) {
  const Tensor& av = a.value();
  auto th = std::make_shared<detail::AlignedBuffer>(mode == GeluMode::tanh ? av.size() : 0);
  Tensor out(av.shape());
  detail::gelu_forward(av.data().data(), out.data().data(), th->data(), av.size(), mode);
  auto backward = [a, th, mode](std::span<const Tensor* const> g, Tape& tape) {
    const Tensor& av = a.value();
    Tensor ga(av.shape());
    detail::gelu_backward(av.data().data(), th->data(), g[0]->data().data(), ga.data().data(),
                          av.size(), mode);
    tape.accumulate(a, std::move(ga));
  };
  return a.tape->record(std::move(out), {a}, std::move(backward), "gelu");
}

Var softplus(Var a) { return unary(a, "softplus", softplus_value, sigmoid); }

namespace {

struct MatmulDims {
  std::size_t batch, m, k, n;
};

MatmulDims matmul_dims(const Shape& a, const Shape& b) {
  if (a.size() < 2 || a.size() != b.size()) {
    throw ShapeError("matmul: operands must share rank >= 2, got " +
                     shape_string(a) + " and " + shape_string(b));
  }
  const std::size_t r = a.size();
  if (!std::equal(a.begin(), a.end() - 2, b.begin())) {
    throw ShapeError("matmul: batch extents differ, " + shape_string(a) + " vs " +
                     shape_string(b));
  }
  if (a[r - 1] != b[r - 2]) {
    throw ShapeError("matmul: inner extents differ, " + shape_string(a) + " vs " +
                     shape_string(b));
  }
  std::size_t batch = 1;
  for (std::size_t i = 0; i + 2 < r; ++i) batch *= a[i];
  return {batch, a[r - 2], a[r - 1], b[r - 1]};
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  const MatmulDims d = matmul_dims(a.shape(), b.shape());
  Shape out_shape = a.shape();
  out_shape.back() = d.n;
  Tensor out(out_shape);
  const double* ap = a.value().data().data();
  const double* bp = b.value().data().data();
  double* op = out.data().data();
  for (std::size_t s = 0; s < d.batch; ++s) {
    detail::gemm(ap + s * d.m * d.k, bp + s * d.k * d.n, op + s * d.m * d.n, d.m,
                 d.k, d.n, false, false, 1.0, false);
  }
  auto backward = [a, b, d](std::span<const Tensor* const> g, Tape& t) {
    const double* gp = g[0]->data().data();
    const double* ap = a.value().data().data();
    const double* bp = b.value().data().data();
    if (t.requires_grad(a)) {
      Tensor ga(a.shape());
      for (std::size_t s = 0; s < d.batch; ++s) {
        detail::gemm(gp + s * d.m * d.n, bp + s * d.k * d.n,
                     ga.data().data() + s * d.m * d.k, d.m, d.n, d.k, false, true,
                     1.0, false);
      }
      t.accumulate(a, std::move(ga));
    }
    if (t.requires_grad(b)) {
      Tensor gb(b.shape());
      for (std::size_t s = 0; s < d.batch; ++s) {
        detail::gemm(ap + s * d.m * d.k, gp + s * d.m * d.n,
                     gb.data().data() + s * d.k * d.n, d.k, d.m, d.n, true, false,
                     1.0, false);
      }
      t.accumulate(b, std::move(gb));
    }
  };
  return tape.record(std::move(out), {a, b}, std::move(backward), "matmul");
}

Var linear(Var x, Var w, Var b) {
  Tape& tape = tape_of(x, w);
  tape_of(x, b);
  const Shape& xs = x.shape();
  if (xs.empty() || w.value().rank() != 2 || w.shape()[0] != xs.back() ||
      b.value().rank() != 1 || b.shape()[0] != w.shape()[1]) {
    throw ShapeError("linear: input " + shape_string(xs) + ", weight " +
                     shape_string(w.shape()) + ", bias " + shape_string(b.shape()));
  }
  const std::size_t in = xs.back(), out_dim = w.shape()[1];
  const std::size_t rows = x.value().size() / in;
  Shape out_shape = xs;
  out_shape.back() = out_dim;
  Tensor out(out_shape);
  {
    auto o = detail::view(out.data().data(), rows, out_dim);
    o.rowwise() = Eigen::Map<const Eigen::RowVectorXd>(b.value().data().data(),
                                                        static_cast<Eigen::Index>(out_dim));
    detail::gemm(x.value().data().data(), w.value().data().data(), out.data().data(), rows, in,
                 out_dim, false, false, 1.0, true);
  }
  auto backward = [x, w, b, rows, in, out_dim](std::span<const Tensor* const> g, Tape& t) {
    const double* gp = g[0]->data().data();
    if (t.requires_grad(x)) {
      Tensor gx(x.shape());
      detail::gemm(gp, w.value().data().data(), gx.data().data(), rows, out_dim, in, false, true,
                   1.0, false);
      t.accumulate(x, std::move(gx));
    }
    if (t.requires_grad(w)) {
      Tensor gw(w.shape());
      detail::gemm(x.value().data().data(), gp, gw.data().data(), in, rows, out_dim, true, false,
                   1.0, false);
      t.accumulate(w, std::move(gw));
    }
    if (t.requires_grad(b)) {
      Tensor gb(b.shape());
      Eigen::Map<Eigen::RowVectorXd>(gb.data().data(), static_cast<Eigen::Index>(out_dim)) =
          detail::view(gp, rows, out_dim).colwise().sum();
      t.accumulate(b, std::move(gb));
    }
  };
  return tape.record(std::move(out), {x, w, b}, std::move(backward), "linear");
}

namespace {

Tensor transpose_last2(const Tensor& x) {
  const Shape& s = x.shape();
  if (s.size() < 2) throw ShapeError("transpose needs rank >= 2, got " + shape_string(s));
  const std::size_t r = s.size();
  const std::size_t m = s[r - 2], n = s[r - 1];
  const std::size_t batch = x.size() / (m * n);
  Shape out_shape = s;
  std::swap(out_shape[r - 2], out_shape[r - 1]);
  Tensor out(out_shape);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* src = x.data().data() + b * m * n;
    double* dst = out.data().data() + b * m * n;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
    }
  }
  return out;
}

}  // namespace

Var transpose(Var a) {
  auto backward = [a](std::span<const Tensor* const> g, Tape& t) {
    t.accumulate(a, transpose_last2(*g[0]));
  };
  return a.tape->record(transpose_last2(a.value()), {a}, std::move(backward),
                        "transpose");
}

Var reshape(Var a, Shape shape) {
  auto backward = [a](std::span<const Tensor* const> g, Tape& t) {
    t.accumulate(a, g[0]->reshaped(a.shape()));
  };
  return a.tape->record(a.value().reshaped(std::move(shape)), {a},
                        std::move(backward), "reshape");
}

Var sum(Var a) {
  double s = 0.0;
  for (double x : a.value().data()) s += x;
  auto backward = [a](std::span<const Tensor* const> g, Tape& t) {
    t.accumulate(a, Tensor::full(a.shape(), g[0]->item()));
  };
  return a.tape->record(Tensor::scalar(s), {a}, std::move(backward), "sum");
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var row_norms(Var a) {
  const Tensor& av = a.value();
  if (av.rank() != 2) {
    throw ShapeError("row_norms expects [rows x cols], got " + shape_string(av.shape()));
  }
  const std::size_t rows = av.dim(0), cols = av.dim(1);
  Tensor out({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += av[r * cols + c] * av[r * cols + c];
    out[r] = std::sqrt(s);
  }
  const Var result = a.tape->record(
      std::move(out), {a},
      [a, rows, cols](std::span<const Tensor* const> g, Tape& t) {
        // d|x|/dx = x/|x|; the zero vector takes the zero subgradient.
        const Tensor& av = a.value();
        Tensor ga(av.shape());
        for (std::size_t r = 0; r < rows; ++r) {
          double s = 0.0;
          for (std::size_t c = 0; c < cols; ++c) s += av[r * cols + c] * av[r * cols + c];
          const double norm = std::sqrt(s);
          if (norm == 0.0) continue;
          const double f = (*g[0])[r] / norm;
          for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] = f * av[r * cols + c];
        }
        t.accumulate(a, std::move(ga));
      },
      "row_norms");
  return result;
}

}  // namespace mtlfno::ad
