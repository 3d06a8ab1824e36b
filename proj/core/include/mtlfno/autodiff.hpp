#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtlfno/tensor.hpp"

namespace mtlfno::ad {

class Tape;

/// Handle to a node recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Complex quantity on the tape, kept as independent real and imaginary nodes.
struct CVar {
  Var re;
  Var im;

  ComplexTensor value() const;
  const Shape& shape() const { return re.shape(); }
};

/// Gradients of a scalar loss with respect to the tape's parameters.
class Gradients {
 public:
  Gradients() = default;
  Gradients(const Tape* tape, std::vector<Tensor> grads);

  /// Gradient for a parameter; zeros when the loss does not depend on it.
  Tensor of(Var param) const;
  std::pair<Tensor, Tensor> of(CVar param) const;

 private:
  const Tape* tape_ = nullptr;
  std::vector<Tensor> grads_;
};

/// Records a computation graph for reverse-mode differentiation.
///
/// Nodes are appended in creation order, which is a valid topological order.
/// A tape is single-threaded; values stay valid for the tape's lifetime.
class Tape {
 public:
  /// Receives one gradient pointer per output of the recorded op
  /// (nullptr when that output received no gradient).
  using BackwardFn =
      std::function<void(std::span<const Tensor* const> grad_outputs, Tape&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var parameter(Tensor value);
  CVar constant(ComplexTensor value);
  CVar parameter(ComplexTensor value);

  Var record(Tensor value, std::initializer_list<Var> parents,
             BackwardFn backward, const char* op);
  std::vector<Var> record(std::vector<Tensor> values, std::span<const Var> parents,
                          BackwardFn backward, const char* op);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  const char* op_name(std::size_t id) const { return nodes_[id].op; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Adds `grad` into the pending gradient of `target`; only valid inside a
  /// backward function. Targets that do not require gradients are ignored.
  void accumulate(Var target, Tensor grad);

  /// Reverse sweep from a scalar loss.
  Gradients backward(Var loss);

  /// Describes the first node (in creation order) holding a NaN or Inf.
  std::optional<std::string> first_non_finite() const;

 private:
  struct Node {
    Tensor value;
    bool requires_grad = false;
    bool leaf = false;
    const char* op = "";
    std::size_t group_first = 0;
    std::size_t group_size = 1;
    BackwardFn backward;
  };

  std::deque<Node> nodes_;
  std::vector<Tensor> pending_;
  bool in_backward_ = false;
};

enum class GeluMode { tanh, erf };

// Elementwise ops. Binary ops broadcast one operand along trailing axes:
// its shape, right-aligned, must match or be 1 in every axis.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double factor);
Var gelu(Var a, GeluMode mode = GeluMode::tanh);
Var softplus(Var a);

/// Matrix product over the last two axes; leading (batch) axes must agree.
Var matmul(Var a, Var b);
/// Pointwise affine map over the trailing axis: x[..., in] w[in, out] + b[out].
Var linear(Var x, Var w, Var b);
/// Swaps the last two axes.
Var transpose(Var a);
Var reshape(Var a, Shape shape);

Var sum(Var a);
Var mean(Var a);
/// Euclidean norm of each row of a [rows x cols] tensor -> [rows].
Var row_norms(Var a);

// Scalar kernels shared with tests.
double gelu_value(double x, GeluMode mode);
double gelu_grad(double x, GeluMode mode);
double softplus_value(double x);

}  // namespace mtlfno::ad
