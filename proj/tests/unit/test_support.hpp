#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <random>
#include <vector>

#include "mtlfno/autodiff.hpp"
#include "mtlfno/tensor.hpp"

namespace mtlfno::testing {

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return t;
}

inline ComplexTensor random_complex(const Shape& shape, std::mt19937_64& rng,
                                    double lo = -1.0, double hi = 1.0) {
  Tensor re = random_tensor(shape, rng, lo, hi);
  Tensor im = random_tensor(shape, rng, lo, hi);
  return {std::move(re), std::move(im)};
}

inline std::complex<double> at(const ComplexTensor& t, std::size_t i) {
  return {t.re[i], t.im[i]};
}

/// Random skew-Hermitian [.., n, n] tensor.
inline ComplexTensor random_skew_hermitian(const Shape& shape, std::mt19937_64& rng,
                                           double scale = 1.0) {
  ComplexTensor k = random_complex(shape, rng, -scale, scale);
  const std::size_t n = shape.back();
  const std::size_t slices = k.size() / (n * n);
  for (std::size_t q = 0; q < slices; ++q) {
    const std::size_t b = q * n * n;
    for (std::size_t i = 0; i < n; ++i) {
      k.re[b + i * n + i] = 0.0;
      for (std::size_t j = i + 1; j < n; ++j) {
        k.re[b + j * n + i] = -k.re[b + i * n + j];
        k.im[b + j * n + i] = k.im[b + i * n + j];
      }
    }
  }
  return k;
}

/// Loss builder over a list of parameter handles.
using LossFn = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

struct GradCheck {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

/// Compares tape gradients with central differences for every entry of
/// every input. Relative error uses max(|analytic|, |numeric|, floor).
inline GradCheck check_gradients(const LossFn& loss, const std::vector<Tensor>& inputs,
                                 double h = 1e-5, double floor = 1e-6) {
  auto evaluate = [&](const std::vector<Tensor>& xs) {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const auto& x : xs) vars.push_back(tape.constant(x));
    return loss(tape, vars).value().item();
  };
  ad::Tape tape;
  std::vector<ad::Var> vars;
  for (const auto& x : inputs) vars.push_back(tape.parameter(x));
  const auto grads = tape.backward(loss(tape, vars));

  GradCheck result;
  std::vector<Tensor> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor analytic = grads.of(vars[k]);
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double x0 = inputs[k][i];
      probe[k][i] = x0 + h;
      const double up = evaluate(probe);
      probe[k][i] = x0 - h;
      const double down = evaluate(probe);
      probe[k][i] = x0;
      const double numeric = (up - down) / (2.0 * h);
      const double err = std::abs(numeric - analytic[i]);
      const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), floor});
      result.max_abs_error = std::max(result.max_abs_error, err);
      result.max_rel_error = std::max(result.max_rel_error, err / denom);
    }
  }
  return result;
}

/// Scalar probe: sum of the value times a fixed random weight, so every
/// output entry contributes a distinct sensitivity.
inline ad::Var weighted_sum(ad::Tape& tape, ad::Var v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return ad::sum(ad::mul(v, tape.constant(random_tensor(v.shape(), rng))));
}

}  // namespace mtlfno::testing
