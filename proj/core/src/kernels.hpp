#pragma once

// Elementwise activation kernels shared by the tape ops.

#include <Eigen/Core>
#include <cstddef>
#include <vector>

#include "mtlfno/autodiff.hpp"
#include "mtlfno/tensor.hpp"

namespace mtlfno::detail {

using AlignedBuffer = std::vector<double, AlignedAllocator<double>>;

inline constexpr double kSqrt2OverPi = 0.7978845608028654;
inline constexpr double kGeluCubic = 0.044715;

/// out = gelu(x). In tanh mode `t` receives the tanh term for the backward pass.
inline void gelu_forward(const double* x, double* out, double* t, std::size_t n,
                         ad::GeluMode mode) {
  if (mode == ad::GeluMode::erf) {
    for (std::size_t i = 0; i < n; ++i) out[i] = ad::gelu_value(x[i], mode);
    return;
  }
  const auto len = static_cast<Eigen::Index>(n);
  const Eigen::Map<const Eigen::ArrayXd> xa(x, len);
  Eigen::Map<Eigen::ArrayXd> ta(t, len);
  // tanh(u) = 1 - 2 / (exp(2u) + 1)
  ta = (2.0 * kSqrt2OverPi) * (xa + kGeluCubic * xa.cube());
  ta = 1.0 - 2.0 / (ta.exp() + 1.0);
  Eigen::Map<Eigen::ArrayXd>(out, len) = 0.5 * xa * (1.0 + ta);
}

/// gx = g * gelu'(x), using the tanh term saved by gelu_forward.
inline void gelu_backward(const double* x, const double* t, const double* g, double* gx,
                          std::size_t n, ad::GeluMode mode) {
  if (mode == ad::GeluMode::erf) {
    for (std::size_t i = 0; i < n; ++i) gx[i] = g[i] * ad::gelu_grad(x[i], mode);
    return;
  }
  const auto len = static_cast<Eigen::Index>(n);
  const Eigen::Map<const Eigen::ArrayXd> xa(x, len), ta(t, len), ga(g, len);
  Eigen::Map<Eigen::ArrayXd>(gx, len) =
      ga * (0.5 * (1.0 + ta) +
            (0.5 * kSqrt2OverPi) * xa * (1.0 - ta.square()) * (1.0 + 3.0 * kGeluCubic * xa.square()));
}

}  // namespace mtlfno::detail
