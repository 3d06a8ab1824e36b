#pragma once

// Thin wrappers over Eigen GEMM on row-major buffers.

#include <Eigen/Core>
#include <cstddef>

namespace mtlfno::detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

inline ConstMapMat view(const double* p, std::size_t rows, std::size_t cols) {
  return ConstMapMat(p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

inline MapMat view(double* p, std::size_t rows, std::size_t cols) {
  return MapMat(p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

/// C (+)= op(A) * op(B), all row-major. op(A) is m x k, op(B) is k x n.
inline void gemm(const double* a, const double* b, double* c, std::size_t m,
                 std::size_t k, std::size_t n, bool trans_a, bool trans_b,
                 double alpha, bool accumulate) {
  auto out = view(c, m, n);
  if (!accumulate) out.setZero();
  if (!trans_a && !trans_b) {
    out.noalias() += alpha * (view(a, m, k) * view(b, k, n));
  } else if (trans_a && !trans_b) {
    out.noalias() += alpha * (view(a, k, m).transpose() * view(b, k, n));
  } else if (!trans_a && trans_b) {
    out.noalias() += alpha * (view(a, m, k) * view(b, n, k).transpose());
  } else {
    out.noalias() += alpha * (view(a, k, m).transpose() * view(b, n, k).transpose());
  }
}

}  // namespace mtlfno::detail
