#pragma once

#include "mtlfno/autodiff.hpp"
#include "mtlfno/tensor.hpp"

namespace mtlfno {

/// Pivot magnitude below which a matrix slice is treated as singular.
inline constexpr double kSingularPivot = 1e-12;

namespace ad {

CVar cadd(CVar a, CVar b);
CVar csub(CVar a, CVar b);
CVar cscale(CVar a, double factor);
/// Multiplies both parts by a real tensor (broadcast along trailing axes).
CVar cmul_real(CVar a, Var real);
/// Conjugate transpose over the last two axes.
CVar conj_transpose(CVar a);

/// Complex product over the last two axes, composed from four real matmuls.
CVar complex_matmul(CVar a, CVar b);

/// Slice-wise inverse of [..., n, n]; throws SingularMatrixError naming the
/// first slice whose LU pivot falls below kSingularPivot.
CVar complex_inverse(CVar a);

}  // namespace ad

ComplexTensor complex_matmul(const ComplexTensor& a, const ComplexTensor& b);
ComplexTensor complex_inverse(const ComplexTensor& a);
ComplexTensor conj_transpose(const ComplexTensor& a);

}  // namespace mtlfno
