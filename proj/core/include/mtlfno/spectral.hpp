#pragma once

#include <cstddef>
#include <vector>

#include "mtlfno/autodiff.hpp"
#include "mtlfno/tensor.hpp"

// 2D Fourier transforms over the spatial axes of channel-last grids.
//
// Grids are [H, W, C] or batched [B, H, W, C]. Spectra use the half-spectrum
// layout [.., H, W/2+1, C]. The forward transform is unnormalized; the inverse
// divides by H*W and reads the half spectrum the way numpy's irfft2 does
// (imaginary parts of self-conjugate bins are ignored).
namespace mtlfno::spectral {

/// Retained Fourier modes. Along axis 0 the first k1/2 and last k1/2 rows are
/// kept (positive and negative frequencies), along the half-spectrum axis the
/// first k2 columns.
struct ModeLayout {
  std::size_t k1 = 0;
  std::size_t k2 = 0;
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;

  std::size_t half_width() const noexcept { return grid_w / 2 + 1; }
  /// Throws ShapeError unless k1 is even, 0 < k1 <= H and 0 < k2 <= W/2+1.
  void validate() const;
  /// Source rows in the packed order: 0..k1/2-1 then H-k1/2..H-1.
  std::vector<std::size_t> kept_rows() const;
};

ComplexTensor rfft2(const Tensor& v);
Tensor irfft2(const ComplexTensor& s, std::size_t h, std::size_t w);
ComplexTensor truncate_modes(const ComplexTensor& s, const ModeLayout& layout);
ComplexTensor pad_modes(const ComplexTensor& t, const ModeLayout& layout);

/// out[.., m1, m2, o] = sum_i R[m1, m2, o, i] * v_hat[.., m1, m2, i].
ComplexTensor spectral_conv(const ComplexTensor& v_hat, const ComplexTensor& weight);

/// truncate_modes(rfft2(v)) computed directly on the retained modes.
ComplexTensor truncated_rfft2(const Tensor& v, const ModeLayout& layout);
/// irfft2(pad_modes(t)) computed directly from the retained modes.
Tensor padded_irfft2(const ComplexTensor& t, const ModeLayout& layout);

}  // namespace mtlfno::spectral

namespace mtlfno::ad {

CVar rfft2(Var v);
Var irfft2(CVar s, std::size_t h, std::size_t w);
CVar truncate_modes(CVar s, const spectral::ModeLayout& layout);
CVar pad_modes(CVar t, const spectral::ModeLayout& layout);
CVar spectral_conv(CVar v_hat, CVar weight);
CVar truncated_rfft2(Var v, const spectral::ModeLayout& layout);
Var padded_irfft2(CVar t, const spectral::ModeLayout& layout);

/// One fused Fourier layer on [B, H, W, C]:
/// gelu(v w + b + padded_irfft2(spectral_conv(truncated_rfft2(v), r))).
Var fourier_layer(Var v, CVar r, Var w, Var b, const spectral::ModeLayout& layout, GeluMode gelu);

}  // namespace mtlfno::ad
