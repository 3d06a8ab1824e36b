#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mtlfno/autodiff.hpp"
#include "mtlfno/tensor.hpp"

namespace mtlfno {

/// Architecture variant; `full` is the shared + CP-delta, Cayley-unitary,
/// amplitude-scaled construction, the others are its ablations.
enum class ModelVariant { full, noshare, nopolar, nocayley };

/// Activation applied to the aggregated amplitude parameters.
enum class AmplitudeMode { softplus, raw };

std::string to_string(ModelVariant v);
std::string to_string(AmplitudeMode m);
ModelVariant parse_variant(std::string_view name);
AmplitudeMode parse_amplitude_mode(std::string_view name);

/// True for variants whose spectral weight is U * diag(p).
bool has_amplitude(ModelVariant v);
/// True for variants carrying per-task CP deltas.
bool has_task_deltas(ModelVariant v);

/// Layer-shared spectral parameters.
///
/// `K` is K_share [k1, k2, C, C] for the polar variants and the dense spectral
/// weight R_share for `noshare` / `nopolar`. `P` is P_share [k1, k2, C] and is
/// empty for variants without an amplitude.
struct SharedSpectralParams {
  ComplexTensor K;
  Tensor P;
};

/// Per-task CP factors of one layer. Complex factors have shapes [R, k1],
/// [R, k2], [R, C], [R, C]; real amplitude factors [R, k1], [R, k2], [R, C].
/// For `nopolar` the complex factors compose the dense delta and `p` is empty.
struct TaskCPFactors {
  std::array<ComplexTensor, 4> k;
  std::array<Tensor, 3> p;
  Tensor lambda_k;
  Tensor lambda_p;

  std::size_t rank() const { return lambda_k.size(); }
};

/// Trainable scalars in one full-variant factor bundle:
/// 2R(k1 + k2 + 2C) + R(k1 + k2 + C) + 2R.
std::size_t cp_parameter_count(std::size_t rank, std::size_t k1, std::size_t k2,
                               std::size_t channels);

namespace ad {

/// Tape handles mirroring SharedSpectralParams; `P` unused without amplitude.
struct SharedSpectralVars {
  CVar K;
  Var P;
};

/// Tape handles mirroring TaskCPFactors.
struct TaskCPVars {
  std::array<CVar, 4> k;
  std::array<Var, 3> p;
  Var lambda_k;
  Var lambda_p;
};

/// Delta[a, b, c, d] = sum_r lambda_r f1[r,a] f2[r,b] f3[r,c] f4[r,d].
CVar cp_compose4(std::span<const CVar, 4> factors, Var lambda);
/// Delta[a, b, c] = sum_r lambda_r f1[r,a] f2[r,b] f3[r,c].
Var cp_compose3(std::span<const Var, 3> factors, Var lambda);

std::pair<CVar, Var> aggregate(const SharedSpectralVars& shared, CVar delta_k, Var delta_p);
CVar skew_hermitian(CVar k);
/// Slice-wise (I - K)(I + K)^-1; K must be skew-Hermitian within 1e-10.
CVar cayley(CVar k_hat);
Var build_amplitude(Var p_raw, AmplitudeMode mode);
/// Per mode R = U diag(p): column c of U scaled by p[c].
CVar compose(CVar u, Var amplitude);

/// The pre-amplitude "unitary" factor: Cayley output for `full`, the
/// aggregated K for `nocayley`. Only meaningful for amplitude variants.
CVar build_unitary_part(const SharedSpectralVars& shared, const TaskCPVars* task,
                        ModelVariant variant);

/// Final per-task spectral weight [k1, k2, C, C]. `task` may be null for
/// `noshare`.
CVar build_spectral_weight(const SharedSpectralVars& shared, const TaskCPVars* task,
                           ModelVariant variant, AmplitudeMode amplitude);

}  // namespace ad

// Value-level counterparts.
ComplexTensor cp_compose4(std::span<const ComplexTensor, 4> factors, const Tensor& lambda);
Tensor cp_compose3(std::span<const Tensor, 3> factors, const Tensor& lambda);
std::pair<ComplexTensor, Tensor> aggregate(const SharedSpectralParams& shared,
                                           const ComplexTensor& delta_k,
                                           const Tensor& delta_p);
ComplexTensor skew_hermitian(const ComplexTensor& k);

/// Spectral slices that are unitary by construction.
struct UnitaryTensor {
  ComplexTensor slices;
};

UnitaryTensor cayley(const ComplexTensor& k_hat);
Tensor build_amplitude(const Tensor& p_raw, AmplitudeMode mode);
ComplexTensor compose(const UnitaryTensor& u, const Tensor& amplitude);
ComplexTensor build_spectral_weight(const SharedSpectralParams& shared,
                                    const TaskCPFactors* task, ModelVariant variant,
                                    AmplitudeMode amplitude);

/// H = U P with U unitary and P Hermitian positive semi-definite, via SVD.
/// Verification oracle only; not differentiable.
struct PolarFactors {
  ComplexTensor unitary;
  ComplexTensor positive;
};
PolarFactors polar_decompose(const ComplexTensor& h);

/// Means over all slices of the largest and smallest singular values.
struct UnitarityStats {
  double mean_max_sv = 0.0;
  double mean_min_sv = 0.0;
};
UnitarityStats unitarity_stats(const ComplexTensor& slices);

/// Largest ||U^H U - I||_F over the slices of [..., n, n].
double max_unitarity_error(const ComplexTensor& slices);

/// Singular values (descending) of one n x n complex matrix.
std::vector<double> singular_values(const ComplexTensor& matrix);

/// Copies slice `index` of a [..., n, n] tensor into an [n, n] matrix.
ComplexTensor matrix_slice(const ComplexTensor& slices, std::size_t index);

}  // namespace mtlfno
