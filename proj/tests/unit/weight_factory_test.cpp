#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>

#include "mtlfno/complex_ops.hpp"
#include "mtlfno/error.hpp"
#include "mtlfno/weight_factory.hpp"
#include "test_support.hpp"

namespace mtlfno {
namespace {

using testing::at;
using testing::check_gradients;
using testing::random_complex;
using testing::random_skew_hermitian;
using testing::random_tensor;
using testing::weighted_sum;

ComplexTensor ones(const Shape& s) { return {Tensor::full(s, 1.0), Tensor::zeros(s)}; }

TEST(CpCompose4, RankOneOnes) {
  const std::array<ComplexTensor, 4> f{ones({1, 2}), ones({1, 3}), ones({1, 2}), ones({1, 2})};
  const ComplexTensor d = cp_compose4(f, Tensor::from({1.0}));
  EXPECT_EQ(d.shape(), (Shape{2, 3, 2, 2}));
  EXPECT_LT(max_abs_diff(d, ones({2, 3, 2, 2})), 1e-15);
  const ComplexTensor z = cp_compose4(f, Tensor::from({0.0}));
  EXPECT_EQ(frobenius_norm(z.re) + frobenius_norm(z.im), 0.0);
}

TEST(CpCompose4, MatchesQuadrupleLoop) {
  std::mt19937_64 rng(1);
  const std::size_t rank = 2;
  std::array<ComplexTensor, 4> f;
  for (auto& x : f) x = random_complex({rank, 2}, rng);
  const Tensor lambda = random_tensor({rank}, rng);
  const ComplexTensor d = cp_compose4(f, lambda);
  std::size_t idx = 0;
  for (std::size_t a = 0; a < 2; ++a) {
    for (std::size_t b = 0; b < 2; ++b) {
      for (std::size_t c = 0; c < 2; ++c) {
        for (std::size_t e = 0; e < 2; ++e, ++idx) {
          std::complex<double> s;
          for (std::size_t r = 0; r < rank; ++r) {
            s += lambda[r] * at(f[0], r * 2 + a) * at(f[1], r * 2 + b) * at(f[2], r * 2 + c) *
                 at(f[3], r * 2 + e);
          }
          EXPECT_NEAR(d.re[idx], s.real(), 1e-12);
          EXPECT_NEAR(d.im[idx], s.imag(), 1e-12);
        }
      }
    }
  }
}

TEST(CpCompose4, RankMismatch) {
  const std::array<ComplexTensor, 4> f{ones({2, 2}), ones({1, 2}), ones({2, 2}), ones({2, 2})};
  EXPECT_THROW(cp_compose4(f, Tensor::from({1.0, 1.0})), ShapeError);
}

TEST(CpCompose3, OnesAndBasis) {
  const std::array<Tensor, 3> f{Tensor::full({1, 2}, 1.0), Tensor::full({1, 3}, 1.0),
                                Tensor::full({1, 2}, 1.0)};
  EXPECT_EQ(cp_compose3(f, Tensor::from({1.0})).values(), std::vector<double>(12, 1.0));
  const Tensor e0({1, 2}, {1, 0});
  const Tensor b = cp_compose3(std::array<Tensor, 3>{e0, e0, e0}, Tensor::from({2.0}));
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_EQ(b[i], i == 0 ? 2.0 : 0.0);
}

TEST(CpCompose3, MatchesTripleLoop) {
  std::mt19937_64 rng(2);
  const std::size_t rank = 3;
  const std::array<Tensor, 3> f{random_tensor({rank, 2}, rng), random_tensor({rank, 3}, rng),
                                random_tensor({rank, 4}, rng)};
  const Tensor lambda = random_tensor({rank}, rng);
  const Tensor d = cp_compose3(f, lambda);
  for (std::size_t a = 0; a < 2; ++a) {
    for (std::size_t b = 0; b < 3; ++b) {
      for (std::size_t c = 0; c < 4; ++c) {
        double s = 0.0;
        for (std::size_t r = 0; r < rank; ++r) {
          s += lambda[r] * f[0][r * 2 + a] * f[1][r * 3 + b] * f[2][r * 4 + c];
        }
        EXPECT_NEAR(d[(a * 3 + b) * 4 + c], s, 1e-12);
      }
    }
  }
}

TEST(Aggregate, ElementwiseSum) {
  std::mt19937_64 rng(3);
  const SharedSpectralParams shared{random_complex({2, 2, 2, 2}, rng), random_tensor({2, 2, 2}, rng)};
  const ComplexTensor dk = random_complex({2, 2, 2, 2}, rng);
  const Tensor dp = random_tensor({2, 2, 2}, rng);
  const auto [k, p] = aggregate(shared, dk, dp);
  for (std::size_t i = 0; i < k.size(); ++i) {
    EXPECT_EQ(k.re[i], shared.K.re[i] + dk.re[i]);
    EXPECT_EQ(k.im[i], shared.K.im[i] + dk.im[i]);
  }
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(p[i], shared.P[i] + dp[i]);

  const auto [k0, p0] = aggregate(shared, ComplexTensor(dk.shape()), Tensor(dp.shape()));
  EXPECT_EQ(max_abs_diff(k0, shared.K), 0.0);
  EXPECT_EQ(max_abs_diff(p0, shared.P), 0.0);
  EXPECT_THROW(aggregate(shared, ComplexTensor(Shape{2, 2, 3, 3}), dp), ShapeError);
}

TEST(SkewHermitian, Projection) {
  std::mt19937_64 rng(4);
  const ComplexTensor s = random_skew_hermitian({2, 3, 3}, rng);
  EXPECT_LT(max_abs_diff(skew_hermitian(s), s), 1e-15);

  const ComplexTensor k = random_complex({3, 3}, rng);
  const ComplexTensor herm = complex_matmul(k, conj_transpose(k));
  const ComplexTensor z = skew_hermitian(herm);
  EXPECT_LT(std::max(frobenius_norm(z.re), frobenius_norm(z.im)), 1e-15);

  const ComplexTensor out = skew_hermitian(k);
  const ComplexTensor adj = conj_transpose(out);
  for (std::size_t i = 0; i < out.size(); ++i) {
    EXPECT_LE(std::abs(out.re[i] + adj.re[i]), 1e-15);
    EXPECT_LE(std::abs(out.im[i] + adj.im[i]), 1e-15);
  }
  EXPECT_THROW(skew_hermitian(ComplexTensor(Shape{2, 3})), ShapeError);
}

TEST(Cayley, ZeroGivesIdentity) {
  const UnitaryTensor u = cayley(ComplexTensor(Shape{2, 3, 3}));
  for (std::size_t q = 0; q < 2; ++q) {
    EXPECT_LT(max_abs_diff(matrix_slice(u.slices, q), ComplexTensor::eye(3)), 1e-15);
  }
}

TEST(Cayley, ScalarImaginaryUnit) {
  const ComplexTensor k(Tensor({1, 1}, {0.0}), Tensor({1, 1}, {1.0}));
  const UnitaryTensor u = cayley(k);
  const std::complex<double> expect = std::complex<double>(1, -1) / std::complex<double>(1, 1);
  EXPECT_NEAR(u.slices.re[0], expect.real(), 1e-15);
  EXPECT_NEAR(u.slices.im[0], expect.imag(), 1e-15);
  EXPECT_NEAR(u.slices.im[0], -1.0, 1e-15);
  EXPECT_NEAR(std::abs(at(u.slices, 0)), 1.0, 1e-15);
}

TEST(Cayley, SingularValuesAreOne) {
  std::mt19937_64 rng(5);
  const UnitaryTensor u = cayley(random_skew_hermitian({4, 4}, rng, 3.0));
  for (double s : singular_values(u.slices)) {
    EXPECT_GE(s, 1.0 - 1e-8);
    EXPECT_LE(s, 1.0 + 1e-8);
  }
}

TEST(Cayley, UnitarityOverManyTrials) {
  std::mt19937_64 rng(6);
  for (std::size_t c : {2u, 4u, 8u}) {
    for (int trial = 0; trial < 1000; ++trial) {
      const double scale = std::pow(10.0, std::uniform_real_distribution<double>(-2, 2)(rng));
      const UnitaryTensor u = cayley(random_skew_hermitian({c, c}, rng, scale));
      ASSERT_LE(max_unitarity_error(u.slices), 1e-8) << "C=" << c << " trial " << trial;
    }
  }
}

TEST(Cayley, RejectsNonSkewInput) {
  std::mt19937_64 rng(7);
  EXPECT_THROW(cayley(random_complex({3, 3}, rng)), ContractError);
}

TEST(BuildAmplitude, Modes) {
  const Tensor sp = build_amplitude(Tensor::from({0.0, -800.0, -40.0}), AmplitudeMode::softplus);
  EXPECT_NEAR(sp[0], std::log(2.0), 1e-15);
  EXPECT_GE(sp[1], 0.0);
  EXPECT_GT(sp[2], 0.0);
  EXPECT_LT(sp[2], 1e-16);
  EXPECT_EQ(build_amplitude(Tensor::from({-1, 2}), AmplitudeMode::raw).values(),
            (std::vector<double>{-1, 2}));
}

TEST(Compose, UnitAmplitudeAndIdentity) {
  std::mt19937_64 rng(8);
  const UnitaryTensor u = cayley(random_skew_hermitian({2, 3, 3}, rng));
  EXPECT_LT(max_abs_diff(compose(u, Tensor::full({2, 3}, 1.0)), u.slices), 1e-15);

  ComplexTensor eye(Shape{1, 3, 3});
  for (std::size_t c = 0; c < 3; ++c) eye.re[c * 4] = 1.0;
  const Tensor p({1, 3}, {0.5, 2.0, 3.0});
  const ComplexTensor r = compose(UnitaryTensor{eye}, p);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(r.re[i * 3 + j], i == j ? p[i] : 0.0);
  }
  EXPECT_THROW(compose(u, Tensor::full({2, 4}, 1.0)), ShapeError);
}

TEST(Compose, ColumnNormsEqualAmplitude) {
  std::mt19937_64 rng(9);
  const UnitaryTensor u = cayley(random_skew_hermitian({3, 3}, rng));
  const Tensor p = random_tensor({3}, rng, 0.1, 3.0);
  const ComplexTensor r = compose(u, p);
  for (std::size_t c = 0; c < 3; ++c) {
    double n = 0.0;
    for (std::size_t i = 0; i < 3; ++i) n += std::norm(at(r, i * 3 + c));
    EXPECT_NEAR(std::sqrt(n), p[c], 1e-10);
  }
}

SharedSpectralParams zero_shared(std::size_t k1, std::size_t k2, std::size_t c) {
  return {ComplexTensor(Shape{k1, k2, c, c}), Tensor(Shape{k1, k2, c})};
}

TaskCPFactors random_factors(std::size_t rank, std::size_t k1, std::size_t k2, std::size_t c,
                             std::mt19937_64& rng, double scale) {
  TaskCPFactors t;
  const std::size_t ext[4] = {k1, k2, c, c};
  for (std::size_t j = 0; j < 4; ++j) t.k[j] = random_complex({rank, ext[j]}, rng, -scale, scale);
  for (std::size_t j = 0; j < 3; ++j) t.p[j] = random_tensor({rank, ext[j]}, rng, -scale, scale);
  t.lambda_k = random_tensor({rank}, rng, 0.5, 1.5);
  t.lambda_p = random_tensor({rank}, rng, 0.5, 1.5);
  return t;
}

TEST(BuildSpectralWeight, ZeroDeltasGiveScaledIdentity) {
  std::mt19937_64 rng(10);
  TaskCPFactors t = random_factors(2, 2, 3, 3, rng, 1.0);
  t.lambda_k = Tensor::zeros({2});
  t.lambda_p = Tensor::zeros({2});
  const ComplexTensor r =
      build_spectral_weight(zero_shared(2, 3, 3), &t, ModelVariant::full, AmplitudeMode::softplus);
  for (std::size_t q = 0; q < 6; ++q) {
    ComplexTensor expect = ComplexTensor::eye(3);
    for (std::size_t i = 0; i < 9; ++i) expect.re[i] *= std::log(2.0);
    EXPECT_LT(max_abs_diff(matrix_slice(r, q), expect), 1e-15);
  }
}

TEST(BuildSpectralWeight, SingularValuesAreSortedAmplitudes) {
  std::mt19937_64 rng(11);
  SharedSpectralParams shared{random_complex({2, 2, 3, 3}, rng), random_tensor({2, 2, 3}, rng)};
  const TaskCPFactors t = random_factors(2, 2, 2, 3, rng, 0.7);
  const ComplexTensor r = build_spectral_weight(shared, &t, ModelVariant::full, AmplitudeMode::softplus);
  const auto [k, p_raw] = aggregate(shared, cp_compose4(t.k, t.lambda_k), cp_compose3(t.p, t.lambda_p));
  const Tensor amp = build_amplitude(p_raw, AmplitudeMode::softplus);
  for (std::size_t q = 0; q < 4; ++q) {
    std::vector<double> p(amp.data().begin() + q * 3, amp.data().begin() + q * 3 + 3);
    std::sort(p.begin(), p.end(), std::greater<>());
    const auto sv = singular_values(matrix_slice(r, q));
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(sv[i], p[i], 1e-10);
  }
}

TEST(BuildSpectralWeight, NopolarZeroDeltaIsShared) {
  std::mt19937_64 rng(12);
  const SharedSpectralParams shared{random_complex({2, 2, 3, 3}, rng), Tensor{}};
  TaskCPFactors t = random_factors(2, 2, 2, 3, rng, 1.0);
  t.lambda_k = Tensor::zeros({2});
  t.p = {};
  t.lambda_p = Tensor{};
  const ComplexTensor r = build_spectral_weight(shared, &t, ModelVariant::nopolar, AmplitudeMode::softplus);
  EXPECT_EQ(max_abs_diff(r, shared.K), 0.0);
}

TEST(BuildSpectralWeight, VariantsDiffer) {
  std::mt19937_64 rng(13);
  SharedSpectralParams shared{random_complex({2, 2, 2, 2}, rng), random_tensor({2, 2, 2}, rng)};
  const TaskCPFactors t = random_factors(1, 2, 2, 2, rng, 0.5);
  const ComplexTensor noshare =
      build_spectral_weight(shared, nullptr, ModelVariant::noshare, AmplitudeMode::softplus);
  EXPECT_EQ(max_abs_diff(noshare, shared.K), 0.0);
  // nocayley skips the projection, so it is K * diag(softplus(P)).
  const ComplexTensor nc = build_spectral_weight(shared, &t, ModelVariant::nocayley, AmplitudeMode::softplus);
  const auto [k, p_raw] = aggregate(shared, cp_compose4(t.k, t.lambda_k), cp_compose3(t.p, t.lambda_p));
  const ComplexTensor expect = compose(UnitaryTensor{k}, build_amplitude(p_raw, AmplitudeMode::softplus));
  EXPECT_LT(max_abs_diff(nc, expect), 1e-15);
  EXPECT_THROW(build_spectral_weight(shared, nullptr, ModelVariant::full, AmplitudeMode::softplus),
               ContractError);
}

TEST(PolarDecompose, TrivialCases) {
  std::mt19937_64 rng(14);
  const ComplexTensor u0 = cayley(random_skew_hermitian({3, 3}, rng)).slices;
  const PolarFactors f = polar_decompose(u0);
  EXPECT_LT(max_abs_diff(f.unitary, u0), 1e-8);
  EXPECT_LT(max_abs_diff(f.positive, ComplexTensor::eye(3)), 1e-8);

  const ComplexTensor d(Tensor({2, 2}, {2, 0, 0, 3}), Tensor::zeros({2, 2}));
  const PolarFactors g = polar_decompose(d);
  EXPECT_LT(max_abs_diff(g.unitary, ComplexTensor::eye(2)), 1e-8);
  EXPECT_LT(max_abs_diff(g.positive, d), 1e-8);

  EXPECT_THROW(polar_decompose(ComplexTensor(Shape{2, 2})), SingularMatrixError);
}

TEST(PolarDecompose, RoundTripsCayleyTimesAmplitude) {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t c = 2 + static_cast<std::size_t>(trial % 3);
    const ComplexTensor u0 = cayley(random_skew_hermitian({c, c}, rng)).slices;
    Tensor p;
    double gap = 0.0;
    do {
      p = random_tensor({c}, rng, 0.05, 3.0);
      std::vector<double> s = p.values();
      std::sort(s.begin(), s.end());
      gap = 1.0;
      for (std::size_t i = 1; i < s.size(); ++i) gap = std::min(gap, s[i] - s[i - 1]);
    } while (gap < 0.05);
    const ComplexTensor h = compose(UnitaryTensor{u0}, p);
    const PolarFactors f = polar_decompose(h);
    EXPECT_LT(max_abs_diff(f.unitary, u0), 1e-7);
    ComplexTensor diag(Shape{c, c});
    for (std::size_t i = 0; i < c; ++i) diag.re[i * (c + 1)] = p[i];
    EXPECT_LT(max_abs_diff(f.positive, diag), 1e-7);
    EXPECT_LT(max_unitarity_error(f.unitary), 1e-8);
    EXPECT_LT(max_abs_diff(complex_matmul(f.unitary, f.positive), h), 1e-8);
  }
}

TEST(UnitarityStats, UnitaryAndScaledIdentity) {
  std::mt19937_64 rng(16);
  const UnitaryTensor u = cayley(random_skew_hermitian({2, 3, 4, 4}, rng));
  const UnitarityStats s = unitarity_stats(u.slices);
  EXPECT_NEAR(s.mean_max_sv, 1.0, 1e-8);
  EXPECT_NEAR(s.mean_min_sv, 1.0, 1e-8);

  ComplexTensor two(Shape{2, 2, 3, 3});
  for (std::size_t q = 0; q < 4; ++q) {
    for (std::size_t c = 0; c < 3; ++c) two.re[q * 9 + c * 4] = 2.0;
  }
  const UnitarityStats t = unitarity_stats(two);
  EXPECT_NEAR(t.mean_max_sv, 2.0, 1e-12);
  EXPECT_NEAR(t.mean_min_sv, 2.0, 1e-12);
}

TEST(CpParameterCount, DefaultConfig) {
  EXPECT_EQ(cp_parameter_count(8, 16, 16, 32), 2064u);
  const std::size_t dense = 2 * 16 * 16 * 32 * 32 + 16 * 16 * 32;
  EXPECT_LT(cp_parameter_count(8, 16, 16, 32), dense);
}

TEST(WeightGradients, FullPipelineMatchesFiniteDifferences) {
  std::mt19937_64 rng(17);
  const std::size_t k1 = 2, k2 = 2, c = 2, rank = 1;
  // Inputs: K.re, K.im, P, four complex factors (re, im), three real
  // factors, lambda_k, lambda_p.
  std::vector<Tensor> in{random_tensor({k1, k2, c, c}, rng), random_tensor({k1, k2, c, c}, rng),
                         random_tensor({k1, k2, c}, rng)};
  const std::size_t ext[4] = {k1, k2, c, c};
  for (std::size_t j = 0; j < 4; ++j) {
    in.push_back(random_tensor({rank, ext[j]}, rng));
    in.push_back(random_tensor({rank, ext[j]}, rng));
  }
  for (std::size_t j = 0; j < 3; ++j) in.push_back(random_tensor({rank, ext[j]}, rng));
  in.push_back(random_tensor({rank}, rng));
  in.push_back(random_tensor({rank}, rng));

  for (auto variant : {ModelVariant::full, ModelVariant::nocayley, ModelVariant::nopolar}) {
    const testing::LossFn loss = [variant](ad::Tape& t, const std::vector<ad::Var>& v) {
      ad::SharedSpectralVars shared{{v[0], v[1]}, v[2]};
      ad::TaskCPVars task;
      for (std::size_t j = 0; j < 4; ++j) task.k[j] = {v[3 + 2 * j], v[4 + 2 * j]};
      for (std::size_t j = 0; j < 3; ++j) task.p[j] = v[11 + j];
      task.lambda_k = v[14];
      task.lambda_p = v[15];
      const ad::CVar r = ad::build_spectral_weight(shared, &task, variant, AmplitudeMode::softplus);
      ad::Var l = ad::add(weighted_sum(t, r.re, 31), weighted_sum(t, r.im, 32));
      if (variant == ModelVariant::nopolar) {
        // P and the amplitude factors are unused; keep them on the graph.
        l = ad::add(l, ad::scale(ad::sum(v[2]), 0.0));
      }
      return l;
    };
    const auto check = check_gradients(loss, in);
    EXPECT_LE(check.max_rel_error, 1e-3) << to_string(variant);
  }
}

TEST(Variants, ParseAndPrint) {
  for (auto v : {ModelVariant::full, ModelVariant::noshare, ModelVariant::nopolar, ModelVariant::nocayley}) {
    EXPECT_EQ(parse_variant(to_string(v)), v);
  }
  EXPECT_THROW(parse_variant("bogus"), ConfigError);
  EXPECT_EQ(parse_amplitude_mode("raw"), AmplitudeMode::raw);
  EXPECT_THROW(parse_amplitude_mode("abs"), ConfigError);
}

}  // namespace
}  // namespace mtlfno
