#include "mtlfno/weight_factory.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>

#include "mtlfno/complex_ops.hpp"
#include "mtlfno/error.hpp"

namespace mtlfno {

std::string to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::full: return "full";
    case ModelVariant::noshare: return "noshare";
    case ModelVariant::nopolar: return "nopolar";
    case ModelVariant::nocayley: return "nocayley";
  }
  return "?";
}

std::string to_string(AmplitudeMode m) {
  return m == AmplitudeMode::softplus ? "softplus" : "raw";
}

ModelVariant parse_variant(std::string_view name) {
  if (name == "full") return ModelVariant::full;
  if (name == "noshare") return ModelVariant::noshare;
  if (name == "nopolar") return ModelVariant::nopolar;
  if (name == "nocayley") return ModelVariant::nocayley;
  throw ConfigError("unknown variant '" + std::string(name) + "'");
}

AmplitudeMode parse_amplitude_mode(std::string_view name) {
  if (name == "softplus") return AmplitudeMode::softplus;
  if (name == "raw") return AmplitudeMode::raw;
  throw ConfigError("unknown amplitude mode '" + std::string(name) + "'");
}

bool has_amplitude(ModelVariant v) {
  return v == ModelVariant::full || v == ModelVariant::nocayley;
}

bool has_task_deltas(ModelVariant v) { return v != ModelVariant::noshare; }

std::size_t cp_parameter_count(std::size_t rank, std::size_t k1, std::size_t k2,
                               std::size_t channels) {
  return 2 * rank * (k1 + k2 + 2 * channels) + rank * (k1 + k2 + channels) + 2 * rank;
}

namespace {

using cdouble = std::complex<double>;

// N-way CP kernel over complex factors; real factors carry zero imaginary parts.
struct CpKernel {
  std::size_t rank = 0;
  std::vector<std::size_t> extents;
  std::vector<std::vector<cdouble>> factors;  // factors[j][r * n_j + x]
  std::vector<double> lambda;

  std::size_t out_size() const {
    std::size_t s = 1;
    for (auto n : extents) s *= n;
    return s;
  }

  // Outer product of row r of every factor (without lambda).
  std::vector<cdouble> outer(std::size_t r) const {
    std::vector<cdouble> t{cdouble{1.0, 0.0}};
    for (std::size_t j = 0; j < factors.size(); ++j) {
      const std::size_t n = extents[j];
      std::vector<cdouble> next(t.size() * n);
      const cdouble* row = factors[j].data() + r * n;
      for (std::size_t a = 0; a < t.size(); ++a) {
        for (std::size_t x = 0; x < n; ++x) next[a * n + x] = t[a] * row[x];
      }
      t = std::move(next);
    }
    return t;
  }

  std::vector<cdouble> forward() const {
    std::vector<cdouble> out(out_size());
    for (std::size_t r = 0; r < rank; ++r) {
      const auto t = outer(r);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += lambda[r] * t[i];
    }
    return out;
  }

  // v_j[x] = sum over all other modes of G * conj(prod_{i != j} f_i[r, idx_i]).
  std::vector<cdouble> contract_all_but(const std::vector<cdouble>& g, std::size_t r,
                                        std::size_t keep) const {
    std::vector<cdouble> t = g;
    std::vector<std::size_t> dims = extents;
    for (std::size_t q = factors.size(); q-- > 0;) {
      if (q == keep) continue;
      // Modes are contracted from the last one down, so every mode below q is intact.
      const std::size_t pos = q;
      std::size_t pre = 1, post = 1;
      for (std::size_t i = 0; i < pos; ++i) pre *= dims[i];
      for (std::size_t i = pos + 1; i < dims.size(); ++i) post *= dims[i];
      const std::size_t n = dims[pos];
      const cdouble* row = factors[q].data() + r * n;
      std::vector<cdouble> next(pre * post);
      for (std::size_t a = 0; a < pre; ++a) {
        for (std::size_t x = 0; x < n; ++x) {
          const cdouble f = std::conj(row[x]);
          const cdouble* src = t.data() + (a * n + x) * post;
          cdouble* dst = next.data() + a * post;
          for (std::size_t b = 0; b < post; ++b) dst[b] += src[b] * f;
        }
      }
      t = std::move(next);
      dims.erase(dims.begin() + static_cast<std::ptrdiff_t>(pos));
    }
    return t;
  }

  void backward(const std::vector<cdouble>& g, std::vector<std::vector<cdouble>>& gf,
                std::vector<double>& glambda) const {
    gf.assign(factors.size(), {});
    for (std::size_t j = 0; j < factors.size(); ++j) gf[j].assign(factors[j].size(), {});
    glambda.assign(rank, 0.0);
    for (std::size_t r = 0; r < rank; ++r) {
      for (std::size_t j = 0; j < factors.size(); ++j) {
        const auto v = contract_all_but(g, r, j);
        const std::size_t n = extents[j];
        for (std::size_t x = 0; x < n; ++x) gf[j][r * n + x] = lambda[r] * v[x];
        if (j == 0) {
          double s = 0.0;
          for (std::size_t x = 0; x < n; ++x) {
            s += (std::conj(factors[0][r * n + x]) * v[x]).real();
          }
          glambda[r] = s;
        }
      }
    }
  }
};

std::size_t check_factor(const Shape& s, std::size_t rank, const char* what) {
  if (s.size() != 2 || s[0] != rank) {
    throw ShapeError(std::string(what) + ": factor " + shape_string(s) +
                     " inconsistent with rank " + std::to_string(rank));
  }
  return s[1];
}

std::vector<cdouble> to_complex(const Tensor& re, const Tensor* im) {
  std::vector<cdouble> out(re.size());
  for (std::size_t i = 0; i < re.size(); ++i) out[i] = {re[i], im ? (*im)[i] : 0.0};
  return out;
}

CpKernel make_kernel(std::span<const Tensor* const> re, std::span<const Tensor* const> im,
                     const Tensor& lambda, const char* what) {
  if (lambda.rank() != 1) {
    throw ShapeError(std::string(what) + ": lambda must be a vector, got " +
                     shape_string(lambda.shape()));
  }
  CpKernel k;
  k.rank = lambda.size();
  k.lambda = lambda.values();
  for (std::size_t j = 0; j < re.size(); ++j) {
    k.extents.push_back(check_factor(re[j]->shape(), k.rank, what));
    k.factors.push_back(to_complex(*re[j], im.empty() ? nullptr : im[j]));
  }
  return k;
}

}  // namespace

namespace ad {

CVar cp_compose4(std::span<const CVar, 4> factors, Var lambda) {
  std::array<const Tensor*, 4> re{}, im{};
  std::vector<Var> parents;
  for (std::size_t j = 0; j < 4; ++j) {
    re[j] = &factors[j].re.value();
    im[j] = &factors[j].im.value();
    parents.push_back(factors[j].re);
    parents.push_back(factors[j].im);
  }
  parents.push_back(lambda);
  const CpKernel kernel = make_kernel(re, im, lambda.value(), "cp_compose4");
  const auto out = kernel.forward();
  const Shape shape(kernel.extents.begin(), kernel.extents.end());
  Tensor ore(shape), oim(shape);
  for (std::size_t i = 0; i < out.size(); ++i) {
    ore[i] = out[i].real();
    oim[i] = out[i].imag();
  }
  std::array<CVar, 4> fs{factors[0], factors[1], factors[2], factors[3]};
  auto backward = [fs, lambda, shape](std::span<const Tensor* const> g, Tape& t) {
    std::array<const Tensor*, 4> re{}, im{};
    for (std::size_t j = 0; j < 4; ++j) {
      re[j] = &fs[j].re.value();
      im[j] = &fs[j].im.value();
    }
    const CpKernel kernel = make_kernel(re, im, lambda.value(), "cp_compose4");
    const Tensor zero(shape);
    const Tensor& gre = g[0] ? *g[0] : zero;
    const Tensor& gim = g[1] ? *g[1] : zero;
    std::vector<std::vector<cdouble>> gf;
    std::vector<double> gl;
    kernel.backward(to_complex(gre, &gim), gf, gl);
    for (std::size_t j = 0; j < 4; ++j) {
      Tensor fr(fs[j].shape()), fi(fs[j].shape());
      for (std::size_t i = 0; i < gf[j].size(); ++i) {
        fr[i] = gf[j][i].real();
        fi[i] = gf[j][i].imag();
      }
      t.accumulate(fs[j].re, std::move(fr));
      t.accumulate(fs[j].im, std::move(fi));
    }
    t.accumulate(lambda, Tensor(lambda.shape(), std::move(gl)));
  };
  std::vector<Tensor> values;
  values.push_back(std::move(ore));
  values.push_back(std::move(oim));
  auto vars = lambda.tape->record(std::move(values), parents, std::move(backward),
                                  "cp_compose4");
  return {vars[0], vars[1]};
}

Var cp_compose3(std::span<const Var, 3> factors, Var lambda) {
  std::array<const Tensor*, 3> re{};
  for (std::size_t j = 0; j < 3; ++j) re[j] = &factors[j].value();
  const CpKernel kernel = make_kernel(re, {}, lambda.value(), "cp_compose3");
  const auto out = kernel.forward();
  const Shape shape(kernel.extents.begin(), kernel.extents.end());
  Tensor value(shape);
  for (std::size_t i = 0; i < out.size(); ++i) value[i] = out[i].real();
  std::array<Var, 3> fs{factors[0], factors[1], factors[2]};
  auto backward = [fs, lambda](std::span<const Tensor* const> g, Tape& t) {
    std::array<const Tensor*, 3> re{};
    for (std::size_t j = 0; j < 3; ++j) re[j] = &fs[j].value();
    const CpKernel kernel = make_kernel(re, {}, lambda.value(), "cp_compose3");
    std::vector<std::vector<cdouble>> gf;
    std::vector<double> gl;
    kernel.backward(to_complex(*g[0], nullptr), gf, gl);
    for (std::size_t j = 0; j < 3; ++j) {
      Tensor gr(fs[j].shape());
      for (std::size_t i = 0; i < gf[j].size(); ++i) gr[i] = gf[j][i].real();
      t.accumulate(fs[j], std::move(gr));
    }
    t.accumulate(lambda, Tensor(lambda.shape(), std::move(gl)));
  };
  return lambda.tape->record(std::move(value), {fs[0], fs[1], fs[2], lambda},
                             std::move(backward), "cp_compose3");
}

std::pair<CVar, Var> aggregate(const SharedSpectralVars& shared, CVar delta_k, Var delta_p) {
  if (shared.K.shape() != delta_k.shape() || shared.P.shape() != delta_p.shape()) {
    throw ShapeError("aggregate: shared " + shape_string(shared.K.shape()) + "/" +
                     shape_string(shared.P.shape()) + " vs delta " +
                     shape_string(delta_k.shape()) + "/" + shape_string(delta_p.shape()));
  }
  return {cadd(shared.K, delta_k), add(shared.P, delta_p)};
}

CVar skew_hermitian(CVar k) {
  const Shape& s = k.shape();
  if (s.size() < 2 || s[s.size() - 1] != s[s.size() - 2]) {
    throw ShapeError("skew_hermitian: slices must be square, got " + shape_string(s));
  }
  // (K - K^H)/2: real part antisymmetrized, imaginary part symmetrized.
  Var re = scale(sub(k.re, transpose(k.re)), 0.5);
  Var im = scale(add(k.im, transpose(k.im)), 0.5);
  return {re, im};
}

namespace {

constexpr double kSkewTolerance = 1e-10;

void require_skew_hermitian(const Tensor& re, const Tensor& im) {
  const Shape& s = re.shape();
  if (s.size() < 2 || s[s.size() - 1] != s[s.size() - 2]) {
    throw ShapeError("cayley: slices must be square, got " + shape_string(s));
  }
  const std::size_t n = s.back();
  const std::size_t slices = re.size() / (n * n);
  for (std::size_t q = 0; q < slices; ++q) {
    const std::size_t base = q * n * n;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double dr = re[base + i * n + j] + re[base + j * n + i];
        const double di = im[base + i * n + j] - im[base + j * n + i];
        if (std::abs(dr) > kSkewTolerance || std::abs(di) > kSkewTolerance) {
          throw ContractError("cayley: slice " + std::to_string(q) +
                              " is not skew-Hermitian");
        }
      }
    }
  }
}

}  // namespace

CVar cayley(CVar k_hat) {
  require_skew_hermitian(k_hat.re.value(), k_hat.im.value());
  Tape& tape = *k_hat.re.tape;
  const Var eye = tape.constant(Tensor::eye(k_hat.shape().back()));
  const CVar plus{add(eye, k_hat.re), k_hat.im};
  const CVar minus{sub(eye, k_hat.re), neg(k_hat.im)};
  return complex_matmul(minus, complex_inverse(plus));
}

Var build_amplitude(Var p_raw, AmplitudeMode mode) {
  return mode == AmplitudeMode::softplus ? softplus(p_raw) : p_raw;
}

CVar compose(CVar u, Var amplitude) {
  const Shape& us = u.shape();
  const Shape& ps = amplitude.shape();
  if (us.size() < 2 || ps.size() + 1 != us.size() ||
      !std::equal(ps.begin(), ps.end() - 1, us.begin()) || ps.back() != us.back() ||
      us[us.size() - 2] != us.back()) {
    throw ShapeError("compose: unitary " + shape_string(us) + " vs amplitude " +
                     shape_string(ps));
  }
  Shape col = ps;
  col.insert(col.end() - 1, 1);
  return cmul_real(u, reshape(amplitude, col));
}

namespace {

const TaskCPVars& require_task(const TaskCPVars* task, ModelVariant v) {
  if (!task) throw ContractError("variant " + to_string(v) + " needs task factors");
  return *task;
}

CVar aggregated_k(const SharedSpectralVars& shared, const TaskCPVars& task) {
  const CVar dk = cp_compose4(task.k, task.lambda_k);
  return cadd(shared.K, dk);
}

}  // namespace

CVar build_unitary_part(const SharedSpectralVars& shared, const TaskCPVars* task,
                        ModelVariant variant) {
  switch (variant) {
    case ModelVariant::full:
      return cayley(skew_hermitian(aggregated_k(shared, require_task(task, variant))));
    case ModelVariant::nocayley:
      return aggregated_k(shared, require_task(task, variant));
    case ModelVariant::noshare:
    case ModelVariant::nopolar:
      break;
  }
  throw ContractError("variant " + to_string(variant) + " has no unitary factor");
}

CVar build_spectral_weight(const SharedSpectralVars& shared, const TaskCPVars* task,
                           ModelVariant variant, AmplitudeMode amplitude) {
  switch (variant) {
    case ModelVariant::noshare:
      return shared.K;
    case ModelVariant::nopolar: {
      const TaskCPVars& t = require_task(task, variant);
      return cadd(shared.K, cp_compose4(t.k, t.lambda_k));
    }
    case ModelVariant::full:
    case ModelVariant::nocayley: {
      const TaskCPVars& t = require_task(task, variant);
      const Var dp = cp_compose3(t.p, t.lambda_p);
      const auto [k, p_raw] = aggregate(shared, cp_compose4(t.k, t.lambda_k), dp);
      const CVar u = variant == ModelVariant::full ? cayley(skew_hermitian(k)) : k;
      return compose(u, build_amplitude(p_raw, amplitude));
    }
  }
  throw ContractError("unknown variant");
}

}  // namespace ad

ComplexTensor cp_compose4(std::span<const ComplexTensor, 4> factors, const Tensor& lambda) {
  ad::Tape tape;
  std::array<ad::CVar, 4> fs;
  for (std::size_t j = 0; j < 4; ++j) fs[j] = tape.constant(factors[j]);
  return ad::cp_compose4(fs, tape.constant(lambda)).value();
}

Tensor cp_compose3(std::span<const Tensor, 3> factors, const Tensor& lambda) {
  ad::Tape tape;
  std::array<ad::Var, 3> fs;
  for (std::size_t j = 0; j < 3; ++j) fs[j] = tape.constant(factors[j]);
  return ad::cp_compose3(fs, tape.constant(lambda)).value();
}

std::pair<ComplexTensor, Tensor> aggregate(const SharedSpectralParams& shared,
                                           const ComplexTensor& delta_k,
                                           const Tensor& delta_p) {
  ad::Tape tape;
  const ad::SharedSpectralVars vars{tape.constant(shared.K), tape.constant(shared.P)};
  auto [k, p] = ad::aggregate(vars, tape.constant(delta_k), tape.constant(delta_p));
  return {k.value(), p.value()};
}

ComplexTensor skew_hermitian(const ComplexTensor& k) {
  ad::Tape tape;
  return ad::skew_hermitian(tape.constant(k)).value();
}

UnitaryTensor cayley(const ComplexTensor& k_hat) {
  ad::Tape tape;
  return {ad::cayley(tape.constant(k_hat)).value()};
}

Tensor build_amplitude(const Tensor& p_raw, AmplitudeMode mode) {
  ad::Tape tape;
  return ad::build_amplitude(tape.constant(p_raw), mode).value();
}

ComplexTensor compose(const UnitaryTensor& u, const Tensor& amplitude) {
  ad::Tape tape;
  return ad::compose(tape.constant(u.slices), tape.constant(amplitude)).value();
}

ComplexTensor build_spectral_weight(const SharedSpectralParams& shared,
                                    const TaskCPFactors* task, ModelVariant variant,
                                    AmplitudeMode amplitude) {
  ad::Tape tape;
  ad::SharedSpectralVars sv{tape.constant(shared.K), {}};
  if (has_amplitude(variant)) sv.P = tape.constant(shared.P);
  ad::TaskCPVars tv;
  if (task) {
    for (std::size_t j = 0; j < 4; ++j) tv.k[j] = tape.constant(task->k[j]);
    tv.lambda_k = tape.constant(task->lambda_k);
    if (has_amplitude(variant)) {
      for (std::size_t j = 0; j < 3; ++j) tv.p[j] = tape.constant(task->p[j]);
      tv.lambda_p = tape.constant(task->lambda_p);
    }
  }
  return ad::build_spectral_weight(sv, task ? &tv : nullptr, variant, amplitude).value();
}

namespace {

using CMat = Eigen::MatrixXcd;

std::size_t square_n(const Shape& s, const char* what) {
  if (s.size() < 2 || s[s.size() - 1] != s[s.size() - 2]) {
    throw ShapeError(std::string(what) + ": expected square slices, got " +
                     shape_string(s));
  }
  return s.back();
}

CMat to_matrix(const ComplexTensor& t, std::size_t slice, std::size_t n) {
  CMat m(n, n);
  const std::size_t base = slice * n * n;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = {
          t.re[base + i * n + j], t.im[base + i * n + j]};
    }
  }
  return m;
}

ComplexTensor from_matrix(const CMat& m) {
  const auto n = static_cast<std::size_t>(m.rows());
  ComplexTensor out(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const cdouble z = m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      out.re[i * n + j] = z.real();
      out.im[i * n + j] = z.imag();
    }
  }
  return out;
}

}  // namespace

PolarFactors polar_decompose(const ComplexTensor& h) {
  if (h.shape().size() != 2) {
    throw ShapeError("polar_decompose: expected one [n, n] matrix, got " +
                     shape_string(h.shape()));
  }
  const std::size_t n = square_n(h.shape(), "polar_decompose");
  Eigen::JacobiSVD<CMat> svd(to_matrix(h, 0, n), Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sigma = svd.singularValues();
  if (!(sigma(sigma.size() - 1) >= kSingularPivot * std::max(1.0, sigma(0)))) {
    throw SingularMatrixError(0, "polar_decompose: matrix is numerically singular");
  }
  const CMat& w = svd.matrixU();
  const CMat& v = svd.matrixV();
  const CMat u = w * v.adjoint();
  const CMat p = v * sigma.cast<cdouble>().asDiagonal() * v.adjoint();
  return {from_matrix(u), from_matrix(p)};
}

std::vector<double> singular_values(const ComplexTensor& matrix) {
  const std::size_t n = square_n(matrix.shape(), "singular_values");
  Eigen::JacobiSVD<CMat> svd(to_matrix(matrix, 0, n));
  const auto& s = svd.singularValues();
  return std::vector<double>(s.data(), s.data() + s.size());
}

UnitarityStats unitarity_stats(const ComplexTensor& slices) {
  const std::size_t n = square_n(slices.shape(), "unitarity_stats");
  const std::size_t count = slices.size() / (n * n);
  UnitarityStats stats;
  for (std::size_t q = 0; q < count; ++q) {
    Eigen::JacobiSVD<CMat> svd(to_matrix(slices, q, n));
    const auto& s = svd.singularValues();
    stats.mean_max_sv += s(0);
    stats.mean_min_sv += s(s.size() - 1);
  }
  stats.mean_max_sv /= static_cast<double>(count);
  stats.mean_min_sv /= static_cast<double>(count);
  return stats;
}

double max_unitarity_error(const ComplexTensor& slices) {
  const std::size_t n = square_n(slices.shape(), "max_unitarity_error");
  const std::size_t count = slices.size() / (n * n);
  double worst = 0.0;
  for (std::size_t q = 0; q < count; ++q) {
    const CMat u = to_matrix(slices, q, n);
    const double err = (u.adjoint() * u - CMat::Identity(static_cast<Eigen::Index>(n),
                                                         static_cast<Eigen::Index>(n)))
                           .norm();
    worst = std::max(worst, err);
  }
  return worst;
}

ComplexTensor matrix_slice(const ComplexTensor& slices, std::size_t index) {
  const std::size_t n = square_n(slices.shape(), "matrix_slice");
  if (index >= slices.size() / (n * n)) {
    throw ShapeError("matrix_slice: index " + std::to_string(index) + " out of range");
  }
  return from_matrix(to_matrix(slices, index, n));
}

}  // namespace mtlfno
