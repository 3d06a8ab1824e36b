#include "mtlfno/complex_ops.hpp"

#include <Eigen/Dense>
#include <complex>

#include "mtlfno/error.hpp"

namespace mtlfno {
namespace ad {

CVar cadd(CVar a, CVar b) { return {add(a.re, b.re), add(a.im, b.im)}; }

CVar csub(CVar a, CVar b) { return {sub(a.re, b.re), sub(a.im, b.im)}; }

CVar cscale(CVar a, double factor) {
  return {scale(a.re, factor), scale(a.im, factor)};
}

CVar cmul_real(CVar a, Var real) { return {mul(a.re, real), mul(a.im, real)}; }

CVar conj_transpose(CVar a) { return {transpose(a.re), neg(transpose(a.im))}; }

CVar complex_matmul(CVar a, CVar b) {
  Var re = sub(matmul(a.re, b.re), matmul(a.im, b.im));
  Var im = add(matmul(a.re, b.im), matmul(a.im, b.re));
  return {re, im};
}

namespace {

using CMat = Eigen::MatrixXcd;

std::size_t square_extent(const Shape& s, const char* what) {
  if (s.size() < 2 || s[s.size() - 1] != s[s.size() - 2]) {
    throw ShapeError(std::string(what) + ": expected square trailing slices, got " +
                     shape_string(s));
  }
  return s.back();
}

CMat load_slice(const Tensor& re, const Tensor& im, std::size_t slice, std::size_t n) {
  CMat m(n, n);
  const std::size_t base = slice * n * n;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      m(i, j) = {re[base + i * n + j], im[base + i * n + j]};
    }
  }
  return m;
}

void store_slice(const CMat& m, Tensor& re, Tensor& im, std::size_t slice) {
  const std::size_t n = static_cast<std::size_t>(m.rows());
  const std::size_t base = slice * n * n;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      re[base + i * n + j] = m(i, j).real();
      im[base + i * n + j] = m(i, j).imag();
    }
  }
}

}  // namespace

CVar complex_inverse(CVar a) {
  const Tensor& are = a.re.value();
  const Tensor& aim = a.im.value();
  const std::size_t n = square_extent(are.shape(), "complex_inverse");
  const std::size_t slices = are.size() / (n * n);
  Tensor ore(are.shape()), oim(are.shape());
  for (std::size_t s = 0; s < slices; ++s) {
    Eigen::PartialPivLU<CMat> lu(load_slice(are, aim, s, n));
    const auto& packed = lu.matrixLU();
    for (std::size_t i = 0; i < n; ++i) {
      const double pivot = std::abs(packed(i, i));
      if (!(pivot >= kSingularPivot)) {
        throw SingularMatrixError(s, "complex_inverse: slice " + std::to_string(s) +
                                         " is singular (pivot " +
                                         std::to_string(pivot) + ")");
      }
    }
    store_slice(lu.inverse(), ore, oim, s);
  }
  Tape& tape = *a.re.tape;
  const Var parents[] = {a.re, a.im};
  std::vector<Tensor> values;
  values.push_back(std::move(ore));
  values.push_back(std::move(oim));
  // Outputs are recorded before the closure can reference them by id.
  const std::size_t first_out = tape.size();
  auto backward = [a, n, slices, first_out](std::span<const Tensor* const> g,
                                            Tape& t) {
    // For Y = A^-1 and upstream G (real/imag pair): grad_A = -Y^H G Y^H.
    const Tensor& yre = t.value(first_out);
    const Tensor& yim = t.value(first_out + 1);
    const Shape& shape = yre.shape();
    const Tensor zero(shape);
    const Tensor& gre = g[0] ? *g[0] : zero;
    const Tensor& gim = g[1] ? *g[1] : zero;
    Tensor are(shape), aim(shape);
    for (std::size_t s = 0; s < slices; ++s) {
      const CMat yh = load_slice(yre, yim, s, n).adjoint();
      const CMat gs = load_slice(gre, gim, s, n);
      const CMat ga = -(yh * gs * yh);
      store_slice(ga, are, aim, s);
    }
    t.accumulate(a.re, std::move(are));
    t.accumulate(a.im, std::move(aim));
  };
  auto out = tape.record(std::move(values), parents, std::move(backward),
                         "complex_inverse");
  return {out[0], out[1]};
}

}  // namespace ad

ComplexTensor complex_matmul(const ComplexTensor& a, const ComplexTensor& b) {
  ad::Tape tape;
  return ad::complex_matmul(tape.constant(a), tape.constant(b)).value();
}

ComplexTensor complex_inverse(const ComplexTensor& a) {
  ad::Tape tape;
  return ad::complex_inverse(tape.constant(a)).value();
}

ComplexTensor conj_transpose(const ComplexTensor& a) {
  ad::Tape tape;
  return ad::conj_transpose(tape.constant(a)).value();
}

}  // namespace mtlfno
