#include "mtlfno/spectral.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <memory>
#include <numbers>

#include "kernels.hpp"
#include "linalg.hpp"
#include "mtlfno/error.hpp"

namespace mtlfno::spectral {

using cdouble = std::complex<double>;

void ModeLayout::validate() const {
  if (grid_h < 2 || grid_w < 2) {
    throw ShapeError("mode layout needs a grid of at least 2x2");
  }
  if (k1 == 0 || k1 % 2 != 0 || k1 > grid_h) {
    throw ShapeError("mode layout: k1=" + std::to_string(k1) +
                     " must be even and within (0, " + std::to_string(grid_h) + "]");
  }
  if (k2 == 0 || k2 > half_width()) {
    throw ShapeError("mode layout: k2=" + std::to_string(k2) + " must be within (0, " +
                     std::to_string(half_width()) + "]");
  }
}

std::vector<std::size_t> ModeLayout::kept_rows() const {
  std::vector<std::size_t> rows;
  rows.reserve(k1);
  for (std::size_t i = 0; i < k1 / 2; ++i) rows.push_back(i);
  for (std::size_t i = grid_h - k1 / 2; i < grid_h; ++i) rows.push_back(i);
  return rows;
}

namespace {

// Batched view of a rank-3 or rank-4 channel-last tensor.
struct Dims4 {
  std::size_t b, h, w, c;
};

Dims4 dims_of(const Shape& s, const char* what) {
  if (s.size() == 3) return {1, s[0], s[1], s[2]};
  if (s.size() == 4) return {s[0], s[1], s[2], s[3]};
  throw ShapeError(std::string(what) + ": expected [H, W, C] or [B, H, W, C], got " +
                   shape_string(s));
}

Shape with_dims(const Shape& like, std::size_t h, std::size_t w, std::size_t c) {
  if (like.size() == 3) return {h, w, c};
  return {like[0], h, w, c};
}

// ---- FFTW-backed full transforms -------------------------------------------

template <class T>
struct FftwDeleter {
  void operator()(T* p) const { fftw_free(p); }
};

struct Plan {
  fftw_plan plan = nullptr;
  ~Plan() {
    if (plan) fftw_destroy_plan(plan);
  }
};

// Unnormalized forward r2c over (H, W) for every channel of one grid.
void r2c_grid(const double* v, std::size_t h, std::size_t w, std::size_t c, cdouble* out) {
  const std::size_t wh = w / 2 + 1;
  std::unique_ptr<double, FftwDeleter<double>> in(fftw_alloc_real(h * w * c));
  std::unique_ptr<fftw_complex, FftwDeleter<fftw_complex>> res(fftw_alloc_complex(h * wh * c));
  const int n[2] = {static_cast<int>(h), static_cast<int>(w)};
  Plan p;
  p.plan = fftw_plan_many_dft_r2c(2, n, static_cast<int>(c), in.get(), nullptr,
                                  static_cast<int>(c), 1, res.get(), nullptr,
                                  static_cast<int>(c), 1, FFTW_ESTIMATE);
  std::copy(v, v + h * w * c, in.get());
  fftw_execute(p.plan);
  const auto* r = reinterpret_cast<const cdouble*>(res.get());
  std::copy(r, r + h * wh * c, out);
}

// Real part of the unnormalized backward c2c transform of a full [H, W, C] grid.
void c2c_backward_real(const cdouble* full, std::size_t h, std::size_t w, std::size_t c,
                       double scale, double* out) {
  std::unique_ptr<fftw_complex, FftwDeleter<fftw_complex>> buf(fftw_alloc_complex(h * w * c));
  const int n[2] = {static_cast<int>(h), static_cast<int>(w)};
  Plan p;
  p.plan = fftw_plan_many_dft(2, n, static_cast<int>(c), buf.get(), nullptr,
                              static_cast<int>(c), 1, buf.get(), nullptr,
                              static_cast<int>(c), 1, FFTW_BACKWARD, FFTW_ESTIMATE);
  auto* z = reinterpret_cast<cdouble*>(buf.get());
  std::copy(full, full + h * w * c, z);
  fftw_execute(p.plan);
  for (std::size_t i = 0; i < h * w * c; ++i) out[i] = scale * z[i].real();
}

double column_weight(std::size_t col, std::size_t w) {
  return (col == 0 || (w % 2 == 0 && col == w / 2)) ? 1.0 : 2.0;
}

}  // namespace

ComplexTensor rfft2(const Tensor& v) {
  const Dims4 d = dims_of(v.shape(), "rfft2");
  if (d.h < 2 || d.w < 2) throw ShapeError("rfft2: spatial extents must be >= 2");
  const std::size_t wh = d.w / 2 + 1;
  ComplexTensor out(with_dims(v.shape(), d.h, wh, d.c));
  std::vector<cdouble> buf(d.h * wh * d.c);
  for (std::size_t b = 0; b < d.b; ++b) {
    r2c_grid(v.data().data() + b * d.h * d.w * d.c, d.h, d.w, d.c, buf.data());
    const std::size_t base = b * buf.size();
    for (std::size_t i = 0; i < buf.size(); ++i) {
      out.re[base + i] = buf[i].real();
      out.im[base + i] = buf[i].imag();
    }
  }
  return out;
}

Tensor irfft2(const ComplexTensor& s, std::size_t h, std::size_t w) {
  const Dims4 d = dims_of(s.shape(), "irfft2");
  if (h < 2 || w < 2 || d.h != h || d.w != w / 2 + 1) {
    throw ShapeError("irfft2: spectrum " + shape_string(s.shape()) +
                     " does not match a " + std::to_string(h) + "x" +
                     std::to_string(w) + " grid");
  }
  Tensor out(with_dims(s.shape(), h, w, d.c));
  std::vector<cdouble> full(h * w * d.c);
  const double inv = 1.0 / static_cast<double>(h * w);
  for (std::size_t b = 0; b < d.b; ++b) {
    std::fill(full.begin(), full.end(), cdouble{});
    const std::size_t sbase = b * d.h * d.w * d.c;
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t col = 0; col < d.w; ++col) {
        const double half = 0.5 * column_weight(col, w);
        const std::size_t mr = (h - r) % h, mc = (w - col) % w;
        for (std::size_t ch = 0; ch < d.c; ++ch) {
          const std::size_t si = sbase + (r * d.w + col) * d.c + ch;
          const cdouble y{s.re[si], s.im[si]};
          full[(r * w + col) * d.c + ch] += half * y;
          full[(mr * w + mc) * d.c + ch] += half * std::conj(y);
        }
      }
    }
    c2c_backward_real(full.data(), h, w, d.c, inv, out.data().data() + b * h * w * d.c);
  }
  return out;
}

ComplexTensor truncate_modes(const ComplexTensor& s, const ModeLayout& layout) {
  layout.validate();
  const Dims4 d = dims_of(s.shape(), "truncate_modes");
  if (d.h != layout.grid_h || d.w != layout.half_width()) {
    throw ShapeError("truncate_modes: spectrum " + shape_string(s.shape()) +
                     " incompatible with layout " + std::to_string(layout.grid_h) + "x" +
                     std::to_string(layout.grid_w));
  }
  const auto rows = layout.kept_rows();
  ComplexTensor out(with_dims(s.shape(), layout.k1, layout.k2, d.c));
  for (std::size_t b = 0; b < d.b; ++b) {
    for (std::size_t i = 0; i < layout.k1; ++i) {
      for (std::size_t j = 0; j < layout.k2; ++j) {
        const std::size_t src = ((b * d.h + rows[i]) * d.w + j) * d.c;
        const std::size_t dst = ((b * layout.k1 + i) * layout.k2 + j) * d.c;
        for (std::size_t ch = 0; ch < d.c; ++ch) {
          out.re[dst + ch] = s.re[src + ch];
          out.im[dst + ch] = s.im[src + ch];
        }
      }
    }
  }
  return out;
}

ComplexTensor pad_modes(const ComplexTensor& t, const ModeLayout& layout) {
  layout.validate();
  const Dims4 d = dims_of(t.shape(), "pad_modes");
  if (d.h != layout.k1 || d.w != layout.k2) {
    throw ShapeError("pad_modes: block " + shape_string(t.shape()) +
                     " does not match k1=" + std::to_string(layout.k1) +
                     ", k2=" + std::to_string(layout.k2));
  }
  const auto rows = layout.kept_rows();
  const std::size_t wh = layout.half_width();
  ComplexTensor out(with_dims(t.shape(), layout.grid_h, wh, d.c));
  for (std::size_t b = 0; b < d.b; ++b) {
    for (std::size_t i = 0; i < layout.k1; ++i) {
      for (std::size_t j = 0; j < layout.k2; ++j) {
        const std::size_t dst = ((b * layout.grid_h + rows[i]) * wh + j) * d.c;
        const std::size_t src = ((b * layout.k1 + i) * layout.k2 + j) * d.c;
        for (std::size_t ch = 0; ch < d.c; ++ch) {
          out.re[dst + ch] = t.re[src + ch];
          out.im[dst + ch] = t.im[src + ch];
        }
      }
    }
  }
  return out;
}

namespace {

struct ConvDims {
  std::size_t batch, modes, c_out, c_in;
};

ConvDims conv_dims(const Shape& v, const Shape& r) {
  const Dims4 d = dims_of(v, "spectral_conv");
  if (r.size() != 4 || r[0] != d.h || r[1] != d.w || r[3] != d.c) {
    throw ShapeError("spectral_conv: weight " + shape_string(r) +
                     " incompatible with coefficients " + shape_string(v));
  }
  return {d.b, d.h * d.w, r[2], d.c};
}

void conv_forward(const ComplexTensor& v, const ComplexTensor& r, const ConvDims& d,
                  ComplexTensor& out) {
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t m = 0; m < d.modes; ++m) {
      const std::size_t vb = (b * d.modes + m) * d.c_in;
      const std::size_t ob = (b * d.modes + m) * d.c_out;
      for (std::size_t o = 0; o < d.c_out; ++o) {
        const std::size_t rb = (m * d.c_out + o) * d.c_in;
        double sr = 0.0, si = 0.0;
        for (std::size_t i = 0; i < d.c_in; ++i) {
          const double wr = r.re[rb + i], wi = r.im[rb + i];
          const double xr = v.re[vb + i], xi = v.im[vb + i];
          sr += wr * xr - wi * xi;
          si += wr * xi + wi * xr;
        }
        out.re[ob + o] = sr;
        out.im[ob + o] = si;
      }
    }
  }
}

// grad_v = R^H g per mode; grad_R += g v^H summed over the batch.
void conv_backward(const ComplexTensor& go, const ComplexTensor& v, const ComplexTensor& r,
                   const ConvDims& d, ComplexTensor& gv, ComplexTensor& gr) {
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t m = 0; m < d.modes; ++m) {
      const std::size_t vb = (b * d.modes + m) * d.c_in;
      const std::size_t ob = (b * d.modes + m) * d.c_out;
      for (std::size_t o = 0; o < d.c_out; ++o) {
        const double gre = go.re[ob + o], gim = go.im[ob + o];
        const std::size_t rb = (m * d.c_out + o) * d.c_in;
        for (std::size_t i = 0; i < d.c_in; ++i) {
          const double wr = r.re[rb + i], wi = r.im[rb + i];
          const double xr = v.re[vb + i], xi = v.im[vb + i];
          gv.re[vb + i] += wr * gre + wi * gim;
          gv.im[vb + i] += wr * gim - wi * gre;
          gr.re[rb + i] += gre * xr + gim * xi;
          gr.im[rb + i] += gim * xr - gre * xi;
        }
      }
    }
  }
}

}  // namespace

ComplexTensor spectral_conv(const ComplexTensor& v_hat, const ComplexTensor& weight) {
  const ConvDims d = conv_dims(v_hat.shape(), weight.shape());
  Shape out_shape = v_hat.shape();
  out_shape.back() = d.c_out;
  ComplexTensor out(out_shape);
  conv_forward(v_hat, weight, d, out);
  return out;
}

namespace {

// Dense twiddle tables for the retained modes.
struct Twiddles {
  detail::RowMat cos_h, sin_h;  // k1 x H
  detail::RowMat cos_w, sin_w;  // k2 x W
};

Twiddles make_twiddles(const ModeLayout& layout) {
  const auto rows = layout.kept_rows();
  const std::size_t h = layout.grid_h, w = layout.grid_w;
  Twiddles t;
  t.cos_h.resize(static_cast<Eigen::Index>(layout.k1), static_cast<Eigen::Index>(h));
  t.sin_h.resizeLike(t.cos_h);
  for (std::size_t i = 0; i < layout.k1; ++i) {
    for (std::size_t n = 0; n < h; ++n) {
      const double a = 2.0 * std::numbers::pi * static_cast<double>((rows[i] * n) % h) /
                       static_cast<double>(h);
      t.cos_h(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(n)) = std::cos(a);
      t.sin_h(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(n)) = std::sin(a);
    }
  }
  t.cos_w.resize(static_cast<Eigen::Index>(layout.k2), static_cast<Eigen::Index>(w));
  t.sin_w.resizeLike(t.cos_w);
  for (std::size_t j = 0; j < layout.k2; ++j) {
    for (std::size_t n = 0; n < w; ++n) {
      const double a =
          2.0 * std::numbers::pi * static_cast<double>((j * n) % w) / static_cast<double>(w);
      t.cos_w(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(n)) = std::cos(a);
      t.sin_w(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(n)) = std::sin(a);
    }
  }
  return t;
}

// X[b, i, j, c] = scale * col_weight[j] * sum_{h,w} v[b,h,w,c] e^{-2 pi i (r_i h/H + j w/W)}
void forward_dft(const Tensor& v, const Dims4& d, const ModeLayout& layout,
                 const Twiddles& tw, const std::vector<double>* col_weight, double scale,
                 ComplexTensor& out) {
  using detail::RowMat;
  const auto k1 = static_cast<Eigen::Index>(layout.k1);
  const auto k2 = static_cast<Eigen::Index>(layout.k2);
  const auto wc = static_cast<Eigen::Index>(d.w * d.c);
  const auto c = static_cast<Eigen::Index>(d.c);
  RowMat a_re(k1, wc), a_im(k1, wc), x_re(k2, c), x_im(k2, c);
  for (std::size_t b = 0; b < d.b; ++b) {
    const auto grid = detail::view(v.data().data() + b * d.h * d.w * d.c, d.h, d.w * d.c);
    a_re.noalias() = tw.cos_h * grid;
    a_im.noalias() = -(tw.sin_h * grid);
    for (Eigen::Index i = 0; i < k1; ++i) {
      const auto are = detail::view(a_re.data() + i * wc, d.w, d.c);
      const auto aim = detail::view(a_im.data() + i * wc, d.w, d.c);
      x_re.noalias() = tw.cos_w * are;
      x_re.noalias() += tw.sin_w * aim;
      x_im.noalias() = tw.cos_w * aim;
      x_im.noalias() -= tw.sin_w * are;
      const std::size_t base = (b * layout.k1 + static_cast<std::size_t>(i)) * layout.k2 * d.c;
      for (Eigen::Index j = 0; j < k2; ++j) {
        const double f = scale * (col_weight ? (*col_weight)[static_cast<std::size_t>(j)] : 1.0);
        for (Eigen::Index ch = 0; ch < c; ++ch) {
          const std::size_t o = base + static_cast<std::size_t>(j * c + ch);
          out.re[o] = f * x_re(j, ch);
          out.im[o] = f * x_im(j, ch);
        }
      }
    }
  }
}

// x[b,h,w,c] = scale * Re sum_{i,j} col_weight[j] * Y[b,i,j,c] e^{+2 pi i (r_i h/H + j w/W)}
void inverse_dft(const ComplexTensor& y, const Dims4& d, const ModeLayout& layout,
                 const Twiddles& tw, const std::vector<double>* col_weight, double scale,
                 Tensor& out, bool accumulate = false) {
  using detail::RowMat;
  const auto k1 = static_cast<Eigen::Index>(layout.k1);
  const auto k2 = static_cast<Eigen::Index>(layout.k2);
  const auto c = static_cast<Eigen::Index>(d.c);
  const auto wc = static_cast<Eigen::Index>(d.w * d.c);
  RowMat y_re(k2, c), y_im(k2, c), z_re(k1, wc), z_im(k1, wc);
  for (std::size_t b = 0; b < d.b; ++b) {
    for (Eigen::Index i = 0; i < k1; ++i) {
      const std::size_t base = (b * layout.k1 + static_cast<std::size_t>(i)) * layout.k2 * d.c;
      for (Eigen::Index j = 0; j < k2; ++j) {
        const double f = col_weight ? (*col_weight)[static_cast<std::size_t>(j)] : 1.0;
        for (Eigen::Index ch = 0; ch < c; ++ch) {
          const std::size_t o = base + static_cast<std::size_t>(j * c + ch);
          y_re(j, ch) = f * y.re[o];
          y_im(j, ch) = f * y.im[o];
        }
      }
      auto zr = detail::view(z_re.data() + i * wc, d.w, d.c);
      auto zi = detail::view(z_im.data() + i * wc, d.w, d.c);
      zr.noalias() = tw.cos_w.transpose() * y_re;
      zr.noalias() -= tw.sin_w.transpose() * y_im;
      zi.noalias() = tw.cos_w.transpose() * y_im;
      zi.noalias() += tw.sin_w.transpose() * y_re;
    }
    auto grid = detail::view(out.data().data() + b * d.h * d.w * d.c, d.h, d.w * d.c);
    if (accumulate) {
      grid.noalias() += scale * (tw.cos_h.transpose() * z_re);
    } else {
      grid.noalias() = scale * (tw.cos_h.transpose() * z_re);
    }
    grid.noalias() -= scale * (tw.sin_h.transpose() * z_im);
  }
}

std::vector<double> column_weights(const ModeLayout& layout) {
  std::vector<double> cw(layout.k2);
  for (std::size_t j = 0; j < layout.k2; ++j) cw[j] = column_weight(j, layout.grid_w);
  return cw;
}

Dims4 check_grid(const Shape& s, const ModeLayout& layout, const char* what) {
  layout.validate();
  const Dims4 d = dims_of(s, what);
  if (d.h != layout.grid_h || d.w != layout.grid_w) {
    throw ShapeError(std::string(what) + ": grid " + shape_string(s) +
                     " does not match layout " + std::to_string(layout.grid_h) + "x" +
                     std::to_string(layout.grid_w));
  }
  return d;
}

Dims4 check_block(const Shape& s, const ModeLayout& layout, const char* what) {
  layout.validate();
  const Dims4 d = dims_of(s, what);
  if (d.h != layout.k1 || d.w != layout.k2) {
    throw ShapeError(std::string(what) + ": block " + shape_string(s) +
                     " does not match k1=" + std::to_string(layout.k1) +
                     ", k2=" + std::to_string(layout.k2));
  }
  return d;
}

}  // namespace

ComplexTensor truncated_rfft2(const Tensor& v, const ModeLayout& layout) {
  const Dims4 d = check_grid(v.shape(), layout, "truncated_rfft2");
  ComplexTensor out(with_dims(v.shape(), layout.k1, layout.k2, d.c));
  forward_dft(v, d, layout, make_twiddles(layout), nullptr, 1.0, out);
  return out;
}

Tensor padded_irfft2(const ComplexTensor& t, const ModeLayout& layout) {
  const Dims4 blk = check_block(t.shape(), layout, "padded_irfft2");
  const Dims4 d{blk.b, layout.grid_h, layout.grid_w, blk.c};
  Tensor out(with_dims(t.shape(), d.h, d.w, d.c));
  const auto cw = column_weights(layout);
  inverse_dft(t, d, layout, make_twiddles(layout), &cw,
              1.0 / static_cast<double>(d.h * d.w), out);
  return out;
}

}  // namespace mtlfno::spectral

namespace mtlfno::ad {

using spectral::ModeLayout;

namespace {

using cdouble = std::complex<double>;

CVar record_complex(Tape& tape, ComplexTensor value, std::span<const Var> parents,
                    Tape::BackwardFn fn, const char* op) {
  std::vector<Tensor> values;
  values.push_back(std::move(value.re));
  values.push_back(std::move(value.im));
  auto out = tape.record(std::move(values), parents, std::move(fn), op);
  return {out[0], out[1]};
}

// Upstream gradient of a two-output (re, im) op; missing parts are zero.
ComplexTensor grad_pair(std::span<const Tensor* const> g, const Shape& shape) {
  return ComplexTensor(g[0] ? *g[0] : Tensor(shape), g[1] ? *g[1] : Tensor(shape));
}

void accumulate(Tape& t, CVar target, ComplexTensor grad) {
  t.accumulate(target.re, std::move(grad.re));
  t.accumulate(target.im, std::move(grad.im));
}

}  // namespace

CVar rfft2(Var v) {
  ComplexTensor value = spectral::rfft2(v.value());
  const Shape out_shape = value.shape();
  const Var parents[] = {v};
  auto backward = [v, out_shape](std::span<const Tensor* const> g, Tape& t) {
    // Adjoint of the real-to-half-spectrum map: real part of the unnormalized
    // inverse DFT of the gradient placed on the half spectrum.
    const spectral::Dims4 d = spectral::dims_of(v.shape(), "rfft2");
    const std::size_t wh = d.w / 2 + 1;
    const ComplexTensor gs = grad_pair(g, out_shape);
    Tensor gv(v.shape());
    std::vector<cdouble> full(d.h * d.w * d.c);
    for (std::size_t b = 0; b < d.b; ++b) {
      std::fill(full.begin(), full.end(), cdouble{});
      for (std::size_t r = 0; r < d.h; ++r) {
        for (std::size_t col = 0; col < wh; ++col) {
          for (std::size_t ch = 0; ch < d.c; ++ch) {
            const std::size_t si = ((b * d.h + r) * wh + col) * d.c + ch;
            full[(r * d.w + col) * d.c + ch] = {gs.re[si], gs.im[si]};
          }
        }
      }
      spectral::c2c_backward_real(full.data(), d.h, d.w, d.c, 1.0,
                                  gv.data().data() + b * d.h * d.w * d.c);
    }
    t.accumulate(v, std::move(gv));
  };
  return record_complex(*v.tape, std::move(value), parents, std::move(backward), "rfft2");
}

Var irfft2(CVar s, std::size_t h, std::size_t w) {
  Tensor value = spectral::irfft2(s.value(), h, w);
  auto backward = [s, h, w](std::span<const Tensor* const> g, Tape& t) {
    // x = (1/HW) sum c_k Re(Y_k e^{i theta}) => dL/dY_k = (c_k/HW) rfft2(g)_k.
    ComplexTensor gy = spectral::rfft2(*g[0]);
    const std::size_t wh = w / 2 + 1;
    const double inv = 1.0 / static_cast<double>(h * w);
    const std::size_t c = gy.shape().back();
    for (std::size_t i = 0; i < gy.size(); ++i) {
      const std::size_t col = (i / c) % wh;
      const double f = inv * spectral::column_weight(col, w);
      gy.re[i] *= f;
      gy.im[i] *= f;
    }
    accumulate(t, s, std::move(gy));
  };
  return s.re.tape->record(std::move(value), {s.re, s.im}, std::move(backward), "irfft2");
}

CVar truncate_modes(CVar s, const ModeLayout& layout) {
  ComplexTensor value = spectral::truncate_modes(s.value(), layout);
  const Shape out_shape = value.shape();
  const Var parents[] = {s.re, s.im};
  auto backward = [s, layout, out_shape](std::span<const Tensor* const> g, Tape& t) {
    accumulate(t, s, spectral::pad_modes(grad_pair(g, out_shape), layout));
  };
  return record_complex(*s.re.tape, std::move(value), parents, std::move(backward),
                        "truncate_modes");
}

CVar pad_modes(CVar block, const ModeLayout& layout) {
  ComplexTensor value = spectral::pad_modes(block.value(), layout);
  const Shape out_shape = value.shape();
  const Var parents[] = {block.re, block.im};
  auto backward = [block, layout, out_shape](std::span<const Tensor* const> g, Tape& t) {
    accumulate(t, block, spectral::truncate_modes(grad_pair(g, out_shape), layout));
  };
  return record_complex(*block.re.tape, std::move(value), parents, std::move(backward),
                        "pad_modes");
}

CVar spectral_conv(CVar v_hat, CVar weight) {
  const ComplexTensor v = v_hat.value();
  const ComplexTensor r = weight.value();
  const spectral::ConvDims d = spectral::conv_dims(v.shape(), r.shape());
  Shape out_shape = v.shape();
  out_shape.back() = d.c_out;
  ComplexTensor out(out_shape);
  spectral::conv_forward(v, r, d, out);
  const Var parents[] = {v_hat.re, v_hat.im, weight.re, weight.im};
  auto backward = [v_hat, weight, d, out_shape](std::span<const Tensor* const> g,
                                                Tape& t) {
    const ComplexTensor go = grad_pair(g, out_shape);
    const Tensor& vre = v_hat.re.value();
    const Tensor& rre = weight.re.value();
    ComplexTensor gv(vre.shape()), gr(rre.shape());
    spectral::conv_backward(go, v_hat.value(), weight.value(), d, gv, gr);
    accumulate(t, v_hat, std::move(gv));
    accumulate(t, weight, std::move(gr));
  };
  return record_complex(*v_hat.re.tape, std::move(out), parents, std::move(backward),
                        "spectral_conv");
}

CVar truncated_rfft2(Var v, const ModeLayout& layout) {
  const spectral::Dims4 d = spectral::check_grid(v.shape(), layout, "truncated_rfft2");
  auto tw = std::make_shared<const spectral::Twiddles>(spectral::make_twiddles(layout));
  ComplexTensor out(spectral::with_dims(v.shape(), layout.k1, layout.k2, d.c));
  spectral::forward_dft(v.value(), d, layout, *tw, nullptr, 1.0, out);
  const Shape out_shape = out.shape();
  const Var parents[] = {v};
  auto backward = [v, layout, d, tw, out_shape](std::span<const Tensor* const> g,
                                                Tape& t) {
    // Adjoint: grad_v = Re(sum_k G_k e^{+i theta_k}).
    Tensor gv(v.shape());
    spectral::inverse_dft(grad_pair(g, out_shape), d, layout, *tw, nullptr, 1.0, gv);
    t.accumulate(v, std::move(gv));
  };
  return record_complex(*v.tape, std::move(out), parents, std::move(backward),
                        "truncated_rfft2");
}

Var padded_irfft2(CVar block, const ModeLayout& layout) {
  const spectral::Dims4 blk = spectral::check_block(block.shape(), layout, "padded_irfft2");
  const spectral::Dims4 d{blk.b, layout.grid_h, layout.grid_w, blk.c};
  auto tw = std::make_shared<const spectral::Twiddles>(spectral::make_twiddles(layout));
  auto cw = std::make_shared<const std::vector<double>>(spectral::column_weights(layout));
  const double inv = 1.0 / static_cast<double>(d.h * d.w);
  Tensor out(spectral::with_dims(block.shape(), d.h, d.w, d.c));
  spectral::inverse_dft(block.value(), d, layout, *tw, cw.get(), inv, out);
  auto backward = [block, layout, d, tw, cw, inv](std::span<const Tensor* const> g,
                                                  Tape& t) {
    // Adjoint: grad_Y_k = (c_k / HW) sum_n g_n e^{-i theta_k n}.
    ComplexTensor gy(block.shape());
    spectral::forward_dft(*g[0], d, layout, *tw, cw.get(), inv, gy);
    accumulate(t, block, std::move(gy));
  };
  return block.re.tape->record(std::move(out), {block.re, block.im}, std::move(backward),
                               "padded_irfft2");
}

Var fourier_layer(Var v, CVar r, Var w, Var b, const ModeLayout& layout, GeluMode gelu) {
  const spectral::Dims4 d = spectral::check_grid(v.shape(), layout, "fourier_layer");
  const Shape& ws = w.shape();
  if (ws.size() != 2 || ws[0] != d.c || b.value().rank() != 1 || b.shape()[0] != ws[1]) {
    throw ShapeError("fourier_layer: weight " + shape_string(ws) + " / bias " +
                     shape_string(b.shape()) + " incompatible with " + shape_string(v.shape()));
  }
  const std::size_t c_out = ws[1];
  auto tw = std::make_shared<const spectral::Twiddles>(spectral::make_twiddles(layout));
  auto cw = std::make_shared<const std::vector<double>>(spectral::column_weights(layout));
  const double inv = 1.0 / static_cast<double>(d.h * d.w);

  auto coeffs = std::make_shared<ComplexTensor>(spectral::with_dims(v.shape(), layout.k1, layout.k2, d.c));
  spectral::forward_dft(v.value(), d, layout, *tw, nullptr, 1.0, *coeffs);
  const spectral::ConvDims cd = spectral::conv_dims(coeffs->shape(), r.shape());
  if (cd.c_out != c_out) {
    throw ShapeError("fourier_layer: spectral weight " + shape_string(r.shape()) +
                     " disagrees with spatial weight " + shape_string(ws));
  }
  ComplexTensor mixed(spectral::with_dims(v.shape(), layout.k1, layout.k2, c_out));
  spectral::conv_forward(*coeffs, r.value(), cd, mixed);

  const spectral::Dims4 od{d.b, d.h, d.w, c_out};
  const std::size_t rows = d.b * d.h * d.w;
  auto pre = std::make_shared<Tensor>(spectral::with_dims(v.shape(), d.h, d.w, c_out));
  spectral::inverse_dft(mixed, od, layout, *tw, cw.get(), inv, *pre);
  {
    auto p = detail::view(pre->data().data(), rows, c_out);
    p.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.value().data().data(),
                                                         static_cast<Eigen::Index>(c_out));
    detail::gemm(v.value().data().data(), w.value().data().data(), pre->data().data(), rows,
                 d.c, c_out, false, false, 1.0, true);
  }
  auto th = std::make_shared<detail::AlignedBuffer>(gelu == GeluMode::tanh ? pre->size() : 0);
  Tensor out(pre->shape());
  detail::gelu_forward(pre->data().data(), out.data().data(), th->data(), pre->size(), gelu);

  auto backward = [v, r, w, b, layout, d, od, rows, c_out, cd, tw, cw, inv, coeffs, pre, th,
                   gelu](std::span<const Tensor* const> g, Tape& t) {
    Tensor gp(pre->shape());
    detail::gelu_backward(pre->data().data(), th->data(), g[0]->data().data(),
                          gp.data().data(), pre->size(), gelu);
    const double* gpp = gp.data().data();
    if (t.requires_grad(b)) {
      Tensor gb(b.shape());
      Eigen::Map<Eigen::RowVectorXd>(gb.data().data(), static_cast<Eigen::Index>(c_out)) =
          detail::view(gpp, rows, c_out).colwise().sum();
      t.accumulate(b, std::move(gb));
    }
    if (t.requires_grad(w)) {
      Tensor gw(w.shape());
      detail::gemm(v.value().data().data(), gpp, gw.data().data(), d.c, rows, c_out, true,
                   false, 1.0, false);
      t.accumulate(w, std::move(gw));
    }
    const bool need_v = t.requires_grad(v);
    const bool need_r = t.requires_grad(r.re) || t.requires_grad(r.im);
    if (!need_v && !need_r) return;
    ComplexTensor gmixed(spectral::with_dims(v.shape(), layout.k1, layout.k2, c_out));
    spectral::forward_dft(gp, od, layout, *tw, cw.get(), inv, gmixed);
    ComplexTensor gcoeffs(coeffs->shape()), gr(r.shape());
    spectral::conv_backward(gmixed, *coeffs, r.value(), cd, gcoeffs, gr);
    if (need_r) accumulate(t, r, std::move(gr));
    if (need_v) {
      Tensor gv(v.shape());
      detail::gemm(gpp, w.value().data().data(), gv.data().data(), rows, c_out, d.c, false, true,
                   1.0, false);
      spectral::inverse_dft(gcoeffs, d, layout, *tw, nullptr, 1.0, gv, true);
      t.accumulate(v, std::move(gv));
    }
  };
  return v.tape->record(std::move(out), {v, r.re, r.im, w, b}, std::move(backward),
                        "fourier_layer");
}

}  // namespace mtlfno::ad
