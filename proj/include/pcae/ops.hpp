#pragma once

// Differentiable operator kernels. Every forward is a pure function of its
// inputs; whatever the backward pass needs is returned in a small cache
// struct instead of being hidden in global state.
//
// Layout conventions:
//   row matrices      [N, F]
//   volumetric grids  [B, C, D, H, W]

#include <cmath>
#include <optional>
#include <vector>

#include "pcae/rng.hpp"
#include "pcae/tensor.hpp"

namespace pcae::ops {

// ---------------------------------------------------------------------------
// dense: y = x W^T (+ b)
// ---------------------------------------------------------------------------

template <class T>
BasicTensor<T> dense_forward(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>* bias) {
  if (x.rank() != 2 || weight.rank() != 2 || x.dim(1) != weight.dim(1))
    throw ShapeError("dense: input " + shape_str(x.shape()) + " incompatible with weight " +
                     shape_str(weight.shape()));
  const std::size_t n = x.dim(0), in = x.dim(1), out = weight.dim(0);
  if (bias && bias->size() != out) throw ShapeError("dense: bias size mismatch");
  BasicTensor<T> y({n, out});
  for (std::size_t r = 0; r < n; ++r) {
    const T* xr = x.data() + r * in;
    T* yr = y.data() + r * out;
    for (std::size_t o = 0; o < out; ++o) {
      const T* wr = weight.data() + o * in;
      T acc = bias ? (*bias)[o] : T(0);
      for (std::size_t i = 0; i < in; ++i) acc += wr[i] * xr[i];
      yr[o] = acc;
    }
  }
  return y;
}

/// Accumulates into grad_weight / grad_bias, returns the input gradient.
template <class T>
BasicTensor<T> dense_backward(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& dy,
                              BasicTensor<T>& grad_weight, BasicTensor<T>* grad_bias) {
  const std::size_t n = x.dim(0), in = x.dim(1), out = weight.dim(0);
  BasicTensor<T> dx({n, in});
  for (std::size_t r = 0; r < n; ++r) {
    const T* xr = x.data() + r * in;
    const T* gr = dy.data() + r * out;
    T* dxr = dx.data() + r * in;
    for (std::size_t o = 0; o < out; ++o) {
      const T g = gr[o];
      if (g == T(0)) continue;
      const T* wr = weight.data() + o * in;
      T* gw = grad_weight.data() + o * in;
      for (std::size_t i = 0; i < in; ++i) {
        dxr[i] += g * wr[i];
        gw[i] += g * xr[i];
      }
      if (grad_bias) (*grad_bias)[o] += g;
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// conv3d: stride 1 cross-correlation, cubic kernel, symmetric zero padding.
// Lowered per output depth slice to an im2col product so the inner loops run
// over contiguous H'W' planes.
// ---------------------------------------------------------------------------

struct ConvGeometry {
  std::size_t batch, cin, cout, d, h, w, k, pad, od, oh, ow;
};

template <class T>
ConvGeometry conv_geometry(const BasicTensor<T>& x, const BasicTensor<T>& weight, std::size_t padding) {
  if (x.rank() != 5) throw ShapeError("conv3d: expected [B,C,D,H,W] input, got " + shape_str(x.shape()));
  if (weight.rank() != 5 || weight.dim(2) != weight.dim(3) || weight.dim(3) != weight.dim(4))
    throw ShapeError("conv3d: weight must be [Cout,Cin,k,k,k], got " + shape_str(weight.shape()));
  if (weight.dim(1) != x.dim(1))
    throw ShapeError("conv3d: channel mismatch, input has " + std::to_string(x.dim(1)) + ", weight expects " +
                     std::to_string(weight.dim(1)));
  ConvGeometry g{x.dim(0), x.dim(1), weight.dim(0), x.dim(2), x.dim(3), x.dim(4), weight.dim(2), padding, 0, 0, 0};
  auto extent = [&](std::size_t e) -> std::size_t {
    const long v = static_cast<long>(e) + 2 * static_cast<long>(padding) - static_cast<long>(g.k) + 1;
    if (v <= 0) throw ShapeError("conv3d: non-positive output extent");
    return static_cast<std::size_t>(v);
  };
  g.od = extent(g.d);
  g.oh = extent(g.h);
  g.ow = extent(g.w);
  return g;
}

namespace detail {

// col has shape [cin*k^3, oh*ow] for output depth slice `z` of batch item `b`.
template <class T>
void im2col_slice(const ConvGeometry& g, const T* in, std::size_t z, std::vector<T>& col) {
  const std::size_t plane = g.oh * g.ow;
  col.assign(g.cin * g.k * g.k * g.k * plane, T(0));
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.cin; ++c) {
    const T* ch = in + c * g.d * g.h * g.w;
    for (std::size_t kd = 0; kd < g.k; ++kd) {
      const long id = static_cast<long>(z + kd) - static_cast<long>(g.pad);
      for (std::size_t kh = 0; kh < g.k; ++kh) {
        for (std::size_t kw = 0; kw < g.k; ++kw, ++row) {
          if (id < 0 || id >= static_cast<long>(g.d)) continue;
          T* dst = col.data() + row * plane;
          const T* src_slice = ch + static_cast<std::size_t>(id) * g.h * g.w;
          for (std::size_t y = 0; y < g.oh; ++y) {
            const long ih = static_cast<long>(y + kh) - static_cast<long>(g.pad);
            if (ih < 0 || ih >= static_cast<long>(g.h)) continue;
            const T* src = src_slice + static_cast<std::size_t>(ih) * g.w;
            for (std::size_t x = 0; x < g.ow; ++x) {
              const long iw = static_cast<long>(x + kw) - static_cast<long>(g.pad);
              if (iw >= 0 && iw < static_cast<long>(g.w)) dst[y * g.ow + x] = src[iw];
            }
          }
        }
      }
    }
  }
}

template <class T>
void col2im_slice(const ConvGeometry& g, const std::vector<T>& col, std::size_t z, T* din) {
  const std::size_t plane = g.oh * g.ow;
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.cin; ++c) {
    T* ch = din + c * g.d * g.h * g.w;
    for (std::size_t kd = 0; kd < g.k; ++kd) {
      const long id = static_cast<long>(z + kd) - static_cast<long>(g.pad);
      for (std::size_t kh = 0; kh < g.k; ++kh) {
        for (std::size_t kw = 0; kw < g.k; ++kw, ++row) {
          if (id < 0 || id >= static_cast<long>(g.d)) continue;
          const T* src = col.data() + row * plane;
          T* dst_slice = ch + static_cast<std::size_t>(id) * g.h * g.w;
          for (std::size_t y = 0; y < g.oh; ++y) {
            const long ih = static_cast<long>(y + kh) - static_cast<long>(g.pad);
            if (ih < 0 || ih >= static_cast<long>(g.h)) continue;
            T* dst = dst_slice + static_cast<std::size_t>(ih) * g.w;
            for (std::size_t x = 0; x < g.ow; ++x) {
              const long iw = static_cast<long>(x + kw) - static_cast<long>(g.pad);
              if (iw >= 0 && iw < static_cast<long>(g.w)) dst[iw] += src[y * g.ow + x];
            }
          }
        }
      }
    }
  }
}

}  // namespace detail

template <class T>
BasicTensor<T> conv3d_forward(const BasicTensor<T>& x, const BasicTensor<T>& weight, std::size_t padding) {
  const ConvGeometry g = conv_geometry(x, weight, padding);
  BasicTensor<T> y({g.batch, g.cout, g.od, g.oh, g.ow});
  const std::size_t plane = g.oh * g.ow, rows = g.cin * g.k * g.k * g.k;
  const std::size_t in_stride = g.cin * g.d * g.h * g.w, out_stride = g.cout * g.od * plane;
  std::vector<T> col;
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t z = 0; z < g.od; ++z) {
      detail::im2col_slice(g, x.data() + b * in_stride, z, col);
      for (std::size_t co = 0; co < g.cout; ++co) {
        T* out = y.data() + b * out_stride + co * g.od * plane + z * plane;
        const T* wrow = weight.data() + co * rows;
        for (std::size_t r = 0; r < rows; ++r) {
          const T wv = wrow[r];
          if (wv == T(0)) continue;
          const T* c = col.data() + r * plane;
          for (std::size_t p = 0; p < plane; ++p) out[p] += wv * c[p];
        }
      }
    }
  }
  return y;
}

template <class T>
BasicTensor<T> conv3d_backward(const BasicTensor<T>& x, const BasicTensor<T>& weight, std::size_t padding,
                               const BasicTensor<T>& dy, BasicTensor<T>& grad_weight) {
  const ConvGeometry g = conv_geometry(x, weight, padding);
  BasicTensor<T> dx(x.shape());
  const std::size_t plane = g.oh * g.ow, rows = g.cin * g.k * g.k * g.k;
  const std::size_t in_stride = g.cin * g.d * g.h * g.w, out_stride = g.cout * g.od * plane;
  std::vector<T> col, dcol;
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t z = 0; z < g.od; ++z) {
      detail::im2col_slice(g, x.data() + b * in_stride, z, col);
      dcol.assign(col.size(), T(0));
      for (std::size_t co = 0; co < g.cout; ++co) {
        const T* go = dy.data() + b * out_stride + co * g.od * plane + z * plane;
        const T* wrow = weight.data() + co * rows;
        T* gw = grad_weight.data() + co * rows;
        for (std::size_t r = 0; r < rows; ++r) {
          const T* c = col.data() + r * plane;
          T* dc = dcol.data() + r * plane;
          const T wv = wrow[r];
          T acc = 0;
          for (std::size_t p = 0; p < plane; ++p) {
            acc += go[p] * c[p];
            dc[p] += wv * go[p];
          }
          gw[r] += acc;
        }
      }
      detail::col2im_slice(g, dcol, z, dx.data() + b * in_stride);
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// maxpool3d: 2^3 window, stride 2.
// ---------------------------------------------------------------------------

template <class T>
struct MaxPoolResult {
  BasicTensor<T> output;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

template <class T>
MaxPoolResult<T> maxpool3d_forward(const BasicTensor<T>& x) {
  if (x.rank() != 5) throw ShapeError("maxpool3d: expected [B,C,D,H,W] input");
  const std::size_t n = x.dim(0) * x.dim(1), d = x.dim(2), h = x.dim(3), w = x.dim(4);
  if (d % 2 || h % 2 || w % 2) throw ShapeError("maxpool3d: odd spatial extent " + shape_str(x.shape()));
  MaxPoolResult<T> r{BasicTensor<T>({x.dim(0), x.dim(1), d / 2, h / 2, w / 2}), {}};
  r.argmax.resize(r.output.size());
  std::size_t o = 0;
  for (std::size_t c = 0; c < n; ++c) {
    const std::size_t base = c * d * h * w;
    for (std::size_t z = 0; z < d / 2; ++z)
      for (std::size_t y = 0; y < h / 2; ++y)
        for (std::size_t xx = 0; xx < w / 2; ++xx, ++o) {
          // Visiting in increasing linear index with a strict comparison keeps
          // the lowest index among ties.
          std::size_t best = base + (2 * z) * h * w + (2 * y) * w + 2 * xx;
          for (std::size_t dz = 0; dz < 2; ++dz)
            for (std::size_t dy = 0; dy < 2; ++dy)
              for (std::size_t dx = 0; dx < 2; ++dx) {
                const std::size_t i = base + (2 * z + dz) * h * w + (2 * y + dy) * w + 2 * xx + dx;
                if (x[i] > x[best]) best = i;
              }
          r.argmax[o] = best;
          r.output[o] = x[best];
        }
  }
  return r;
}

template <class T>
BasicTensor<T> maxpool3d_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax,
                                  const BasicTensor<T>& dy) {
  BasicTensor<T> dx(input_shape);
  for (std::size_t o = 0; o < argmax.size(); ++o) dx[argmax[o]] += dy[o];
  return dx;
}

// ---------------------------------------------------------------------------
// Trilinear x2 upsampling with half-pixel centers: output i samples source
// coordinate (i + 0.5) / 2 - 0.5, clamped to the border. Separable, so it is
// applied one axis at a time; the backward pass applies the transposes.
// ---------------------------------------------------------------------------

namespace detail {

struct Tap {
  std::size_t i0, i1;
  double w0, w1;
};

inline std::vector<Tap> upsample_taps(std::size_t n) {
  std::vector<Tap> taps(2 * n);
  for (std::size_t i = 0; i < 2 * n; ++i) {
    double src = (static_cast<double>(i) + 0.5) / 2.0 - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(n - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(src));
    const std::size_t i1 = std::min(i0 + 1, n - 1);
    const double f = src - static_cast<double>(i0);
    taps[i] = {i0, i1, 1.0 - f, f};
  }
  return taps;
}

// Views a tensor as [outer, n, inner] and doubles the middle extent.
template <class T>
std::vector<T> upsample_axis(const std::vector<T>& in, std::size_t outer, std::size_t n, std::size_t inner) {
  const auto taps = upsample_taps(n);
  std::vector<T> out(outer * 2 * n * inner);
  for (std::size_t a = 0; a < outer; ++a)
    for (std::size_t i = 0; i < 2 * n; ++i) {
      const Tap& t = taps[i];
      const T* s0 = in.data() + (a * n + t.i0) * inner;
      const T* s1 = in.data() + (a * n + t.i1) * inner;
      T* dst = out.data() + (a * 2 * n + i) * inner;
      for (std::size_t j = 0; j < inner; ++j) dst[j] = T(t.w0) * s0[j] + T(t.w1) * s1[j];
    }
  return out;
}

template <class T>
std::vector<T> upsample_axis_transpose(const std::vector<T>& gout, std::size_t outer, std::size_t n,
                                       std::size_t inner) {
  const auto taps = upsample_taps(n);
  std::vector<T> gin(outer * n * inner, T(0));
  for (std::size_t a = 0; a < outer; ++a)
    for (std::size_t i = 0; i < 2 * n; ++i) {
      const Tap& t = taps[i];
      const T* src = gout.data() + (a * 2 * n + i) * inner;
      T* d0 = gin.data() + (a * n + t.i0) * inner;
      T* d1 = gin.data() + (a * n + t.i1) * inner;
      for (std::size_t j = 0; j < inner; ++j) {
        d0[j] += T(t.w0) * src[j];
        d1[j] += T(t.w1) * src[j];
      }
    }
  return gin;
}

}  // namespace detail

template <class T>
BasicTensor<T> upsample_trilinear_forward(const BasicTensor<T>& x) {
  if (x.rank() != 5) throw ShapeError("upsample_trilinear: expected [B,C,D,H,W] input");
  const std::size_t n = x.dim(0) * x.dim(1), d = x.dim(2), h = x.dim(3), w = x.dim(4);
  auto v = detail::upsample_axis(x.storage(), n * d * h, w, 1);
  v = detail::upsample_axis(v, n * d, h, 2 * w);
  v = detail::upsample_axis(v, n, d, 4 * h * w);
  return BasicTensor<T>({x.dim(0), x.dim(1), 2 * d, 2 * h, 2 * w}, std::move(v));
}

template <class T>
BasicTensor<T> upsample_trilinear_backward(const Shape& input_shape, const BasicTensor<T>& dy) {
  const std::size_t n = input_shape[0] * input_shape[1], d = input_shape[2], h = input_shape[3], w = input_shape[4];
  auto v = detail::upsample_axis_transpose(dy.storage(), n, d, 4 * h * w);
  v = detail::upsample_axis_transpose(v, n * d, h, 2 * w);
  v = detail::upsample_axis_transpose(v, n * d * h, w, 1);
  return BasicTensor<T>(input_shape, std::move(v));
}

// ---------------------------------------------------------------------------
// Batch normalization over [N, C, S...]: statistics per channel across the
// batch and all trailing dimensions.
// ---------------------------------------------------------------------------

template <class T>
struct NormCache {
  BasicTensor<T> normalized;  // (x - mean) * inv_std
  std::vector<T> inv_std;     // per normalization group
};

inline void norm_dims(const Shape& s, std::size_t& n, std::size_t& c, std::size_t& inner) {
  if (s.size() < 2) throw ShapeError("normalization expects at least [N, C], got " + shape_str(s));
  n = s[0];
  c = s[1];
  inner = 1;
  for (std::size_t i = 2; i < s.size(); ++i) inner *= s[i];
}

template <class T>
BasicTensor<T> batchnorm_forward(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                                 BasicTensor<T>& running_mean, BasicTensor<T>& running_var, bool training,
                                 double momentum, double eps, NormCache<T>* cache) {
  std::size_t n, c, inner;
  norm_dims(x.shape(), n, c, inner);
  if (n * inner == 0) throw ShapeError("batchnorm: zero-size batch");
  if (gamma.size() != c || beta.size() != c) throw ShapeError("batchnorm: channel mismatch");
  BasicTensor<T> y(x.shape());
  NormCache<T> local;
  NormCache<T>& k = cache ? *cache : local;
  k.normalized = BasicTensor<T>(x.shape());
  k.inv_std.assign(c, T(0));
  const double count = static_cast<double>(n * inner);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double mean, var;
    if (training) {
      double s = 0;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < inner; ++i) s += x[(b * c + ch) * inner + i];
      mean = s / count;
      double q = 0;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < inner; ++i) {
          const double dv = x[(b * c + ch) * inner + i] - mean;
          q += dv * dv;
        }
      var = q / count;
      running_mean[ch] = T((1.0 - momentum) * running_mean[ch] + momentum * mean);
      running_var[ch] = T((1.0 - momentum) * running_var[ch] + momentum * var);
    } else {
      mean = running_mean[ch];
      var = running_var[ch];
    }
    const T inv = T(1.0 / std::sqrt(var + eps));
    k.inv_std[ch] = inv;
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t idx = (b * c + ch) * inner + i;
        const T xn = (x[idx] - T(mean)) * inv;
        k.normalized[idx] = xn;
        y[idx] = gamma[ch] * xn + beta[ch];
      }
  }
  return y;
}

/// Backward for training-mode statistics; inference mode is the affine map
/// with frozen statistics and is handled by `training = false`.
template <class T>
BasicTensor<T> batchnorm_backward(const NormCache<T>& cache, const BasicTensor<T>& gamma, const BasicTensor<T>& dy,
                                  bool training, BasicTensor<T>& grad_gamma, BasicTensor<T>& grad_beta) {
  std::size_t n, c, inner;
  norm_dims(dy.shape(), n, c, inner);
  BasicTensor<T> dx(dy.shape());
  const double count = static_cast<double>(n * inner);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum_g = 0, sum_gx = 0;
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t idx = (b * c + ch) * inner + i;
        sum_g += dy[idx];
        sum_gx += dy[idx] * cache.normalized[idx];
      }
    grad_gamma[ch] += T(sum_gx);
    grad_beta[ch] += T(sum_g);
    const double scale = gamma[ch] * cache.inv_std[ch];
    const double mg = training ? sum_g / count : 0.0, mgx = training ? sum_gx / count : 0.0;
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t idx = (b * c + ch) * inner + i;
        dx[idx] = T(scale * (dy[idx] - mg - cache.normalized[idx] * mgx));
      }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Instance normalization with optional per-instance affine (AdaIN):
//   y = (x - mu) / sqrt(var + eps) * s + t
// with population statistics over the spatial cells of each (instance,
// channel). `scale` and `shift` are [B, C] when present.
// ---------------------------------------------------------------------------

template <class T>
BasicTensor<T> instance_norm_forward(const BasicTensor<T>& x, const BasicTensor<T>* scale, const BasicTensor<T>* shift,
                                     double eps, NormCache<T>* cache) {
  std::size_t n, c, inner;
  norm_dims(x.shape(), n, c, inner);
  if ((scale && scale->size() != n * c) || (shift && shift->size() != n * c))
    throw ShapeError("instance_norm: affine parameters must be [B, C] = [" + std::to_string(n) + ", " +
                     std::to_string(c) + "]");
  BasicTensor<T> y(x.shape());
  NormCache<T> local;
  NormCache<T>& k = cache ? *cache : local;
  k.normalized = BasicTensor<T>(x.shape());
  k.inv_std.assign(n * c, T(0));
  for (std::size_t g = 0; g < n * c; ++g) {
    const T* xs = x.data() + g * inner;
    double s = 0;
    for (std::size_t i = 0; i < inner; ++i) s += xs[i];
    const double mean = s / static_cast<double>(inner);
    double q = 0;
    for (std::size_t i = 0; i < inner; ++i) q += (xs[i] - mean) * (xs[i] - mean);
    const double inv = 1.0 / std::sqrt(q / static_cast<double>(inner) + eps);
    k.inv_std[g] = T(inv);
    const T sc = scale ? (*scale)[g] : T(1), sh = shift ? (*shift)[g] : T(0);
    for (std::size_t i = 0; i < inner; ++i) {
      const T xn = T((xs[i] - mean) * inv);
      k.normalized[g * inner + i] = xn;
      y[g * inner + i] = xn * sc + sh;
    }
  }
  return y;
}

/// Input gradient
///   dx_i = s / sqrt(var + eps) * (g_i - mean(g) - xn_i * mean(g * xn))
/// where xn is the normalized value and g the upstream gradient. Gradients
/// for scale and shift are written only when requested.
template <class T>
BasicTensor<T> instance_norm_backward(const NormCache<T>& cache, const BasicTensor<T>* scale, const BasicTensor<T>& dy,
                                      BasicTensor<T>* grad_scale, BasicTensor<T>* grad_shift) {
  std::size_t n, c, inner;
  norm_dims(dy.shape(), n, c, inner);
  BasicTensor<T> dx(dy.shape());
  for (std::size_t g = 0; g < n * c; ++g) {
    const T* gy = dy.data() + g * inner;
    const T* xn = cache.normalized.data() + g * inner;
    double sum_g = 0, sum_gx = 0;
    for (std::size_t i = 0; i < inner; ++i) {
      sum_g += gy[i];
      sum_gx += gy[i] * xn[i];
    }
    if (grad_scale) (*grad_scale)[g] += T(sum_gx);
    if (grad_shift) (*grad_shift)[g] += T(sum_g);
    const double s = scale ? (*scale)[g] : 1.0;
    const double mg = sum_g / static_cast<double>(inner), mgx = sum_gx / static_cast<double>(inner);
    const double f = s * cache.inv_std[g];
    for (std::size_t i = 0; i < inner; ++i) dx[g * inner + i] = T(f * (gy[i] - mg - xn[i] * mgx));
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Pointwise
// ---------------------------------------------------------------------------

template <class T>
BasicTensor<T> elu_forward(const BasicTensor<T>& x) {
  BasicTensor<T> y = x;
  for (auto& v : y.values()) v = v > T(0) ? v : std::expm1(v);
  return y;
}

/// Uses the forward output: d/dx = 1 for x > 0, exp(x) = y + 1 otherwise.
template <class T>
BasicTensor<T> elu_backward(const BasicTensor<T>& y, const BasicTensor<T>& dy) {
  BasicTensor<T> dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (y[i] <= T(0)) dx[i] *= y[i] + T(1);
  return dx;
}

template <class T>
BasicTensor<T> apply_mask(const BasicTensor<T>& x, const BasicTensor<T>& mask) {
  BasicTensor<T> y = x;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= mask[i];
  return y;
}

/// Inverted dropout. Writes the scaled keep-mask into `mask`.
template <class T>
BasicTensor<T> dropout_forward(const BasicTensor<T>& x, double p, bool training, Rng& rng, BasicTensor<T>& mask) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: probability must lie in [0, 1)");
  mask = BasicTensor<T>(x.shape(), T(1));
  if (!training || p == 0.0) return x;
  const T keep = T(1.0 / (1.0 - p));
  for (auto& m : mask.values()) m = rng.uniform() < p ? T(0) : keep;
  return apply_mask(x, mask);
}

template <class T>
T sigmoid(T v) {
  if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
  const T e = std::exp(v);
  return e / (T(1) + e);
}

}  // namespace pcae::ops
