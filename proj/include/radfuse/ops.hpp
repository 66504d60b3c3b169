// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "radfuse/params.hpp"
#include "radfuse/tensor.hpp"

namespace radfuse {

inline constexpr double kLayerNormEps = 1e-5;

namespace fault {
/// Negative-control switch for the check suite: when set, softmax stops
/// normalizing its slices. Never set outside `radfuse check --inject-fault`.
inline std::atomic<bool> break_softmax{false};
}  // namespace fault

// ---------------------------------------------------------------------------
// Scalar kernels

template <typename T>
T relu(const T& x) {
  observe_kink(x, 0.0);
  return x > T(0) ? x : T(0);
}

template <typename T>
T sigmoid(const T& x) {
  using std::exp;
  T s = x >= T(0) ? T(1) / (T(1) + exp(-x)) : exp(x) / (T(1) + exp(x));
  if constexpr (std::is_floating_point_v<T>) {
    // Saturation would otherwise round to exactly 0 or 1.
    constexpr T lo = std::numeric_limits<T>::min();
    constexpr T hi = T(1) - std::numeric_limits<T>::epsilon() / T(2);
    s = std::clamp(s, lo, hi);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Span kernels (hot paths, no allocation)

/// out = W x + b for a single feature vector.
template <typename T>
void linear_into(std::span<const T> x, const LinearParams& p, std::span<T> out) {
  const std::size_t in = p.fan_in(), n_out = p.fan_out();
  if (x.size() != in) {
    throw ShapeError("linear: input trailing dim " + std::to_string(x.size()) +
                     " does not match layer fan-in " + std::to_string(in));
  }
  if (out.size() != n_out) {
    throw ShapeError("linear: output span " + std::to_string(out.size()) +
                     " does not match layer fan-out " + std::to_string(n_out));
  }
  const float* w = p.weight.values().data();
  const float* b = p.bias.values().data();
  for (std::size_t o = 0; o < n_out; ++o) {
    T acc = T(b[o]);
    const float* wr = w + o * in;
    for (std::size_t i = 0; i < in; ++i) acc += x[i] * T(wr[i]);
    out[o] = acc;
  }
}

template <typename T>
void layer_norm_into(std::span<const T> x, const NormParams& p, std::span<T> out) {
  using std::sqrt;
  const std::size_t n = x.size();
  if (p.gamma.size() != n) {
    throw ShapeError("layer_norm: input trailing dim " + std::to_string(n) +
                     " does not match norm width " + std::to_string(p.gamma.size()));
  }
  T mean = T(0);
  for (const T& v : x) mean += v;
  mean /= T(static_cast<double>(n));
  T var = T(0);
  for (const T& v : x) var += (v - mean) * (v - mean);
  var /= T(static_cast<double>(n));
  const T inv = T(1) / sqrt(var + T(kLayerNormEps));
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = (x[i] - mean) * inv * T(p.gamma[i]) + T(p.beta[i]);
  }
}

/// LayerNorm -> linear -> ReLU -> linear on one vector.
template <typename T>
void ffn_into(std::span<const T> x, const FfnParams& p, std::span<T> out) {
  std::vector<T> normed(x.size());
  layer_norm_into<T>(x, p.norm, normed);
  std::vector<T> hidden(p.fc1.fan_out());
  linear_into<T>(normed, p.fc1, hidden);
  for (T& h : hidden) h = relu(h);
  linear_into<T>(hidden, p.fc2, out);
}

// ---------------------------------------------------------------------------
// Tensor ops

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const LinearParams& p) {
  if (x.rank() == 0 || x.dims().back() != p.fan_in()) {
    throw ShapeError("linear: input trailing dim " +
                     (x.rank() ? std::to_string(x.dims().back()) : std::string("<none>")) +
                     " does not match layer fan-in " + std::to_string(p.fan_in()));
  }
  std::vector<std::size_t> dims = x.dims();
  dims.back() = p.fan_out();
  BasicTensor<T> y(dims);
  const std::size_t rows = x.size() / p.fan_in();
  for (std::size_t r = 0; r < rows; ++r) {
    linear_into<T>(x.values().subspan(r * p.fan_in(), p.fan_in()), p,
                   y.values().subspan(r * p.fan_out(), p.fan_out()));
  }
  return y;
}

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const ParamStore& store, const std::string& name) {
  return linear(x, store.linear(name));
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  BasicTensor<T> y = x;
  for (T& v : y.values()) v = relu(v);
  return y;
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
  BasicTensor<T> y = x;
  for (T& v : y.values()) v = sigmoid(v);
  return y;
}

template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const NormParams& p) {
  if (x.rank() == 0) throw ShapeError("layer_norm: scalar input");
  BasicTensor<T> y(x.dims());
  const std::size_t w = x.dims().back();
  for (std::size_t r = 0; r * w < x.size(); ++r) {
    layer_norm_into<T>(x.values().subspan(r * w, w), p, y.values().subspan(r * w, w));
  }
  return y;
}

template <typename T>
BasicTensor<T> ffn(const BasicTensor<T>& x, const FfnParams& p) {
  if (x.rank() == 0 || x.dims().back() != p.norm.gamma.size()) {
    throw ShapeError("ffn: input trailing dim " +
                     (x.rank() ? std::to_string(x.dims().back()) : std::string("<none>")) +
                     " does not match declared width " + std::to_string(p.norm.gamma.size()));
  }
  const std::size_t w = x.dims().back(), out_w = p.fc2.fan_out();
  std::vector<std::size_t> dims = x.dims();
  dims.back() = out_w;
  BasicTensor<T> y(dims);
  for (std::size_t r = 0; r * w < x.size(); ++r) {
    ffn_into<T>(x.values().subspan(r * w, w), p, y.values().subspan(r * out_w, out_w));
  }
  return y;
}

template <typename T>
BasicTensor<T> ffn(const BasicTensor<T>& x, const ParamStore& store, const std::string& name) {
  return ffn(x, store.ffn(name));
}

namespace detail {

inline std::vector<std::size_t> strides_of(const std::vector<std::size_t>& dims) {
  std::vector<std::size_t> s(dims.size(), 1);
  for (std::size_t i = dims.size(); i-- > 1;) s[i - 1] = s[i] * dims[i];
  return s;
}

/// Calls fn(base_offset, slice_offsets) for every slice spanned by `axes`.
template <typename Fn>
void for_each_slice(const std::vector<std::size_t>& dims, const std::vector<bool>& in_slice, Fn&& fn) {
  const auto strides = strides_of(dims);
  std::vector<std::size_t> inner_offsets{0};
  for (std::size_t a = 0; a < dims.size(); ++a) {
    if (!in_slice[a]) continue;
    std::vector<std::size_t> next;
    next.reserve(inner_offsets.size() * dims[a]);
    for (const std::size_t off : inner_offsets)
      for (std::size_t i = 0; i < dims[a]; ++i) next.push_back(off + i * strides[a]);
    inner_offsets = std::move(next);
  }
  std::vector<std::size_t> outer{0};
  for (std::size_t a = 0; a < dims.size(); ++a) {
    if (in_slice[a]) continue;
    std::vector<std::size_t> next;
    next.reserve(outer.size() * dims[a]);
    for (const std::size_t off : outer)
      for (std::size_t i = 0; i < dims[a]; ++i) next.push_back(off + i * strides[a]);
    outer = std::move(next);
  }
  for (const std::size_t base : outer) fn(base, inner_offsets);
}

}  // namespace detail

/// Softmax over the slice spanned by `axes` (every other axis indexes
/// independent slices). Max-subtracted for stability.
template <typename T>
BasicTensor<T> softmax_over(const BasicTensor<T>& x, const std::vector<std::size_t>& axes) {
  using std::exp;
  if (axes.empty()) throw ShapeError("softmax: empty axis set");
  std::vector<bool> in_slice(x.rank(), false);
  for (const std::size_t a : axes) {
    if (a >= x.rank()) {
      throw ShapeError("softmax: axis " + std::to_string(a) + " invalid for dims " +
                       format_dims(x.dims()));
    }
    if (x.dim(a) == 0) throw ShapeError("softmax: axis " + std::to_string(a) + " has empty extent");
    in_slice[a] = true;
  }
  BasicTensor<T> y(x.dims());
  detail::for_each_slice(x.dims(), in_slice, [&](std::size_t base, const std::vector<std::size_t>& offs) {
    T m = x[base + offs[0]];
    for (const std::size_t o : offs) m = std::max(m, x[base + o]);
    T sum = T(0);
    for (const std::size_t o : offs) {
      y[base + o] = exp(x[base + o] - m);
      sum += y[base + o];
    }
    if (fault::break_softmax.load(std::memory_order_relaxed)) sum *= T(0.9);
    for (const std::size_t o : offs) y[base + o] /= sum;
  });
  return y;
}

/// In-place softmax of one contiguous slice.
template <typename T>
void softmax_inplace(std::span<T> x) {
  using std::exp;
  if (x.empty()) throw ShapeError("softmax: empty axis extent");
  T m = x[0];
  for (const T& v : x) m = std::max(m, v);
  T sum = T(0);
  for (T& v : x) {
    v = exp(v - m);
    sum += v;
  }
  if (fault::break_softmax.load(std::memory_order_relaxed)) sum *= T(0.9);
  for (T& v : x) v /= sum;
}

/// Removes `axis`, keeping the maximum along it.
template <typename T>
BasicTensor<T> max_pool_axis(const BasicTensor<T>& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw ShapeError("max_pool: axis " + std::to_string(axis) + " invalid for dims " +
                     format_dims(x.dims()));
  }
  if (x.dim(axis) == 0) throw ShapeError("max_pool: axis " + std::to_string(axis) + " is empty");
  std::vector<std::size_t> out_dims;
  for (std::size_t a = 0; a < x.rank(); ++a)
    if (a != axis) out_dims.push_back(x.dim(a));
  BasicTensor<T> y(out_dims);
  std::vector<bool> in_slice(x.rank(), false);
  in_slice[axis] = true;
  std::size_t k = 0;
  detail::for_each_slice(x.dims(), in_slice, [&](std::size_t base, const std::vector<std::size_t>& offs) {
    T m = x[base + offs[0]];
    for (const std::size_t o : offs) m = std::max(m, x[base + o]);
    y[k++] = m;
  });
  return y;
}

// ---------------------------------------------------------------------------
// Bilinear sampling. Feature maps are [H, W, C]; (u, v) = (column, row) with
// integer coordinates at cell centers. Samples outside [0, W-1] x [0, H-1]
// contribute zero.

/// out += weight * F(u, v).
template <typename T>
void bilinear_accumulate(const Tensor& feature, const T& u, const T& v, const T& weight,
                         std::span<T> out) {
  using std::floor;
  const std::size_t h = feature.dim(0), w = feature.dim(1), c = feature.dim(2);
  if (out.size() != c) throw ShapeError("bilinear: output span does not match channel count");
  const double uu = value_of(u), vv = value_of(v);
  observe_kink(u, std::round(uu));
  observe_kink(v, std::round(vv));
  if (!(uu >= 0.0 && vv >= 0.0 && uu <= static_cast<double>(w - 1) && vv <= static_cast<double>(h - 1))) {
    return;
  }
  std::size_t x0 = static_cast<std::size_t>(std::floor(uu));
  std::size_t y0 = static_cast<std::size_t>(std::floor(vv));
  if (w > 1) x0 = std::min(x0, w - 2);
  if (h > 1) y0 = std::min(y0, h - 2);
  const std::size_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const T fx = u - T(static_cast<double>(x0));
  const T fy = v - T(static_cast<double>(y0));
  const T w00 = (T(1) - fx) * (T(1) - fy) * weight;
  const T w01 = fx * (T(1) - fy) * weight;
  const T w10 = (T(1) - fx) * fy * weight;
  const T w11 = fx * fy * weight;
  const float* f00 = feature.values().data() + (y0 * w + x0) * c;
  const float* f01 = feature.values().data() + (y0 * w + x1) * c;
  const float* f10 = feature.values().data() + (y1 * w + x0) * c;
  const float* f11 = feature.values().data() + (y1 * w + x1) * c;
  for (std::size_t k = 0; k < c; ++k) {
    out[k] += w00 * T(f00[k]) + w01 * T(f01[k]) + w10 * T(f10[k]) + w11 * T(f11[k]);
  }
}

template <typename T>
BasicTensor<T> bilinear_sample(const Tensor& feature, const T& u, const T& v) {
  if (feature.rank() != 3) {
    throw ShapeError("bilinear: feature map must be [H,W,C], got " + format_dims(feature.dims()));
  }
  BasicTensor<T> out({feature.dim(2)});
  bilinear_accumulate<T>(feature, u, v, T(1), out.values());
  return out;
}

inline Tensor bilinear_sample(const Tensor& feature, double u, double v) {
  BasicTensor<double> s = bilinear_sample<double>(feature, u, v);
  return s.cast<float>();
}

}  // namespace radfuse
