#pragma once

// Naive 64-bit reference kernels for the tensor ops.

#include <algorithm>
#include <cmath>
#include <vector>

#include "radfuse/params.hpp"

namespace oracle {

using Vec = std::vector<double>;

/// y_o = b_o + sum_i W[o][i] x_i, one dot product at a time.
inline Vec matvec(const Vec& x, const radfuse::LinearParams& p) {
  const std::size_t in = p.weight.dim(1), out = p.weight.dim(0);
  Vec y(out);
  for (std::size_t o = 0; o < out; ++o) {
    double acc = p.bias[o];
    for (std::size_t i = 0; i < in; ++i) acc += static_cast<double>(p.weight(o, i)) * x[i];
    y[o] = acc;
  }
  return y;
}

inline Vec layer_norm(const Vec& x, const radfuse::NormParams& p, double eps = 1e-5) {
  double mean = 0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  Vec y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = (x[i] - mean) / std::sqrt(var + eps) * p.gamma[i] + p.beta[i];
  return y;
}

inline Vec relu(Vec x) {
  for (double& v : x) v = v > 0 ? v : 0;
  return x;
}

inline Vec ffn(const Vec& x, const radfuse::ParamStore& s, const std::string& path) {
  const Vec n = layer_norm(x, s.norm(path + ".norm"));
  const Vec h = relu(matvec(n, s.linear(path + ".fc1")));
  return matvec(h, s.linear(path + ".fc2"));
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// exp(x_i) / sum exp, no max shift.
inline Vec softmax(const Vec& x) {
  double sum = 0;
  Vec y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) sum += (y[i] = std::exp(x[i]));
  for (double& v : y) v /= sum;
  return y;
}

/// Largest element via a sorted copy.
inline double sorted_max(Vec x) {
  std::sort(x.begin(), x.end());
  return x.back();
}

/// Four-corner bilinear interpolation with zero outside [0,W-1]x[0,H-1].
inline Vec bilinear(const radfuse::Tensor& f, double u, double v) {
  const std::size_t h = f.dim(0), w = f.dim(1), c = f.dim(2);
  Vec out(c, 0.0);
  if (u < 0 || v < 0 || u > static_cast<double>(w - 1) || v > static_cast<double>(h - 1)) return out;
  const double x0 = std::floor(u), y0 = std::floor(v);
  for (int dy = 0; dy <= 1; ++dy)
    for (int dx = 0; dx <= 1; ++dx) {
      const double xi = x0 + dx, yi = y0 + dy;
      const double wt = (1.0 - std::abs(u - xi)) * (1.0 - std::abs(v - yi));
      if (wt == 0.0 || xi > static_cast<double>(w - 1) || yi > static_cast<double>(h - 1)) continue;
      for (std::size_t k = 0; k < c; ++k) {
        out[k] += wt * f(static_cast<std::size_t>(yi), static_cast<std::size_t>(xi), k);
      }
    }
  return out;
}

}  // namespace oracle
