// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <type_traits>

namespace radfuse {

/// Forward-mode dual number: value plus one directional derivative. The
/// kernels are templated on their scalar, so instantiating them with Dual
/// yields the exact Jacobian-vector product along the seeded tangent.
struct Dual {
  double v = 0.0;
  double d = 0.0;

  constexpr Dual() = default;
  constexpr Dual(double value) : v(value) {}  // NOLINT: constants lift implicitly
  constexpr Dual(double value, double tangent) : v(value), d(tangent) {}

  constexpr Dual& operator+=(const Dual& o) { v += o.v; d += o.d; return *this; }
  constexpr Dual& operator-=(const Dual& o) { v -= o.v; d -= o.d; return *this; }
  constexpr Dual& operator*=(const Dual& o) { d = d * o.v + v * o.d; v *= o.v; return *this; }
  constexpr Dual& operator/=(const Dual& o) {
    d = (d * o.v - v * o.d) / (o.v * o.v);
    v /= o.v;
    return *this;
  }
};

constexpr Dual operator-(const Dual& a) { return {-a.v, -a.d}; }
constexpr Dual operator+(Dual a, const Dual& b) { return a += b; }
constexpr Dual operator-(Dual a, const Dual& b) { return a -= b; }
constexpr Dual operator*(Dual a, const Dual& b) { return a *= b; }
constexpr Dual operator/(Dual a, const Dual& b) { return a /= b; }

constexpr bool operator<(const Dual& a, const Dual& b) { return a.v < b.v; }
constexpr bool operator>(const Dual& a, const Dual& b) { return a.v > b.v; }
constexpr bool operator<=(const Dual& a, const Dual& b) { return a.v <= b.v; }
constexpr bool operator>=(const Dual& a, const Dual& b) { return a.v >= b.v; }

inline Dual exp(const Dual& a) {
  const double e = std::exp(a.v);
  return {e, e * a.d};
}
inline Dual log(const Dual& a) { return {std::log(a.v), a.d / a.v}; }
inline Dual sqrt(const Dual& a) {
  const double s = std::sqrt(a.v);
  return {s, a.d / (2.0 * s)};
}
inline Dual abs(const Dual& a) { return a.v < 0 ? -a : a; }
inline bool isfinite(const Dual& a) { return std::isfinite(a.v) && std::isfinite(a.d); }

/// Records whether a piecewise kink (ReLU hinge, bilinear cell edge) lies
/// within the finite-difference stencil of the current shadow evaluation.
struct KinkWatch {
  double step = 0.0;
  bool crossed = false;
};

inline KinkWatch*& active_kink_watch() {
  thread_local KinkWatch* watch = nullptr;
  return watch;
}

template <typename T>
inline constexpr bool is_dual_v = std::is_same_v<std::remove_cvref_t<T>, Dual>;

template <typename T>
inline double value_of(const T& x) {
  if constexpr (is_dual_v<T>) {
    return x.v;
  } else {
    return static_cast<double>(x);
  }
}

/// Flags the stencil if the quantity x reaches `kink` within step·|dx|.
template <typename T>
inline void observe_kink(const T& x, double kink) {
  if constexpr (is_dual_v<T>) {
    if (KinkWatch* w = active_kink_watch()) {
      const double reach = 2.0 * w->step * std::abs(x.d) + 1e-12;
      if (std::abs(x.v - kink) <= reach) w->crossed = true;
    }
  }
}

}  // namespace radfuse
