// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "radfuse/dual.hpp"

namespace radfuse {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::string format_dims(const std::vector<std::size_t>& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "," : "") << dims[i];
  os << ']';
  return os.str();
}

inline std::size_t product(const std::vector<std::size_t>& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>{});
}

/// Dense row-major tensor. The scalar is a template parameter so the same
/// kernels run in float (inference), double (shadow oracles) and Dual (JVP).
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(std::vector<std::size_t> dims, T fill = T(0))
      : dims_(std::move(dims)), data_(product(dims_), fill) {}

  BasicTensor(std::vector<std::size_t> dims, std::vector<T> data)
      : dims_(std::move(dims)), data_(std::move(data)) {
    if (data_.size() != product(dims_)) {
      throw ShapeError("tensor: " + std::to_string(data_.size()) + " values do not fill dims " +
                       format_dims(dims_));
    }
  }

  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t dim(std::size_t axis) const {
    if (axis >= dims_.size()) {
      throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for dims " +
                       format_dims(dims_));
    }
    return dims_[axis];
  }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  template <typename... Index>
  T& operator()(Index... idx) noexcept {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }
  template <typename... Index>
  const T& operator()(Index... idx) const noexcept {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }

  /// Contiguous slice i along the leading axis.
  std::span<T> row(std::size_t i) noexcept {
    const std::size_t stride = row_stride();
    return std::span<T>(data_).subspan(i * stride, stride);
  }
  std::span<const T> row(std::size_t i) const noexcept {
    const std::size_t stride = row_stride();
    return std::span<const T>(data_).subspan(i * stride, stride);
  }

  std::size_t row_stride() const noexcept {
    return dims_.empty() || dims_[0] == 0 ? 0 : data_.size() / dims_[0];
  }

  BasicTensor reshaped(std::vector<std::size_t> dims) const {
    if (product(dims) != data_.size()) {
      throw ShapeError("reshape: cannot view " + format_dims(dims_) + " as " + format_dims(dims));
    }
    return BasicTensor(std::move(dims), data_);
  }

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out;
    out.reserve(data_.size());
    for (const T& x : data_) out.push_back(static_cast<U>(value_of(x)));
    return BasicTensor<U>(dims_, std::move(out));
  }

  bool all_finite() const {
    for (const T& x : data_) {
      using std::isfinite;
      if (!isfinite(x)) return false;
    }
    return true;
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.dims_ == b.dims_ && a.data_ == b.data_;
  }

 private:
  std::size_t offset(std::initializer_list<std::size_t> idx) const noexcept {
    std::size_t off = 0;
    std::size_t axis = 0;
    for (const std::size_t i : idx) off = off * dims_[axis++] + i;
    return off;
  }

  std::vector<std::size_t> dims_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;
using TensorDual = BasicTensor<Dual>;

/// Concatenates two rank-2 tensors along the trailing axis.
template <typename T>
BasicTensor<T> concat_columns(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0)) {
    throw ShapeError("concat: incompatible dims " + format_dims(a.dims()) + " and " +
                     format_dims(b.dims()));
  }
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  BasicTensor<T> out({n, ca + cb});
  for (std::size_t i = 0; i < n; ++i) {
    auto dst = out.row(i);
    std::copy(a.row(i).begin(), a.row(i).end(), dst.begin());
    std::copy(b.row(i).begin(), b.row(i).end(), dst.begin() + static_cast<std::ptrdiff_t>(ca));
  }
  return out;
}

template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& x) {
  if (x.rank() != 2) throw ShapeError("transpose: expected rank 2, got " + format_dims(x.dims()));
  const std::size_t r = x.dim(0), c = x.dim(1);
  BasicTensor<T> out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
  return out;
}

}  // namespace radfuse
