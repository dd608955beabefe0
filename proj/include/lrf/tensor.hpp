#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lrf {

/// Error raised for shape, schema and contract violations anywhere in the library.
/// `where` carries the offending layer id (or other locator) when one exists.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, std::string where = {})
      : std::runtime_error(where.empty() ? what : where + ": " + what), where_(std::move(where)) {}
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

/// Numeric failure (NaN/Inf, divergence). Mapped to exit code 3 by the CLI.
class NumericError : public Error {
 public:
  using Error::Error;
};

struct Shape {
  std::size_t batch = 0;
  std::size_t time = 0;
  std::size_t channels = 0;

  std::size_t size() const noexcept { return batch * time * channels; }
  bool operator==(const Shape&) const = default;
};

inline std::string to_string(const Shape& s) {
  return "(" + std::to_string(s.batch) + "," + std::to_string(s.time) + "," +
         std::to_string(s.channels) + ")";
}

/// Dense row-major (batch, time, channels) array.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : shape_(shape), data_(shape.size(), fill) {}
  Tensor(std::size_t b, std::size_t t, std::size_t c, T fill = T(0)) : Tensor(Shape{b, t, c}, fill) {}

  const Shape& shape() const noexcept { return shape_; }
  std::size_t batch() const noexcept { return shape_.batch; }
  std::size_t time() const noexcept { return shape_.time; }
  std::size_t channels() const noexcept { return shape_.channels; }
  std::size_t size() const noexcept { return data_.size(); }

  T& operator()(std::size_t b, std::size_t t, std::size_t c) {
    assert(b < shape_.batch && t < shape_.time && c < shape_.channels);
    return data_[(b * shape_.time + t) * shape_.channels + c];
  }
  const T& operator()(std::size_t b, std::size_t t, std::size_t c) const {
    assert(b < shape_.batch && t < shape_.time && c < shape_.channels);
    return data_[(b * shape_.time + t) * shape_.channels + c];
  }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> flat() noexcept { return data_; }
  std::span<const T> flat() const noexcept { return data_; }

  /// Row-major slice of one batch element: time x channels.
  T* slice(std::size_t b) noexcept { return data_.data() + b * shape_.time * shape_.channels; }
  const T* slice(std::size_t b) const noexcept {
    return data_.data() + b * shape_.time * shape_.channels;
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (const T& v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out.flat()[i] = static_cast<U>(data_[i]);
    return out;
  }

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

#ifndef NDEBUG
#define LRF_DEBUG_FINITE(tensor, where) \
  assert((tensor).all_finite() && "non-finite values produced");
#else
#define LRF_DEBUG_FINITE(tensor, where) ((void)0)
#endif

}  // namespace lrf
