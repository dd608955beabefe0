#pragma once

// Forward/backward kernels for the layer catalogue. All kernels operate on
// (batch, time, channels) tensors and preserve the time axis except pooling
// and upsampling. Convolutions zero-pad outside [0, T).

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "lrf/netgraph.hpp"
#include "lrf/tensor.hpp"

namespace lrf {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

/// Output rows [lo, hi) whose input row t + offset lies inside [0, len).
inline std::pair<std::ptrdiff_t, std::ptrdiff_t> valid_rows(std::ptrdiff_t len, int offset) {
  const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -offset);
  const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(len, len - offset);
  return {lo, std::max(lo, hi)};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Convolution over tap offsets. Weights are stored as a (|taps|, in, out)
// tensor; bias has `out` entries.

template <typename T>
Tensor<T> conv1d_forward(const Tensor<T>& x, const TapSet& taps, const Tensor<T>& weights,
                         std::span<const T> bias) {
  const auto C = x.channels();
  const auto O = weights.channels();
  if (weights.batch() != taps.size())
    throw Error("conv weight tap count " + std::to_string(weights.batch()) + " != " +
                std::to_string(taps.size()));
  if (weights.time() != C)
    throw Error("conv channel mismatch: input has " + std::to_string(C) + ", weights expect " +
                std::to_string(weights.time()));
  if (bias.size() != O) throw Error("conv bias length mismatch");

  const auto len = static_cast<std::ptrdiff_t>(x.time());
  Tensor<T> y(x.batch(), x.time(), O);
  for (std::size_t b = 0; b < x.batch(); ++b) {
    detail::ConstMapMat<T> X(x.slice(b), len, C);
    detail::MapMat<T> Y(y.slice(b), len, O);
    for (std::ptrdiff_t t = 0; t < len; ++t)
      for (std::size_t o = 0; o < O; ++o) Y(t, o) = bias[o];
    for (std::size_t i = 0; i < taps.size(); ++i) {
      const int off = taps.offsets[i];
      const auto [lo, hi] = detail::valid_rows(len, off);
      if (hi <= lo) continue;
      detail::ConstMapMat<T> Wi(weights.data() + i * C * O, C, O);
      Y.middleRows(lo, hi - lo).noalias() += X.middleRows(lo + off, hi - lo) * Wi;
    }
  }
  LRF_DEBUG_FINITE(y, "conv1d_forward");
  return y;
}

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> weights;
  std::vector<T> bias;
};

/// Exact adjoint of conv1d_forward.
template <typename T>
ConvGrads<T> conv1d_backward(const Tensor<T>& x, const TapSet& taps, const Tensor<T>& weights,
                             const Tensor<T>& grad_out) {
  const auto C = x.channels();
  const auto O = weights.channels();
  if (grad_out.batch() != x.batch() || grad_out.time() != x.time() || grad_out.channels() != O)
    throw Error("conv backward shape mismatch: grad " + to_string(grad_out.shape()) + " vs input " +
                to_string(x.shape()));
  if (weights.time() != C || weights.batch() != taps.size())
    throw Error("conv backward weight shape mismatch");

  const auto len = static_cast<std::ptrdiff_t>(x.time());
  ConvGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(weights.shape()), std::vector<T>(O, T(0))};
  for (std::size_t b = 0; b < x.batch(); ++b) {
    detail::ConstMapMat<T> X(x.slice(b), len, C);
    detail::ConstMapMat<T> G(grad_out.slice(b), len, O);
    detail::MapMat<T> GX(g.input.slice(b), len, C);
    for (std::size_t i = 0; i < taps.size(); ++i) {
      const int off = taps.offsets[i];
      const auto [lo, hi] = detail::valid_rows(len, off);
      if (hi <= lo) continue;
      detail::ConstMapMat<T> Wi(weights.data() + i * C * O, C, O);
      detail::MapMat<T> GWi(g.weights.data() + i * C * O, C, O);
      GX.middleRows(lo + off, hi - lo).noalias() += G.middleRows(lo, hi - lo) * Wi.transpose();
      GWi.noalias() += X.middleRows(lo + off, hi - lo).transpose() * G.middleRows(lo, hi - lo);
    }
    for (std::ptrdiff_t t = 0; t < len; ++t)
      for (std::size_t o = 0; o < O; ++o) g.bias[o] += G(t, o);
  }
  LRF_DEBUG_FINITE(g.input, "conv1d_backward");
  return g;
}

// ---------------------------------------------------------------------------
// Max pooling with window == stride. Ragged tails are padded with -inf, so the
// output has ceil(T / P) frames. Ties go to the first index.

template <typename T>
struct PoolResult {
  Tensor<T> output;
  std::vector<std::uint32_t> argmax;  // input time index per output element
};

template <typename T>
PoolResult<T> maxpool_forward(const Tensor<T>& x, int window) {
  if (window < 2) throw Error("maxpool window must be >= 2, got " + std::to_string(window));
  const std::size_t P = static_cast<std::size_t>(window);
  const std::size_t out_t = (x.time() + P - 1) / P;
  PoolResult<T> r{Tensor<T>(x.batch(), out_t, x.channels()), {}};
  r.argmax.resize(r.output.size());
  for (std::size_t b = 0; b < x.batch(); ++b)
    for (std::size_t tau = 0; tau < out_t; ++tau)
      for (std::size_t c = 0; c < x.channels(); ++c) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t arg = tau * P;
        for (std::size_t k = 0; k < P; ++k) {
          const std::size_t t = tau * P + k;
          if (t >= x.time()) break;
          if (x(b, t, c) > best) {
            best = x(b, t, c);
            arg = t;
          }
        }
        r.output(b, tau, c) = best;
        r.argmax[(b * out_t + tau) * x.channels() + c] = static_cast<std::uint32_t>(arg);
      }
  return r;
}

template <typename T>
Tensor<T> maxpool_backward(const Tensor<T>& grad_out, std::span<const std::uint32_t> argmax,
                           const Shape& input_shape) {
  if (argmax.size() != grad_out.size()) throw Error("maxpool backward: argmax size mismatch");
  Tensor<T> gx(input_shape);
  for (std::size_t b = 0; b < grad_out.batch(); ++b)
    for (std::size_t tau = 0; tau < grad_out.time(); ++tau)
      for (std::size_t c = 0; c < grad_out.channels(); ++c) {
        const std::size_t k = (b * grad_out.time() + tau) * grad_out.channels() + c;
        gx(b, argmax[k], c) += grad_out.flat()[k];
      }
  return gx;
}

/// Mean pooling over the same windows; used by the gradient receptive-field
/// probe so every frame in a window receives gradient.
template <typename T>
Tensor<T> meanpool_forward(const Tensor<T>& x, int window) {
  const std::size_t P = static_cast<std::size_t>(window);
  const std::size_t out_t = (x.time() + P - 1) / P;
  Tensor<T> y(x.batch(), out_t, x.channels());
  for (std::size_t b = 0; b < x.batch(); ++b)
    for (std::size_t t = 0; t < x.time(); ++t)
      for (std::size_t c = 0; c < x.channels(); ++c) y(b, t / P, c) += x(b, t, c) / T(P);
  return y;
}

template <typename T>
Tensor<T> meanpool_backward(const Tensor<T>& grad_out, int window, const Shape& input_shape) {
  const std::size_t P = static_cast<std::size_t>(window);
  Tensor<T> gx(input_shape);
  for (std::size_t b = 0; b < input_shape.batch; ++b)
    for (std::size_t t = 0; t < input_shape.time; ++t)
      for (std::size_t c = 0; c < input_shape.channels; ++c) gx(b, t, c) = grad_out(b, t / P, c) / T(P);
  return gx;
}

// ---------------------------------------------------------------------------
// Nearest-neighbour upsampling: y[tau] = x[floor(tau / f)].

template <typename T>
Tensor<T> upsample_forward(const Tensor<T>& x, int factor) {
  if (factor < 2) throw Error("upsample factor must be >= 2, got " + std::to_string(factor));
  const std::size_t f = static_cast<std::size_t>(factor);
  Tensor<T> y(x.batch(), x.time() * f, x.channels());
  for (std::size_t b = 0; b < x.batch(); ++b)
    for (std::size_t tau = 0; tau < y.time(); ++tau)
      for (std::size_t c = 0; c < x.channels(); ++c) y(b, tau, c) = x(b, tau / f, c);
  return y;
}

template <typename T>
Tensor<T> upsample_backward(const Tensor<T>& grad_out, int factor) {
  const std::size_t f = static_cast<std::size_t>(factor);
  if (grad_out.time() % f != 0) throw Error("upsample backward: length not a multiple of factor");
  Tensor<T> gx(grad_out.batch(), grad_out.time() / f, grad_out.channels());
  for (std::size_t b = 0; b < grad_out.batch(); ++b)
    for (std::size_t tau = 0; tau < grad_out.time(); ++tau)
      for (std::size_t c = 0; c < grad_out.channels(); ++c) gx(b, tau / f, c) += grad_out(b, tau, c);
  return gx;
}

// ---------------------------------------------------------------------------
// Pointwise and merge layers.

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y.flat()[i] = std::max(T(0), x.flat()[i]);
  return y;
}

/// Subgradient 0 at 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out) {
  Tensor<T> gx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i)
    gx.flat()[i] = x.flat()[i] > T(0) ? grad_out.flat()[i] : T(0);
  return gx;
}

template <typename T>
Tensor<T> add_forward(std::span<const Tensor<T>* const> xs) {
  if (xs.empty()) throw Error("add needs at least one input");
  Tensor<T> y = *xs[0];
  for (std::size_t k = 1; k < xs.size(); ++k) {
    if (xs[k]->shape() != y.shape()) throw Error("add: input shapes differ");
    for (std::size_t i = 0; i < y.size(); ++i) y.flat()[i] += xs[k]->flat()[i];
  }
  return y;
}

template <typename T>
Tensor<T> weighted_sum_forward(std::span<const Tensor<T>* const> xs, std::span<const T> alpha) {
  if (xs.empty() || xs.size() != alpha.size())
    throw Error("weighted_sum: need one weight per source");
  Tensor<T> y(xs[0]->shape());
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (xs[k]->shape() != y.shape()) throw Error("weighted_sum: input shapes differ");
    for (std::size_t i = 0; i < y.size(); ++i) y.flat()[i] += alpha[k] * xs[k]->flat()[i];
  }
  return y;
}

template <typename T>
struct WeightedSumGrads {
  std::vector<Tensor<T>> inputs;
  std::vector<T> alpha;
};

template <typename T>
WeightedSumGrads<T> weighted_sum_backward(std::span<const Tensor<T>* const> xs,
                                          std::span<const T> alpha, const Tensor<T>& grad_out) {
  WeightedSumGrads<T> g;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    Tensor<T> gx(grad_out.shape());
    T ga = 0;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      gx.flat()[i] = alpha[k] * grad_out.flat()[i];
      ga += xs[k]->flat()[i] * grad_out.flat()[i];
    }
    g.inputs.push_back(std::move(gx));
    g.alpha.push_back(ga);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Softmax with cross-entropy, fused gradient.

inline constexpr int kIgnoreLabel = -1;

template <typename T>
Tensor<T> softmax_forward(const Tensor<T>& logits) {
  Tensor<T> p(logits.shape());
  const std::size_t K = logits.channels();
  const std::size_t rows = logits.batch() * logits.time();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* z = logits.data() + r * K;
    T* out = p.data() + r * K;
    const T m = *std::max_element(z, z + K);
    T sum = 0;
    for (std::size_t k = 0; k < K; ++k) sum += (out[k] = std::exp(z[k] - m));
    for (std::size_t k = 0; k < K; ++k) out[k] /= sum;
  }
  return p;
}

template <typename T>
struct SoftmaxXent {
  Tensor<T> posteriors;
  double cross_entropy = 0;  // mean over counted frames
  Tensor<T> grad_logits;     // (posterior - onehot) / counted frames
  std::size_t frames = 0;
};

/// Labels are per (batch, time) row; kIgnoreLabel rows are excluded from the mean.
template <typename T>
SoftmaxXent<T> softmax_xent(const Tensor<T>& logits, std::span<const int> labels) {
  const std::size_t K = logits.channels();
  const std::size_t rows = logits.batch() * logits.time();
  if (labels.size() != rows)
    throw Error("label count " + std::to_string(labels.size()) + " != frame count " +
                std::to_string(rows));
  SoftmaxXent<T> r{softmax_forward(logits), 0.0, Tensor<T>(logits.shape()), 0};
  for (std::size_t i = 0; i < rows; ++i) {
    const int y = labels[i];
    if (y == kIgnoreLabel) continue;
    if (y < 0 || static_cast<std::size_t>(y) >= K)
      throw Error("label " + std::to_string(y) + " outside [0, " + std::to_string(K) + ")");
    ++r.frames;
  }
  if (r.frames == 0) return r;
  const T inv = T(1) / static_cast<T>(r.frames);
  for (std::size_t i = 0; i < rows; ++i) {
    const int y = labels[i];
    if (y == kIgnoreLabel) continue;
    const T* z = logits.data() + i * K;
    const T m = *std::max_element(z, z + K);
    double lse = 0;
    for (std::size_t k = 0; k < K; ++k) lse += std::exp(static_cast<double>(z[k] - m));
    r.cross_entropy += std::log(lse) - static_cast<double>(z[y] - m);
    for (std::size_t k = 0; k < K; ++k)
      r.grad_logits.data()[i * K + k] =
          (r.posteriors.data()[i * K + k] - (static_cast<int>(k) == y ? T(1) : T(0))) * inv;
  }
  r.cross_entropy /= static_cast<double>(r.frames);
  return r;
}

}  // namespace lrf
