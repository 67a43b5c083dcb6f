#pragma once

// Minimal differentiable substrate: 1D convolution and transposed
// convolution, ReLU, inverted dropout, and masked mean-squared error. Every
// primitive has a hand-written backward pass. All arithmetic is 64-bit.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "ftc/error.hpp"

namespace ftc::nd {

using Rng = std::mt19937_64;

enum class Mode { train, infer };

/// Channel-major 2D tensor: row = channel, column = time step.
struct Tensor2 {
  std::size_t channels = 0;
  std::size_t length = 0;
  std::vector<double> values;

  Tensor2() = default;
  Tensor2(std::size_t c, std::size_t n, double fill = 0.0)
      : channels(c), length(n), values(c * n, fill) {}

  static Tensor2 from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Tensor2 t;
    t.channels = rows.size();
    t.length = rows.size() ? rows.begin()->size() : 0;
    for (const auto& r : rows) {
      detail::require(r.size() == t.length, "from_rows: ragged rows");
      t.values.insert(t.values.end(), r.begin(), r.end());
    }
    return t;
  }

  double& operator()(std::size_t c, std::size_t t) { return values[c * length + t]; }
  double operator()(std::size_t c, std::size_t t) const { return values[c * length + t]; }

  std::span<double> row(std::size_t c) { return {values.data() + c * length, length}; }
  std::span<const double> row(std::size_t c) const { return {values.data() + c * length, length}; }

  bool same_shape(const Tensor2& o) const { return channels == o.channels && length == o.length; }

  bool all_finite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor2&, const Tensor2&) = default;
};

/// Valid (1) / padded (0) flags over the time axis.
struct Mask {
  std::vector<std::uint8_t> flags;

  static Mask all_valid(std::size_t n) { return Mask{std::vector<std::uint8_t>(n, 1)}; }

  /// First `valid` steps valid, the rest padding, total length `total`.
  static Mask prefix(std::size_t valid, std::size_t total) {
    Mask m{std::vector<std::uint8_t>(total, 0)};
    std::fill_n(m.flags.begin(), std::min(valid, total), std::uint8_t{1});
    return m;
  }

  std::size_t length() const { return flags.size(); }
  std::size_t valid_count() const {
    return static_cast<std::size_t>(std::count(flags.begin(), flags.end(), std::uint8_t{1}));
  }

  friend bool operator==(const Mask&, const Mask&) = default;
};

enum class Padding { valid, same };

/// One convolution stage. For conv1d the weight layout is [out][in][kernel];
/// for tconv1d it is [in][out][kernel], so a conv layer and the transposed
/// layer that is its adjoint share the same weight array.
struct ConvLayer {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_width = 7;
  std::size_t stride = 1;
  std::vector<double> weights;
  std::vector<double> bias;

  static ConvLayer zeros(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride) {
    ConvLayer l{in, out, kernel, stride, {}, {}};
    l.weights.assign(in * out * kernel, 0.0);
    l.bias.assign(out, 0.0);
    return l;
  }

  std::size_t weight_count() const { return in_channels * out_channels * kernel_width; }

  void validate() const {
    detail::require(kernel_width >= 1, "ConvLayer: kernel_width must be >= 1");
    detail::require(stride >= 1, "ConvLayer: stride must be >= 1");
    detail::require(weights.size() == weight_count(), "ConvLayer: weights has ", weights.size(),
                    " entries, expected ", weight_count());
    detail::require(bias.size() == out_channels, "ConvLayer: bias has ", bias.size(),
                    " entries, expected out_channels=", out_channels);
  }

  friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

/// Gradients of a scalar loss with respect to one layer's parameters and input.
struct GradTape {
  std::vector<double> weights;
  std::vector<double> bias;
  Tensor2 input;
};

namespace detail {

// Range of j in [0, count) such that j * stride + shift lies in [0, limit).
struct StepRange {
  std::size_t lo = 0;
  std::size_t hi = 0;
};

inline StepRange step_range(std::size_t count, std::size_t stride, long shift, std::size_t limit) {
  const long s = static_cast<long>(stride);
  long lo = shift >= 0 ? 0 : (-shift + s - 1) / s;
  long last = static_cast<long>(limit) - 1 - shift;
  long hi = last < 0 ? 0 : last / s + 1;
  hi = std::min(hi, static_cast<long>(count));
  if (lo > hi) lo = hi;
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

struct ConvGeometry {
  std::size_t out_length = 0;
  std::size_t pad_left = 0;
};

inline ConvGeometry conv_geometry(const ConvLayer& layer, std::size_t n, Padding padding) {
  const std::size_t k = layer.kernel_width;
  const std::size_t s = layer.stride;
  if (padding == Padding::valid) {
    ftc::detail::require(n >= k, "conv1d: input length ", n, " shorter than kernel_width ", k);
    return {(n - k) / s + 1, 0};
  }
  ftc::detail::require(n >= 1, "conv1d: empty input");
  const std::size_t out = (n + s - 1) / s;
  const std::size_t span = (out - 1) * s + k;
  const std::size_t total = span > n ? span - n : 0;
  return {out, total / 2};
}

struct TconvGeometry {
  std::size_t out_length = 0;
  std::size_t crop_left = 0;
};

inline TconvGeometry tconv_geometry(const ConvLayer& layer, std::size_t n,
                                    std::optional<std::size_t> target) {
  ftc::detail::require(n >= 1, "tconv1d: empty input");
  const std::size_t full = (n - 1) * layer.stride + layer.kernel_width;
  if (!target) return {full, 0};
  const std::size_t t = *target;
  ftc::detail::require(t >= 1 && (t + layer.stride - 1) / layer.stride == n,
                       "tconv1d: target length ", t, " incompatible with input length ", n,
                       " at stride ", layer.stride);
  ftc::detail::require(full >= t, "tconv1d: target length ", t, " exceeds full output length ",
                       full);
  return {t, (full - t) / 2};
}

inline void check_input(const ConvLayer& layer, const Tensor2& x, const char* op) {
  layer.validate();
  ftc::detail::require(x.channels == layer.in_channels, op, ": input has ", x.channels,
                       " channels, layer expects in_channels=", layer.in_channels);
  ftc::detail::require(x.values.size() == x.channels * x.length, op, ": malformed tensor");
}

}  // namespace detail

inline std::size_t conv1d_output_length(const ConvLayer& layer, std::size_t n,
                                        Padding padding = Padding::valid) {
  return detail::conv_geometry(layer, n, padding).out_length;
}

namespace detail {

// Column matrix for a strided sliding window: row j holds, for every channel c
// and tap k, x(c, j * stride + k + shift), or 0 outside [0, x.length).
inline std::vector<double> im2col(const Tensor2& x, std::size_t rows, std::size_t stride,
                                  long shift, std::size_t K) {
  const std::size_t width = x.channels * K;
  std::vector<double> cols(rows * width, 0.0);
  for (std::size_t c = 0; c < x.channels; ++c) {
    const double* xc = x.values.data() + c * x.length;
    for (std::size_t k = 0; k < K; ++k) {
      const long off = static_cast<long>(k) + shift;
      const auto r = step_range(rows, stride, off, x.length);
      for (std::size_t j = r.lo; j < r.hi; ++j)
        cols[j * width + c * K + k] = xc[static_cast<long>(j * stride) + off];
    }
  }
  return cols;
}

// Adjoint of im2col: scatter-adds the column matrix back into `y`.
inline void col2im_add(const std::vector<double>& cols, std::size_t rows, std::size_t stride,
                       long shift, std::size_t K, Tensor2& y) {
  const std::size_t width = y.channels * K;
  for (std::size_t c = 0; c < y.channels; ++c) {
    double* yc = y.values.data() + c * y.length;
    for (std::size_t k = 0; k < K; ++k) {
      const long off = static_cast<long>(k) + shift;
      const auto r = step_range(rows, stride, off, y.length);
      for (std::size_t j = r.lo; j < r.hi; ++j)
        yc[static_cast<long>(j * stride) + off] += cols[j * width + c * K + k];
    }
  }
}

inline double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
#pragma omp simd reduction(+ : acc)
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

inline std::vector<double> row_sums(const Tensor2& t) {
  std::vector<double> s(t.channels, 0.0);
  for (std::size_t c = 0; c < t.channels; ++c)
    for (double v : t.row(c)) s[c] += v;
  return s;
}

}  // namespace detail

/// Cross-correlation (no kernel flip). `same` padding zero-pads so that the
/// output length is ceil(n / stride), with the extra pad on the right.
inline Tensor2 conv1d_forward(const ConvLayer& layer, const Tensor2& x,
                              Padding padding = Padding::valid) {
  detail::check_input(layer, x, "conv1d_forward");
  const auto g = detail::conv_geometry(layer, x.length, padding);
  const std::size_t K = layer.kernel_width;
  const std::size_t width = layer.in_channels * K;
  const auto cols = detail::im2col(x, g.out_length, layer.stride, -static_cast<long>(g.pad_left), K);
  Tensor2 out(layer.out_channels, g.out_length);
  for (std::size_t o = 0; o < layer.out_channels; ++o) {
    const double* w = layer.weights.data() + o * width;
    for (std::size_t j = 0; j < g.out_length; ++j)
      out(o, j) = layer.bias[o] + detail::dot(w, cols.data() + j * width, width);
  }
  return out;
}

inline GradTape conv1d_backward(const ConvLayer& layer, const Tensor2& x, const Tensor2& upstream,
                                Padding padding = Padding::valid) {
  detail::check_input(layer, x, "conv1d_backward");
  const auto g = detail::conv_geometry(layer, x.length, padding);
  ftc::detail::require(upstream.channels == layer.out_channels && upstream.length == g.out_length,
                       "conv1d_backward: upstream shape ", upstream.channels, "x", upstream.length,
                       " != forward output shape ", layer.out_channels, "x", g.out_length);
  const std::size_t K = layer.kernel_width;
  const std::size_t width = layer.in_channels * K;
  const long shift = -static_cast<long>(g.pad_left);
  const auto cols = detail::im2col(x, g.out_length, layer.stride, shift, K);
  std::vector<double> gcols(cols.size(), 0.0);
  GradTape tape{std::vector<double>(layer.weight_count(), 0.0), detail::row_sums(upstream),
                Tensor2(x.channels, x.length)};
  for (std::size_t o = 0; o < layer.out_channels; ++o) {
    const double* w = layer.weights.data() + o * width;
    double* gw = tape.weights.data() + o * width;
    for (std::size_t j = 0; j < g.out_length; ++j) {
      const double u = upstream(o, j);
      detail::axpy(u, cols.data() + j * width, gw, width);
      detail::axpy(u, w, gcols.data() + j * width, width);
    }
  }
  detail::col2im_add(gcols, g.out_length, layer.stride, shift, K, tape.input);
  return tape;
}

/// Transposed convolution. Without a target the output has the full length
/// (n - 1) * stride + kernel_width; with a target it is center-cropped the way
/// a `same` conv1d of the target length would pad, which makes the two exact
/// adjoints of each other.
inline Tensor2 tconv1d_forward(const ConvLayer& layer, const Tensor2& x,
                               std::optional<std::size_t> target = std::nullopt) {
  detail::check_input(layer, x, "tconv1d_forward");
  const auto g = detail::tconv_geometry(layer, x.length, target);
  const std::size_t K = layer.kernel_width;
  const std::size_t width = layer.out_channels * K;
  std::vector<double> cols(x.length * width, 0.0);
  for (std::size_t i = 0; i < layer.in_channels; ++i) {
    const double* w = layer.weights.data() + i * width;
    for (std::size_t j = 0; j < x.length; ++j) detail::axpy(x(i, j), w, cols.data() + j * width, width);
  }
  Tensor2 out(layer.out_channels, g.out_length);
  for (std::size_t o = 0; o < layer.out_channels; ++o)
    std::fill_n(out.values.data() + o * g.out_length, g.out_length, layer.bias[o]);
  detail::col2im_add(cols, x.length, layer.stride, -static_cast<long>(g.crop_left), K, out);
  return out;
}

inline GradTape tconv1d_backward(const ConvLayer& layer, const Tensor2& x, const Tensor2& upstream,
                                 std::optional<std::size_t> target = std::nullopt) {
  detail::check_input(layer, x, "tconv1d_backward");
  const auto g = detail::tconv_geometry(layer, x.length, target);
  ftc::detail::require(upstream.channels == layer.out_channels && upstream.length == g.out_length,
                       "tconv1d_backward: upstream shape ", upstream.channels, "x", upstream.length,
                       " != forward output shape ", layer.out_channels, "x", g.out_length);
  const std::size_t K = layer.kernel_width;
  const std::size_t width = layer.out_channels * K;
  const auto gcols = detail::im2col(upstream, x.length, layer.stride, -static_cast<long>(g.crop_left), K);
  GradTape tape{std::vector<double>(layer.weight_count(), 0.0), detail::row_sums(upstream),
                Tensor2(x.channels, x.length)};
  for (std::size_t i = 0; i < layer.in_channels; ++i) {
    const double* w = layer.weights.data() + i * width;
    double* gw = tape.weights.data() + i * width;
    for (std::size_t j = 0; j < x.length; ++j) {
      const double* gc = gcols.data() + j * width;
      tape.input(i, j) = detail::dot(w, gc, width);
      detail::axpy(x(i, j), gc, gw, width);
    }
  }
  return tape;
}

inline Tensor2 relu(const Tensor2& x) {
  Tensor2 y = x;
  for (double& v : y.values) v = v > 0.0 ? v : 0.0;
  return y;
}

/// Gradient of relu evaluated at pre-activation `pre`. The subgradient at 0 is 0.
inline Tensor2 relu_backward(const Tensor2& pre, const Tensor2& upstream) {
  ftc::detail::require(pre.same_shape(upstream), "relu_backward: shape mismatch");
  Tensor2 g = upstream;
  for (std::size_t n = 0; n < g.values.size(); ++n)
    if (!(pre.values[n] > 0.0)) g.values[n] = 0.0;
  return g;
}

struct DropoutResult {
  Tensor2 output;
  std::vector<std::uint8_t> kept;
};

/// Inverted dropout: survivors are scaled by 1 / (1 - rate) at train time, and
/// inference is the identity. No rng draws happen in inference mode.
inline DropoutResult dropout(const Tensor2& x, double rate, Rng& rng, Mode mode = Mode::train) {
  ftc::detail::require(rate >= 0.0 && rate < 1.0, "dropout: rate ", rate, " outside [0, 1)");
  DropoutResult r{x, std::vector<std::uint8_t>(x.values.size(), 1)};
  if (mode == Mode::infer || rate == 0.0) return r;
  const double scale = 1.0 / (1.0 - rate);
  std::bernoulli_distribution keep(1.0 - rate);
  for (std::size_t n = 0; n < r.output.values.size(); ++n) {
    if (keep(rng)) {
      r.output.values[n] *= scale;
    } else {
      r.kept[n] = 0;
      r.output.values[n] = 0.0;
    }
  }
  return r;
}

inline Tensor2 dropout_backward(const Tensor2& upstream, std::span<const std::uint8_t> kept,
                                double rate) {
  ftc::detail::require(kept.size() == upstream.values.size(), "dropout_backward: mask size mismatch");
  Tensor2 g = upstream;
  const double scale = 1.0 / (1.0 - rate);
  for (std::size_t n = 0; n < g.values.size(); ++n) g.values[n] = kept[n] ? g.values[n] * scale : 0.0;
  return g;
}

namespace detail {
inline void check_mse_args(const Tensor2& x, const Tensor2& xhat, const Mask& m) {
  ftc::detail::require(x.same_shape(xhat), "masked_mse: shapes ", x.channels, "x", x.length, " and ",
                       xhat.channels, "x", xhat.length, " differ");
  ftc::detail::require(m.length() == x.length, "masked_mse: mask length ", m.length(),
                       " != series length ", x.length);
  ftc::detail::require(m.valid_count() > 0, "masked_mse: empty mask");
}
}  // namespace detail

/// Mean of squared differences over valid steps and all channels.
inline double masked_mse(const Tensor2& x, const Tensor2& xhat, const Mask& m) {
  detail::check_mse_args(x, xhat, m);
  double sum = 0.0;
  for (std::size_t c = 0; c < x.channels; ++c)
    for (std::size_t t = 0; t < x.length; ++t)
      if (m.flags[t]) {
        const double d = x(c, t) - xhat(c, t);
        sum += d * d;
      }
  return sum / static_cast<double>(x.channels * m.valid_count());
}

/// d masked_mse / d xhat.
inline Tensor2 masked_mse_grad(const Tensor2& x, const Tensor2& xhat, const Mask& m) {
  detail::check_mse_args(x, xhat, m);
  const double norm = 2.0 / static_cast<double>(x.channels * m.valid_count());
  Tensor2 g(x.channels, x.length);
  for (std::size_t c = 0; c < x.channels; ++c)
    for (std::size_t t = 0; t < x.length; ++t)
      if (m.flags[t]) g(c, t) = norm * (xhat(c, t) - x(c, t));
  return g;
}

}  // namespace ftc::nd
