#pragma once

// Reference implementations written directly from the definitions, with no
// shared code paths with the library. Slow and obvious on purpose.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "ftc/datapipe.hpp"
#include "ftc/ndcore.hpp"
#include "ftc/npr.hpp"

namespace oracle {

using ftc::nd::ConvLayer;
using ftc::nd::Tensor2;

/// Cross-correlation over an explicitly zero-padded copy of x.
inline Tensor2 conv(const ConvLayer& l, const Tensor2& x, bool same) {
  const std::size_t n = x.length, k = l.kernel_width, s = l.stride;
  std::size_t out = 0, left = 0, right = 0;
  if (same) {
    out = (n + s - 1) / s;
    const long need = static_cast<long>((out - 1) * s + k) - static_cast<long>(n);
    const std::size_t total = need > 0 ? static_cast<std::size_t>(need) : 0;
    left = total / 2;
    right = total - left;
  } else {
    out = (n - k) / s + 1;
  }
  std::vector<std::vector<double>> padded(x.channels, std::vector<double>(left + n + right, 0.0));
  for (std::size_t c = 0; c < x.channels; ++c)
    for (std::size_t t = 0; t < n; ++t) padded[c][left + t] = x(c, t);
  Tensor2 y(l.out_channels, out);
  for (std::size_t o = 0; o < l.out_channels; ++o)
    for (std::size_t j = 0; j < out; ++j) {
      double acc = l.bias[o];
      for (std::size_t i = 0; i < l.in_channels; ++i)
        for (std::size_t q = 0; q < k; ++q) acc += l.weights[(o * l.in_channels + i) * k + q] * padded[i][j * s + q];
      y(o, j) = acc;
    }
  return y;
}

/// Scatter form: each input sample stamps the kernel into a full-length
/// output, which is then center-cropped to `target`.
inline Tensor2 tconv(const ConvLayer& l, const Tensor2& x, std::optional<std::size_t> target) {
  const std::size_t k = l.kernel_width, s = l.stride;
  const std::size_t full = (x.length - 1) * s + k;
  Tensor2 z(l.out_channels, full);
  for (std::size_t i = 0; i < l.in_channels; ++i)
    for (std::size_t j = 0; j < x.length; ++j)
      for (std::size_t o = 0; o < l.out_channels; ++o)
        for (std::size_t q = 0; q < k; ++q) z(o, j * s + q) += l.weights[(i * l.out_channels + o) * k + q] * x(i, j);
  const std::size_t len = target.value_or(full);
  const std::size_t offset = (full - len) / 2;
  Tensor2 y(l.out_channels, len);
  for (std::size_t o = 0; o < l.out_channels; ++o)
    for (std::size_t p = 0; p < len; ++p) y(o, p) = z(o, p + offset) + l.bias[o];
  return y;
}

inline double inner(const Tensor2& a, const Tensor2& b) {
  double s = 0.0;
  for (std::size_t n = 0; n < a.values.size(); ++n) s += a.values[n] * b.values[n];
  return s;
}

inline Tensor2 random_tensor(std::size_t c, std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Tensor2 t(c, n);
  for (double& v : t.values) v = d(rng);
  return t;
}

inline ConvLayer random_layer(std::size_t in, std::size_t out, std::size_t k, std::size_t s, std::mt19937_64& rng) {
  auto l = ConvLayer::zeros(in, out, k, s);
  std::normal_distribution<double> d(0.0, 0.5);
  for (double& w : l.weights) w = d(rng);
  for (double& b : l.bias) b = d(rng);
  return l;
}

// ---------------------------------------------------------------------------
// Central finite differences

inline constexpr double kFdStep = 1e-5;

/// Relative error of one coordinate. The floor keeps coordinates whose true
/// derivative is essentially zero from dividing rounding noise by nothing.
inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Max relative error between `analytic` and the central difference of `f`
/// with respect to `params[idx]` for every idx in `coords`. A coordinate for
/// which `skip(idx)` is true (e.g. a ReLU kink inside the step) is ignored.
inline double fd_check(std::vector<double>& params, const std::vector<double>& analytic,
                       const std::vector<std::size_t>& coords, const std::function<double()>& f,
                       const std::function<bool(std::size_t)>& skip = {}) {
  double worst = 0.0;
  for (std::size_t idx : coords) {
    const double saved = params[idx];
    params[idx] = saved + kFdStep;
    const double up = f();
    params[idx] = saved - kFdStep;
    const double down = f();
    const bool skipped = skip && skip(idx);
    params[idx] = saved;
    if (skipped) continue;
    worst = std::max(worst, rel_error(analytic[idx], (up - down) / (2.0 * kFdStep)));
  }
  return worst;
}

inline std::vector<std::size_t> all_coords(std::size_t n) {
  std::vector<std::size_t> c(n);
  for (std::size_t i = 0; i < n; ++i) c[i] = i;
  return c;
}

inline std::vector<std::size_t> sample_coords(std::size_t n, std::size_t count, std::mt19937_64& rng) {
  if (n <= count) return all_coords(n);
  std::vector<std::size_t> c;
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  for (std::size_t i = 0; i < count; ++i) c.push_back(pick(rng));
  return c;
}

// ---------------------------------------------------------------------------
// NPR seasonal threshold, evaluated day by day from the definition

inline std::vector<ftc::FtState> seasonal_threshold(const std::vector<double>& v, const std::vector<double>& h,
                                                    double npr_fr, double npr_th) {
  std::vector<ftc::FtState> out;
  for (std::size_t t = 0; t < v.size(); ++t) {
    const double npr = (v[t] - h[t]) / (v[t] + h[t]);
    const double delta = (npr - npr_fr) / (npr_th - npr_fr);
    const bool warm = v[t] > 273.0 && h[t] > 273.0;
    out.push_back(warm || delta > 0.5 ? ftc::FtState::thawed : ftc::FtState::frozen);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Temperature labeling as maximal constant runs

struct Run {
  std::size_t begin = 0;
  std::size_t length = 0;
  int y = 0;
  friend bool operator==(const Run&, const Run&) = default;
};

/// Day labels first, then a run starts wherever the label differs from the
/// previous day. Runs of unlabeled days and runs shorter than `min_len` drop.
inline std::vector<Run> labeled_runs(const std::vector<double>& soil, const std::vector<double>& air,
                                     std::size_t min_len) {
  std::vector<int> label(soil.size(), -1);
  for (std::size_t t = 0; t < soil.size(); ++t) {
    if (soil[t] < 271.0 && air[t] < 271.0) label[t] = 1;
    if (soil[t] > 275.0 && air[t] > 275.0) label[t] = 0;
  }
  std::vector<std::size_t> starts;
  for (std::size_t t = 0; t < label.size(); ++t)
    if (t == 0 || label[t] != label[t - 1]) starts.push_back(t);
  starts.push_back(label.size());
  std::vector<Run> runs;
  for (std::size_t i = 0; i + 1 < starts.size(); ++i) {
    const Run r{starts[i], starts[i + 1] - starts[i], label[starts[i]]};
    if (r.y >= 0 && r.length >= min_len) runs.push_back(r);
  }
  return runs;
}

}  // namespace oracle
