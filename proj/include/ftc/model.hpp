#pragma once

// The freeze-thaw autoencoder: a three-stage strided conv encoder mirrored by a
// three-stage transposed-conv decoder, scored with a masked reconstruction
// error L. Frozen probability is exp(-L); training minimizes the contrastive
// negative log-likelihood of that Bernoulli model.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ftc/error.hpp"
#include "ftc/ndcore.hpp"

namespace ftc {

inline constexpr std::size_t kInputChannels = 3;  // TB_V, TB_H, TB_V - TB_H
inline constexpr std::size_t kStages = 3;
inline constexpr std::size_t kLengthQuantum = 8;  // 2^kStages
inline constexpr std::size_t kKernelWidth = 7;    // one week
inline constexpr double kDefaultDropout = 0.10;
inline constexpr double kDefaultLossClamp = 1e-6;
inline constexpr double kStddevFloor = 1e-6;

struct ModelParams {
  std::array<nd::ConvLayer, kStages> encoder;
  std::array<nd::ConvLayer, kStages> decoder;
  double dropout_rate = kDefaultDropout;
  std::string version = "ftc-encoder/1";

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Encoder 3->32->64->64 and decoder 64->64->32->3, kernel 7, stride 2.
/// Weights are He-normal from `seed`, biases zero.
inline ModelParams init_model(std::uint64_t seed, double dropout_rate = kDefaultDropout) {
  constexpr std::array<std::size_t, kStages + 1> widths{kInputChannels, 32, 64, 64};
  ModelParams p;
  p.dropout_rate = dropout_rate;
  nd::Rng rng(seed);
  auto fill = [&rng](nd::ConvLayer& l, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& w : l.weights) w = dist(rng);
  };
  for (std::size_t s = 0; s < kStages; ++s) {
    auto& e = p.encoder[s];
    e = nd::ConvLayer::zeros(widths[s], widths[s + 1], kKernelWidth, 2);
    fill(e, std::sqrt(2.0 / static_cast<double>(e.in_channels * kKernelWidth)));
  }
  for (std::size_t s = 0; s < kStages; ++s) {
    const std::size_t in = widths[kStages - s];
    const std::size_t out = widths[kStages - s - 1];
    auto& d = p.decoder[s];
    d = nd::ConvLayer::zeros(in, out, kKernelWidth, 2);
    const double gain = s + 1 == kStages ? 1.0 : 2.0;
    fill(d, std::sqrt(gain * 2.0 / static_cast<double>(in * kKernelWidth)));
  }
  return p;
}

inline std::size_t parameter_count(const ModelParams& p) {
  std::size_t n = 0;
  for (const auto& l : p.encoder) n += l.weights.size() + l.bias.size();
  for (const auto& l : p.decoder) n += l.weights.size() + l.bias.size();
  return n;
}

// ---------------------------------------------------------------------------
// Standardization

struct ChannelStats {
  std::array<double, kInputChannels> mean{0.0, 0.0, 0.0};
  std::array<double, kInputChannels> stddev{1.0, 1.0, 1.0};

  friend bool operator==(const ChannelStats&, const ChannelStats&) = default;
};

/// Per-channel mean / population stddev over every valid step of every series.
inline ChannelStats compute_channel_stats(std::span<const nd::Tensor2> series,
                                          std::span<const nd::Mask> masks) {
  detail::require(series.size() == masks.size(), "compute_channel_stats: ", series.size(),
                  " series but ", masks.size(), " masks");
  ChannelStats st;
  for (std::size_t c = 0; c < kInputChannels; ++c) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t s = 0; s < series.size(); ++s) {
      detail::require(series[s].channels == kInputChannels, "compute_channel_stats: need 3 channels");
      for (std::size_t t = 0; t < series[s].length; ++t)
        if (masks[s].flags[t]) {
          sum += series[s](c, t);
          ++n;
        }
    }
    detail::require(n > 0, "compute_channel_stats: no valid samples");
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t s = 0; s < series.size(); ++s)
      for (std::size_t t = 0; t < series[s].length; ++t)
        if (masks[s].flags[t]) {
          const double d = series[s](c, t) - mean;
          ss += d * d;
        }
    st.mean[c] = mean;
    st.stddev[c] = std::sqrt(ss / static_cast<double>(n));
  }
  return st;
}

inline nd::Tensor2 standardize(const nd::Tensor2& x, const ChannelStats& st) {
  detail::require(x.channels == kInputChannels, "standardize: need 3 channels, got ", x.channels);
  nd::Tensor2 y = x;
  for (std::size_t c = 0; c < kInputChannels; ++c) {
    const double sd = std::max(st.stddev[c], kStddevFloor);
    for (double& v : y.row(c)) v = (v - st.mean[c]) / sd;
  }
  return y;
}

inline nd::Tensor2 destandardize(const nd::Tensor2& z, const ChannelStats& st) {
  detail::require(z.channels == kInputChannels, "destandardize: need 3 channels, got ", z.channels);
  nd::Tensor2 x = z;
  for (std::size_t c = 0; c < kInputChannels; ++c) {
    const double sd = std::max(st.stddev[c], kStddevFloor);
    for (double& v : x.row(c)) v = v * sd + st.mean[c];
  }
  return x;
}

// ---------------------------------------------------------------------------
// Loss and probability

inline double freeze_probability(double loss) {
  detail::require(loss >= 0.0, "freeze_probability: negative reconstruction loss ", loss);
  return std::exp(-loss);
}

/// Negative log-likelihood of label y under p(frozen) = exp(-L). For thawed
/// samples L is clamped below at `clamp` so the loss stays finite.
inline double contrastive_loss(double loss, int y, double clamp = kDefaultLossClamp) {
  detail::require(loss >= 0.0, "contrastive_loss: negative reconstruction loss ", loss);
  detail::require(y == 0 || y == 1, "contrastive_loss: label must be 0 or 1, got ", y);
  if (y == 1) return loss;
  return -std::log1p(-std::exp(-std::max(loss, clamp)));
}

/// d contrastive_loss / d L.
inline double contrastive_loss_grad(double loss, int y, double clamp = kDefaultLossClamp) {
  detail::require(loss >= 0.0, "contrastive_loss_grad: negative reconstruction loss ", loss);
  if (y == 1) return 1.0;
  if (loss < clamp) return 0.0;
  return -1.0 / std::expm1(loss);
}

// ---------------------------------------------------------------------------
// Forward / backward

struct ForwardResult {
  nd::Tensor2 xhat;
  double loss = 0.0;
};

/// Intermediate values kept for the backward pass.
struct ForwardTrace {
  nd::Tensor2 input;
  nd::Mask mask;
  std::array<nd::Tensor2, 2 * kStages> layer_input;
  std::array<nd::Tensor2, 2 * kStages> pre_activation;
  std::array<std::vector<std::uint8_t>, 2 * kStages> kept;
  ForwardResult result;
};

struct ModelGrads {
  std::array<std::vector<double>, 2 * kStages> weights;
  std::array<std::vector<double>, 2 * kStages> bias;
};

namespace detail {

inline void check_finite(const nd::Tensor2& t, std::size_t layer) {
  if (!t.all_finite())
    throw NumericalFailure(layer, "non-finite activation at layer " + std::to_string(layer));
}

inline void check_model_input(const nd::Tensor2& x, const nd::Mask& mask) {
  require(x.channels == kInputChannels, "forward: input has ", x.channels, " channels, expected 3");
  require(x.length > 0 && x.length % kLengthQuantum == 0, "forward: input length ", x.length,
          " is not a positive multiple of ", kLengthQuantum);
  require(mask.length() == x.length, "forward: mask length ", mask.length(), " != input length ",
          x.length);
}

}  // namespace detail

inline ForwardTrace forward_traced(const ModelParams& p, const nd::Tensor2& x, const nd::Mask& mask,
                                   nd::Mode mode, nd::Rng& rng) {
  detail::check_model_input(x, mask);
  ForwardTrace tr;
  tr.input = x;
  tr.mask = mask;
  std::array<std::size_t, kStages + 1> lengths{};
  lengths[0] = x.length;
  nd::Tensor2 h = x;
  for (std::size_t s = 0; s < kStages; ++s) {
    tr.layer_input[s] = h;
    tr.pre_activation[s] = nd::conv1d_forward(p.encoder[s], h, nd::Padding::same);
    detail::check_finite(tr.pre_activation[s], s);
    lengths[s + 1] = tr.pre_activation[s].length;
    auto d = nd::dropout(nd::relu(tr.pre_activation[s]), p.dropout_rate, rng, mode);
    tr.kept[s] = std::move(d.kept);
    h = std::move(d.output);
  }
  for (std::size_t s = 0; s < kStages; ++s) {
    const std::size_t idx = kStages + s;
    tr.layer_input[idx] = h;
    tr.pre_activation[idx] = nd::tconv1d_forward(p.decoder[s], h, lengths[kStages - s - 1]);
    detail::check_finite(tr.pre_activation[idx], idx);
    if (s + 1 < kStages) {
      auto d = nd::dropout(nd::relu(tr.pre_activation[idx]), p.dropout_rate, rng, mode);
      tr.kept[idx] = std::move(d.kept);
      h = std::move(d.output);
    } else {
      h = tr.pre_activation[idx];
    }
  }
  tr.result.loss = nd::masked_mse(x, h, mask);
  if (!std::isfinite(tr.result.loss))
    throw NumericalFailure(2 * kStages, "non-finite reconstruction loss");
  tr.result.xhat = std::move(h);
  return tr;
}

inline ForwardResult forward(const ModelParams& p, const nd::Tensor2& x, const nd::Mask& mask,
                             nd::Mode mode, nd::Rng& rng) {
  return std::move(forward_traced(p, x, mask, mode, rng).result);
}

/// Inference forward pass; needs no rng.
inline ForwardResult forward(const ModelParams& p, const nd::Tensor2& x, const nd::Mask& mask) {
  nd::Rng unused(0);
  return forward(p, x, mask, nd::Mode::infer, unused);
}

/// Gradients of (dobj_dloss * L) with respect to every parameter.
inline ModelGrads backward(const ModelParams& p, const ForwardTrace& tr, double dobj_dloss) {
  ModelGrads g;
  nd::Tensor2 up = nd::masked_mse_grad(tr.input, tr.result.xhat, tr.mask);
  for (double& v : up.values) v *= dobj_dloss;
  for (std::size_t s = kStages; s-- > 0;) {
    const std::size_t idx = kStages + s;
    if (s + 1 < kStages)
      up = nd::relu_backward(tr.pre_activation[idx],
                             nd::dropout_backward(up, tr.kept[idx], p.dropout_rate));
    auto tape = nd::tconv1d_backward(p.decoder[s], tr.layer_input[idx], up,
                                     tr.pre_activation[idx].length);
    g.weights[idx] = std::move(tape.weights);
    g.bias[idx] = std::move(tape.bias);
    up = std::move(tape.input);
  }
  for (std::size_t s = kStages; s-- > 0;) {
    up = nd::relu_backward(tr.pre_activation[s], nd::dropout_backward(up, tr.kept[s], p.dropout_rate));
    auto tape = nd::conv1d_backward(p.encoder[s], tr.layer_input[s], up, nd::Padding::same);
    g.weights[s] = std::move(tape.weights);
    g.bias[s] = std::move(tape.bias);
    up = std::move(tape.input);
  }
  return g;
}

/// Layer `i` in forward order: encoder stages then decoder stages.
inline nd::ConvLayer& layer_at(ModelParams& p, std::size_t i) {
  return i < kStages ? p.encoder[i] : p.decoder[i - kStages];
}
inline const nd::ConvLayer& layer_at(const ModelParams& p, std::size_t i) {
  return i < kStages ? p.encoder[i] : p.decoder[i - kStages];
}

/// Pads a (channels x n) tensor with zeros to the next multiple of 8 and
/// returns it with a mask covering the original n steps.
inline std::pair<nd::Tensor2, nd::Mask> pad_to_quantum(const nd::Tensor2& x) {
  const std::size_t n = x.length;
  const std::size_t padded = std::max<std::size_t>(kLengthQuantum,
                                                   (n + kLengthQuantum - 1) / kLengthQuantum * kLengthQuantum);
  nd::Tensor2 out(x.channels, padded);
  for (std::size_t c = 0; c < x.channels; ++c)
    std::copy(x.row(c).begin(), x.row(c).end(), out.row(c).begin());
  return {std::move(out), nd::Mask::prefix(n, padded)};
}

}  // namespace ftc
