#pragma once

// Mini-batch Adam training of one stratum's autoencoder on labeled segments
// under the contrastive objective.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ftc/datapipe.hpp"
#include "ftc/digest.hpp"
#include "ftc/error.hpp"
#include "ftc/model.hpp"

namespace ftc {

enum class Normalization { per_stratum, none };

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  std::uint64_t rng_seed = 42;
  double loss_clamp = kDefaultLossClamp;
  Normalization normalization = Normalization::per_stratum;
  // Segments longer than this are randomly cropped each epoch; 0 trains on
  // whole segments.
  std::size_t crop_length = 21;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double dropout_rate = kDefaultDropout;

  /// Canonical text form; its SHA-256 identifies the configuration.
  std::string canonical() const {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "learning_rate=%a\nepochs=%zu\nbatch_size=%zu\nrng_seed=%llu\nloss_clamp=%a\n"
                  "normalization=%s\ncrop_length=%zu\nbeta1=%a\nbeta2=%a\nadam_epsilon=%a\n"
                  "dropout_rate=%a\n",
                  learning_rate, epochs, batch_size, static_cast<unsigned long long>(rng_seed),
                  loss_clamp, normalization == Normalization::per_stratum ? "per_stratum" : "none",
                  crop_length, beta1, beta2, adam_epsilon, dropout_rate);
    return buf;
  }
  std::string hash() const { return sha256_hex(canonical()); }

  void validate() const {
    detail::require(learning_rate > 0.0, "TrainConfig: learning_rate must be > 0");
    detail::require(loss_clamp > 0.0, "TrainConfig: loss_clamp must be > 0");
    detail::require(batch_size >= 1, "TrainConfig: batch_size must be >= 1");
    detail::require(crop_length == 0 || crop_length >= kMinSegmentDays,
                    "TrainConfig: crop_length must be 0 or >= 7");
    detail::require(dropout_rate >= 0.0 && dropout_rate < 1.0, "TrainConfig: dropout_rate outside [0,1)");
  }
};

/// A trained per-stratum model with the statistics used to standardize its inputs.
struct TrainedModel {
  StratumKey stratum;
  ModelParams params;
  ChannelStats stats;
  std::string config_hash;

  friend bool operator==(const TrainedModel&, const TrainedModel&) = default;
};

struct EpochStats {
  std::size_t epoch = 0;
  double objective = 0.0;          // mean contrastive loss over all samples
  double mean_loss_frozen = 0.0;   // mean reconstruction error, y = 1
  double mean_loss_thawed = 0.0;   // mean reconstruction error, y = 0
  double objective_frozen = 0.0;
  double objective_thawed = 0.0;
};

struct TrainResult {
  TrainedModel model;
  std::vector<EpochStats> log;
};

namespace detail {

struct AdamState {
  std::array<std::vector<double>, 2 * kStages> mw, vw, mb, vb;
  std::size_t step = 0;

  explicit AdamState(const ModelParams& p) {
    for (std::size_t i = 0; i < 2 * kStages; ++i) {
      const auto& l = layer_at(p, i);
      mw[i].assign(l.weights.size(), 0.0);
      vw[i].assign(l.weights.size(), 0.0);
      mb[i].assign(l.bias.size(), 0.0);
      vb[i].assign(l.bias.size(), 0.0);
    }
  }

  void apply(ModelParams& p, const ModelGrads& g, const TrainConfig& cfg) {
    ++step;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    auto update = [&](std::vector<double>& w, const std::vector<double>& gr, std::vector<double>& m,
                      std::vector<double>& v) {
      for (std::size_t n = 0; n < w.size(); ++n) {
        m[n] = cfg.beta1 * m[n] + (1.0 - cfg.beta1) * gr[n];
        v[n] = cfg.beta2 * v[n] + (1.0 - cfg.beta2) * gr[n] * gr[n];
        w[n] -= cfg.learning_rate * (m[n] / c1) / (std::sqrt(v[n] / c2) + cfg.adam_epsilon);
      }
    };
    for (std::size_t i = 0; i < 2 * kStages; ++i) {
      auto& l = layer_at(p, i);
      update(l.weights, g.weights[i], mw[i], vw[i]);
      update(l.bias, g.bias[i], mb[i], vb[i]);
    }
  }
};

inline void accumulate(ModelGrads& acc, const ModelGrads& g, double scale) {
  for (std::size_t i = 0; i < 2 * kStages; ++i) {
    if (acc.weights[i].empty()) {
      acc.weights[i].assign(g.weights[i].size(), 0.0);
      acc.bias[i].assign(g.bias[i].size(), 0.0);
    }
    for (std::size_t n = 0; n < g.weights[i].size(); ++n) acc.weights[i][n] += scale * g.weights[i][n];
    for (std::size_t n = 0; n < g.bias[i].size(); ++n) acc.bias[i][n] += scale * g.bias[i][n];
  }
}

struct Sample {
  nd::Tensor2 x;
  nd::Mask mask;
  int y = 1;
};

}  // namespace detail

inline void validate_training_set(std::span<const LabeledSegment> segments) {
  if (segments.empty()) throw DataError("train: no labeled segments");
  bool has[2] = {false, false};
  for (const auto& s : segments) {
    detail::require(s.stratum == segments.front().stratum, "train: segments from strata ",
                    segments.front().stratum.str(), " and ", s.stratum.str(), " mixed");
    detail::require(s.x.channels == kInputChannels, "train: segment of pixel ", s.pixel_id,
                    " has ", s.x.channels, " channels");
    detail::require(s.mask.length() == s.x.length && s.mask.valid_count() >= kMinSegmentDays,
                    "train: segment of pixel ", s.pixel_id, " shorter than one week");
    detail::require(s.y == 0 || s.y == 1, "train: label must be 0 or 1");
    has[s.y] = true;
  }
  if (!has[0] || !has[1])
    throw DataError("train: stratum " + segments.front().stratum.str() + " has only " +
                    (has[1] ? "frozen" : "thawed") +
                    " segments; the contrastive loss needs both classes");
}

/// Trains one stratum. Deterministic for a fixed config and segment order.
inline TrainResult train(std::span<const LabeledSegment> segments, const TrainConfig& cfg) {
  cfg.validate();
  validate_training_set(segments);

  TrainResult result;
  auto& model = result.model;
  model.stratum = segments.front().stratum;
  model.config_hash = cfg.hash();
  if (cfg.normalization == Normalization::per_stratum) {
    std::vector<nd::Tensor2> xs;
    std::vector<nd::Mask> ms;
    for (const auto& s : segments) {
      xs.push_back(s.x);
      ms.push_back(s.mask);
    }
    model.stats = compute_channel_stats(xs, ms);
  }
  std::vector<detail::Sample> data;
  data.reserve(segments.size());
  for (const auto& s : segments) data.push_back({standardize(s.x, model.stats), s.mask, s.y});

  model.params = init_model(cfg.rng_seed, cfg.dropout_rate);
  detail::AdamState adam(model.params);
  nd::Rng rng(cfg.rng_seed ^ 0x9e3779b97f4a7c15ULL);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    // One crop per segment, padded to the length quantum.
    std::vector<detail::Sample> batch_pool;
    batch_pool.reserve(data.size());
    for (const auto& s : data) {
      std::size_t valid = s.mask.valid_count();
      std::size_t begin = 0, len = valid;
      if (cfg.crop_length > 0 && valid > cfg.crop_length) {
        std::uniform_int_distribution<std::size_t> pick(0, valid - cfg.crop_length);
        begin = pick(rng);
        len = cfg.crop_length;
      }
      nd::Tensor2 crop(kInputChannels, len);
      for (std::size_t c = 0; c < kInputChannels; ++c)
        std::copy_n(s.x.row(c).begin() + static_cast<long>(begin), len, crop.row(c).begin());
      auto [padded, mask] = pad_to_quantum(crop);
      batch_pool.push_back({std::move(padded), std::move(mask), s.y});
    }

    // Bucket by padded length, then batch within buckets.
    std::vector<std::size_t> order(batch_pool.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return batch_pool[a].x.length < batch_pool[b].x.length;
    });
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t i = 0; i < order.size(); ++i) {
      const bool new_bucket =
          i == 0 || batch_pool[order[i]].x.length != batch_pool[order[i - 1]].x.length;
      if (new_bucket || batches.back().size() == cfg.batch_size) batches.emplace_back();
      batches.back().push_back(order[i]);
    }
    std::shuffle(batches.begin(), batches.end(), rng);

    EpochStats st;
    st.epoch = epoch;
    std::size_t n_cls[2] = {0, 0};
    for (const auto& batch : batches) {
      ModelGrads acc;
      const double scale = 1.0 / static_cast<double>(batch.size());
      for (std::size_t idx : batch) {
        const auto& smp = batch_pool[idx];
        auto trace = forward_traced(model.params, smp.x, smp.mask, nd::Mode::train, rng);
        const double L = trace.result.loss;
        const double obj = contrastive_loss(L, smp.y, cfg.loss_clamp);
        const double dobj = contrastive_loss_grad(L, smp.y, cfg.loss_clamp);
        detail::accumulate(acc, backward(model.params, trace, dobj), scale);
        st.objective += obj;
        (smp.y == 1 ? st.mean_loss_frozen : st.mean_loss_thawed) += L;
        (smp.y == 1 ? st.objective_frozen : st.objective_thawed) += obj;
        ++n_cls[smp.y];
      }
      adam.apply(model.params, acc, cfg);
    }
    st.objective /= static_cast<double>(batch_pool.size());
    st.mean_loss_frozen /= static_cast<double>(std::max<std::size_t>(n_cls[1], 1));
    st.objective_frozen /= static_cast<double>(std::max<std::size_t>(n_cls[1], 1));
    st.mean_loss_thawed /= static_cast<double>(std::max<std::size_t>(n_cls[0], 1));
    st.objective_thawed /= static_cast<double>(std::max<std::size_t>(n_cls[0], 1));
    result.log.push_back(st);
  }
  return result;
}

}  // namespace ftc
