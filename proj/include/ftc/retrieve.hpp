#pragma once

// Daily frozen probability from a trained model via a centered sliding window.

#include <algorithm>
#include <cstddef>

#include "ftc/datapipe.hpp"
#include "ftc/error.hpp"
#include "ftc/evaluation.hpp"
#include "ftc/model.hpp"
#include "ftc/train.hpp"

namespace ftc {

inline constexpr std::size_t kDefaultWindow = 21;

/// p(F) for every date of `series`. The window centered on each day is
/// truncated at the series ends and mask-padded to a multiple of 8.
inline RetrievalSeries retrieve(const TrainedModel& model, const PixelSeries& series,
                                std::size_t window = kDefaultWindow) {
  detail::require(window >= kMinSegmentDays && window % 2 == 1, "retrieve: window ", window,
                  " must be odd and >= 7");
  detail::require(series.size() >= kMinSegmentDays, "retrieve: series for pixel ",
                  series.pixel_id, " has ", series.size(), " days, need at least 7");
  const nd::Tensor2 z = standardize(tb_channels(series, 0, series.size()), model.stats);
  const std::size_t n = series.size(), half = window / 2;

  RetrievalSeries out{series.pixel_id, series.dates, std::vector<double>(n), window};
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t begin = t >= half ? t - half : 0;
    const std::size_t end = std::min(n, t + half + 1);
    nd::Tensor2 w(kInputChannels, end - begin);
    for (std::size_t c = 0; c < kInputChannels; ++c)
      std::copy(z.row(c).begin() + static_cast<long>(begin), z.row(c).begin() + static_cast<long>(end),
                w.row(c).begin());
    auto [padded, mask] = pad_to_quantum(w);
    out.p_frozen[t] = freeze_probability(forward(model.params, padded, mask).loss);
  }
  return out;
}

}  // namespace ftc
