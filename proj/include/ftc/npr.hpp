#pragma once

// Seasonal-threshold baseline on the normalized polarization ratio.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ftc/datapipe.hpp"
#include "ftc/error.hpp"

namespace ftc {

enum class FtState : std::uint8_t { frozen = 0, thawed = 1 };

inline constexpr std::string_view to_string(FtState s) {
  return s == FtState::frozen ? "frozen" : "thawed";
}

/// (V - H) / (V + H), positive when the horizontal channel is colder.
inline double compute_npr(double tb_v, double tb_h) {
  detail::require(std::isfinite(tb_v) && std::isfinite(tb_h) && tb_v > 0.0 && tb_h > 0.0,
                  "compute_npr: non-physical brightness temperatures V=", tb_v, " H=", tb_h);
  return (tb_v - tb_h) / (tb_v + tb_h);
}

struct NprReference {
  std::string scope;  // stratum or pixel the references were estimated for
  double npr_frozen = 0.0;
  double npr_thawed = 0.0;

  double delta_npr() const { return npr_thawed - npr_frozen; }
};

/// Mean NPR over frozen-labeled days and over thawed-labeled days.
inline NprReference estimate_references(std::span<const LabeledSegment> segments,
                                        std::string scope = {}) {
  double sum[2] = {0.0, 0.0};
  std::size_t n[2] = {0, 0};
  for (const auto& seg : segments)
    for (std::size_t t = 0; t < seg.x.length; ++t) {
      if (!seg.mask.flags[t]) continue;
      sum[seg.y] += compute_npr(seg.x(0, t), seg.x(1, t));
      ++n[seg.y];
    }
  if (n[0] == 0 || n[1] == 0)
    throw DataError("estimate_references: " + (scope.empty() ? std::string("segments") : scope) +
                    " lack " + (n[1] == 0 ? "frozen" : "thawed") +
                    "-labeled days; both classes are needed for NPR references");
  return NprReference{std::move(scope), sum[1] / static_cast<double>(n[1]),
                      sum[0] / static_cast<double>(n[0])};
}

inline constexpr double kNprThreshold = 0.5;
inline constexpr double kOverrideK = 273.0;
inline constexpr double kMinDeltaNpr = 1e-9;

/// Day t is thawed iff (NPR(t) - NPR_fr) / (NPR_th - NPR_fr) > 0.5, or when
/// both channels exceed 273 K (applied last, overriding the ratio test).
inline std::vector<FtState> seasonal_threshold(const PixelSeries& series, const NprReference& ref) {
  const double delta = ref.delta_npr();
  if (!(std::abs(delta) > kMinDeltaNpr))
    throw DataError("seasonal_threshold: degenerate NPR references for " +
                    (ref.scope.empty() ? series.pixel_id : ref.scope) +
                    " (delta_npr=" + std::to_string(delta) + ")");
  std::vector<FtState> out(series.size(), FtState::frozen);
  for (std::size_t t = 0; t < series.size(); ++t) {
    const double ratio = (compute_npr(series.tb_v[t], series.tb_h[t]) - ref.npr_frozen) / delta;
    const bool thawed = ratio > kNprThreshold ||
                        (series.tb_v[t] > kOverrideK && series.tb_h[t] > kOverrideK);
    out[t] = thawed ? FtState::thawed : FtState::frozen;
  }
  return out;
}

}  // namespace ftc
