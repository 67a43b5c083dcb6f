#pragma once

// Data model for per-pixel brightness-temperature and temperature records,
// daily gap filling, temperature-threshold segment labeling, and land-cover /
// water-fraction stratification.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ftc/error.hpp"
#include "ftc/ndcore.hpp"

namespace ftc {

// ---------------------------------------------------------------------------
// Calendar

using Date = std::chrono::sys_days;

inline std::optional<Date> try_parse_date(std::string_view s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  int y = 0;
  unsigned m = 0, d = 0;
  auto num = [](std::string_view part, auto& out) {
    auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), out);
    return ec == std::errc{} && p == part.data() + part.size();
  };
  if (!num(s.substr(0, 4), y) || !num(s.substr(5, 2), m) || !num(s.substr(8, 2), d))
    return std::nullopt;
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                        std::chrono::day{d}};
  if (!ymd.ok()) return std::nullopt;
  return Date{ymd};
}

inline Date parse_date(std::string_view s) {
  auto d = try_parse_date(s);
  detail::require(d.has_value(), "invalid ISO-8601 date '", s, "'");
  return *d;
}

inline std::string format_date(Date d) {
  const std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

inline int year_of(Date d) { return static_cast<int>(std::chrono::year_month_day{d}.year()); }

inline unsigned month_of(Date d) {
  return static_cast<unsigned>(std::chrono::year_month_day{d}.month());
}

/// 1-based day of year.
inline int day_of_year(Date d) {
  const Date jan1{std::chrono::year_month_day{std::chrono::year{year_of(d)}, std::chrono::January,
                                              std::chrono::day{1}}};
  return static_cast<int>((d - jan1).count()) + 1;
}

inline Date first_day_of_year(int year) {
  return Date{std::chrono::year_month_day{std::chrono::year{year}, std::chrono::January,
                                          std::chrono::day{1}}};
}

// ---------------------------------------------------------------------------
// Strata

enum class LandCover { OS, WS, S, G, SI, B };
enum class WaterBin { w00_05, w05_15, w15_35, w35_50 };

inline constexpr std::string_view to_string(LandCover c) {
  switch (c) {
    case LandCover::OS: return "OS";
    case LandCover::WS: return "WS";
    case LandCover::S: return "S";
    case LandCover::G: return "G";
    case LandCover::SI: return "SI";
    case LandCover::B: return "B";
  }
  return "?";
}

inline constexpr std::string_view to_string(WaterBin b) {
  switch (b) {
    case WaterBin::w00_05: return "0.00-0.05";
    case WaterBin::w05_15: return "0.05-0.15";
    case WaterBin::w15_35: return "0.15-0.35";
    case WaterBin::w35_50: return "0.35-0.50";
  }
  return "?";
}

inline std::optional<LandCover> try_parse_land_cover(std::string_view s) {
  for (auto c : {LandCover::OS, LandCover::WS, LandCover::S, LandCover::G, LandCover::SI,
                 LandCover::B})
    if (to_string(c) == s) return c;
  return std::nullopt;
}

/// Left-closed bins; the last bin also holds exactly 0.50. Fractions above
/// 0.50 have no bin.
inline std::optional<WaterBin> water_bin(double fraction) {
  if (fraction < 0.05) return WaterBin::w00_05;
  if (fraction < 0.15) return WaterBin::w05_15;
  if (fraction < 0.35) return WaterBin::w15_35;
  if (fraction <= 0.50) return WaterBin::w35_50;
  return std::nullopt;
}

struct StratumKey {
  LandCover land_cover = LandCover::OS;
  WaterBin water = WaterBin::w00_05;

  /// e.g. "WS:0.15-0.35"
  std::string str() const {
    return std::string(to_string(land_cover)) + ":" + std::string(to_string(water));
  }
  /// e.g. "WS_0.15-0.35", safe for file names.
  std::string file_stem() const {
    return std::string(to_string(land_cover)) + "_" + std::string(to_string(water));
  }

  friend auto operator<=>(const StratumKey&, const StratumKey&) = default;
};

inline std::optional<StratumKey> try_parse_stratum(std::string_view s) {
  const auto sep = s.find_first_of(":_");
  if (sep == std::string_view::npos) return std::nullopt;
  auto lc = try_parse_land_cover(s.substr(0, sep));
  if (!lc) return std::nullopt;
  for (auto b : {WaterBin::w00_05, WaterBin::w05_15, WaterBin::w15_35, WaterBin::w35_50})
    if (to_string(b) == s.substr(sep + 1)) return StratumKey{*lc, b};
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Records

struct RawObservation {
  Date date;
  double tb_v = 0.0;
  double tb_h = 0.0;
};

/// One grid cell's daily dual-polarization TB record.
struct PixelSeries {
  std::string pixel_id;
  std::vector<Date> dates;
  std::vector<double> tb_v;
  std::vector<double> tb_h;
  std::vector<std::uint8_t> observed;
  StratumKey stratum;

  std::size_t size() const { return dates.size(); }
};

struct TempSeries {
  std::string pixel_id;
  std::vector<Date> dates;
  std::vector<double> soil_k;
  std::vector<double> air_k;

  std::size_t size() const { return dates.size(); }
};

struct LabeledSegment {
  std::string pixel_id;
  StratumKey stratum;
  Date start_date;
  nd::Tensor2 x;  // rows: TB_V, TB_H, TB_V - TB_H (K)
  int y = 1;      // 1 frozen, 0 thawed
  nd::Mask mask;
};

/// Builds the three model channels (V, H, V - H) for days [begin, end).
inline nd::Tensor2 tb_channels(const PixelSeries& s, std::size_t begin, std::size_t end) {
  detail::require(begin <= end && end <= s.size(), "tb_channels: range [", begin, ", ", end,
                  ") outside series of length ", s.size());
  nd::Tensor2 x(3, end - begin);
  for (std::size_t t = begin; t < end; ++t) {
    x(0, t - begin) = s.tb_v[t];
    x(1, t - begin) = s.tb_h[t];
    x(2, t - begin) = s.tb_v[t] - s.tb_h[t];
  }
  return x;
}

/// Days of `s` with from <= date <= to, as a new series.
inline PixelSeries slice(const PixelSeries& s, Date from, Date to) {
  PixelSeries out;
  out.pixel_id = s.pixel_id;
  out.stratum = s.stratum;
  for (std::size_t t = 0; t < s.size(); ++t)
    if (s.dates[t] >= from && s.dates[t] <= to) {
      out.dates.push_back(s.dates[t]);
      out.tb_v.push_back(s.tb_v[t]);
      out.tb_h.push_back(s.tb_h[t]);
      out.observed.push_back(s.observed[t]);
    }
  return out;
}

inline TempSeries slice(const TempSeries& s, Date from, Date to) {
  TempSeries out;
  out.pixel_id = s.pixel_id;
  for (std::size_t t = 0; t < s.size(); ++t)
    if (s.dates[t] >= from && s.dates[t] <= to) {
      out.dates.push_back(s.dates[t]);
      out.soil_k.push_back(s.soil_k[t]);
      out.air_k.push_back(s.air_k[t]);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Daily interpolation

inline constexpr int kDefaultMaxGap = 3;

/// Fills days between observations linearly. Observed samples are kept
/// exactly. A spacing larger than `max_gap` days starts a new series, so the
/// result may hold several pieces.
inline std::vector<PixelSeries> interpolate_daily(const std::string& pixel_id,
                                                  std::vector<RawObservation> obs,
                                                  int max_gap = kDefaultMaxGap) {
  detail::require(obs.size() >= 2, "interpolate_daily: pixel ", pixel_id, " has ", obs.size(),
                  " observation(s), need at least 2");
  detail::require(max_gap >= 1, "interpolate_daily: max_gap must be >= 1");
  std::sort(obs.begin(), obs.end(),
            [](const RawObservation& a, const RawObservation& b) { return a.date < b.date; });
  for (std::size_t i = 1; i < obs.size(); ++i)
    detail::require(obs[i].date != obs[i - 1].date, "interpolate_daily: pixel ", pixel_id,
                    " has duplicate date ", format_date(obs[i].date));

  std::vector<PixelSeries> pieces;
  auto start_piece = [&](const RawObservation& o) {
    PixelSeries p;
    p.pixel_id = pixel_id;
    p.dates.push_back(o.date);
    p.tb_v.push_back(o.tb_v);
    p.tb_h.push_back(o.tb_h);
    p.observed.push_back(1);
    pieces.push_back(std::move(p));
  };
  start_piece(obs.front());
  for (std::size_t i = 1; i < obs.size(); ++i) {
    const auto& a = obs[i - 1];
    const auto& b = obs[i];
    const int gap = static_cast<int>((b.date - a.date).count());
    if (gap > max_gap) {
      start_piece(b);
      continue;
    }
    auto& p = pieces.back();
    for (int k = 1; k < gap; ++k) {
      const double w = static_cast<double>(k) / gap;
      p.dates.push_back(a.date + std::chrono::days{k});
      p.tb_v.push_back(a.tb_v + w * (b.tb_v - a.tb_v));
      p.tb_h.push_back(a.tb_h + w * (b.tb_h - a.tb_h));
      p.observed.push_back(0);
    }
    p.dates.push_back(b.date);
    p.tb_v.push_back(b.tb_v);
    p.tb_h.push_back(b.tb_h);
    p.observed.push_back(1);
  }
  return pieces;
}

// ---------------------------------------------------------------------------
// Segment labeling

struct LabelThresholds {
  double frozen_below_k = 271.0;
  double thawed_above_k = 275.0;
};

inline constexpr std::size_t kMinSegmentDays = 7;

/// Maximal runs where soil and air are both below the frozen threshold become
/// y = 1 segments; runs where both are above the thawed threshold become
/// y = 0 segments. Runs shorter than `min_len` are dropped.
inline std::vector<LabeledSegment> label_segments(const PixelSeries& tb, const TempSeries& temps,
                                                  std::size_t min_len = kMinSegmentDays,
                                                  LabelThresholds th = {}) {
  detail::require(min_len >= kMinSegmentDays, "label_segments: min_len ", min_len,
                  " below one week");
  detail::require(tb.dates == temps.dates, "label_segments: TB and temperature dates for pixel ",
                  tb.pixel_id, " are not aligned");
  auto state = [&](std::size_t t) -> int {
    const double s = temps.soil_k[t], a = temps.air_k[t];
    if (s < th.frozen_below_k && a < th.frozen_below_k) return 1;
    if (s > th.thawed_above_k && a > th.thawed_above_k) return 0;
    return -1;
  };
  std::vector<LabeledSegment> out;
  std::size_t t = 0;
  while (t < tb.size()) {
    const int y = state(t);
    std::size_t end = t + 1;
    while (end < tb.size() && state(end) == y) ++end;
    if (y >= 0 && end - t >= min_len) {
      LabeledSegment seg;
      seg.pixel_id = tb.pixel_id;
      seg.stratum = tb.stratum;
      seg.start_date = tb.dates[t];
      seg.x = tb_channels(tb, t, end);
      seg.y = y;
      seg.mask = nd::Mask::all_valid(end - t);
      out.push_back(std::move(seg));
    }
    t = end;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stratification

struct AncillaryRecord {
  std::string pixel_id;
  std::string land_cover;
  double water_fraction = 0.0;
};

struct Exclusion {
  std::string pixel_id;
  std::string reason;
};

struct Stratification {
  std::map<StratumKey, std::vector<std::string>> strata;
  std::vector<Exclusion> excluded;

  std::optional<StratumKey> find(const std::string& pixel_id) const {
    for (const auto& [key, ids] : strata)
      if (std::binary_search(ids.begin(), ids.end(), pixel_id)) return key;
    return std::nullopt;
  }
};

/// Partitions pixels by land cover x water-fraction bin. Snow/ice and barren
/// covers and water fractions above 0.50 are excluded and reported.
inline Stratification stratify(const std::vector<AncillaryRecord>& pixels) {
  Stratification r;
  for (const auto& p : pixels) {
    const auto lc = try_parse_land_cover(p.land_cover);
    detail::require(lc.has_value(), "stratify: unknown land-cover code '", p.land_cover,
                    "' for pixel ", p.pixel_id);
    detail::require(p.water_fraction >= 0.0 && p.water_fraction <= 1.0,
                    "stratify: water fraction ", p.water_fraction, " for pixel ", p.pixel_id,
                    " outside [0, 1]");
    if (*lc == LandCover::SI || *lc == LandCover::B) {
      r.excluded.push_back({p.pixel_id, "land cover " + p.land_cover + " is not trained"});
      continue;
    }
    const auto bin = water_bin(p.water_fraction);
    if (!bin) {
      r.excluded.push_back({p.pixel_id, "water fraction " + std::to_string(p.water_fraction) +
                                            " above 0.50"});
      continue;
    }
    r.strata[StratumKey{*lc, *bin}].push_back(p.pixel_id);
  }
  for (auto& [key, ids] : r.strata) {
    std::sort(ids.begin(), ids.end());
    detail::require(std::adjacent_find(ids.begin(), ids.end()) == ids.end(),
                    "stratify: duplicate pixel id in stratum ", key.str());
  }
  return r;
}

}  // namespace ftc
