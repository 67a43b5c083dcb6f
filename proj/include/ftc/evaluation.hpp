#pragma once

// Scoring of binary freeze/thaw series against reference labels: confusion
// matrices, stratified summaries, frozen-fraction series and onset dates.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ftc/datapipe.hpp"
#include "ftc/error.hpp"
#include "ftc/npr.hpp"

namespace ftc {

/// Frozen is the positive class. `T` is an integer count type for scoring and
/// may be a real type when reproducing tables given as cell percentages.
template <typename T>
struct BasicConfusionMatrix {
  T tp{};
  T tn{};
  T fp{};
  T fn{};

  T total() const { return tp + tn + fp + fn; }

  double accuracy() const { return ratio(tp + tn, total()); }
  double recall_frozen() const { return ratio(tp, tp + fn); }
  double recall_thawed() const { return ratio(tn, tn + fp); }
  double precision_frozen() const { return ratio(tp, tp + fp); }
  double precision_thawed() const { return ratio(tn, tn + fn); }

  /// Class relabeling: frozen <-> thawed.
  BasicConfusionMatrix swapped() const { return {tn, tp, fn, fp}; }

  void add(FtState predicted, FtState reference) {
    const bool p = predicted == FtState::frozen, r = reference == FtState::frozen;
    if (p && r) tp += 1;
    else if (!p && !r) tn += 1;
    else if (p) fp += 1;
    else fn += 1;
  }

  BasicConfusionMatrix& operator+=(const BasicConfusionMatrix& o) {
    tp += o.tp, tn += o.tn, fp += o.fp, fn += o.fn;
    return *this;
  }

  friend bool operator==(const BasicConfusionMatrix&, const BasicConfusionMatrix&) = default;

private:
  static double ratio(T num, T den) {
    detail::require(den > T{}, "confusion matrix: metric undefined, denominator is zero");
    return static_cast<double>(num) / static_cast<double>(den);
  }
};

using ConfusionMatrix = BasicConfusionMatrix<std::int64_t>;

/// Rounds a fraction to a percentage with one decimal.
inline double percent_1dp(double fraction) { return std::round(fraction * 1000.0) / 10.0; }

struct BinarySeries {
  std::string pixel_id;
  std::vector<Date> dates;
  std::vector<FtState> states;

  std::size_t size() const { return dates.size(); }
};

struct RetrievalSeries {
  std::string pixel_id;
  std::vector<Date> dates;
  std::vector<double> p_frozen;
  std::size_t window = 0;
};

/// frozen iff p(F) > threshold; a tie goes to thawed.
inline BinarySeries binarize(const RetrievalSeries& r, double threshold = 0.5) {
  detail::require(threshold > 0.0 && threshold < 1.0, "binarize: threshold ", threshold,
                  " outside (0, 1)");
  BinarySeries b{r.pixel_id, r.dates, {}};
  b.states.reserve(r.p_frozen.size());
  for (double p : r.p_frozen) b.states.push_back(p > threshold ? FtState::frozen : FtState::thawed);
  return b;
}

struct Coverage {
  std::size_t aligned = 0;
  std::size_t predicted_only = 0;
  std::size_t reference_only = 0;
};

struct ScoreResult {
  ConfusionMatrix matrix;
  Coverage coverage;
};

namespace detail {

using DayKey = std::pair<std::string, Date>;

inline std::map<DayKey, FtState> index_days(std::span<const BinarySeries> set) {
  std::map<DayKey, FtState> m;
  for (const auto& s : set) {
    require(s.dates.size() == s.states.size(), "score: series ", s.pixel_id,
            " has mismatched dates and states");
    for (std::size_t t = 0; t < s.size(); ++t) m[{s.pixel_id, s.dates[t]}] = s.states[t];
  }
  return m;
}

}  // namespace detail

/// Counts over all (pixel, date) pairs present in both sets; the rest is
/// reported in the coverage tally.
inline ScoreResult score(std::span<const BinarySeries> predicted,
                         std::span<const BinarySeries> reference) {
  const auto pred = detail::index_days(predicted);
  const auto ref = detail::index_days(reference);
  ScoreResult r;
  for (const auto& [key, p] : pred) {
    auto it = ref.find(key);
    if (it == ref.end()) {
      ++r.coverage.predicted_only;
      continue;
    }
    r.matrix.add(p, it->second);
    ++r.coverage.aligned;
  }
  r.coverage.reference_only = ref.size() - r.coverage.aligned;
  detail::require(r.coverage.aligned > 0, "score: predicted and reference share no pixel-days");
  return r;
}

// ---------------------------------------------------------------------------
// Distribution summaries

/// Linear-interpolated percentile (q in [0, 100]) of unsorted values.
inline double percentile(std::vector<double> v, double q) {
  detail::require(!v.empty(), "percentile: empty sample");
  std::sort(v.begin(), v.end());
  const double pos = q / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct Distribution {
  double p05 = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, p95 = 0.0;
  std::size_t n = 0;

  static Distribution of(const std::vector<double>& v) {
    return {percentile(v, 5), percentile(v, 25), percentile(v, 50), percentile(v, 75),
            percentile(v, 95), v.size()};
  }
};

struct StratumScores {
  ConfusionMatrix matrix;
  Distribution pixel_accuracy;
};

/// Per-stratum pooled confusion matrices plus the spread of per-pixel accuracy.
inline std::map<std::string, StratumScores> stratified_scores(
    std::span<const BinarySeries> predicted, std::span<const BinarySeries> reference,
    const std::map<std::string, std::string>& stratum_of_pixel) {
  const auto ref = detail::index_days(reference);
  std::map<std::string, std::vector<const BinarySeries*>> groups;
  for (const auto& s : predicted) {
    auto it = stratum_of_pixel.find(s.pixel_id);
    if (it != stratum_of_pixel.end()) groups[it->second].push_back(&s);
  }
  std::map<std::string, StratumScores> out;
  for (const auto& [stratum, series] : groups) {
    StratumScores sc;
    std::map<std::string, ConfusionMatrix> per_pixel;
    for (const auto* s : series)
      for (std::size_t t = 0; t < s->size(); ++t) {
        auto it = ref.find({s->pixel_id, s->dates[t]});
        if (it == ref.end()) continue;
        sc.matrix.add(s->states[t], it->second);
        per_pixel[s->pixel_id].add(s->states[t], it->second);
      }
    if (sc.matrix.total() == 0) continue;
    std::vector<double> acc;
    for (const auto& [id, m] : per_pixel) acc.push_back(m.accuracy());
    sc.pixel_accuracy = Distribution::of(acc);
    out[stratum] = sc;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Frozen fraction and onsets

struct FractionSeries {
  std::vector<Date> dates;
  std::vector<double> fraction;
};

/// Fraction of pixels classified frozen on each date any pixel covers.
inline FractionSeries frozen_fraction(std::span<const BinarySeries> set) {
  std::map<Date, std::pair<std::size_t, std::size_t>> counts;  // frozen, total
  for (const auto& s : set)
    for (std::size_t t = 0; t < s.size(); ++t) {
      auto& c = counts[s.dates[t]];
      c.first += s.states[t] == FtState::frozen;
      ++c.second;
    }
  FractionSeries f;
  for (const auto& [d, c] : counts) {
    f.dates.push_back(d);
    f.fraction.push_back(static_cast<double>(c.first) / static_cast<double>(c.second));
  }
  return f;
}

/// Centered moving average; the window shrinks symmetrically near the ends.
inline FractionSeries smooth(const FractionSeries& f, std::size_t window = 5) {
  detail::require(window % 2 == 1, "smooth: window must be odd");
  FractionSeries out{f.dates, std::vector<double>(f.fraction.size())};
  const std::size_t n = f.fraction.size();
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t half = std::min({window / 2, t, n - 1 - t});
    double sum = 0.0;
    for (std::size_t k = t - half; k <= t + half; ++k) sum += f.fraction[k];
    out.fraction[t] = sum / static_cast<double>(2 * half + 1);
  }
  return out;
}

struct Onsets {
  std::optional<Date> thaw;
  std::optional<Date> freeze;
};

inline constexpr std::size_t kOnsetPersistence = 5;

/// Thaw onset: first date after a frozen-majority day where the fraction
/// drops below 0.5 and stays there for `persistence` days. Freeze onset is the
/// mirror image.
inline Onsets onset_dates(const FractionSeries& f, std::size_t persistence = kOnsetPersistence) {
  Onsets o;
  const std::size_t n = f.fraction.size();
  auto thawed = [&](std::size_t t) { return f.fraction[t] < 0.5; };
  for (std::size_t t = 1; t + persistence <= n; ++t) {
    bool run_thawed = true, run_frozen = true;
    for (std::size_t k = t; k < t + persistence; ++k) {
      run_thawed = run_thawed && thawed(k);
      run_frozen = run_frozen && !thawed(k);
    }
    if (!o.thaw && !thawed(t - 1) && run_thawed) o.thaw = f.dates[t];
    if (!o.freeze && thawed(t - 1) && run_frozen) o.freeze = f.dates[t];
  }
  return o;
}

}  // namespace ftc
