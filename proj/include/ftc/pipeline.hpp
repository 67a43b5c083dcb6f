#pragma once

// End-to-end orchestration shared by the command-line tool and the
// acceptance suite: year-based train/test split, per-stratum segment
// extraction and training, windowed retrieval, the NPR baseline, and scoring.

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ftc/datapipe.hpp"
#include "ftc/error.hpp"
#include "ftc/evaluation.hpp"
#include "ftc/npr.hpp"
#include "ftc/parallel.hpp"
#include "ftc/retrieve.hpp"
#include "ftc/synthetic.hpp"
#include "ftc/train.hpp"

namespace ftc {

struct PipelineConfig {
  TrainConfig train;
  int train_years = 3;
  std::size_t window = kDefaultWindow;
  double threshold = 0.5;
  int max_gap = kDefaultMaxGap;
  std::size_t min_segment = kMinSegmentDays;
  std::size_t threads = 0;  // 0: one worker per hardware thread
};

struct Dataset {
  std::vector<PixelSeries> tb;  // daily pieces, possibly several per pixel
  std::vector<TempSeries> temps;
  std::vector<AncillaryRecord> ancillary;
  std::vector<BinarySeries> truth;
  std::vector<std::string> stations;  // excluded from training
};

inline Dataset dataset_from_scene(const SyntheticScene& s) {
  return {s.tb, s.temps, s.ancillary, s.truth, s.stations};
}

struct Period {
  Date first;
  Date last;  // inclusive

  bool contains(Date d) const { return d >= first && d <= last; }
};

struct Split {
  Period train;
  Period test;
};

/// The first `train_years` calendar years train, the remainder tests.
inline Split year_split(const Dataset& data, int train_years) {
  detail::require(train_years >= 1, "year_split: train_years must be >= 1");
  if (data.tb.empty()) throw DataError("no brightness-temperature series");
  Date lo = data.tb.front().dates.front(), hi = data.tb.front().dates.back();
  for (const auto& s : data.tb) {
    lo = std::min(lo, s.dates.front());
    hi = std::max(hi, s.dates.back());
  }
  const int y0 = year_of(lo);
  const Date test_first = first_day_of_year(y0 + train_years);
  return {{lo, test_first - std::chrono::days{1}}, {test_first, hi}};
}

/// Stratifies the ancillary table and tags each TB series with its stratum.
/// Series of excluded pixels keep their default key and are listed in
/// `excluded`.
inline Stratification assign_strata(Dataset& data) {
  Stratification st = stratify(data.ancillary);
  std::map<std::string, StratumKey> key_of;
  for (const auto& [key, ids] : st.strata)
    for (const auto& id : ids) key_of[id] = key;
  for (auto& s : data.tb) {
    auto it = key_of.find(s.pixel_id);
    if (it != key_of.end()) s.stratum = it->second;
  }
  return st;
}

inline std::map<std::string, std::string> stratum_names(const Stratification& st) {
  std::map<std::string, std::string> m;
  for (const auto& [key, ids] : st.strata)
    for (const auto& id : ids) m[id] = key.str();
  return m;
}

using SegmentsByStratum = std::map<StratumKey, std::vector<LabeledSegment>>;

/// Labeled training segments from the training period of every stratified,
/// non-station pixel.
inline SegmentsByStratum training_segments(const Dataset& data, const Stratification& st,
                                           const Period& period, std::size_t min_segment) {
  std::map<std::string, const TempSeries*> temps;
  for (const auto& t : data.temps) temps[t.pixel_id] = &t;
  const std::set<std::string> stations(data.stations.begin(), data.stations.end());
  const auto names = stratum_names(st);
  SegmentsByStratum out;
  for (const auto& s : data.tb) {
    if (!names.count(s.pixel_id) || stations.count(s.pixel_id)) continue;
    PixelSeries piece = slice(s, period.first, period.last);
    if (piece.size() < min_segment) continue;
    auto it = temps.find(s.pixel_id);
    if (it == temps.end()) throw DataError("no temperature series for pixel " + s.pixel_id);
    TempSeries t = slice(*it->second, piece.dates.front(), piece.dates.back());
    if (t.dates != piece.dates)
      throw DataError("temperature dates do not cover the TB dates of pixel " + s.pixel_id + " (" +
                      format_date(piece.dates.front()) + " to " + format_date(piece.dates.back()) + ")");
    auto segs = label_segments(piece, t, min_segment);
    auto& dst = out[s.stratum];
    for (auto& g : segs) dst.push_back(std::move(g));
  }
  return out;
}

/// Trains every stratum, strata in parallel. Strata lacking either label are
/// refused.
inline std::map<StratumKey, TrainResult> train_strata(const SegmentsByStratum& segments,
                                                      const TrainConfig& cfg, std::size_t threads = 1) {
  std::vector<const SegmentsByStratum::value_type*> jobs;
  for (const auto& kv : segments) jobs.push_back(&kv);
  std::vector<TrainResult> results(jobs.size());
  parallel_for(jobs.size(), threads, [&](std::size_t i) { results[i] = train(jobs[i]->second, cfg); });
  std::map<StratumKey, TrainResult> out;
  for (std::size_t i = 0; i < jobs.size(); ++i) out.emplace(jobs[i]->first, std::move(results[i]));
  return out;
}

/// Retrieval over `period` for every series whose stratum has a model. Each
/// series is trimmed to the period plus half a window on each side first, so
/// the windows match those of a whole-series retrieval.
inline std::vector<RetrievalSeries> retrieve_period(const std::map<StratumKey, TrainedModel>& models,
                                                    const Dataset& data, const Stratification& st,
                                                    const Period& period, std::size_t window,
                                                    std::size_t threads = 1) {
  const auto names = stratum_names(st);
  const auto half = std::chrono::days{static_cast<long>(window / 2)};
  std::vector<std::optional<RetrievalSeries>> slots(data.tb.size());
  parallel_for(data.tb.size(), threads, [&](std::size_t i) {
    const auto& s = data.tb[i];
    if (!names.count(s.pixel_id)) return;
    auto m = models.find(s.stratum);
    if (m == models.end()) return;
    PixelSeries piece = slice(s, period.first - half, period.last + half);
    if (piece.size() < kMinSegmentDays) return;
    RetrievalSeries r = retrieve(m->second, piece, window);
    RetrievalSeries kept{r.pixel_id, {}, {}, r.window};
    for (std::size_t t = 0; t < r.dates.size(); ++t)
      if (period.contains(r.dates[t])) {
        kept.dates.push_back(r.dates[t]);
        kept.p_frozen.push_back(r.p_frozen[t]);
      }
    if (!kept.dates.empty()) slots[i] = std::move(kept);
  });
  std::vector<RetrievalSeries> out;
  for (auto& s : slots)
    if (s) out.push_back(std::move(*s));
  return out;
}

/// Strata present in `st` that have no model, as an error message listing
/// the available ones; empty when every stratum is covered.
inline std::string missing_models(const std::map<StratumKey, TrainedModel>& models, const Stratification& st) {
  std::string missing, available;
  for (const auto& [key, ids] : st.strata)
    if (!models.count(key)) missing += (missing.empty() ? "" : ", ") + key.str();
  if (missing.empty()) return {};
  for (const auto& [key, m] : models) available += (available.empty() ? "" : ", ") + key.str();
  return "no checkpoint for stratum " + missing + "; available: " + (available.empty() ? "(none)" : available);
}

inline std::map<StratumKey, NprReference> baseline_references(const SegmentsByStratum& segments) {
  std::map<StratumKey, NprReference> out;
  for (const auto& [key, segs] : segments) out.emplace(key, estimate_references(segs, key.str()));
  return out;
}

inline std::vector<BinarySeries> baseline_period(const std::map<StratumKey, NprReference>& refs,
                                                 const Dataset& data, const Stratification& st,
                                                 const Period& period) {
  const auto names = stratum_names(st);
  std::vector<BinarySeries> out;
  for (const auto& s : data.tb) {
    if (!names.count(s.pixel_id)) continue;
    auto r = refs.find(s.stratum);
    if (r == refs.end()) continue;
    PixelSeries piece = slice(s, period.first, period.last);
    if (piece.size() == 0) continue;
    out.push_back({piece.pixel_id, piece.dates, seasonal_threshold(piece, r->second)});
  }
  return out;
}

inline std::vector<BinarySeries> binarize_all(const std::vector<RetrievalSeries>& r, double threshold) {
  std::vector<BinarySeries> out;
  out.reserve(r.size());
  for (const auto& s : r) out.push_back(binarize(s, threshold));
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

struct MethodReport {
  std::string name;
  ConfusionMatrix overall;
  Coverage coverage;
  std::map<std::string, StratumScores> strata;
  FractionSeries fraction;  // smoothed
  std::map<int, Onsets> onsets;
};

struct EvaluationReport {
  std::vector<MethodReport> methods;
  FractionSeries truth_fraction;  // smoothed
  std::map<int, Onsets> truth_onsets;
};

inline std::pair<Date, Date> date_range(const std::vector<BinarySeries>& set) {
  Date lo = Date::max(), hi = Date::min();
  for (const auto& s : set)
    if (!s.dates.empty()) {
      lo = std::min(lo, s.dates.front());
      hi = std::max(hi, s.dates.back());
    }
  return {lo, hi};
}

inline std::string describe_range(const std::vector<BinarySeries>& set) {
  const auto [lo, hi] = date_range(set);
  if (lo > hi) return "(empty)";
  return format_date(lo) + ".." + format_date(hi);
}

inline std::map<int, Onsets> onsets_by_year(const FractionSeries& f) {
  std::map<int, FractionSeries> per_year;
  for (std::size_t t = 0; t < f.dates.size(); ++t) {
    auto& y = per_year[year_of(f.dates[t])];
    y.dates.push_back(f.dates[t]);
    y.fraction.push_back(f.fraction[t]);
  }
  std::map<int, Onsets> out;
  for (const auto& [year, series] : per_year) out[year] = onset_dates(series);
  return out;
}

/// Scores each named prediction set against `truth`. Fails with a data error
/// naming both date ranges when a method shares no pixel-days with the truth.
inline EvaluationReport evaluate_methods(
    const std::vector<std::pair<std::string, std::vector<BinarySeries>>>& methods,
    const std::vector<BinarySeries>& truth, const std::map<std::string, std::string>& stratum_of) {
  EvaluationReport rep;
  std::optional<std::pair<Date, Date>> span;
  for (const auto& [name, pred] : methods) {
    MethodReport m;
    m.name = name;
    try {
      const auto sc = score(pred, truth);
      m.overall = sc.matrix;
      m.coverage = sc.coverage;
    } catch (const ContractViolation&) {
      throw DataError("no overlapping pixel-days between " + name + " predictions (" +
                      describe_range(pred) + ") and truth (" + describe_range(truth) + ")");
    }
    m.strata = stratified_scores(pred, truth, stratum_of);
    m.fraction = smooth(frozen_fraction(pred));
    m.onsets = onsets_by_year(m.fraction);
    const auto r = date_range(pred);
    span = span ? std::pair{std::min(span->first, r.first), std::max(span->second, r.second)} : r;
    rep.methods.push_back(std::move(m));
  }
  if (span) {
    std::vector<BinarySeries> clipped;
    std::set<std::string> scored;
    for (const auto& s : stratum_of) scored.insert(s.first);
    for (const auto& s : truth) {
      if (!scored.count(s.pixel_id)) continue;
      BinarySeries c{s.pixel_id, {}, {}};
      for (std::size_t t = 0; t < s.size(); ++t)
        if (s.dates[t] >= span->first && s.dates[t] <= span->second) {
          c.dates.push_back(s.dates[t]);
          c.states.push_back(s.states[t]);
        }
      clipped.push_back(std::move(c));
    }
    rep.truth_fraction = smooth(frozen_fraction(clipped));
    rep.truth_onsets = onsets_by_year(rep.truth_fraction);
  }
  return rep;
}

namespace detail {

template <typename F>
std::optional<double> safe_metric(F&& f) {
  try {
    return f();
  } catch (const ContractViolation&) {
    return std::nullopt;
  }
}

inline std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

inline std::vector<std::pair<std::string, std::optional<double>>> metric_list(const ConfusionMatrix& m) {
  return {{"accuracy", safe_metric([&] { return m.accuracy(); })},
          {"recall_frozen", safe_metric([&] { return m.recall_frozen(); })},
          {"recall_thawed", safe_metric([&] { return m.recall_thawed(); })},
          {"precision_frozen", safe_metric([&] { return m.precision_frozen(); })},
          {"precision_thawed", safe_metric([&] { return m.precision_thawed(); })}};
}

}  // namespace detail

/// Machine-readable report: `stratum,metric,value,n`.
inline std::string report_csv(const EvaluationReport& rep) {
  std::ostringstream os;
  os << "stratum,metric,value,n\n";
  for (const auto& m : rep.methods) {
    const auto n = m.overall.total();
    auto row = [&](const std::string& stratum, const std::string& metric, const std::string& value,
                   long long count) { os << stratum << ',' << m.name << '.' << metric << ',' << value << ',' << count << '\n'; };
    row("ALL", "tp", std::to_string(m.overall.tp), n);
    row("ALL", "tn", std::to_string(m.overall.tn), n);
    row("ALL", "fp", std::to_string(m.overall.fp), n);
    row("ALL", "fn", std::to_string(m.overall.fn), n);
    for (const auto& [k, v] : detail::metric_list(m.overall))
      if (v) row("ALL", k, detail::fmt("%.6f", *v), n);
    row("ALL", "coverage.predicted_only", std::to_string(m.coverage.predicted_only), n);
    row("ALL", "coverage.reference_only", std::to_string(m.coverage.reference_only), n);
    for (const auto& [stratum, sc] : m.strata) {
      const auto sn = sc.matrix.total();
      for (const auto& [k, v] : detail::metric_list(sc.matrix))
        if (v) row(stratum, k, detail::fmt("%.6f", *v), sn);
      const auto& d = sc.pixel_accuracy;
      const auto pn = static_cast<long long>(d.n);
      row(stratum, "pixel_accuracy.p05", detail::fmt("%.6f", d.p05), pn);
      row(stratum, "pixel_accuracy.q1", detail::fmt("%.6f", d.q1), pn);
      row(stratum, "pixel_accuracy.median", detail::fmt("%.6f", d.median), pn);
      row(stratum, "pixel_accuracy.q3", detail::fmt("%.6f", d.q3), pn);
      row(stratum, "pixel_accuracy.p95", detail::fmt("%.6f", d.p95), pn);
    }
    for (const auto& [year, o] : m.onsets) {
      if (o.thaw) row("ALL", "thaw_onset_doy." + std::to_string(year), std::to_string(day_of_year(*o.thaw)), n);
      if (o.freeze) row("ALL", "freeze_onset_doy." + std::to_string(year), std::to_string(day_of_year(*o.freeze)), n);
    }
  }
  for (const auto& [year, o] : rep.truth_onsets) {
    if (o.thaw) os << "ALL,truth.thaw_onset_doy." << year << ',' << day_of_year(*o.thaw) << ",0\n";
    if (o.freeze) os << "ALL,truth.freeze_onset_doy." << year << ',' << day_of_year(*o.freeze) << ",0\n";
  }
  return os.str();
}

/// Human-readable report; percentages with one decimal.
inline std::string report_text(const EvaluationReport& rep) {
  std::ostringstream os;
  auto pct = [](const std::optional<double>& v) {
    return v ? detail::fmt("%5.1f", percent_1dp(*v)) : std::string("  n/a");
  };
  os << "Freeze/thaw retrieval evaluation\n";
  os << "================================\n\n";
  for (const auto& m : rep.methods) {
    const auto& c = m.overall;
    const double tot = static_cast<double>(c.total());
    os << "[" << m.name << "] accuracy section\n";
    os << "  aligned pixel-days: " << m.coverage.aligned << " (predicted only: " << m.coverage.predicted_only
       << ", reference only: " << m.coverage.reference_only << ")\n";
    os << "  confusion matrix (counts / % of total), frozen = positive\n";
    os << "                    actual frozen        actual thawed\n";
    os << "    pred frozen   " << detail::fmt("%10.0f", static_cast<double>(c.tp)) << " ("
       << detail::fmt("%5.1f", percent_1dp(c.tp / tot)) << ")  " << detail::fmt("%10.0f", static_cast<double>(c.fp))
       << " (" << detail::fmt("%5.1f", percent_1dp(c.fp / tot)) << ")\n";
    os << "    pred thawed   " << detail::fmt("%10.0f", static_cast<double>(c.fn)) << " ("
       << detail::fmt("%5.1f", percent_1dp(c.fn / tot)) << ")  " << detail::fmt("%10.0f", static_cast<double>(c.tn))
       << " (" << detail::fmt("%5.1f", percent_1dp(c.tn / tot)) << ")\n";
    for (const auto& [k, v] : detail::metric_list(c)) os << "  " << k << ": " << pct(v) << " %\n";
    os << "  by stratum:\n";
    os << "    stratum          n       acc  rec_F  rec_T  pre_F  pre_T  | pixel acc p05 / q1 / med / q3 / p95\n";
    for (const auto& [stratum, sc] : m.strata) {
      const auto ml = detail::metric_list(sc.matrix);
      char head[64];
      std::snprintf(head, sizeof head, "    %-14s %7lld", stratum.c_str(), static_cast<long long>(sc.matrix.total()));
      os << head;
      for (const auto& [k, v] : ml) os << "  " << pct(v);
      const auto& d = sc.pixel_accuracy;
      os << "  | " << pct(d.p05) << " " << pct(d.q1) << " " << pct(d.median) << " " << pct(d.q3) << " "
         << pct(d.p95) << '\n';
    }
    os << "  onsets (frozen fraction crossing 0.5, 5-day persistence):\n";
    for (const auto& [year, o] : m.onsets)
      os << "    " << year << ": thaw " << (o.thaw ? format_date(*o.thaw) : std::string("absent")) << ", freeze "
         << (o.freeze ? format_date(*o.freeze) : std::string("absent")) << '\n';
    os << '\n';
  }
  if (!rep.truth_onsets.empty()) {
    os << "[truth] onsets:\n";
    for (const auto& [year, o] : rep.truth_onsets)
      os << "    " << year << ": thaw " << (o.thaw ? format_date(*o.thaw) : std::string("absent")) << ", freeze "
         << (o.freeze ? format_date(*o.freeze) : std::string("absent")) << '\n';
  }
  return os.str();
}

/// `date,fraction_ftc,fraction_baseline,fraction_truth`; a missing method
/// leaves its column empty.
inline std::string fraction_csv(const EvaluationReport& rep) {
  auto find = [&](const std::string& name) -> const FractionSeries* {
    for (const auto& m : rep.methods)
      if (m.name == name) return &m.fraction;
    return nullptr;
  };
  const FractionSeries* cols[3] = {find("ftc"), find("baseline"), &rep.truth_fraction};
  std::map<Date, std::array<std::optional<double>, 3>> rows;
  for (int c = 0; c < 3; ++c)
    if (cols[c])
      for (std::size_t t = 0; t < cols[c]->dates.size(); ++t) rows[cols[c]->dates[t]][c] = cols[c]->fraction[t];
  std::ostringstream os;
  os << "date,fraction_ftc,fraction_baseline,fraction_truth\n";
  for (const auto& [d, v] : rows) {
    os << format_date(d);
    for (const auto& x : v) os << ',' << (x ? detail::fmt("%.6f", *x) : std::string());
    os << '\n';
  }
  return os.str();
}

}  // namespace ftc
