#pragma once

// CSV readers and writers for the tool's file formats. Readers validate the
// header, field count, numeric syntax and physical range of every row, and
// report failures as DataError with the file name and 1-based line number.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ftc/datapipe.hpp"
#include "ftc/error.hpp"
#include "ftc/evaluation.hpp"
#include "ftc/npr.hpp"

namespace ftc::io {

inline constexpr double kTbMin = 100.0, kTbMax = 330.0;
inline constexpr double kTempMin = 180.0, kTempMax = 330.0;

namespace detail {

struct Row {
  std::size_t line = 0;
  std::vector<std::string_view> fields;
};

class CsvReader {
 public:
  CsvReader(std::string path, std::string_view header, std::size_t n_fields)
      : path_(std::move(path)), n_fields_(n_fields) {
    std::ifstream in(path_, std::ios::binary);
    if (!in) throw DataError("cannot open " + path_);
    std::ostringstream ss;
    ss << in.rdbuf();
    text_ = ss.str();
    if (text_.empty()) throw DataError(path_, 1, "empty file");
    std::string_view first = next_line();
    if (first != header) throw DataError(path_, 1, "expected header '" + std::string(header) + "'");
  }

  /// Next non-empty row; false at end of file.
  bool next(Row& row) {
    while (pos_ < text_.size()) {
      std::string_view l = next_line();
      if (l.empty()) continue;
      row.line = line_;
      row.fields.clear();
      std::size_t start = 0;
      while (true) {
        const auto comma = l.find(',', start);
        row.fields.push_back(l.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
      }
      if (row.fields.size() != n_fields_)
        fail(row, "expected " + std::to_string(n_fields_) + " fields, got " + std::to_string(row.fields.size()));
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const Row& row, const std::string& what) const { throw DataError(path_, row.line, what); }

  double real(const Row& row, std::size_t i, const char* name, double lo, double hi, bool lo_closed = false,
              bool hi_closed = false) const {
    const auto f = row.fields[i];
    double v = 0.0;
    const auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (ec != std::errc() || p != f.data() + f.size() || f.empty())
      fail(row, std::string(name) + ": not a number '" + std::string(f) + "'");
    if (!std::isfinite(v)) fail(row, std::string(name) + ": non-finite value '" + std::string(f) + "'");
    const bool ok_lo = lo_closed ? v >= lo : v > lo;
    const bool ok_hi = hi_closed ? v <= hi : v < hi;
    if (!ok_lo || !ok_hi) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%s: %s outside %c%g, %g%c", name, std::string(f).c_str(), lo_closed ? '[' : '(',
                    lo, hi, hi_closed ? ']' : ')');
      fail(row, buf);
    }
    return v;
  }

  Date date(const Row& row, std::size_t i) const {
    const auto d = try_parse_date(row.fields[i]);
    if (!d) fail(row, "bad date '" + std::string(row.fields[i]) + "' (expected YYYY-MM-DD)");
    return *d;
  }

  std::string id(const Row& row, std::size_t i) const {
    if (row.fields[i].empty()) fail(row, "empty pixel_id");
    return std::string(row.fields[i]);
  }

  const std::string& path() const { return path_; }

 private:
  std::string_view next_line() {
    std::string_view all(text_);
    auto nl = all.find('\n', pos_);
    if (nl == std::string_view::npos) nl = all.size();
    std::string_view l = all.substr(pos_, nl - pos_);
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
    pos_ = nl + 1;
    ++line_;
    return l;
  }

  std::string path_;
  std::size_t n_fields_;
  std::string text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 0;
};

// Rows grouped per pixel in first-appearance order; dates within a pixel must
// strictly increase.
template <typename T>
struct Grouped {
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::pair<Date, T>>> rows;

  void add(const CsvReader& r, const Row& row, const std::string& id, Date d, T value) {
    auto [it, fresh] = rows.try_emplace(id);
    if (fresh) order.push_back(id);
    if (!it->second.empty() && d <= it->second.back().first)
      r.fail(row, "dates for pixel " + id + " not strictly increasing (" + format_date(d) + " after " +
                      format_date(it->second.back().first) + ")");
    it->second.emplace_back(d, std::move(value));
  }
};

inline std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + path);
  return os;
}

inline void finish(std::ofstream& os, const std::string& path) {
  os.flush();
  if (!os) throw DataError("failed writing " + path);
}

inline std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string f2(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Brightness temperature: pixel_id,date,tb_v_k,tb_h_k

inline constexpr std::string_view kTbHeader = "pixel_id,date,tb_v_k,tb_h_k";

/// Reads observation rows and fills each pixel to a daily grid. Gaps longer
/// than `max_gap` days split a pixel into separate series.
inline std::vector<PixelSeries> read_tb(const std::string& path, int max_gap = kDefaultMaxGap) {
  detail::CsvReader r(path, kTbHeader, 4);
  detail::Grouped<std::pair<double, double>> g;
  detail::Row row;
  while (r.next(row)) {
    const auto id = r.id(row, 0);
    const auto d = r.date(row, 1);
    const double v = r.real(row, 2, "tb_v_k", kTbMin, kTbMax);
    const double h = r.real(row, 3, "tb_h_k", kTbMin, kTbMax);
    g.add(r, row, id, d, {v, h});
  }
  std::vector<PixelSeries> out;
  for (const auto& id : g.order) {
    std::vector<RawObservation> obs;
    for (const auto& [d, vh] : g.rows[id]) obs.push_back({d, vh.first, vh.second});
    for (auto& s : interpolate_daily(id, obs, max_gap)) out.push_back(std::move(s));
  }
  return out;
}

/// Writes the observed days of each series, TB rounded to 0.01 K.
inline void write_tb(const std::string& path, const std::vector<PixelSeries>& series) {
  auto os = detail::open_out(path);
  os << kTbHeader << '\n';
  for (const auto& s : series)
    for (std::size_t t = 0; t < s.size(); ++t)
      if (s.observed.empty() || s.observed[t])
        os << s.pixel_id << ',' << format_date(s.dates[t]) << ',' << detail::f2(s.tb_v[t]) << ','
           << detail::f2(s.tb_h[t]) << '\n';
  detail::finish(os, path);
}

// ---------------------------------------------------------------------------
// Temperature: pixel_id,date,soil_k,air_k

inline constexpr std::string_view kTempHeader = "pixel_id,date,soil_k,air_k";

inline std::vector<TempSeries> read_temperature(const std::string& path) {
  detail::CsvReader r(path, kTempHeader, 4);
  detail::Grouped<std::pair<double, double>> g;
  detail::Row row;
  while (r.next(row)) {
    const auto id = r.id(row, 0);
    const auto d = r.date(row, 1);
    const double soil = r.real(row, 2, "soil_k", kTempMin, kTempMax);
    const double air = r.real(row, 3, "air_k", kTempMin, kTempMax);
    g.add(r, row, id, d, {soil, air});
  }
  std::vector<TempSeries> out;
  for (const auto& id : g.order) {
    TempSeries t{id, {}, {}, {}};
    for (const auto& [d, sa] : g.rows[id]) {
      t.dates.push_back(d);
      t.soil_k.push_back(sa.first);
      t.air_k.push_back(sa.second);
    }
    out.push_back(std::move(t));
  }
  return out;
}

inline void write_temperature(const std::string& path, const std::vector<TempSeries>& series) {
  auto os = detail::open_out(path);
  os << kTempHeader << '\n';
  for (const auto& s : series)
    for (std::size_t t = 0; t < s.size(); ++t)
      os << s.pixel_id << ',' << format_date(s.dates[t]) << ',' << detail::g17(s.soil_k[t]) << ','
         << detail::g17(s.air_k[t]) << '\n';
  detail::finish(os, path);
}

// ---------------------------------------------------------------------------
// Ancillary: pixel_id,land_cover,water_fraction

inline constexpr std::string_view kAncillaryHeader = "pixel_id,land_cover,water_fraction";

inline std::vector<AncillaryRecord> read_ancillary(const std::string& path) {
  detail::CsvReader r(path, kAncillaryHeader, 3);
  std::vector<AncillaryRecord> out;
  std::map<std::string, std::size_t> seen;
  detail::Row row;
  while (r.next(row)) {
    AncillaryRecord a;
    a.pixel_id = r.id(row, 0);
    a.land_cover = std::string(row.fields[1]);
    if (!try_parse_land_cover(a.land_cover)) r.fail(row, "unknown land cover '" + a.land_cover + "'");
    a.water_fraction = r.real(row, 2, "water_fraction", 0.0, 1.0, true, true);
    if (auto [it, fresh] = seen.emplace(a.pixel_id, row.line); !fresh)
      r.fail(row, "duplicate pixel_id " + a.pixel_id + " (first on line " + std::to_string(it->second) + ")");
    out.push_back(std::move(a));
  }
  return out;
}

inline void write_ancillary(const std::string& path, const std::vector<AncillaryRecord>& recs) {
  auto os = detail::open_out(path);
  os << kAncillaryHeader << '\n';
  for (const auto& a : recs) os << a.pixel_id << ',' << a.land_cover << ',' << detail::g17(a.water_fraction) << '\n';
  detail::finish(os, path);
}

// ---------------------------------------------------------------------------
// Truth (pixel_id,date,frozen) and baseline (pixel_id,date,state)

inline constexpr std::string_view kTruthHeader = "pixel_id,date,frozen";
inline constexpr std::string_view kBaselineHeader = "pixel_id,date,state";

namespace detail {
inline std::vector<BinarySeries> to_binary(Grouped<FtState>& g) {
  std::vector<BinarySeries> out;
  for (const auto& id : g.order) {
    BinarySeries b{id, {}, {}};
    for (const auto& [d, s] : g.rows[id]) {
      b.dates.push_back(d);
      b.states.push_back(s);
    }
    out.push_back(std::move(b));
  }
  return out;
}
}  // namespace detail

inline std::vector<BinarySeries> read_truth(const std::string& path) {
  detail::CsvReader r(path, kTruthHeader, 3);
  detail::Grouped<FtState> g;
  detail::Row row;
  while (r.next(row)) {
    const auto id = r.id(row, 0);
    const auto d = r.date(row, 1);
    const auto f = row.fields[2];
    if (f != "0" && f != "1") r.fail(row, "frozen: expected 0 or 1, got '" + std::string(f) + "'");
    g.add(r, row, id, d, f == "1" ? FtState::frozen : FtState::thawed);
  }
  return detail::to_binary(g);
}

inline void write_truth(const std::string& path, const std::vector<BinarySeries>& set) {
  auto os = detail::open_out(path);
  os << kTruthHeader << '\n';
  for (const auto& s : set)
    for (std::size_t t = 0; t < s.size(); ++t)
      os << s.pixel_id << ',' << format_date(s.dates[t]) << ',' << (s.states[t] == FtState::frozen ? 1 : 0) << '\n';
  detail::finish(os, path);
}

inline std::vector<BinarySeries> read_states(const std::string& path) {
  detail::CsvReader r(path, kBaselineHeader, 3);
  detail::Grouped<FtState> g;
  detail::Row row;
  while (r.next(row)) {
    const auto id = r.id(row, 0);
    const auto d = r.date(row, 1);
    const auto f = row.fields[2];
    if (f != "frozen" && f != "thawed") r.fail(row, "state: expected frozen or thawed, got '" + std::string(f) + "'");
    g.add(r, row, id, d, f == "frozen" ? FtState::frozen : FtState::thawed);
  }
  return detail::to_binary(g);
}

inline void write_states(const std::string& path, const std::vector<BinarySeries>& set) {
  auto os = detail::open_out(path);
  os << kBaselineHeader << '\n';
  for (const auto& s : set)
    for (std::size_t t = 0; t < s.size(); ++t)
      os << s.pixel_id << ',' << format_date(s.dates[t]) << ',' << to_string(s.states[t]) << '\n';
  detail::finish(os, path);
}

// ---------------------------------------------------------------------------
// Retrieval: pixel_id,date,p_frozen

inline constexpr std::string_view kRetrievalHeader = "pixel_id,date,p_frozen";

inline std::vector<RetrievalSeries> read_retrieval(const std::string& path) {
  detail::CsvReader r(path, kRetrievalHeader, 3);
  detail::Grouped<double> g;
  detail::Row row;
  while (r.next(row)) {
    const auto id = r.id(row, 0);
    const auto d = r.date(row, 1);
    g.add(r, row, id, d, r.real(row, 2, "p_frozen", 0.0, 1.0, true, true));
  }
  std::vector<RetrievalSeries> out;
  for (const auto& id : g.order) {
    RetrievalSeries s{id, {}, {}, 0};
    for (const auto& [d, p] : g.rows[id]) {
      s.dates.push_back(d);
      s.p_frozen.push_back(p);
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline void write_retrieval(const std::string& path, const std::vector<RetrievalSeries>& set) {
  auto os = detail::open_out(path);
  os << kRetrievalHeader << '\n';
  for (const auto& s : set)
    for (std::size_t t = 0; t < s.dates.size(); ++t)
      os << s.pixel_id << ',' << format_date(s.dates[t]) << ',' << detail::g17(s.p_frozen[t]) << '\n';
  detail::finish(os, path);
}

// ---------------------------------------------------------------------------
// Station list: one pixel id per line; '#' starts a comment.

inline std::vector<std::string> read_stations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    while (!line.empty() && (line.back() == ' ' || line.back() == '\r' || line.back() == '\t')) line.pop_back();
    if (!line.empty()) ids.push_back(line);
  }
  return ids;
}

inline void write_stations(const std::string& path, const std::vector<std::string>& ids) {
  auto os = detail::open_out(path);
  for (const auto& id : ids) os << id << '\n';
  detail::finish(os, path);
}

inline void write_text(const std::string& path, const std::string& text) {
  auto os = detail::open_out(path);
  os << text;
  detail::finish(os, path);
}

}  // namespace ftc::io
