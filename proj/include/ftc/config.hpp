#pragma once

// Run configuration for the command-line tool. The file format is INI:
//
//   [run]       seed, out, threshold, window, train_years, max_gap, threads
//   [paths]     tb, temperature, ancillary, truth, stations, models,
//               retrieval, baseline   (default: files inside `out`)
//   [train]     learning_rate, epochs, batch_size, loss_clamp, normalization
//               (per_stratum|none), crop_length, dropout_rate, beta1, beta2,
//               adam_epsilon
//   [simulate]  scenario (default|melt_heavy|degenerate_npr), pixels, years,
//               start_year, winter_transients, spring_transients,
//               transient_participation, revisit_skip_probability,
//               station_every
//
// Unknown sections or keys are rejected. Values given on the command line
// override the file.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>

#include "ftc/digest.hpp"
#include "ftc/pipeline.hpp"
#include "ftc/synthetic.hpp"
#include "ftc/train.hpp"

namespace ftc {

/// Bad configuration or command-line usage.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunPaths {
  std::string out = "ftc_work";
  std::map<std::string, std::string> overrides;  // key -> path, from [paths]

  static inline const std::map<std::string, std::string> kDefaults = {
      {"tb", "tb.csv"},
      {"temperature", "temperature.csv"},
      {"ancillary", "ancillary.csv"},
      {"truth", "truth.csv"},
      {"stations", "stations.txt"},
      {"models", "models"},
      {"retrieval", "retrieval.csv"},
      {"baseline", "baseline.csv"},
  };

  std::string get(const std::string& key) const {
    if (auto it = overrides.find(key); it != overrides.end()) return it->second;
    return (std::filesystem::path(out) / kDefaults.at(key)).string();
  }
};

struct SimulateSettings {
  std::string scenario = "default";
  std::size_t pixels = 200;
  int years = 5;
  std::optional<int> start_year;
  std::map<std::string, double> overrides;  // GenConfig scalar overrides

  GenConfig gen_config(std::uint64_t seed) const {
    GenConfig g = scenario == "melt_heavy"       ? melt_heavy_gen_config(seed)
                  : scenario == "degenerate_npr" ? degenerate_npr_gen_config(seed)
                                                 : default_gen_config(seed);
    if (start_year) g.start_year = *start_year;
    for (const auto& [k, v] : overrides) {
      if (k == "winter_transients") g.winter_transients = v;
      else if (k == "spring_transients") g.spring_transients = v;
      else if (k == "transient_participation") g.transient_participation = v;
      else if (k == "revisit_skip_probability") g.revisit_skip_probability = v;
      else if (k == "station_every") g.station_every = static_cast<std::size_t>(v);
    }
    return g;
  }
};

struct RunConfig {
  std::uint64_t seed = 42;
  PipelineConfig pipeline;
  RunPaths paths;
  SimulateSettings simulate;

  /// Canonical text of every effective setting; its SHA-256 is the config hash.
  std::string canonical() const {
    char buf[256];
    std::string s = "seed=" + std::to_string(seed) + "\nout=" + paths.out + "\n";
    std::snprintf(buf, sizeof buf, "threshold=%a\nwindow=%zu\ntrain_years=%d\nmax_gap=%d\n", pipeline.threshold,
                  pipeline.window, pipeline.train_years, pipeline.max_gap);
    s += buf;
    for (const auto& [k, v] : paths.overrides) s += "paths." + k + "=" + v + "\n";
    s += pipeline.train.canonical();
    s += "scenario=" + simulate.scenario + "\npixels=" + std::to_string(simulate.pixels) +
         "\nyears=" + std::to_string(simulate.years) + "\n";
    if (simulate.start_year) s += "start_year=" + std::to_string(*simulate.start_year) + "\n";
    for (const auto& [k, v] : simulate.overrides) {
      std::snprintf(buf, sizeof buf, "simulate.%s=%a\n", k.c_str(), v);
      s += buf;
    }
    return s;
  }
  std::string hash() const { return sha256_hex(canonical()); }

  void validate() const {
    const auto& p = pipeline;
    if (!(p.threshold > 0.0 && p.threshold < 1.0)) throw UsageError("threshold must lie in (0, 1)");
    if (p.window < kMinSegmentDays || p.window % 2 == 0) throw UsageError("window must be odd and >= 7");
    if (p.train_years < 1) throw UsageError("train_years must be >= 1");
    if (p.max_gap < 0) throw UsageError("max_gap must be >= 0");
    if (simulate.pixels < 1 || simulate.years < 1) throw UsageError("simulate needs pixels >= 1 and years >= 1");
    if (simulate.years <= p.train_years)
      throw UsageError("simulate.years must exceed run.train_years to leave a test period");
    static const std::set<std::string> scenarios = {"default", "melt_heavy", "degenerate_npr"};
    if (!scenarios.count(simulate.scenario)) throw UsageError("unknown scenario '" + simulate.scenario + "'");
    try {
      p.train.validate();
      simulate.gen_config(seed).validate();
    } catch (const ContractViolation& e) {
      throw UsageError(e.what());
    }
  }
};

namespace detail {

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const auto* b = text.data();
  const auto* e = text.data() + text.size();
  const auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e || text.empty()) throw UsageError("config " + key + ": bad value '" + text + "'");
  if constexpr (std::is_floating_point_v<T>)
    if (!std::isfinite(v)) throw UsageError("config " + key + ": non-finite value");
  return v;
}

}  // namespace detail

/// Applies one `section.key = value` setting.
inline void apply_setting(RunConfig& c, const std::string& section, const std::string& key,
                          const std::string& value) {
  using detail::parse_number;
  const std::string full = section + "." + key;
  auto& t = c.pipeline.train;
  if (section == "run") {
    if (key == "seed") c.seed = parse_number<std::uint64_t>(full, value);
    else if (key == "out") c.paths.out = value;
    else if (key == "threshold") c.pipeline.threshold = parse_number<double>(full, value);
    else if (key == "window") c.pipeline.window = parse_number<std::size_t>(full, value);
    else if (key == "train_years") c.pipeline.train_years = parse_number<int>(full, value);
    else if (key == "max_gap") c.pipeline.max_gap = parse_number<int>(full, value);
    else if (key == "threads") c.pipeline.threads = parse_number<std::size_t>(full, value);
    else throw UsageError("unknown config key " + full);
  } else if (section == "paths") {
    if (!RunPaths::kDefaults.count(key)) throw UsageError("unknown config key " + full);
    c.paths.overrides[key] = value;
  } else if (section == "train") {
    if (key == "learning_rate") t.learning_rate = parse_number<double>(full, value);
    else if (key == "epochs") t.epochs = parse_number<std::size_t>(full, value);
    else if (key == "batch_size") t.batch_size = parse_number<std::size_t>(full, value);
    else if (key == "loss_clamp") t.loss_clamp = parse_number<double>(full, value);
    else if (key == "crop_length") t.crop_length = parse_number<std::size_t>(full, value);
    else if (key == "dropout_rate") t.dropout_rate = parse_number<double>(full, value);
    else if (key == "beta1") t.beta1 = parse_number<double>(full, value);
    else if (key == "beta2") t.beta2 = parse_number<double>(full, value);
    else if (key == "adam_epsilon") t.adam_epsilon = parse_number<double>(full, value);
    else if (key == "normalization") {
      if (value == "per_stratum") t.normalization = Normalization::per_stratum;
      else if (value == "none") t.normalization = Normalization::none;
      else throw UsageError("config " + full + ": expected per_stratum or none");
    } else throw UsageError("unknown config key " + full);
  } else if (section == "simulate") {
    auto& s = c.simulate;
    if (key == "scenario") s.scenario = value;
    else if (key == "pixels") s.pixels = parse_number<std::size_t>(full, value);
    else if (key == "years") s.years = parse_number<int>(full, value);
    else if (key == "start_year") s.start_year = parse_number<int>(full, value);
    else if (key == "winter_transients" || key == "spring_transients" || key == "transient_participation" ||
             key == "revisit_skip_probability" || key == "station_every")
      s.overrides[key] = parse_number<double>(full, value);
    else throw UsageError("unknown config key " + full);
  } else {
    throw UsageError("unknown config section [" + section + "]");
  }
}

/// Parses `section.key=value`.
inline void apply_assignment(RunConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq)
    throw UsageError("--set expects section.key=value, got '" + assignment + "'");
  apply_setting(c, assignment.substr(0, dot), assignment.substr(dot + 1, eq - dot - 1), assignment.substr(eq + 1));
}

inline void load_config_file(RunConfig& c, const std::string& path) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw UsageError("config " + e.filename() + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw UsageError("config key '" + section + "' outside a section");
    for (const auto& [key, value] : body) apply_setting(c, section, key, value.data());
  }
}

}  // namespace ftc
