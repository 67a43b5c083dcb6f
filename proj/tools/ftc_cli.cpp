// ftc: command-line driver for simulation, training, retrieval, the NPR
// baseline, evaluation and plot-ready reports.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ftc/checkpoint.hpp"
#include "ftc/config.hpp"
#include "ftc/io.hpp"
#include "ftc/pipeline.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kToolVersion = "1.0.0";

enum ExitCode { kOk = 0, kInternal = 1, kUsage = 2, kData = 3, kNumerical = 4 };

class Manifest {
 public:
  Manifest(std::string command, const ftc::RunConfig& cfg) : command_(std::move(command)), cfg_(cfg) {}

  void input(const std::string& path) { inputs_.push_back(path); }
  void artifact(const std::string& path) { artifacts_.push_back(path); }

  void write() const {
    json j;
    j["tool"] = "ftc";
    j["tool_version"] = kToolVersion;
    j["command"] = command_;
    j["seed"] = cfg_.seed;
    j["config_hash"] = cfg_.hash();
    j["config"] = cfg_.canonical();
    auto list = [](const std::vector<std::string>& paths) {
      json arr = json::array();
      for (const auto& p : paths) arr.push_back({{"path", p}, {"sha256", ftc::sha256_file(p)}});
      return arr;
    };
    j["inputs"] = list(inputs_);
    j["artifacts"] = list(artifacts_);
    fs::create_directories(cfg_.paths.out);
    ftc::io::write_text((fs::path(cfg_.paths.out) / ("manifest_" + command_ + ".json")).string(), j.dump(2) + "\n");
  }

 private:
  std::string command_;
  const ftc::RunConfig& cfg_;
  std::vector<std::string> inputs_, artifacts_;
};

void ensure_parent(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

// Loaded inputs plus the derived stratification and split.
struct Workspace {
  ftc::Dataset data;
  ftc::Stratification strata;
  ftc::Split split;
};

std::string require_file(const ftc::RunConfig& cfg, const std::string& key) {
  const auto p = cfg.paths.get(key);
  if (!fs::is_regular_file(p)) throw ftc::DataError("missing " + key + " input " + p);
  return p;
}

Workspace load_workspace(const ftc::RunConfig& cfg, Manifest& m, bool temps, bool truth) {
  Workspace w;
  const auto tb = require_file(cfg, "tb");
  const auto anc = require_file(cfg, "ancillary");
  m.input(tb);
  m.input(anc);
  w.data.tb = ftc::io::read_tb(tb, cfg.pipeline.max_gap);
  w.data.ancillary = ftc::io::read_ancillary(anc);
  if (temps) {
    const auto p = require_file(cfg, "temperature");
    m.input(p);
    w.data.temps = ftc::io::read_temperature(p);
  }
  if (truth) {
    const auto p = require_file(cfg, "truth");
    m.input(p);
    w.data.truth = ftc::io::read_truth(p);
  }
  // The station list is optional unless named explicitly.
  const auto st = cfg.paths.get("stations");
  if (cfg.paths.overrides.count("stations") || fs::is_regular_file(st)) {
    const auto p = require_file(cfg, "stations");
    m.input(p);
    w.data.stations = ftc::io::read_stations(p);
  }
  w.strata = ftc::assign_strata(w.data);
  w.split = ftc::year_split(w.data, cfg.pipeline.train_years);
  if (w.split.test.first > w.split.test.last)
    throw ftc::DataError("no test period: data end " + ftc::format_date(w.split.test.last) + " before " +
                         ftc::format_date(w.split.test.first));
  return w;
}

std::string model_path(const ftc::RunConfig& cfg, const ftc::StratumKey& key) {
  return (fs::path(cfg.paths.get("models")) / (key.file_stem() + ".ftcm")).string();
}

std::map<ftc::StratumKey, ftc::TrainedModel> load_models(const ftc::RunConfig& cfg, const Workspace& w,
                                                         Manifest& m) {
  std::map<ftc::StratumKey, ftc::TrainedModel> models;
  std::vector<std::string> missing;
  for (const auto& [key, ids] : w.strata.strata) {
    const auto p = model_path(cfg, key);
    if (!fs::is_regular_file(p)) {
      missing.push_back(key.str());
      continue;
    }
    m.input(p);
    auto model = ftc::load_checkpoint(p);
    if (!(model.stratum == key))
      throw ftc::DataError("checkpoint " + p + " holds stratum " + model.stratum.str() + ", expected " + key.str());
    models.emplace(key, std::move(model));
  }
  if (!missing.empty()) {
    std::set<std::string> available;
    const auto dir = cfg.paths.get("models");
    if (fs::is_directory(dir))
      for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".ftcm") {
          auto key = ftc::try_parse_stratum(e.path().stem().string());
          if (key) available.insert(key->str());
        }
    std::string msg = "no checkpoint for stratum";
    for (const auto& s : missing) msg += " " + s;
    msg += " in " + dir + "; available:";
    if (available.empty()) msg += " (none)";
    for (const auto& s : available) msg += " " + s;
    throw ftc::DataError(msg);
  }
  return models;
}

// --------------------------------------------------------------------------

void cmd_simulate(const ftc::RunConfig& cfg) {
  Manifest m("simulate", cfg);
  const auto scene = ftc::generate_synthetic(cfg.simulate.gen_config(cfg.seed), cfg.simulate.pixels, cfg.simulate.years);
  auto out = [&](const std::string& key, auto&& writer) {
    const auto p = cfg.paths.get(key);
    ensure_parent(p);
    writer(p);
    m.artifact(p);
  };
  out("tb", [&](const std::string& p) { ftc::io::write_tb(p, scene.tb); });
  out("temperature", [&](const std::string& p) { ftc::io::write_temperature(p, scene.temps); });
  out("ancillary", [&](const std::string& p) { ftc::io::write_ancillary(p, scene.ancillary); });
  out("truth", [&](const std::string& p) { ftc::io::write_truth(p, scene.truth); });
  out("stations", [&](const std::string& p) { ftc::io::write_stations(p, scene.stations); });
  m.write();
  std::printf("simulate: %zu pixels x %d years (%s) -> %s\n", cfg.simulate.pixels, cfg.simulate.years,
              cfg.simulate.scenario.c_str(), cfg.paths.out.c_str());
}

void cmd_train(const ftc::RunConfig& cfg) {
  Manifest m("train", cfg);
  auto w = load_workspace(cfg, m, true, false);
  const auto segments = ftc::training_segments(w.data, w.strata, w.split.train, cfg.pipeline.min_segment);
  if (segments.empty()) throw ftc::DataError("train: no labeled segments in the training period");
  for (const auto& [key, segs] : segments) ftc::validate_training_set(segs);
  const auto results = ftc::train_strata(segments, cfg.pipeline.train, cfg.pipeline.threads);
  const auto dir = cfg.paths.get("models");
  fs::create_directories(dir);
  std::string log = "stratum,epoch,objective,mean_loss_frozen,mean_loss_thawed\n";
  for (const auto& [key, r] : results) {
    const auto p = model_path(cfg, key);
    ftc::save_checkpoint(p, r.model);
    m.artifact(p);
    char buf[200];
    for (const auto& e : r.log) {
      std::snprintf(buf, sizeof buf, "%s,%zu,%.17g,%.17g,%.17g\n", key.str().c_str(), e.epoch, e.objective,
                    e.mean_loss_frozen, e.mean_loss_thawed);
      log += buf;
    }
    std::printf("train: %-14s %5zu segments, final objective %.6f\n", key.str().c_str(), segments.at(key).size(),
                r.log.empty() ? 0.0 : r.log.back().objective);
  }
  const auto log_path = (fs::path(cfg.paths.out) / "training_log.csv").string();
  ftc::io::write_text(log_path, log);
  m.artifact(log_path);
  m.write();
}

std::vector<ftc::RetrievalSeries> run_retrieval(const ftc::RunConfig& cfg, const Workspace& w, Manifest& m) {
  const auto models = load_models(cfg, w, m);
  return ftc::retrieve_period(models, w.data, w.strata, w.split.test, cfg.pipeline.window, cfg.pipeline.threads);
}

std::vector<ftc::BinarySeries> run_baseline(const ftc::RunConfig& cfg, const Workspace& w,
                                            std::map<ftc::StratumKey, ftc::NprReference>* refs_out = nullptr) {
  const auto segments = ftc::training_segments(w.data, w.strata, w.split.train, cfg.pipeline.min_segment);
  const auto refs = ftc::baseline_references(segments);
  if (refs_out) *refs_out = refs;
  return ftc::baseline_period(refs, w.data, w.strata, w.split.test);
}

void cmd_retrieve(const ftc::RunConfig& cfg) {
  Manifest m("retrieve", cfg);
  const auto w = load_workspace(cfg, m, false, false);
  const auto r = run_retrieval(cfg, w, m);
  const auto p = cfg.paths.get("retrieval");
  ensure_parent(p);
  ftc::io::write_retrieval(p, r);
  m.artifact(p);
  m.write();
  std::printf("retrieve: %zu series, window %zu, %s..%s -> %s\n", r.size(), cfg.pipeline.window,
              ftc::format_date(w.split.test.first).c_str(), ftc::format_date(w.split.test.last).c_str(), p.c_str());
}

void cmd_baseline(const ftc::RunConfig& cfg) {
  Manifest m("baseline", cfg);
  const auto w = load_workspace(cfg, m, true, false);
  std::map<ftc::StratumKey, ftc::NprReference> refs;
  const auto b = run_baseline(cfg, w, &refs);
  const auto p = cfg.paths.get("baseline");
  ensure_parent(p);
  ftc::io::write_states(p, b);
  m.artifact(p);
  std::string txt = "stratum,npr_frozen,npr_thawed,delta_npr\n";
  char buf[200];
  for (const auto& [key, r] : refs) {
    std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g\n", key.str().c_str(), r.npr_frozen, r.npr_thawed,
                  r.delta_npr());
    txt += buf;
  }
  const auto rp = (fs::path(cfg.paths.out) / "npr_references.csv").string();
  ftc::io::write_text(rp, txt);
  m.artifact(rp);
  m.write();
  std::printf("baseline: %zu series -> %s\n", b.size(), p.c_str());
}

// Retrieval and baseline files are used when present; otherwise they are
// computed in memory from the checkpoints and the training period.
struct Predictions {
  std::vector<ftc::RetrievalSeries> retrieval;
  std::vector<ftc::BinarySeries> baseline;
};

Predictions obtain_predictions(const ftc::RunConfig& cfg, const Workspace& w, Manifest& m) {
  Predictions p;
  const auto rp = cfg.paths.get("retrieval");
  if (fs::is_regular_file(rp)) {
    m.input(rp);
    p.retrieval = ftc::io::read_retrieval(rp);
  } else {
    p.retrieval = run_retrieval(cfg, w, m);
  }
  const auto bp = cfg.paths.get("baseline");
  if (fs::is_regular_file(bp)) {
    m.input(bp);
    p.baseline = ftc::io::read_states(bp);
  } else {
    p.baseline = run_baseline(cfg, w);
  }
  return p;
}

bool needs_temperature(const ftc::RunConfig& cfg) { return !fs::is_regular_file(cfg.paths.get("baseline")); }

void cmd_evaluate(const ftc::RunConfig& cfg) {
  Manifest m("evaluate", cfg);
  const auto w = load_workspace(cfg, m, needs_temperature(cfg), true);
  const auto pred = obtain_predictions(cfg, w, m);
  const auto rep = ftc::evaluate_methods(
      {{"ftc", ftc::binarize_all(pred.retrieval, cfg.pipeline.threshold)}, {"baseline", pred.baseline}},
      w.data.truth, ftc::stratum_names(w.strata));
  const fs::path out(cfg.paths.out);
  fs::create_directories(out);
  const std::pair<std::string, std::string> files[] = {
      {(out / "report.txt").string(), ftc::report_text(rep)},
      {(out / "report.csv").string(), ftc::report_csv(rep)},
      {(out / "frozen_fraction.csv").string(), ftc::fraction_csv(rep)},
  };
  for (const auto& [path, text] : files) {
    ftc::io::write_text(path, text);
    m.artifact(path);
  }
  m.write();
  for (const auto& r : rep.methods)
    std::printf("evaluate: %-8s accuracy %.1f %% over %zu pixel-days\n", r.name.c_str(),
                ftc::percent_1dp(r.overall.accuracy()), r.coverage.aligned);
}

void cmd_report(const ftc::RunConfig& cfg, std::vector<std::string> pixels) {
  Manifest m("report", cfg);
  const auto w = load_workspace(cfg, m, needs_temperature(cfg), true);
  const auto pred = obtain_predictions(cfg, w, m);
  if (pixels.empty()) pixels = w.data.stations;
  if (pixels.empty())
    for (const auto& [key, ids] : w.strata.strata) pixels.push_back(ids.front());
  const std::set<std::string> wanted(pixels.begin(), pixels.end());
  const auto names = ftc::stratum_names(w.strata);
  for (const auto& id : wanted)
    if (!names.count(id)) throw ftc::DataError("report: pixel " + id + " is not in any trained stratum");

  using Key = std::pair<std::string, ftc::Date>;
  std::map<Key, double> p_frozen;
  std::map<Key, ftc::FtState> base, truth;
  for (const auto& s : pred.retrieval)
    if (wanted.count(s.pixel_id))
      for (std::size_t t = 0; t < s.dates.size(); ++t) p_frozen[{s.pixel_id, s.dates[t]}] = s.p_frozen[t];
  for (const auto& s : pred.baseline)
    if (wanted.count(s.pixel_id))
      for (std::size_t t = 0; t < s.size(); ++t) base[{s.pixel_id, s.dates[t]}] = s.states[t];
  for (const auto& s : w.data.truth)
    if (wanted.count(s.pixel_id))
      for (std::size_t t = 0; t < s.size(); ++t) truth[{s.pixel_id, s.dates[t]}] = s.states[t];

  std::string csv = "pixel_id,stratum,date,tb_v_k,tb_h_k,npr,p_frozen,ftc_state,baseline_state,truth_frozen\n";
  char buf[128];
  for (const auto& s : w.data.tb) {
    if (!wanted.count(s.pixel_id)) continue;
    for (std::size_t t = 0; t < s.size(); ++t) {
      if (!w.split.test.contains(s.dates[t])) continue;
      const Key k{s.pixel_id, s.dates[t]};
      std::snprintf(buf, sizeof buf, ",%.2f,%.2f,%.6f", s.tb_v[t], s.tb_h[t], ftc::compute_npr(s.tb_v[t], s.tb_h[t]));
      csv += s.pixel_id + "," + names.at(s.pixel_id) + "," + ftc::format_date(s.dates[t]) + buf + ",";
      if (auto it = p_frozen.find(k); it != p_frozen.end()) {
        std::snprintf(buf, sizeof buf, "%.6f,%s", it->second,
                      it->second > cfg.pipeline.threshold ? "frozen" : "thawed");
        csv += buf;
      } else {
        csv += ",";
      }
      csv += ",";
      if (auto it = base.find(k); it != base.end()) csv += std::string(ftc::to_string(it->second));
      csv += ",";
      if (auto it = truth.find(k); it != truth.end()) csv += it->second == ftc::FtState::frozen ? "1" : "0";
      csv += "\n";
    }
  }
  const auto path = (fs::path(cfg.paths.out) / "panels.csv").string();
  fs::create_directories(cfg.paths.out);
  ftc::io::write_text(path, csv);
  m.artifact(path);
  m.write();
  std::printf("report: %zu pixels -> %s\n", wanted.size(), path.c_str());
}

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

int fail(ExitCode code, const char* kind, const std::string& message) {
  json j{{"status", "error"}, {"code", static_cast<int>(code)}, {"kind", kind}, {"message", one_line(message)}};
  std::fprintf(stderr, "%s\n", j.dump().c_str());
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Freeze/thaw retrieval with a contrastive convolutional autoencoder and an NPR baseline", "ftc"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", kToolVersion);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<double> threshold;
  std::optional<std::size_t> window;
  std::vector<std::string> assignments;
  std::vector<std::string> pixels;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "INI configuration file")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "random seed for simulation and training");
    sub->add_option("--out", out, "workspace directory for inputs and outputs");
    sub->add_option("--threshold", threshold, "p(frozen) threshold for a frozen call");
    sub->add_option("--window", window, "retrieval window length in days (odd)");
    sub->add_option("--set", assignments, "override a config value: section.key=value");
  };
  const std::pair<const char*, const char*> commands[] = {
      {"simulate", "generate a synthetic scene"},
      {"train", "train one model per stratum"},
      {"retrieve", "daily p(frozen) for the test period"},
      {"baseline", "NPR seasonal-threshold classification for the test period"},
      {"evaluate", "score both methods against truth"},
      {"report", "plot-ready per-pixel time-series panels"},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    subs[name] = app.add_subcommand(name, help);
    add_common(subs[name]);
  }
  subs["report"]->add_option("--pixel", pixels, "pixel to include (repeatable; default: station pixels)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(kUsage, "usage", e.what());
  }

  try {
    ftc::RunConfig cfg;
    if (!config_path.empty()) ftc::load_config_file(cfg, config_path);
    for (const auto& a : assignments) ftc::apply_assignment(cfg, a);
    if (seed) cfg.seed = *seed;
    if (out) cfg.paths.out = *out;
    if (threshold) cfg.pipeline.threshold = *threshold;
    if (window) cfg.pipeline.window = *window;
    cfg.pipeline.train.rng_seed = cfg.seed;
    cfg.validate();

    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "simulate") cmd_simulate(cfg);
    else if (cmd == "train") cmd_train(cfg);
    else if (cmd == "retrieve") cmd_retrieve(cfg);
    else if (cmd == "baseline") cmd_baseline(cfg);
    else if (cmd == "evaluate") cmd_evaluate(cfg);
    else cmd_report(cfg, pixels);
    return kOk;
  } catch (const ftc::UsageError& e) {
    return fail(kUsage, "usage", e.what());
  } catch (const ftc::DataError& e) {
    return fail(kData, "data", e.what());
  } catch (const ftc::NumericalFailure& e) {
    return fail(kNumerical, "numerical", e.what());
  } catch (const ftc::ContractViolation& e) {
    return fail(kData, "data", e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(kData, "data", e.what());
  } catch (const std::exception& e) {
    return fail(kInternal, "internal", e.what());
  }
}
