// Acceptance suite: one PASS/FAIL line per criterion.
//
//   ftc_acceptance            run every criterion
//   ftc_acceptance 4 6        run the listed criteria
//
// Exit status is 0 only if every selected criterion passes.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

#include "ftc/datapipe.hpp"
#include "ftc/digest.hpp"
#include "ftc/evaluation.hpp"
#include "ftc/model.hpp"
#include "ftc/npr.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"
#include "support/scenario.hpp"

namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1. Analytic gradients against central differences.
Verdict gradients() {
  constexpr double kTol = 1e-4;
  constexpr double kBudgetSeconds = 60.0;
  constexpr int kPerKind = 20;
  const auto t0 = std::chrono::steady_clock::now();
  struct Kind {
    const char* name;
    std::function<gradcheck::CaseResult(std::uint64_t)> run;
  };
  const std::vector<Kind> kinds = {
      {"conv1d valid", [](auto s) { return gradcheck::conv_case(s, false); }},
      {"conv1d same", [](auto s) { return gradcheck::conv_case(s, true); }},
      {"tconv1d full", [](auto s) { return gradcheck::tconv_case(s, false); }},
      {"tconv1d target", [](auto s) { return gradcheck::tconv_case(s, true); }},
      {"relu", [](auto s) { return gradcheck::relu_case(s); }},
      {"dropout", [](auto s) { return gradcheck::dropout_case(s); }},
      {"masked_mse", [](auto s) { return gradcheck::mse_case(s); }},
      {"model+loss y=1", [](auto s) { return gradcheck::model_case(s, 1); }},
      {"model+loss y=0", [](auto s) { return gradcheck::model_case(s, 0); }},
  };
  double worst = 0.0;
  std::string worst_kind;
  int cases = 0;
  std::size_t coords = 0;
  for (std::size_t k = 0; k < kinds.size(); ++k)
    for (int i = 0; i < kPerKind; ++i) {
      const auto r = kinds[k].run(1000 * (k + 1) + static_cast<std::uint64_t>(i));
      ++cases;
      coords += r.coordinates;
      if (r.max_rel_error > worst) {
        worst = r.max_rel_error;
        worst_kind = kinds[k].name;
      }
    }
  const double secs = seconds_since(t0);
  return {worst < kTol && secs < kBudgetSeconds && cases >= 100,
          fmt("%d cases, %zu coordinates, max rel error %.2e (%s) < %.0e, %.1f s < %.0f s", cases, coords, worst,
              worst_kind.c_str(), kTol, secs, kBudgetSeconds)};
}

// 2. Closed forms of the loss and probability.
Verdict loss_closed_forms() {
  constexpr double kTol = 1e-12;
  bool ok = true;
  std::string detail;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> L(0.0, 50.0);
  for (int i = 0; i < 1000; ++i) {
    const double l = L(rng);
    if (ftc::contrastive_loss(l, 1) != l) ok = false;
  }
  if (ftc::contrastive_loss(0.3, 1) != 0.3) ok = false;
  detail += ok ? "y=1 returns L exactly" : "y=1 differs from L";
  const double y0 = ftc::contrastive_loss(std::numbers::ln2, 0);
  const double p = ftc::freeze_probability(std::numbers::ln2);
  ok = ok && std::abs(y0 - std::numbers::ln2) <= kTol && std::abs(p - 0.5) <= kTol;
  detail += fmt("; y=0 at ln2: |%.17g - ln2| = %.1e; p(ln2) = %.17g", y0, std::abs(y0 - std::numbers::ln2), p);
  return {ok, detail};
}

// 3. Metric arithmetic from the published cell percentages.
Verdict table_arithmetic() {
  constexpr double kTol = 0.05;
  struct Check {
    const char* name;
    double computed;
    double published;
  };
  // Cell order: tp, tn, fp, fn (frozen positive).
  const ftc::BasicConfusionMatrix<double> a{46.2, 41.1, 2.8, 9.9};
  const ftc::BasicConfusionMatrix<double> b{42.0, 45.7, 6.4, 5.9};
  const std::vector<Check> checks = {
      {"1a recall_frozen", ftc::percent_1dp(a.recall_frozen()), 82.3},
      {"1a precision_frozen", ftc::percent_1dp(a.precision_frozen()), 94.3},
      {"1a accuracy", ftc::percent_1dp(a.accuracy()), 87.3},
      {"1b recall_frozen", ftc::percent_1dp(b.recall_frozen()), 87.6},
      {"1b accuracy", ftc::percent_1dp(b.accuracy()), 87.7},
  };
  bool ok = true;
  std::string detail;
  for (const auto& c : checks) {
    const bool hit = std::abs(c.computed - c.published) <= kTol + 1e-9;
    ok = ok && hit;
    detail += fmt("%s%s %.1f vs %.1f %s", detail.empty() ? "" : "; ", c.name, c.computed, c.published,
                  hit ? "ok" : "MISMATCH");
  }
  return {ok, detail};
}

ftc::PipelineConfig default_pipeline() {
  ftc::PipelineConfig pc;  // 200 epochs, window 21, threshold 0.5, 3 training years
  pc.train.rng_seed = 42;
  return pc;
}

// 4. Synthetic substitute for the real-data headline results.
Verdict synthetic_accuracy() {
  constexpr double kMinAccuracy = 0.95;
  constexpr double kMinGapPoints = 5.0;
  constexpr double kBudgetSeconds = 600.0;
  const auto pc = default_pipeline();
  const auto base = scenario::run(ftc::default_gen_config(42), 200, 5, pc);
  const auto melt = scenario::run(ftc::melt_heavy_gen_config(42), 200, 5, pc);
  const double acc = base.accuracy("ftc");
  const double gap = 100.0 * (melt.accuracy("ftc") - melt.accuracy("baseline"));
  const double secs = base.seconds + melt.seconds;
  return {acc >= kMinAccuracy && gap >= kMinGapPoints && secs < kBudgetSeconds,
          fmt("default domain FTC accuracy %.2f %% >= 95; melt-heavy FTC %.2f %% vs NPR %.2f %% (gap %.2f >= 5 points);"
              " %.0f s < %.0f s",
              100.0 * acc, 100.0 * melt.accuracy("ftc"), 100.0 * melt.accuracy("baseline"), gap, secs,
              kBudgetSeconds)};
}

// 5. Baseline against an independent per-day evaluator.
Verdict baseline_oracle() {
  constexpr int kSeries = 1000;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> tb(180.0, 290.0), npr_ref(0.0, 0.08), u01(0.0, 1.0);
  std::size_t days = 0, override_days = 0, disagreements = 0;
  for (int s = 0; s < kSeries; ++s) {
    ftc::PixelSeries p;
    p.pixel_id = "S" + std::to_string(s);
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 120)(rng);
    for (std::size_t t = 0; t < n; ++t) {
      double v = tb(rng), h = v * (1.0 - 0.1 * u01(rng));
      if (u01(rng) < 0.15) {  // force an override day
        v = 273.0 + 10.0 * u01(rng) + 1e-9;
        h = 273.0 + (v - 273.0) * u01(rng) + 1e-9;
      }
      p.dates.push_back(ftc::first_day_of_year(2016) + std::chrono::days{static_cast<long>(t)});
      p.tb_v.push_back(v);
      p.tb_h.push_back(h);
    }
    double fr = npr_ref(rng), th = npr_ref(rng);
    if (std::abs(th - fr) < 1e-6) th = fr + 0.01;
    const auto got = ftc::seasonal_threshold(p, ftc::NprReference{"", fr, th});
    const auto want = oracle::seasonal_threshold(p.tb_v, p.tb_h, fr, th);
    for (std::size_t t = 0; t < n; ++t) {
      ++days;
      override_days += p.tb_v[t] > 273.0 && p.tb_h[t] > 273.0;
      disagreements += got[t] != want[t];
    }
  }
  return {disagreements == 0 && override_days > 0,
          fmt("%d series, %zu days (%zu override days), %zu disagreements", kSeries, days, override_days,
              disagreements)};
}

// 6. A stratum whose NPR references nearly coincide.
Verdict degenerate_reference() {
  constexpr double kMaxDelta = 1e-3;
  const auto out = scenario::run(ftc::degenerate_npr_gen_config(42), 100, 5, default_pipeline());
  double delta = 0.0;
  for (const auto& [k, r] : out.references) delta = std::max(delta, std::abs(r.delta_npr()));
  const double b = out.accuracy("baseline"), f = out.accuracy("ftc");
  return {delta < kMaxDelta && b < 0.70 && f >= 0.90,
          fmt("|delta_npr| %.2e < 1e-3; baseline accuracy %.2f %% < 70; FTC accuracy %.2f %% >= 90", delta, 100.0 * b,
              100.0 * f)};
}

// 7. Two complete command-line runs with the same config and seed.
Verdict cli_determinism() {
  const fs::path root = fs::temp_directory_path() / ("ftc_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  const fs::path config = root / "run.ini";
  {
    std::FILE* f = std::fopen(config.c_str(), "w");
    std::fputs("[run]\nseed = 7\n[simulate]\npixels = 24\nyears = 5\n[train]\nepochs = 30\n", f);
    std::fclose(f);
  }
  const fs::path work = root / "work";
  auto run_all = [&](const fs::path& snapshot) -> std::string {
    fs::remove_all(work);
    for (const char* cmd : {"simulate", "train", "retrieve", "evaluate"}) {
      const std::string line = std::string(FTC_CLI_PATH) + " " + cmd + " --config " + config.string() + " --out " +
                               work.string() + " > " + (root / "log.txt").string() + " 2>&1";
      if (std::system(line.c_str()) != 0) return std::string("'") + cmd + "' failed";
    }
    fs::copy(work, snapshot, fs::copy_options::recursive);
    return {};
  };
  if (auto e = run_all(root / "a"); !e.empty()) return {false, "first run: " + e};
  if (auto e = run_all(root / "b"); !e.empty()) return {false, "second run: " + e};

  std::vector<fs::path> compared;
  for (const auto& e : fs::directory_iterator(root / "a" / "models")) compared.push_back(fs::path("models") / e.path().filename());
  for (const char* f : {"report.txt", "report.csv", "frozen_fraction.csv", "retrieval.csv"}) compared.emplace_back(f);
  std::size_t differing = 0, checkpoints = 0;
  for (const auto& rel : compared) {
    checkpoints += rel.extension() == ".ftcm";
    if (!fs::exists(root / "b" / rel) ||
        ftc::sha256_file((root / "a" / rel).string()) != ftc::sha256_file((root / "b" / rel).string()))
      ++differing;
  }
  fs::remove_all(root);
  return {differing == 0 && checkpoints > 0,
          fmt("%zu files compared (%zu checkpoints), %zu differ", compared.size(), checkpoints, differing)};
}

// 8. Labeling contract over random temperature trajectories.
Verdict labeling_contract() {
  constexpr int kTrajectories = 2000;
  std::mt19937_64 rng(8);
  std::normal_distribution<double> step(0.0, 1.2);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::size_t segments = 0, violations = 0, frozen = 0, thawed = 0;
  for (int s = 0; s < kTrajectories; ++s) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 200)(rng);
    ftc::PixelSeries tb;
    ftc::TempSeries temps;
    tb.pixel_id = temps.pixel_id = "T" + std::to_string(s);
    double soil = 262.0 + 25.0 * u01(rng), air = soil + 4.0 * (u01(rng) - 0.5);
    const double period = 20.0 + 200.0 * u01(rng), amp = 12.0 * u01(rng);
    for (std::size_t t = 0; t < n; ++t) {
      const auto d = ftc::first_day_of_year(2017) + std::chrono::days{static_cast<long>(t)};
      soil += 0.5 * step(rng);
      air += step(rng) + 0.2 * (soil - air);
      const double season = amp * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / period);
      tb.dates.push_back(d);
      temps.dates.push_back(d);
      temps.soil_k.push_back(soil + season);
      temps.air_k.push_back(air + season);
      tb.tb_v.push_back(240.0 + 10.0 * u01(rng));
      tb.tb_h.push_back(220.0 + 10.0 * u01(rng));
    }
    const auto segs = ftc::label_segments(tb, temps, ftc::kMinSegmentDays);
    const auto want = oracle::labeled_runs(temps.soil_k, temps.air_k, ftc::kMinSegmentDays);
    std::vector<oracle::Run> got;
    for (const auto& seg : segs) {
      ++segments;
      (seg.y == 1 ? frozen : thawed)++;
      const auto begin = static_cast<std::size_t>((seg.start_date - tb.dates.front()).count());
      const std::size_t len = seg.x.length;
      got.push_back({begin, len, seg.y});
      bool bad = seg.mask.valid_count() != len || begin + len > n;
      for (std::size_t t = 0; t < len && !bad; ++t) {
        const double so = temps.soil_k[begin + t], ai = temps.air_k[begin + t];
        bad = seg.y == 1 ? !(so < 271.0 && ai < 271.0) : !(so > 275.0 && ai > 275.0);
        bad = bad || seg.x(0, t) != tb.tb_v[begin + t] || seg.x(1, t) != tb.tb_h[begin + t] ||
              seg.x(2, t) != tb.tb_v[begin + t] - tb.tb_h[begin + t];
      }
      violations += bad;
    }
    violations += got != want;
  }
  return {violations == 0 && frozen > 0 && thawed > 0,
          fmt("%d trajectories, %zu segments (%zu frozen, %zu thawed), %zu violations", kTrajectories, segments,
              frozen, thawed, violations)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
      {"gradient correctness", gradients},
      {"loss closed forms", loss_closed_forms},
      {"metric arithmetic from published cells", table_arithmetic},
      {"synthetic accuracy and melt-transient advantage", synthetic_accuracy},
      {"baseline oracle equivalence", baseline_oracle},
      {"degenerate-reference behavior", degenerate_reference},
      {"end-to-end determinism", cli_determinism},
      {"labeling contract", labeling_contract},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) {
    const int c = std::atoi(argv[i]);
    if (c < 1 || c > static_cast<int>(criteria.size())) {
      std::fprintf(stderr, "usage: %s [criterion 1-%zu ...]\n", argv[0], criteria.size());
      return 2;
    }
    selected.insert(c);
  }
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.count(id)) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    all = all && v.pass;
    std::printf("criterion %d %s: %s: %s\n", id, v.pass ? "PASS" : "FAIL", criteria[i].first, v.detail.c_str());
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
