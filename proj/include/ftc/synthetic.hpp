#pragma once

// Synthetic freeze-thaw scenes: seasonal air and soil temperatures with a
// zero-curtain soil response, ground truth from soil temperature, and dual
// polarization TBs whose regime follows the ground state. Winter melt
// transients depress TBs and raise the polarization ratio without thawing the
// ground; sub-grid water deepens the thaw depression and delays the TB
// response at both transitions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "ftc/datapipe.hpp"
#include "ftc/error.hpp"
#include "ftc/evaluation.hpp"
#include "ftc/ndcore.hpp"

namespace ftc {

inline constexpr double kFreezingK = 273.15;

struct StratumSpec {
  std::string land_cover = "WS";
  double water_min = 0.0;  // water fraction is drawn uniformly in [min, max)
  double water_max = 0.02;
  double winter_tb_v = 255.0;  // mean frozen V-pol TB (K)
  double depression_k = 6.0;   // V-pol drop from frozen to thawed regime
  double npr_frozen = 0.02;
  double npr_thawed = 0.045;
  double noise_k = 1.0;
  double vegetation_recovery_k = 6.0;  // summer TB rise as the canopy develops
  double lake_lag_days = 0.0;
  double transient_depth_k = 14.0;  // V-pol depth of a melt transient
  double transient_npr_rise = 0.035;
};

struct GenConfig {
  std::uint64_t rng_seed = 42;
  int start_year = 2015;
  std::vector<StratumSpec> strata;

  double air_mean_k = 268.0;
  double air_amplitude_k = 22.0;
  double air_noise_k = 3.0;        // regional AR(1) weather anomaly
  double local_noise_k = 1.5;      // per-pixel AR(1) anomaly
  double noise_correlation = 0.8;  // lag-1 autocorrelation of both anomalies
  double transition_jitter_days = 8.0;
  double soil_response_days = 6.0;
  double soil_damping_frozen = 0.45;
  double soil_damping_thawed = 0.8;
  double zero_curtain_degree_days = 12.0;
  double regime_rate = 0.5;  // per-day approach of the TB regime to the ground state

  double winter_transients = 3.0;  // mean regional melt events per winter
  double spring_transients = 1.0;  // extra events in the month before thaw
  int transient_min_days = 2;
  int transient_max_days = 5;
  int spring_transient_min_days = 2;
  int spring_transient_max_days = 5;
  double transient_participation = 0.75;
  double revisit_skip_probability = 0.3;
  std::size_t station_every = 10;

  void validate() const {
    detail::require(!strata.empty(), "GenConfig: no strata");
    for (const auto& s : strata) {
      detail::require(try_parse_land_cover(s.land_cover).has_value(), "GenConfig: unknown land cover '",
                      s.land_cover, "'");
      detail::require(s.depression_k > 0.0, "GenConfig: summer TB mean must be below winter TB mean (",
                      s.land_cover, " has depression ", s.depression_k, " K)");
      detail::require(s.water_min >= 0.0 && s.water_max <= 1.0 && s.water_min <= s.water_max,
                      "GenConfig: bad water-fraction range");
      detail::require(s.noise_k >= 0.0 && s.lake_lag_days >= 0.0, "GenConfig: negative noise or lag");
    }
    detail::require(transient_min_days >= 1 && transient_min_days <= transient_max_days &&
                        spring_transient_min_days >= 1 && spring_transient_min_days <= spring_transient_max_days,
                    "GenConfig: bad melt-transient duration range");
    detail::require(revisit_skip_probability >= 0.0 && revisit_skip_probability < 1.0,
                    "GenConfig: revisit_skip_probability outside [0, 1)");
  }
};

/// Four strata spanning dry and lake-rich pixels.
inline GenConfig default_gen_config(std::uint64_t seed = 42) {
  GenConfig g;
  g.rng_seed = seed;
  StratumSpec ws;
  StratumSpec os;
  os.land_cover = "OS";
  os.winter_tb_v = 250.0;
  os.depression_k = 5.0;
  os.npr_frozen = 0.012;
  os.npr_thawed = 0.035;
  StratumSpec lakes;
  lakes.land_cover = "WS";
  lakes.water_min = 0.15;
  lakes.water_max = 0.35;
  lakes.winter_tb_v = 245.0;
  lakes.depression_k = 50.0;
  lakes.npr_frozen = 0.03;
  lakes.npr_thawed = 0.07;
  lakes.lake_lag_days = 3.0;
  StratumSpec wet;
  wet.land_cover = "G";
  wet.water_min = 0.35;
  wet.water_max = 0.50;
  wet.winter_tb_v = 240.0;
  wet.depression_k = 70.0;
  wet.npr_frozen = 0.04;
  wet.npr_thawed = 0.10;
  wet.lake_lag_days = 4.0;
  g.strata = {ws, os, lakes, wet};
  return g;
}

/// Default strata with frequent mid-winter and pre-thaw melt events.
inline GenConfig melt_heavy_gen_config(std::uint64_t seed = 42) {
  GenConfig g = default_gen_config(seed);
  g.winter_transients = 14.0;
  g.spring_transients = 4.0;
  g.transient_participation = 0.85;
  g.spring_transient_min_days = 6;
  g.spring_transient_max_days = 10;
  for (auto& s : g.strata) s.transient_npr_rise = 1.5 * (s.npr_thawed - s.npr_frozen);
  return g;
}

/// One open-shrubland stratum whose thawed and frozen polarization ratios
/// coincide, so NPR carries no freeze-thaw signal.
inline GenConfig degenerate_npr_gen_config(std::uint64_t seed = 42) {
  GenConfig g;
  g.rng_seed = seed;
  StratumSpec s;
  s.land_cover = "OS";
  s.winter_tb_v = 252.0;
  s.depression_k = 30.0;
  s.npr_frozen = 0.015;
  s.npr_thawed = 0.015;
  s.transient_npr_rise = 0.0;
  g.strata = {s};
  return g;
}

struct SyntheticScene {
  std::vector<PixelSeries> tb;  // daily; observed flags mark revisit days
  std::vector<TempSeries> temps;
  std::vector<AncillaryRecord> ancillary;
  std::vector<BinarySeries> truth;
  std::vector<std::string> stations;
};

inline std::string synthetic_pixel_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "P%04zu", index);
  return buf;
}

namespace detail {

struct MeltEvent {
  long day = 0;
  int duration = 3;
  std::uint64_t tag = 0;  // decides per-pixel participation
};

inline double bump(int k, int duration) {
  return std::sin(std::numbers::pi * (static_cast<double>(k) + 0.5) / static_cast<double>(duration));
}

}  // namespace detail

/// Deterministic for a fixed config, pixel count and year count.
inline SyntheticScene generate_synthetic(const GenConfig& cfg, std::size_t n_pixels, int years) {
  cfg.validate();
  detail::require(n_pixels >= 1, "generate_synthetic: need at least one pixel");
  detail::require(years >= 1, "generate_synthetic: need at least one year");

  const Date first = first_day_of_year(cfg.start_year);
  const Date last_excl = first_day_of_year(cfg.start_year + years);
  const long n_days = (last_excl - first).count();
  std::vector<Date> dates(static_cast<std::size_t>(n_days));
  for (long d = 0; d < n_days; ++d) dates[static_cast<std::size_t>(d)] = first + std::chrono::days{d};

  // Regional weather and melt-event schedule shared by all pixels.
  nd::Rng regional(cfg.rng_seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  const double rho = cfg.noise_correlation;
  const double innov = std::sqrt(1.0 - rho * rho);
  std::vector<double> regional_anom(dates.size());
  double a = 0.0;
  for (auto& v : regional_anom) {
    a = rho * a + innov * unit(regional);
    v = cfg.air_noise_k * a;
  }
  std::vector<detail::MeltEvent> events;
  for (int y = 0; y <= years; ++y) {
    const long jan1 = (first_day_of_year(cfg.start_year + y) - first).count();
    std::poisson_distribution<int> n_winter(cfg.winter_transients), n_spring(cfg.spring_transients);
    std::uniform_int_distribution<int> dur(cfg.transient_min_days, cfg.transient_max_days);
    std::uniform_int_distribution<int> spring_dur(cfg.spring_transient_min_days, cfg.spring_transient_max_days);
    // Mid-winter: December of the previous season through mid-March.
    std::uniform_int_distribution<long> winter_day(-30, 75);
    const int nw = n_winter(regional);
    for (int k = 0; k < nw; ++k) events.push_back({jan1 + winter_day(regional), dur(regional), regional()});
    // Pre-thaw: the month before the climatological thaw (around day 120).
    std::uniform_int_distribution<long> spring_day(85, 115);
    const int ns = n_spring(regional);
    for (int k = 0; k < ns; ++k) events.push_back({jan1 + spring_day(regional), spring_dur(regional), regional()});
  }
  std::sort(events.begin(), events.end(),
            [](const auto& l, const auto& r) { return l.day < r.day; });

  SyntheticScene scene;
  for (std::size_t p = 0; p < n_pixels; ++p) {
    const StratumSpec& spec = cfg.strata[p % cfg.strata.size()];
    const std::string id = synthetic_pixel_id(p);
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.rng_seed), static_cast<std::uint32_t>(cfg.rng_seed >> 32),
                      static_cast<std::uint32_t>(p), 0x5eedu};
    nd::Rng rng(seq);

    std::uniform_real_distribution<double> wf_dist(spec.water_min, spec.water_max);
    const double water = spec.water_max > spec.water_min ? wf_dist(rng) : spec.water_min;
    std::uniform_real_distribution<double> jitter(-cfg.transition_jitter_days, cfg.transition_jitter_days);
    const double phase = jitter(rng);
    std::uniform_real_distribution<double> u01(0.0, 1.0);

    scene.ancillary.push_back({id, spec.land_cover, water});
    if (cfg.station_every > 0 && p % cfg.station_every == 0) scene.stations.push_back(id);

    // Per-pixel participation in each regional melt event.
    std::vector<double> melt(dates.size(), 0.0);
    for (const auto& ev : events) {
      nd::Rng er(ev.tag ^ (0x9e3779b97f4a7c15ULL * (p + 1)));
      if (std::uniform_real_distribution<double>(0.0, 1.0)(er) >= cfg.transient_participation) continue;
      const long shift = std::uniform_int_distribution<long>(-1, 1)(er);
      for (int k = 0; k < ev.duration; ++k) {
        const long d = ev.day + shift + k;
        if (d >= 0 && d < n_days)
          melt[static_cast<std::size_t>(d)] = std::max(melt[static_cast<std::size_t>(d)], detail::bump(k, ev.duration));
      }
    }

    TempSeries temps{id, dates, {}, {}};
    temps.soil_k.reserve(dates.size());
    temps.air_k.reserve(dates.size());
    BinarySeries truth{id, dates, {}};
    PixelSeries tb;
    tb.pixel_id = id;
    tb.dates = dates;

    const double e_frozen = spec.winter_tb_v / 262.0;
    const double e_thawed = (spec.winter_tb_v - spec.depression_k) / 285.0;
    const double water_share = std::min(0.8, 2.0 * water);
    const auto lag = static_cast<long>(std::lround(spec.lake_lag_days * std::min(1.0, water / 0.25)));

    double local = 0.0;
    double ema = cfg.air_mean_k - cfg.air_amplitude_k;
    bool frozen = true;
    double latent = 0.0;  // degree-days absorbed toward the opposite phase
    double w_land = 0.0, w_water = 0.0;
    long days_thawed = 0;
    std::vector<std::uint8_t> thawed_hist;
    thawed_hist.reserve(dates.size());

    for (std::size_t d = 0; d < dates.size(); ++d) {
      const int doy = day_of_year(dates[d]);
      local = rho * local + innov * unit(rng);
      double air = cfg.air_mean_k -
                   cfg.air_amplitude_k * std::cos(2.0 * std::numbers::pi * (doy - 15 - phase) / 365.25) +
                   regional_anom[d] + cfg.local_noise_k * local;
      // A melt event warms the air toward, but not past, the frozen label threshold.
      const double m = frozen ? melt[d] : 0.0;
      if (m > 0.0) air = std::max(air, 266.0 + 4.5 * m);

      ema += (air - ema) / cfg.soil_response_days;
      const double damp = frozen ? cfg.soil_damping_frozen : cfg.soil_damping_thawed;
      const double target = kFreezingK + damp * (ema - kFreezingK);
      double soil = 0.0;
      if (frozen) {
        if (target >= kFreezingK) {
          latent += target - kFreezingK;
          soil = kFreezingK - 0.1;
          if (latent >= cfg.zero_curtain_degree_days) {
            frozen = false;
            latent = 0.0;
            soil = kFreezingK + 0.1;
          }
        } else {
          latent = std::max(0.0, latent - (kFreezingK - target));
          soil = std::min(target, kFreezingK - 0.1);
        }
      } else {
        if (target <= kFreezingK) {
          latent += kFreezingK - target;
          soil = kFreezingK + 0.1;
          if (latent >= cfg.zero_curtain_degree_days) {
            frozen = true;
            latent = 0.0;
            soil = kFreezingK - 0.1;
          }
        } else {
          latent = std::max(0.0, latent - (target - kFreezingK));
          soil = std::max(target, kFreezingK + 0.1);
        }
      }
      temps.air_k.push_back(air);
      temps.soil_k.push_back(soil);
      truth.states.push_back(soil < kFreezingK ? FtState::frozen : FtState::thawed);
      thawed_hist.push_back(frozen ? 0 : 1);

      // TB regime: land follows the ground state, water follows it `lag` days late.
      w_land += cfg.regime_rate * ((frozen ? 0.0 : 1.0) - w_land);
      const bool water_thawed = d >= static_cast<std::size_t>(lag) ? thawed_hist[d - static_cast<std::size_t>(lag)] != 0
                                                                   : false;
      w_water += cfg.regime_rate * ((water_thawed ? 1.0 : 0.0) - w_water);
      const double w = (1.0 - water_share) * w_land + water_share * w_water;
      days_thawed = frozen ? 0 : days_thawed + 1;

      const double veg = spec.vegetation_recovery_k * (1.0 - std::exp(-static_cast<double>(days_thawed) / 40.0));
      double v = (1.0 - w) * e_frozen * soil + w * (e_thawed * soil + veg);
      double npr = (1.0 - w) * spec.npr_frozen + w * spec.npr_thawed;
      v -= spec.transient_depth_k * m;
      npr += spec.transient_npr_rise * m;
      double h = v * (1.0 - npr) / (1.0 + npr);
      v += spec.noise_k * unit(rng);
      h += spec.noise_k * unit(rng);
      tb.tb_v.push_back(v);
      tb.tb_h.push_back(h);
    }

    // Revisit pattern: at most one skipped day between observations, ends
    // observed. Skipped days are refilled the way ingestion would.
    std::vector<RawObservation> obs;
    for (std::size_t d = 0; d < dates.size(); ++d) {
      const bool skip = d > 0 && d + 1 < dates.size() && (obs.empty() || obs.back().date == dates[d - 1]) &&
                        u01(rng) < cfg.revisit_skip_probability;
      if (!skip) obs.push_back({dates[d], std::round(tb.tb_v[d] * 100.0) / 100.0, std::round(tb.tb_h[d] * 100.0) / 100.0});
    }
    for (std::size_t d = 0; d < dates.size(); ++d) {
      temps.soil_k[d] = std::round(temps.soil_k[d] * 100.0) / 100.0;
      temps.air_k[d] = std::round(temps.air_k[d] * 100.0) / 100.0;
    }
    if (obs.size() >= 2) {
      auto pieces = interpolate_daily(id, std::move(obs), 2);
      tb = std::move(pieces.front());
    }

    scene.tb.push_back(std::move(tb));
    scene.temps.push_back(std::move(temps));
    scene.truth.push_back(std::move(truth));
  }
  return scene;
}

}  // namespace ftc
