#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "scourcast/error.hpp"
#include "scourcast/features.hpp"
#include "scourcast/ingest.hpp"
#include "scourcast/random.hpp"
#include "scourcast/timeseries.hpp"

namespace scour {

enum class ScenarioKind { Seasonal, Tidal };

inline std::string_view scenario_kind_name(ScenarioKind k) { return k == ScenarioKind::Seasonal ? "seasonal" : "tidal"; }

inline std::optional<ScenarioKind> scenario_kind_from_name(std::string_view s) {
  if (s == "seasonal") return ScenarioKind::Seasonal;
  if (s == "tidal") return ScenarioKind::Tidal;
  return std::nullopt;
}

inline constexpr double kTidalPeriodHours = 12.42;
inline constexpr double kSpringNeapHours = 354.37;

// Elevations in ft. Seasonal phases are fractions of the year measured from
// the epoch-aligned year start (see year_phase).
struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::Seasonal;
  double years = 3.0;
  double noise_std = 0.05;
  std::size_t flood_count = 2;  // per year
  double rho = 0.8;
  std::uint64_t seed = 0;
  Timestamp start = {detail::days_from_civil(2015, 1, 1) * 86400};

  double stage_mean = 10.0;
  double stage_amplitude = 4.0;
  double flood_amplitude = 3.0;
  double flood_rise_hours = 36.0;
  double season_begin = 0.35;
  double season_end = 0.65;
  double sonar_baseline = -15.0;
  double sonar_gain = 0.5;
  double response_hours = 72.0;

  double tidal_amplitude = 3.0;
  double bed_trend_per_year = -0.5;
  double bedform_amplitude = 0.3;
  double bedform_hours = 240.0;

  double discharge_scale = 400.0;
  double discharge_exponent = 1.6;

  void validate() const {
    require(std::isfinite(years) && years > 0.0, Errc::BadSpec, "years must be positive");
    require(std::isfinite(noise_std) && noise_std >= 0.0, Errc::BadSpec, "noise_std must be non-negative");
    require(rho >= -1.0 && rho <= 1.0, Errc::BadSpec, "rho must lie in [-1, 1]");
    require(season_begin >= 0.0 && season_begin < season_end && season_end <= 1.0, Errc::BadSpec,
            "flood season must satisfy 0 <= begin < end <= 1");
    require(response_hours >= 1.0 && flood_rise_hours > 0.0 && bedform_hours > 0.0, Errc::BadSpec,
            "time constants must be positive");
    require(years * static_cast<double>(kYearSeconds) / kSecondsPerHour >= 2.0, Errc::BadSpec,
            "scenario shorter than two hours");
    require(start.hour_aligned(), Errc::BadSpec, "start must be on the hour");
  }

  std::size_t rows() const {
    return static_cast<std::size_t>(std::llround(years * static_cast<double>(kYearSeconds) / kSecondsPerHour));
  }

  // Peak-to-trough of the noise-free annual Sonar swing.
  double sonar_annual_amplitude() const { return 2.0 * std::abs(rho) * sonar_gain * stage_amplitude; }
};

namespace synth_detail {

struct Pulse {
  std::int64_t onset = 0;  // seconds since epoch
  double amplitude = 0.0;
};

inline std::int64_t year_index(std::int64_t seconds) {
  return seconds >= 0 ? seconds / kYearSeconds : -((-seconds + kYearSeconds - 1) / kYearSeconds);
}

// Onsets fall in the first 70% of the season so the recession stays inside it.
inline std::vector<Pulse> flood_pulses(const ScenarioSpec& s, std::int64_t from, std::int64_t to) {
  std::vector<Pulse> out;
  if (s.flood_count == 0) return out;
  for (std::int64_t y = year_index(from); y <= year_index(to); ++y) {
    Rng rng(s.seed, "flood", static_cast<std::uint64_t>(y + (1 << 20)));
    for (std::size_t k = 0; k < s.flood_count; ++k) {
      const double frac = rng.uniform(s.season_begin, s.season_begin + 0.7 * (s.season_end - s.season_begin));
      const auto onset = y * kYearSeconds + static_cast<std::int64_t>(frac * static_cast<double>(kYearSeconds));
      out.push_back({onset, s.flood_amplitude * rng.uniform(0.5, 1.5)});
    }
  }
  return out;
}

// Gamma-shaped bump peaking at 1 after rise_hours, with a long recession.
inline double pulse_shape(double hours, double rise_hours) {
  if (hours <= 0.0) return 0.0;
  constexpr double a = 2.0;
  const double u = hours / rise_hours;
  return std::pow(u, a) * std::exp(a * (1.0 - u));
}

inline double flood_term(const ScenarioSpec& s, const std::vector<Pulse>& pulses, Timestamp t) {
  double v = 0.0;
  for (const auto& p : pulses) {
    const double h = static_cast<double>(t.seconds_since_epoch - p.onset) / kSecondsPerHour;
    if (h > 0.0 && h < 40.0 * s.flood_rise_hours) v += p.amplitude * pulse_shape(h, s.flood_rise_hours);
  }
  return v;
}

}  // namespace synth_detail

// Noise-free annual Stage component; a function of year_phase only, so it
// repeats exactly after kYearSeconds.
inline double seasonal_stage(const ScenarioSpec& s, Timestamp t) {
  const double center = std::numbers::pi * (s.season_begin + s.season_end);
  const double scale = s.kind == ScenarioKind::Seasonal ? 1.0 : 0.5;
  return s.stage_mean + scale * s.stage_amplitude * std::cos(year_phase(t) - center);
}

inline double tidal_stage(const ScenarioSpec& s, Timestamp t) {
  const double h = static_cast<double>(t.seconds_since_epoch) / kSecondsPerHour;
  const double spring_neap = 1.0 + 0.3 * std::cos(2.0 * std::numbers::pi * h / kSpringNeapHours);
  return s.tidal_amplitude * spring_neap * std::cos(2.0 * std::numbers::pi * h / kTidalPeriodHours);
}

// Strictly increasing in stage.
inline double rating_curve(const ScenarioSpec& s, double stage) {
  const double x = stage - (s.stage_mean - 2.0 * s.stage_amplitude);
  const double softplus = x > 30.0 ? x : std::log1p(std::exp(x));
  return s.discharge_scale * std::pow(softplus, s.discharge_exponent);
}

// Hourly Stage, Sonar and Discharge frame.
//
// seasonal: Stage = annual cycle + flood pulses + noise; Sonar falls by
//   rho * gain * (lagged Stage anomaly), so floods scour and recessions fill.
// tidal: Stage adds a 12.42 h tide with spring-neap modulation; Sonar carries a
//   slow bed trend, a migrating-bedform sawtooth and a weak positive coupling
//   (rho / 10) to the lagged Stage anomaly.
inline TimeSeriesFrame generate(const ScenarioSpec& s) {
  s.validate();
  const std::size_t n = s.rows();
  const auto warm = static_cast<std::int64_t>(10.0 * s.response_hours);
  const Timestamp first = s.start.plus_hours(-warm);
  const Timestamp last = s.start.plus_hours(static_cast<std::int64_t>(n));
  const auto pulses = synth_detail::flood_pulses(s, first.seconds_since_epoch - 40 * 3600 * static_cast<std::int64_t>(s.flood_rise_hours),
                                                 last.seconds_since_epoch);
  const bool tidal = s.kind == ScenarioKind::Tidal;
  auto clean_stage = [&](Timestamp t) {
    double v = seasonal_stage(s, t) + synth_detail::flood_term(s, pulses, t);
    if (tidal) v += tidal_stage(s, t);
    return v;
  };

  // Lagged response: first-order low-pass of the noise-free Stage anomaly,
  // warmed up before the first row.
  const double alpha = 1.0 / s.response_hours;
  double resp = clean_stage(first) - s.stage_mean;
  for (std::int64_t h = 1; h < warm; ++h) resp += alpha * (clean_stage(first.plus_hours(h)) - s.stage_mean - resp);

  Rng noise(s.seed, "noise");
  std::vector<Timestamp> ts(n);
  std::vector<double> stage(n), sonar(n), discharge(n);
  for (std::size_t i = 0; i < n; ++i) {
    ts[i] = s.start.plus_hours(static_cast<std::int64_t>(i));
    const double clean = clean_stage(ts[i]);
    resp += alpha * (clean - s.stage_mean - resp);
    stage[i] = clean + noise.normal(0.0, s.noise_std);
    if (!tidal) {
      sonar[i] = s.sonar_baseline - s.rho * s.sonar_gain * resp;
    } else {
      const double h = static_cast<double>(i);
      const double years_elapsed = h * kSecondsPerHour / static_cast<double>(kYearSeconds);
      const double saw = 2.0 * (h / s.bedform_hours - std::floor(h / s.bedform_hours)) - 1.0;
      sonar[i] = s.sonar_baseline + s.bed_trend_per_year * years_elapsed + s.bedform_amplitude * saw +
                 0.1 * s.rho * s.sonar_gain * resp;
    }
    sonar[i] += noise.normal(0.0, s.noise_std);
    discharge[i] = rating_curve(s, stage[i]);
  }
  TimeSeriesFrame frame(std::move(ts));
  frame.set_channel(ChannelId::Stage, std::move(stage));
  frame.set_channel(ChannelId::Sonar, std::move(sonar));
  frame.set_channel(ChannelId::Discharge, std::move(discharge));
  return frame;
}

// Same frame in the long sensor CSV format read by preprocess().
inline std::string generate_csv(const ScenarioSpec& s) { return format_sensor_csv(generate(s)); }

}  // namespace scour
