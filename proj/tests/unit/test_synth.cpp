#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numeric>

#include "scourcast/ingest.hpp"
#include "scourcast/synth.hpp"

using namespace scour;

namespace {

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// Power of a single frequency in a real signal, normalised by length.
double tone_power(const std::vector<double>& x, double period_hours) {
  double re = 0, im = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double w = 2.0 * std::numbers::pi * static_cast<double>(i) / period_hours;
    re += x[i] * std::cos(w);
    im += x[i] * std::sin(w);
  }
  return (re * re + im * im) / static_cast<double>(x.size() * x.size());
}

}  // namespace

TEST(Synth, ShapeAndInvariants) {
  ScenarioSpec s;
  s.years = 0.5;
  const auto f = generate(s);
  EXPECT_EQ(f.size(), s.rows());
  EXPECT_TRUE(f.is_hourly());
  for (ChannelId id : {ChannelId::Stage, ChannelId::Sonar, ChannelId::Discharge}) {
    ASSERT_TRUE(f.has(id));
    for (std::size_t i = 0; i < f.size(); ++i) {
      EXPECT_FALSE(f.channel(id).missing[i]);
      EXPECT_TRUE(std::isfinite(f.channel(id).values[i]));
    }
  }
}

TEST(Synth, SeasonalStageExactlyPeriodicWithoutNoiseOrFloods) {
  ScenarioSpec s;
  s.noise_std = 0.0;
  s.flood_count = 0;
  s.years = 1.2;
  const auto f = generate(s);
  const auto& st = f.channel(ChannelId::Stage).values;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const Timestamp later{f.timestamp(i).seconds_since_epoch + kYearSeconds};
    ASSERT_EQ(st[i], seasonal_stage(s, later)) << i;
  }
  EXPECT_EQ(seasonal_stage(s, Timestamp{0}), seasonal_stage(s, Timestamp{400 * kYearSeconds}));
}

TEST(Synth, SeasonalAntiCorrelation) {
  ScenarioSpec s;
  s.years = 3.0;
  s.rho = 0.8;
  s.noise_std = 0.05 * s.sonar_annual_amplitude();
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    s.seed = seed;
    const auto f = generate(s);
    EXPECT_LT(pearson(f.channel(ChannelId::Stage).values, f.channel(ChannelId::Sonar).values), -0.5);
  }
}

TEST(Synth, NegativeRhoFlipsSign) {
  ScenarioSpec s;
  s.rho = -0.8;
  const auto f = generate(s);
  EXPECT_GT(pearson(f.channel(ChannelId::Stage).values, f.channel(ChannelId::Sonar).values), 0.5);
}

TEST(Synth, Deterministic) {
  ScenarioSpec s;
  s.years = 0.3;
  s.seed = 17;
  EXPECT_TRUE(generate(s) == generate(s));
  EXPECT_EQ(generate_csv(s), generate_csv(s));
  ScenarioSpec t = s;
  t.seed = 18;
  EXPECT_FALSE(generate(s) == generate(t));
}

TEST(Synth, SonarMinimumInsideFloodSeason) {
  ScenarioSpec s;
  s.years = 4.0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    s.seed = seed;
    const auto f = generate(s);
    const auto& sn = f.channel(ChannelId::Sonar).values;
    // group rows by epoch-aligned year; only complete years
    std::map<std::int64_t, std::pair<std::size_t, std::size_t>> years;
    for (std::size_t i = 0; i < f.size(); ++i) {
      const auto y = f.timestamp(i).seconds_since_epoch / kYearSeconds;
      auto [it, fresh] = years.try_emplace(y, i, i + 1);
      if (!fresh) it->second.second = i + 1;
    }
    int checked = 0;
    for (auto [y, r] : years) {
      if (r.second - r.first < 8700) continue;
      const auto m = std::min_element(sn.begin() + r.first, sn.begin() + r.second) - sn.begin();
      const double frac = year_phase(f.timestamp(static_cast<std::size_t>(m))) / (2.0 * std::numbers::pi);
      EXPECT_GE(frac, s.season_begin) << "seed " << seed << " year " << y;
      EXPECT_LE(frac, s.season_end) << "seed " << seed << " year " << y;
      ++checked;
    }
    EXPECT_GE(checked, 3);
  }
}

TEST(Synth, TidalComponentPresent) {
  ScenarioSpec s;
  s.kind = ScenarioKind::Tidal;
  s.years = 0.25;
  const auto f = generate(s);
  const auto& st = f.channel(ChannelId::Stage).values;
  const double tide = tone_power(st, kTidalPeriodHours);
  const double off = tone_power(st, 17.0);
  EXPECT_GT(tide, 100.0 * off);
  ScenarioSpec seasonal = s;
  seasonal.kind = ScenarioKind::Seasonal;
  EXPECT_LT(tone_power(generate(seasonal).channel(ChannelId::Stage).values, kTidalPeriodHours), tide / 100.0);
}

TEST(Synth, TidalWeakPositiveCoupling) {
  ScenarioSpec s;
  s.kind = ScenarioKind::Tidal;
  s.noise_std = 0.0;
  s.bed_trend_per_year = 0.0;
  s.bedform_amplitude = 0.0;
  s.years = 1.0;
  const auto f = generate(s);
  const double r = pearson(f.channel(ChannelId::Stage).values, f.channel(ChannelId::Sonar).values);
  EXPECT_GT(r, 0.0);
}

TEST(Synth, DischargeMonotoneInStage) {
  ScenarioSpec s;
  s.years = 0.5;
  const auto f = generate(s);
  const auto& st = f.channel(ChannelId::Stage).values;
  const auto& q = f.channel(ChannelId::Discharge).values;
  std::vector<std::size_t> idx(st.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return st[a] < st[b]; });
  for (std::size_t i = 1; i < idx.size(); ++i) {
    EXPECT_GE(q[idx[i]], q[idx[i - 1]]);
    if (st[idx[i]] > st[idx[i - 1]]) {
      EXPECT_GT(q[idx[i]], q[idx[i - 1]]);
    }
  }
  for (double v : q) EXPECT_GT(v, 0.0);
}

TEST(Synth, BadSpec) {
  auto expect_bad = [](ScenarioSpec s) {
    try {
      generate(s);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::BadSpec);
    }
  };
  ScenarioSpec s;
  s.years = 0.0;
  expect_bad(s);
  s = {};
  s.noise_std = -1.0;
  expect_bad(s);
  s = {};
  s.rho = 1.5;
  expect_bad(s);
  s = {};
  s.season_begin = 0.7;
  s.season_end = 0.6;
  expect_bad(s);
}

TEST(Synth, CsvRoundTripsThroughIngest) {
  ScenarioSpec s;
  s.years = 0.2;
  const auto frame = generate(s);
  const auto parsed = parse_sensor_csv(generate_csv(s));
  EXPECT_TRUE(parsed.malformed.empty());
  // one reading per hourly bucket, so bucket medians reproduce the values bit-exactly
  EXPECT_TRUE(resample_hourly(parsed.readings) == frame);
  const auto out = preprocess(generate_csv(s));
  EXPECT_EQ(out.report.malformed, 0u);
  EXPECT_EQ(out.report.grid_rows, frame.size());
}
