#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "scourcast/error.hpp"
#include "scourcast/timeseries.hpp"

namespace scour {

// Gregorian mean year in seconds (365.2425 days).
inline constexpr std::int64_t kYearSeconds = 31556952;

enum class DepthSign {
  SonarMinusStage,  // d = sonar - stage, as written in the equivalent-velocity derivation
  StageMinusSonar,  // conventional flow depth
};

inline constexpr double kDepthGuard = 1e-6;

// eV = discharge / depth. Rows where any source is masked or |depth| is below
// kDepthGuard are masked.
inline TimeSeriesFrame equivalent_velocity(const TimeSeriesFrame& frame,
                                           DepthSign sign = DepthSign::SonarMinusStage) {
  for (ChannelId id : {ChannelId::Sonar, ChannelId::Stage, ChannelId::Discharge}) {
    require(frame.has(id), Errc::MissingChannel,
            std::string("equivalent velocity needs the ") + std::string(channel_name(id)) + " channel");
  }
  const auto& sonar = frame.channel(ChannelId::Sonar);
  const auto& stage = frame.channel(ChannelId::Stage);
  const auto& discharge = frame.channel(ChannelId::Discharge);
  const std::size_t n = frame.size();
  std::vector<double> ev(n, 0.0);
  std::vector<bool> missing(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    if (sonar.missing[i] || stage.missing[i] || discharge.missing[i]) {
      missing[i] = true;
      continue;
    }
    const double depth = sign == DepthSign::SonarMinusStage ? sonar.values[i] - stage.values[i]
                                                            : stage.values[i] - sonar.values[i];
    if (std::abs(depth) < kDepthGuard) {
      missing[i] = true;
      continue;
    }
    ev[i] = discharge.values[i] / depth;
  }
  TimeSeriesFrame out = frame;
  out.set_channel(ChannelId::EVelocity, std::move(ev), std::move(missing));
  return out;
}

inline double year_phase(Timestamp t) {
  std::int64_t r = t.seconds_since_epoch % kYearSeconds;
  if (r < 0) r += kYearSeconds;
  return 2.0 * std::numbers::pi * static_cast<double>(r) / static_cast<double>(kYearSeconds);
}

inline TimeSeriesFrame time_features(const TimeSeriesFrame& frame) {
  const std::size_t n = frame.size();
  std::vector<double> s(n), c(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double phase = year_phase(frame.timestamp(i));
    s[i] = std::sin(phase);
    c[i] = std::cos(phase);
  }
  TimeSeriesFrame out = frame;
  out.set_channel(ChannelId::YearSin, std::move(s));
  out.set_channel(ChannelId::YearCos, std::move(c));
  return out;
}

struct FeatureSet {
  std::string code;
  std::vector<ChannelId> inputs;
  std::vector<ChannelId> targets;
  ChannelId metric = ChannelId::Sonar;
  bool uses_velocity = false;
  bool uses_time = false;

  bool non_sonar_metric() const { return metric != ChannelId::Sonar; }
};

// Decomposes a code such as "sNsTdV" or "sNy" into channels. Targets are the
// inputs among {Sonar, Stage}; when there are none the first input is the
// target. The metric channel is Sonar when it is an input, otherwise the
// first input.
inline FeatureSet resolve_feature_set(std::string_view code) {
  require(!code.empty(), Errc::InvalidCode, "empty feature-set code");
  FeatureSet fs;
  fs.code = std::string(code);
  bool seen_sn = false, seen_st = false, seen_dc = false, seen_dv = false, seen_y = false;
  auto mark = [&](bool& flag, std::string_view token) {
    require(!flag, Errc::DuplicateToken,
            "token '" + std::string(token) + "' repeated in '" + std::string(code) + "'");
    flag = true;
  };
  std::size_t i = 0;
  while (i < code.size()) {
    const std::string_view rest = code.substr(i);
    if (rest.starts_with("sN")) {
      mark(seen_sn, "sN");
      fs.inputs.push_back(ChannelId::Sonar);
      i += 2;
    } else if (rest.starts_with("sT")) {
      mark(seen_st, "sT");
      fs.inputs.push_back(ChannelId::Stage);
      i += 2;
    } else if (rest.starts_with("dC")) {
      mark(seen_dc, "dC");
      fs.inputs.push_back(ChannelId::Discharge);
      i += 2;
    } else if (rest.starts_with("dV")) {
      mark(seen_dv, "dV");
      fs.inputs.push_back(ChannelId::EVelocity);
      fs.uses_velocity = true;
      i += 2;
    } else if (rest.starts_with("y")) {
      mark(seen_y, "y");
      fs.inputs.push_back(ChannelId::YearSin);
      fs.inputs.push_back(ChannelId::YearCos);
      fs.uses_time = true;
      i += 1;
    } else {
      throw Error(Errc::InvalidCode, "unknown token at '" + std::string(rest) + "' in feature code");
    }
  }
  require(!(seen_dc && seen_dv), Errc::InvalidCode,
          "dC and dV cannot be combined (dV is derived from dC)");
  for (ChannelId id : fs.inputs) {
    if (id == ChannelId::Sonar || id == ChannelId::Stage) fs.targets.push_back(id);
  }
  if (fs.targets.empty()) fs.targets.push_back(fs.inputs.front());
  fs.metric = seen_sn ? ChannelId::Sonar : fs.inputs.front();
  return fs;
}

// Adds the derived channels a feature set needs.
inline TimeSeriesFrame prepare_features(const TimeSeriesFrame& frame, const FeatureSet& fs,
                                        DepthSign sign = DepthSign::SonarMinusStage) {
  TimeSeriesFrame out = frame;
  if (fs.uses_velocity && !out.has(ChannelId::EVelocity)) out = equivalent_velocity(out, sign);
  if (fs.uses_time) out = time_features(out);
  for (ChannelId id : fs.inputs) {
    require(out.has(id), Errc::MissingChannel,
            "feature set " + fs.code + " needs channel " + std::string(channel_name(id)));
  }
  return out;
}

}  // namespace scour
