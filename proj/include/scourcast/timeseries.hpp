#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cctype>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "scourcast/error.hpp"

namespace scour {

inline constexpr std::int64_t kSecondsPerHour = 3600;
inline constexpr double kFeetToMeters = 0.3048;

struct Timestamp {
  std::int64_t seconds_since_epoch = 0;

  auto operator<=>(const Timestamp&) const = default;

  Timestamp plus_hours(std::int64_t hours) const {
    return {seconds_since_epoch + hours * kSecondsPerHour};
  }
  bool hour_aligned() const { return seconds_since_epoch % kSecondsPerHour == 0; }
  Timestamp floor_hour() const {
    std::int64_t s = seconds_since_epoch;
    std::int64_t r = s % kSecondsPerHour;
    if (r < 0) r += kSecondsPerHour;
    return {s - r};
  }
};

namespace detail {

// Howard Hinnant's civil-calendar conversions.
constexpr std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

constexpr void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y += m <= 2;
}

inline bool parse_digits(std::string_view s, std::size_t pos, std::size_t n, int& out) {
  if (pos + n > s.size()) return false;
  int v = 0;
  for (std::size_t i = pos; i < pos + n; ++i) {
    if (s[i] < '0' || s[i] > '9') return false;
    v = v * 10 + (s[i] - '0');
  }
  out = v;
  return true;
}

}  // namespace detail

// Accepts YYYY-MM-DDTHH:MM[:SS[.fff]][Z|+HH:MM|-HH:MM]; a space may replace 'T'.
// Missing zone designator means UTC.
inline std::optional<Timestamp> parse_iso8601(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  int year, month, day, hour, minute, second = 0;
  if (!detail::parse_digits(s, 0, 4, year) || s.size() < 16 || s[4] != '-' ||
      !detail::parse_digits(s, 5, 2, month) || s[7] != '-' ||
      !detail::parse_digits(s, 8, 2, day) || (s[10] != 'T' && s[10] != ' ') ||
      !detail::parse_digits(s, 11, 2, hour) || s[13] != ':' ||
      !detail::parse_digits(s, 14, 2, minute)) {
    return std::nullopt;
  }
  std::size_t pos = 16;
  if (pos < s.size() && s[pos] == ':') {
    if (!detail::parse_digits(s, pos + 1, 2, second)) return std::nullopt;
    pos += 3;
    if (pos < s.size() && s[pos] == '.') {
      ++pos;
      while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
    }
  }
  std::int64_t offset = 0;
  if (pos < s.size()) {
    if (s[pos] == 'Z' && pos + 1 == s.size()) {
      pos += 1;
    } else if ((s[pos] == '+' || s[pos] == '-') && s.size() == pos + 6 && s[pos + 3] == ':') {
      int oh, om;
      if (!detail::parse_digits(s, pos + 1, 2, oh) || !detail::parse_digits(s, pos + 4, 2, om))
        return std::nullopt;
      offset = (oh * 3600 + om * 60) * (s[pos] == '+' ? 1 : -1);
      pos = s.size();
    } else {
      return std::nullopt;
    }
  }
  if (month < 1 || month > 12 || day < 1 || day > 31 || hour > 23 || minute > 59 || second > 60)
    return std::nullopt;
  const std::int64_t days = detail::days_from_civil(year, static_cast<unsigned>(month),
                                                    static_cast<unsigned>(day));
  return Timestamp{days * 86400 + hour * 3600 + minute * 60 + second - offset};
}

inline std::string format_iso8601(Timestamp t) {
  std::int64_t s = t.seconds_since_epoch;
  std::int64_t days = s / 86400;
  std::int64_t rem = s % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  std::int64_t y;
  unsigned m, d;
  detail::civil_from_days(days, y, m, d);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02lld:%02lld:%02lldZ", static_cast<long long>(y),
                m, d, static_cast<long long>(rem / 3600), static_cast<long long>((rem / 60) % 60),
                static_cast<long long>(rem % 60));
  return buf;
}

enum class ChannelId { Sonar, Stage, Discharge, EVelocity, YearSin, YearCos };

inline constexpr std::array<ChannelId, 6> kAllChannels = {
    ChannelId::Sonar,     ChannelId::Stage,   ChannelId::Discharge,
    ChannelId::EVelocity, ChannelId::YearSin, ChannelId::YearCos};

// Column / CSV name.
inline std::string_view channel_name(ChannelId id) {
  switch (id) {
    case ChannelId::Sonar: return "sonar";
    case ChannelId::Stage: return "stage";
    case ChannelId::Discharge: return "discharge";
    case ChannelId::EVelocity: return "evelocity";
    case ChannelId::YearSin: return "year_sin";
    case ChannelId::YearCos: return "year_cos";
  }
  return "?";
}

// Feature notation code.
inline std::string_view channel_code(ChannelId id) {
  switch (id) {
    case ChannelId::Sonar: return "sN";
    case ChannelId::Stage: return "sT";
    case ChannelId::Discharge: return "dC";
    case ChannelId::EVelocity: return "dV";
    case ChannelId::YearSin: return "y(sin)";
    case ChannelId::YearCos: return "y(cos)";
  }
  return "?";
}

// Elevation channels are in feet and get a metre column in reports.
inline bool is_elevation(ChannelId id) {
  return id == ChannelId::Sonar || id == ChannelId::Stage;
}

// Case-insensitive; accepts the column name or the feature code.
inline std::optional<ChannelId> parse_channel(std::string_view text) {
  std::string lower;
  for (char c : text) {
    if (c == ' ' || c == '\t' || c == '\r') continue;
    lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  for (ChannelId id : kAllChannels) {
    std::string code;
    for (char c : channel_code(id)) code.push_back(static_cast<char>(std::tolower(c)));
    if (lower == channel_name(id) || lower == code) return id;
  }
  if (lower == "yearsin" || lower == "year-sin") return ChannelId::YearSin;
  if (lower == "yearcos" || lower == "year-cos") return ChannelId::YearCos;
  return std::nullopt;
}

struct ChannelSeries {
  std::vector<double> values;
  std::vector<bool> missing;

  bool ok(std::size_t i) const { return !missing[i]; }
};

// Synchronised multichannel record. Non-finite values are always masked.
class TimeSeriesFrame {
 public:
  TimeSeriesFrame() = default;

  explicit TimeSeriesFrame(std::vector<Timestamp> timestamps) : timestamps_(std::move(timestamps)) {
    for (std::size_t i = 1; i < timestamps_.size(); ++i) {
      require(timestamps_[i - 1] < timestamps_[i], Errc::ConfigError,
              "frame timestamps must be strictly increasing");
    }
  }

  std::size_t size() const { return timestamps_.size(); }
  const std::vector<Timestamp>& timestamps() const { return timestamps_; }
  Timestamp timestamp(std::size_t i) const { return timestamps_[i]; }

  void set_channel(ChannelId id, std::vector<double> values, std::vector<bool> missing = {}) {
    require(values.size() == timestamps_.size(), Errc::ShapeMismatch,
            std::string("channel ") + std::string(channel_name(id)) + " length differs from timestamps");
    if (missing.empty()) missing.assign(values.size(), false);
    require(missing.size() == values.size(), Errc::ShapeMismatch, "missing-mask length mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!std::isfinite(values[i])) missing[i] = true;
    }
    channels_[id] = ChannelSeries{std::move(values), std::move(missing)};
  }

  bool has(ChannelId id) const { return channels_.count(id) != 0; }

  const ChannelSeries& channel(ChannelId id) const {
    auto it = channels_.find(id);
    require(it != channels_.end(), Errc::MissingChannel,
            std::string("frame has no ") + std::string(channel_name(id)) + " channel");
    return it->second;
  }

  std::vector<ChannelId> channel_ids() const {
    std::vector<ChannelId> ids;
    for (const auto& [id, _] : channels_) ids.push_back(id);
    return ids;
  }

  bool is_hourly() const {
    for (std::size_t i = 0; i < timestamps_.size(); ++i) {
      if (!timestamps_[i].hour_aligned()) return false;
      if (i > 0 && timestamps_[i].seconds_since_epoch - timestamps_[i - 1].seconds_since_epoch !=
                       kSecondsPerHour)
        return false;
    }
    return true;
  }

  // Rows [begin, end) as a new frame.
  TimeSeriesFrame slice(std::size_t begin, std::size_t end) const {
    require(begin <= end && end <= size(), Errc::ConfigError, "slice out of range");
    TimeSeriesFrame out(std::vector<Timestamp>(timestamps_.begin() + begin, timestamps_.begin() + end));
    for (const auto& [id, ch] : channels_) {
      out.set_channel(id, std::vector<double>(ch.values.begin() + begin, ch.values.begin() + end),
                      std::vector<bool>(ch.missing.begin() + begin, ch.missing.begin() + end));
    }
    return out;
  }

  friend bool operator==(const TimeSeriesFrame& a, const TimeSeriesFrame& b) {
    if (a.timestamps_ != b.timestamps_ || a.channels_.size() != b.channels_.size()) return false;
    for (const auto& [id, ch] : a.channels_) {
      auto it = b.channels_.find(id);
      if (it == b.channels_.end() || it->second.missing != ch.missing) return false;
      for (std::size_t i = 0; i < ch.values.size(); ++i) {
        if (!ch.missing[i] && ch.values[i] != it->second.values[i]) return false;
      }
    }
    return true;
  }

 private:
  std::vector<Timestamp> timestamps_;
  std::map<ChannelId, ChannelSeries> channels_;
};

// Dense row-major matrix used for window payloads.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  bool operator==(const Matrix&) const = default;
};

struct ChannelStats {
  double mean = 0.0;
  double std = 1.0;
  bool operator==(const ChannelStats&) const = default;
};

struct NormalizationStats {
  std::map<ChannelId, ChannelStats> channels;

  ChannelStats of(ChannelId id) const {
    auto it = channels.find(id);
    return it == channels.end() ? ChannelStats{} : it->second;
  }
  double normalize(ChannelId id, double v) const {
    const auto s = of(id);
    return (v - s.mean) / s.std;
  }
  double denormalize(ChannelId id, double z) const {
    const auto s = of(id);
    return z * s.std + s.mean;
  }
  bool operator==(const NormalizationStats&) const = default;
};

struct WindowSample {
  Matrix input;   // [w_in x N_in]
  Matrix target;  // [w_out x N_out]
  Timestamp origin;           // first target step
  std::size_t origin_index = 0;  // row of origin in the source frame
};

struct WindowedDataset {
  std::vector<WindowSample> samples;
  std::vector<ChannelId> input_channels;
  std::vector<ChannelId> target_channels;
  NormalizationStats norm_stats;  // identity until normalize() is applied
  bool normalized = false;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  std::size_t w_in() const { return samples.empty() ? 0 : samples.front().input.rows; }
  std::size_t w_out() const { return samples.empty() ? 0 : samples.front().target.rows; }

  WindowedDataset subset(std::size_t begin, std::size_t end) const {
    WindowedDataset out;
    out.input_channels = input_channels;
    out.target_channels = target_channels;
    out.norm_stats = norm_stats;
    out.normalized = normalized;
    out.samples.assign(samples.begin() + static_cast<std::ptrdiff_t>(begin),
                       samples.begin() + static_cast<std::ptrdiff_t>(end));
    return out;
  }
};

inline std::size_t channel_index(const std::vector<ChannelId>& channels, ChannelId id) {
  auto it = std::find(channels.begin(), channels.end(), id);
  require(it != channels.end(), Errc::MissingChannel,
          std::string("channel ") + std::string(channel_name(id)) + " not in list");
  return static_cast<std::size_t>(it - channels.begin());
}

// Supervised windows over the frame. Samples are emitted for window starts
// 0, stride, 2*stride, ...; a start whose span touches a masked value or a
// non-hourly step is skipped.
//
// Samples are optionally restricted to those whose target window lies in
// [target_begin, target_end) of the frame (used by fold plans); inputs may
// reach back before target_begin.
inline WindowedDataset make_windows(const TimeSeriesFrame& frame, std::size_t w_in, std::size_t w_out,
                                    const std::vector<ChannelId>& input_channels,
                                    const std::vector<ChannelId>& target_channels,
                                    std::size_t stride = 1, std::size_t target_begin = 0,
                                    std::size_t target_end = SIZE_MAX) {
  require(w_in >= 2, Errc::ConfigError, "w_in must be at least 2");
  require(w_out >= 1, Errc::ConfigError, "w_out must be at least 1");
  require(stride >= 1, Errc::BadStride, "stride must be at least 1");
  require(!input_channels.empty() && !target_channels.empty(), Errc::ConfigError,
          "input and target channel lists must be non-empty");
  const std::size_t length = frame.size();
  require(length >= w_in + w_out, Errc::FrameTooShort,
          "frame has " + std::to_string(length) + " rows, windows need " + std::to_string(w_in + w_out));

  std::vector<const ChannelSeries*> in_series, out_series;
  for (ChannelId id : input_channels) in_series.push_back(&frame.channel(id));
  for (ChannelId id : target_channels) out_series.push_back(&frame.channel(id));

  // bad_prefix[i] = number of unusable rows in [0, i); a row is unusable when any
  // used channel is masked, or when it is not exactly one hour after its predecessor.
  std::vector<std::size_t> bad_prefix(length + 1, 0);
  std::vector<std::size_t> step_prefix(length + 1, 0);
  for (std::size_t i = 0; i < length; ++i) {
    bool bad = false;
    for (auto* s : in_series) bad = bad || s->missing[i];
    for (auto* s : out_series) bad = bad || s->missing[i];
    bad_prefix[i + 1] = bad_prefix[i] + (bad ? 1 : 0);
    const bool step_bad =
        i > 0 && frame.timestamp(i).seconds_since_epoch - frame.timestamp(i - 1).seconds_since_epoch !=
                     kSecondsPerHour;
    step_prefix[i + 1] = step_prefix[i] + (step_bad ? 1 : 0);
  }

  WindowedDataset ds;
  ds.input_channels = input_channels;
  ds.target_channels = target_channels;
  const std::size_t n_in = input_channels.size();
  const std::size_t n_out = target_channels.size();
  const std::size_t span = w_in + w_out;
  target_end = std::min(target_end, length);
  for (std::size_t start = 0; start + span <= length; start += stride) {
    const std::size_t origin = start + w_in;
    if (origin < target_begin || origin + w_out > target_end) continue;
    if (bad_prefix[start + span] != bad_prefix[start]) continue;
    // steps between consecutive rows inside the span: rows start+1 .. start+span-1
    if (step_prefix[start + span] != step_prefix[start + 1]) continue;
    WindowSample s;
    s.input = Matrix(w_in, n_in);
    s.target = Matrix(w_out, n_out);
    for (std::size_t r = 0; r < w_in; ++r)
      for (std::size_t c = 0; c < n_in; ++c) s.input(r, c) = in_series[c]->values[start + r];
    for (std::size_t r = 0; r < w_out; ++r)
      for (std::size_t c = 0; c < n_out; ++c) s.target(r, c) = out_series[c]->values[origin + r];
    s.origin = frame.timestamp(origin);
    s.origin_index = origin;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

struct SplitSpec {
  double train_frac = 0.7;
  double val_frac = 0.2;
  double test_frac = 0.1;
  std::optional<double> final_test_frac;

  void validate() const {
    for (double f : {train_frac, val_frac, test_frac}) {
      require(f > 0.0 && f < 1.0, Errc::InvalidSplit, "split fractions must lie in (0,1)");
    }
    require(std::abs(train_frac + val_frac + test_frac - 1.0) <= 1e-9, Errc::InvalidSplit,
            "split fractions must sum to 1");
    if (final_test_frac) {
      require(*final_test_frac > 0.0 && *final_test_frac < 1.0, Errc::InvalidSplit,
              "final_test fraction must lie in (0,1)");
    }
  }
};

struct Partitions {
  WindowedDataset train, val, test;
};

// Partition sizes are round(n*train), round(n*val) and the remainder.
inline Partitions chronological_split(const WindowedDataset& ds, const SplitSpec& spec) {
  spec.validate();
  require(!ds.empty(), Errc::EmptyPartition, "dataset has no samples");
  const auto n = static_cast<long long>(ds.size());
  const long long n_train = std::llround(static_cast<double>(n) * spec.train_frac);
  const long long n_val = std::llround(static_cast<double>(n) * spec.val_frac);
  const long long n_test = n - n_train - n_val;
  require(n_train > 0 && n_val > 0 && n_test > 0, Errc::EmptyPartition,
          "split of " + std::to_string(n) + " samples leaves an empty partition");
  const auto a = static_cast<std::size_t>(n_train);
  const auto b = static_cast<std::size_t>(n_train + n_val);
  return {ds.subset(0, a), ds.subset(a, b), ds.subset(b, ds.size())};
}

// Per-channel z-score statistics over the distinct frame rows covered by the
// dataset's windows. Constant channels get std 1 so the invariant std > 0 holds.
inline NormalizationStats fit_normalization(const WindowedDataset& ds) {
  require(!ds.empty(), Errc::EmptyPartition, "cannot fit normalization on an empty dataset");
  NormalizationStats stats;
  const std::size_t w_in = ds.w_in();
  std::size_t max_index = 0;
  for (const auto& s : ds.samples) max_index = std::max(max_index, s.origin_index + s.target.rows);

  std::vector<ChannelId> all = ds.input_channels;
  for (ChannelId id : ds.target_channels)
    if (std::find(all.begin(), all.end(), id) == all.end()) all.push_back(id);

  for (ChannelId id : all) {
    std::vector<char> seen(max_index + 1, 0);
    std::vector<double> values;
    auto add = [&](std::size_t row, double v) {
      if (seen[row]) return;
      seen[row] = 1;
      values.push_back(v);
    };
    const auto in_col = std::find(ds.input_channels.begin(), ds.input_channels.end(), id);
    const auto out_col = std::find(ds.target_channels.begin(), ds.target_channels.end(), id);
    for (const auto& s : ds.samples) {
      if (in_col != ds.input_channels.end()) {
        const auto c = static_cast<std::size_t>(in_col - ds.input_channels.begin());
        for (std::size_t r = 0; r < w_in; ++r) add(s.origin_index - w_in + r, s.input(r, c));
      }
      if (out_col != ds.target_channels.end()) {
        const auto c = static_cast<std::size_t>(out_col - ds.target_channels.begin());
        for (std::size_t r = 0; r < s.target.rows; ++r) add(s.origin_index + r, s.target(r, c));
      }
    }
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    double sd = std::sqrt(var / static_cast<double>(values.size()));
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) sd = 1.0;
    stats.channels[id] = {mean, sd};
  }
  return stats;
}

// Applies z-scoring to raw samples; the stats travel with the dataset.
inline WindowedDataset normalize(WindowedDataset ds, const NormalizationStats& stats) {
  require(!ds.normalized, Errc::ConfigError, "dataset is already normalized");
  for (auto& s : ds.samples) {
    for (std::size_t r = 0; r < s.input.rows; ++r)
      for (std::size_t c = 0; c < s.input.cols; ++c)
        s.input(r, c) = stats.normalize(ds.input_channels[c], s.input(r, c));
    for (std::size_t r = 0; r < s.target.rows; ++r)
      for (std::size_t c = 0; c < s.target.cols; ++c)
        s.target(r, c) = stats.normalize(ds.target_channels[c], s.target(r, c));
  }
  ds.norm_stats = stats;
  ds.normalized = true;
  return ds;
}

inline WindowedDataset denormalize(WindowedDataset ds) {
  if (!ds.normalized) return ds;
  for (auto& s : ds.samples) {
    for (std::size_t r = 0; r < s.input.rows; ++r)
      for (std::size_t c = 0; c < s.input.cols; ++c)
        s.input(r, c) = ds.norm_stats.denormalize(ds.input_channels[c], s.input(r, c));
    for (std::size_t r = 0; r < s.target.rows; ++r)
      for (std::size_t c = 0; c < s.target.cols; ++c)
        s.target(r, c) = ds.norm_stats.denormalize(ds.target_channels[c], s.target(r, c));
  }
  ds.normalized = false;
  return ds;
}

}  // namespace scour
