#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "scourcast/error.hpp"
#include "scourcast/timeseries.hpp"

namespace scour {

struct RawReading {
  Timestamp timestamp;
  ChannelId channel = ChannelId::Sonar;
  double value = 0.0;
};

enum class RowIssue { UnknownChannel, UnparsableTimestamp, BadValue, WrongFieldCount };

inline std::string_view row_issue_name(RowIssue issue) {
  switch (issue) {
    case RowIssue::UnknownChannel: return "UnknownChannel";
    case RowIssue::UnparsableTimestamp: return "UnparsableTimestamp";
    case RowIssue::BadValue: return "BadValue";
    case RowIssue::WrongFieldCount: return "WrongFieldCount";
  }
  return "?";
}

struct MalformedRow {
  std::size_t line = 0;  // 1-based line number in the file
  RowIssue issue = RowIssue::BadValue;
  std::string text;
};

struct ParsedReadings {
  std::vector<RawReading> readings;
  std::vector<MalformedRow> malformed;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      fields.push_back(trim(line.substr(start, i - start)));
      start = i + 1;
    }
  }
  return fields;
}

inline bool parse_double(std::string_view text, double& out) {
  if (text.empty()) return false;
  std::string buf(text);
  char* end = nullptr;
  out = std::strtod(buf.c_str(), &end);
  return end == buf.c_str() + buf.size();
}

}  // namespace detail

// Long-format sensor CSV: header `timestamp,channel,value`, one reading per row.
// Malformed rows are reported and skipped.
inline ParsedReadings parse_sensor_csv(std::string_view bytes) {
  if (bytes.size() >= 3 && static_cast<unsigned char>(bytes[0]) == 0xEF &&
      static_cast<unsigned char>(bytes[1]) == 0xBB && static_cast<unsigned char>(bytes[2]) == 0xBF) {
    bytes.remove_prefix(3);
  }
  require(!detail::trim(bytes).empty(), Errc::EmptyFile, "sensor CSV is empty");

  ParsedReadings out;
  std::size_t line_no = 0;
  bool first = true;
  std::size_t pos = 0;
  while (pos <= bytes.size()) {
    std::size_t nl = bytes.find('\n', pos);
    if (nl == std::string_view::npos) nl = bytes.size();
    std::string_view line = detail::trim(bytes.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (first) {
      first = false;
      if (fields.size() == 3 && parse_iso8601(fields[0]) == std::nullopt) {
        std::string f0(fields[0]);
        std::transform(f0.begin(), f0.end(), f0.begin(), ::tolower);
        if (f0 == "timestamp") continue;
      }
    }
    if (fields.size() != 3) {
      out.malformed.push_back({line_no, RowIssue::WrongFieldCount, std::string(line)});
      continue;
    }
    auto ts = parse_iso8601(fields[0]);
    if (!ts) {
      out.malformed.push_back({line_no, RowIssue::UnparsableTimestamp, std::string(line)});
      continue;
    }
    auto ch = parse_channel(fields[1]);
    if (!ch) {
      out.malformed.push_back({line_no, RowIssue::UnknownChannel, std::string(line)});
      continue;
    }
    double value = 0.0;
    if (!detail::parse_double(fields[2], value) || !std::isfinite(value)) {
      out.malformed.push_back({line_no, RowIssue::BadValue, std::string(line)});
      continue;
    }
    out.readings.push_back({*ts, *ch, value});
  }
  require(!out.readings.empty() || !out.malformed.empty(), Errc::EmptyFile,
          "sensor CSV has a header but no rows");
  return out;
}

// Inverse of parse_sensor_csv for a frame: masked values are omitted,
// values printed with 17 significant digits.
inline std::string format_sensor_csv(const TimeSeriesFrame& frame) {
  std::string out = "timestamp,channel,value\n";
  char buf[64];
  const auto ids = frame.channel_ids();
  for (std::size_t i = 0; i < frame.size(); ++i) {
    const std::string ts = format_iso8601(frame.timestamp(i));
    for (ChannelId id : ids) {
      const auto& ch = frame.channel(id);
      if (ch.missing[i]) continue;
      std::snprintf(buf, sizeof buf, "%.17g", ch.values[i]);
      out += ts;
      out += ',';
      out += channel_name(id);
      out += ',';
      out += buf;
      out += '\n';
    }
  }
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), Errc::IoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline ParsedReadings parse_sensor_csv_file(const std::string& path) {
  return parse_sensor_csv(read_file(path));
}

namespace detail {

inline double median_of(std::vector<double>& v) {
  const std::size_t n = v.size();
  const std::size_t mid = n / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (n % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

}  // namespace detail

// Buckets readings into a shared hourly grid (floor to the hour) spanning the
// first to the last occupied hour. Each bucket takes the median of its
// readings; empty buckets are masked.
inline TimeSeriesFrame resample_hourly(const std::vector<RawReading>& readings) {
  require(!readings.empty(), Errc::SpanTooShort, "no readings to resample");
  Timestamp lo = readings.front().timestamp.floor_hour();
  Timestamp hi = lo;
  for (const auto& r : readings) {
    lo = std::min(lo, r.timestamp.floor_hour());
    hi = std::max(hi, r.timestamp.floor_hour());
  }
  const std::int64_t hours = (hi.seconds_since_epoch - lo.seconds_since_epoch) / kSecondsPerHour + 1;
  require(hours >= 2, Errc::SpanTooShort, "readings must span at least two hourly grid positions");
  const auto n = static_cast<std::size_t>(hours);

  std::map<ChannelId, std::vector<std::vector<double>>> buckets;
  for (const auto& r : readings) {
    auto& b = buckets[r.channel];
    if (b.empty()) b.resize(n);
    const auto idx = static_cast<std::size_t>(
        (r.timestamp.floor_hour().seconds_since_epoch - lo.seconds_since_epoch) / kSecondsPerHour);
    b[idx].push_back(r.value);
  }

  std::vector<Timestamp> grid(n);
  for (std::size_t i = 0; i < n; ++i) grid[i] = lo.plus_hours(static_cast<std::int64_t>(i));
  TimeSeriesFrame frame(std::move(grid));
  for (auto& [id, b] : buckets) {
    std::vector<double> values(n, 0.0);
    std::vector<bool> missing(n, true);
    for (std::size_t i = 0; i < n; ++i) {
      if (b[i].empty()) continue;
      values[i] = detail::median_of(b[i]);
      missing[i] = false;
    }
    frame.set_channel(id, std::move(values), std::move(missing));
  }
  return frame;
}

struct DespikeResult {
  TimeSeriesFrame frame;
  std::size_t masked = 0;
};

inline constexpr double kMadFloor = 1e-6;

// Masks points whose distance from the centred rolling median exceeds
// k_mad * rolling MAD (MAD floored at kMadFloor). The window covers
// window/2 rows either side of the point, unmasked rows only. Passes repeat
// until nothing new is masked, so the result is a fixed point.
inline DespikeResult despike(const TimeSeriesFrame& frame, std::size_t window = 24, double k_mad = 6.0) {
  require(window >= 2, Errc::ConfigError, "despike window must be at least 2");
  require(k_mad > 0.0, Errc::ConfigError, "k_mad must be positive");
  DespikeResult result{frame, 0};
  const std::size_t n = frame.size();
  const std::size_t half = window / 2;
  for (ChannelId id : frame.channel_ids()) {
    const auto& src = frame.channel(id);
    std::vector<bool> missing = src.missing;
    std::vector<double> buf, dev;
    for (;;) {
      std::vector<std::size_t> flagged;
      for (std::size_t i = 0; i < n; ++i) {
        if (missing[i]) continue;
        const std::size_t a = i >= half ? i - half : 0;
        const std::size_t b = std::min(n - 1, i + half);
        buf.clear();
        for (std::size_t j = a; j <= b; ++j)
          if (!missing[j]) buf.push_back(src.values[j]);
        if (buf.size() < 3) continue;
        dev = buf;
        const double med = detail::median_of(buf);
        for (double& d : dev) d = std::abs(d - med);
        const double mad = std::max(detail::median_of(dev), kMadFloor);
        if (std::abs(src.values[i] - med) > k_mad * mad) flagged.push_back(i);
      }
      if (flagged.empty()) break;
      for (std::size_t i : flagged) missing[i] = true;
      result.masked += flagged.size();
    }
    result.frame.set_channel(id, src.values, std::move(missing));
  }
  return result;
}

struct FillResult {
  TimeSeriesFrame frame;
  std::size_t filled = 0;
};

// Linearly interpolates masked runs of at most max_gap rows that have an
// unmasked neighbour on both sides.
inline FillResult fill_short_gaps(const TimeSeriesFrame& frame, std::size_t max_gap = 3) {
  FillResult result{frame, 0};
  const std::size_t n = frame.size();
  for (ChannelId id : frame.channel_ids()) {
    const auto& src = frame.channel(id);
    std::vector<double> values = src.values;
    std::vector<bool> missing = src.missing;
    std::size_t i = 0;
    while (i < n) {
      if (!src.missing[i]) {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j < n && src.missing[j]) ++j;
      const std::size_t run = j - i;
      if (i > 0 && j < n && run <= max_gap) {
        const double left = src.values[i - 1];
        const double right = src.values[j];
        for (std::size_t k = i; k < j; ++k) {
          const double frac = static_cast<double>(k - i + 1) / static_cast<double>(run + 1);
          values[k] = left + (right - left) * frac;
          missing[k] = false;
        }
        result.filled += run;
      }
      i = j;
    }
    result.frame.set_channel(id, std::move(values), std::move(missing));
  }
  return result;
}

struct PreprocessParams {
  std::size_t despike_window = 24;
  double k_mad = 6.0;
  std::size_t max_gap = 3;
};

struct PreprocessReport {
  std::size_t parsed = 0;
  std::size_t malformed = 0;
  std::size_t masked_spikes = 0;
  std::size_t filled_gaps = 0;
  std::size_t grid_rows = 0;
  std::vector<MalformedRow> malformed_rows;
};

struct PreprocessOutput {
  TimeSeriesFrame frame;
  PreprocessReport report;
};

// parse -> hourly median bucketing -> despike -> short-gap fill.
inline PreprocessOutput preprocess(std::string_view csv_bytes, const PreprocessParams& params = {}) {
  auto parsed = parse_sensor_csv(csv_bytes);
  PreprocessOutput out;
  out.report.parsed = parsed.readings.size();
  out.report.malformed = parsed.malformed.size();
  out.report.malformed_rows = parsed.malformed;
  auto frame = resample_hourly(parsed.readings);
  auto spikes = despike(frame, params.despike_window, params.k_mad);
  out.report.masked_spikes = spikes.masked;
  auto filled = fill_short_gaps(spikes.frame, params.max_gap);
  out.report.filled_gaps = filled.filled;
  out.report.grid_rows = filled.frame.size();
  out.frame = std::move(filled.frame);
  return out;
}

}  // namespace scour
