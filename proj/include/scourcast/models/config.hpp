#pragma once

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "scourcast/error.hpp"

namespace scour {

enum class Family { SS, SS2, FB, VCN, DCN, FCN };

inline constexpr Family kAllFamilies[] = {Family::SS, Family::SS2, Family::FB,
                                          Family::VCN, Family::DCN, Family::FCN};

inline std::string_view family_name(Family f) {
  switch (f) {
    case Family::SS: return "ss";
    case Family::SS2: return "ss2";
    case Family::FB: return "fb";
    case Family::VCN: return "vcn";
    case Family::DCN: return "dcn";
    case Family::FCN: return "fcn";
  }
  return "?";
}

inline bool is_lstm_family(Family f) { return f == Family::SS || f == Family::SS2 || f == Family::FB; }
inline bool is_cnn_family(Family f) { return !is_lstm_family(f); }

// LSTM families: fam-(w_in,w_out)-units-dropout
// CNN families:  fam-k1-F1-k2-F2-dropout, optionally fam-(w_in,w_out)-k1-F1-k2-F2-dropout
struct ModelConfig {
  Family family = Family::SS;
  std::size_t w_in = 0, w_out = 0;  // zero for a CNN string without windows
  std::size_t units = 0;
  std::size_t k1 = 0, f1 = 0, k2 = 0, f2 = 0;
  double dropout = 0.0;
  int dropout_decimals = 0;  // digits after the point as written; presentation only

  bool has_windows() const { return w_in > 0; }

  bool operator==(const ModelConfig& o) const {
    return family == o.family && w_in == o.w_in && w_out == o.w_out && units == o.units && k1 == o.k1 &&
           f1 == o.f1 && k2 == o.k2 && f2 == o.f2 && dropout == o.dropout;
  }
};

namespace detail {

inline std::size_t parse_dimension(std::string_view token, std::string_view what, std::string_view text) {
  require(!token.empty(), Errc::SyntaxError, "missing " + std::string(what) + " in '" + std::string(text) + "'");
  std::size_t v = 0;
  bool negative = false;
  std::size_t i = 0;
  if (token[0] == '-') {
    negative = true;
    i = 1;
  }
  require(i < token.size(), Errc::SyntaxError, "bad " + std::string(what) + " in '" + std::string(text) + "'");
  for (; i < token.size(); ++i) {
    require(token[i] >= '0' && token[i] <= '9', Errc::SyntaxError,
            "bad " + std::string(what) + " '" + std::string(token) + "' in '" + std::string(text) + "'");
    v = v * 10 + static_cast<std::size_t>(token[i] - '0');
    require(v < (1u << 24), Errc::SyntaxError, std::string(what) + " too large in '" + std::string(text) + "'");
  }
  require(!negative && v > 0, Errc::NonPositiveDimension,
          std::string(what) + " must be positive in '" + std::string(text) + "'");
  return v;
}

inline double parse_rate(std::string_view token, int& decimals, std::string_view text) {
  require(!token.empty(), Errc::SyntaxError, "missing dropout in '" + std::string(text) + "'");
  std::size_t dots = 0;
  decimals = 0;
  for (std::size_t i = 0; i < token.size(); ++i) {
    const char c = token[i];
    if (c == '.') {
      ++dots;
      continue;
    }
    require(c >= '0' && c <= '9', Errc::SyntaxError, "bad dropout '" + std::string(token) + "' in '" + std::string(text) + "'");
    if (dots) ++decimals;
  }
  require(dots <= 1 && token.front() != '.' && token.back() != '.', Errc::SyntaxError,
          "bad dropout '" + std::string(token) + "' in '" + std::string(text) + "'");
  const double rate = std::strtod(std::string(token).c_str(), nullptr);
  require(rate < 1.0, Errc::SyntaxError, "dropout must lie in [0, 1) in '" + std::string(text) + "'");
  return rate;
}

inline std::vector<std::string_view> split_dash(std::string_view s) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == '-') {
      parts.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return parts;
}

inline std::string format_rate(double rate, int decimals) {
  char buf[64];
  for (int d = std::max(decimals, 0); d <= 17; ++d) {
    std::snprintf(buf, sizeof buf, "%.*f", d, rate);
    if (std::strtod(buf, nullptr) == rate) return buf;
  }
  std::snprintf(buf, sizeof buf, "%.17g", rate);
  return buf;
}

}  // namespace detail

inline std::optional<Family> family_from_name(std::string_view name) {
  for (Family f : kAllFamilies)
    if (family_name(f) == name) return f;
  return std::nullopt;
}

inline ModelConfig parse_config(std::string_view text) {
  require(!text.empty(), Errc::SyntaxError, "empty model configuration");
  const std::size_t dash = text.find('-');
  require(dash != std::string_view::npos, Errc::SyntaxError, "no fields in '" + std::string(text) + "'");
  const auto family = family_from_name(text.substr(0, dash));
  require(family.has_value(), Errc::UnknownFamily,
          "unknown model family '" + std::string(text.substr(0, dash)) + "' in '" + std::string(text) + "'");
  ModelConfig cfg;
  cfg.family = *family;
  std::string_view rest = text.substr(dash + 1);

  if (!rest.empty() && rest.front() == '(') {
    const std::size_t close = rest.find(')');
    require(close != std::string_view::npos, Errc::SyntaxError, "unclosed window pair in '" + std::string(text) + "'");
    const std::string_view pair = rest.substr(1, close - 1);
    const std::size_t comma = pair.find(',');
    require(comma != std::string_view::npos, Errc::SyntaxError, "window pair needs a comma in '" + std::string(text) + "'");
    cfg.w_in = detail::parse_dimension(pair.substr(0, comma), "w_in", text);
    cfg.w_out = detail::parse_dimension(pair.substr(comma + 1), "w_out", text);
    rest = rest.substr(close + 1);
    require(!rest.empty() && rest.front() == '-', Errc::SyntaxError, "expected '-' after windows in '" + std::string(text) + "'");
    rest = rest.substr(1);
  } else {
    require(is_cnn_family(cfg.family), Errc::SyntaxError,
            "LSTM configuration needs a (w_in,w_out) pair: '" + std::string(text) + "'");
  }

  const auto parts = detail::split_dash(rest);
  if (is_lstm_family(cfg.family)) {
    require(parts.size() == 2, Errc::SyntaxError, "expected fam-(w_in,w_out)-units-dropout, got '" + std::string(text) + "'");
    cfg.units = detail::parse_dimension(parts[0], "units", text);
  } else {
    require(parts.size() == 5, Errc::SyntaxError, "expected fam-k1-F1-k2-F2-dropout, got '" + std::string(text) + "'");
    cfg.k1 = detail::parse_dimension(parts[0], "k1", text);
    cfg.f1 = detail::parse_dimension(parts[1], "F1", text);
    cfg.k2 = detail::parse_dimension(parts[2], "k2", text);
    cfg.f2 = detail::parse_dimension(parts[3], "F2", text);
  }
  cfg.dropout = detail::parse_rate(parts.back(), cfg.dropout_decimals, text);
  return cfg;
}

inline std::string format_config(const ModelConfig& c) {
  std::string s(family_name(c.family));
  if (c.has_windows()) s += "-(" + std::to_string(c.w_in) + "," + std::to_string(c.w_out) + ")";
  if (is_lstm_family(c.family)) {
    s += "-" + std::to_string(c.units);
  } else {
    s += "-" + std::to_string(c.k1) + "-" + std::to_string(c.f1) + "-" + std::to_string(c.k2) + "-" +
         std::to_string(c.f2);
  }
  return s + "-" + detail::format_rate(c.dropout, c.dropout_decimals);
}

}  // namespace scour
