#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace scour {

// Every failure the library reports carries one of these codes.
enum class Errc {
  FrameTooShort,
  EmptyPartition,
  InvalidSplit,
  EmptyFile,
  SpanTooShort,
  MissingChannel,
  InvalidCode,
  DuplicateToken,
  ShapeMismatch,
  FilterTooLong,
  BadStride,
  DegenerateBatch,
  BadRate,
  EmptyMask,
  NonFiniteGradient,
  NonDeterministic,
  SyntaxError,
  UnknownFamily,
  NonPositiveDimension,
  ConfigMismatch,
  DivergedLoss,
  FoldTooSmall,
  NoRecords,
  TrialTooSmall,
  BadFraction,
  BadSpec,
  ChannelMismatch,
  ConfigError,
  IoError,
};

inline std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::FrameTooShort: return "FrameTooShort";
    case Errc::EmptyPartition: return "EmptyPartition";
    case Errc::InvalidSplit: return "InvalidSplit";
    case Errc::EmptyFile: return "EmptyFile";
    case Errc::SpanTooShort: return "SpanTooShort";
    case Errc::MissingChannel: return "MissingChannel";
    case Errc::InvalidCode: return "InvalidCode";
    case Errc::DuplicateToken: return "DuplicateToken";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::FilterTooLong: return "FilterTooLong";
    case Errc::BadStride: return "BadStride";
    case Errc::DegenerateBatch: return "DegenerateBatch";
    case Errc::BadRate: return "BadRate";
    case Errc::EmptyMask: return "EmptyMask";
    case Errc::NonFiniteGradient: return "NonFiniteGradient";
    case Errc::NonDeterministic: return "NonDeterministic";
    case Errc::SyntaxError: return "SyntaxError";
    case Errc::UnknownFamily: return "UnknownFamily";
    case Errc::NonPositiveDimension: return "NonPositiveDimension";
    case Errc::ConfigMismatch: return "ConfigMismatch";
    case Errc::DivergedLoss: return "DivergedLoss";
    case Errc::FoldTooSmall: return "FoldTooSmall";
    case Errc::NoRecords: return "NoRecords";
    case Errc::TrialTooSmall: return "TrialTooSmall";
    case Errc::BadFraction: return "BadFraction";
    case Errc::BadSpec: return "BadSpec";
    case Errc::ChannelMismatch: return "ChannelMismatch";
    case Errc::ConfigError: return "ConfigError";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

inline void require(bool condition, Errc code, const std::string& what) {
  if (!condition) throw Error(code, what);
}

}  // namespace scour
