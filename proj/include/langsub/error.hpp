#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace langsub {

// Every failure raised by the library carries one of these kinds. The CLI
// maps them onto process exit codes.
enum class ErrorKind {
  InvalidArgument,   // precondition on caller-provided values
  NonFinite,         // NaN/Inf where finite values are required
  BadMagic,
  Truncated,
  TrailingData,
  ManifestMismatch,  // header and sidecar manifest disagree
  ShapeMismatch,
  LanguageOverlap,
  UnknownLayer,
  EmptyLanguage,
  RankOutOfRange,
  Degenerate,        // numerically degenerate input (zero vector, identical points)
  NotOrthonormal,
  UnknownModel,
  LambdaOutOfGrid,
  MissingBasis,
  EmptyInput,
  Parse,
  Io,
  Callback,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid_argument";
    case ErrorKind::NonFinite: return "non_finite";
    case ErrorKind::BadMagic: return "bad_magic";
    case ErrorKind::Truncated: return "truncated";
    case ErrorKind::TrailingData: return "trailing_data";
    case ErrorKind::ManifestMismatch: return "manifest_mismatch";
    case ErrorKind::ShapeMismatch: return "shape_mismatch";
    case ErrorKind::LanguageOverlap: return "language_overlap";
    case ErrorKind::UnknownLayer: return "unknown_layer";
    case ErrorKind::EmptyLanguage: return "empty_language";
    case ErrorKind::RankOutOfRange: return "rank_out_of_range";
    case ErrorKind::Degenerate: return "degenerate";
    case ErrorKind::NotOrthonormal: return "not_orthonormal";
    case ErrorKind::UnknownModel: return "unknown_model";
    case ErrorKind::LambdaOutOfGrid: return "lambda_out_of_grid";
    case ErrorKind::MissingBasis: return "missing_basis";
    case ErrorKind::EmptyInput: return "empty_input";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Io: return "io";
    case ErrorKind::Callback: return "callback";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace langsub
