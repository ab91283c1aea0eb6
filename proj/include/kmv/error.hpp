#pragma once

#include <stdexcept>
#include <string>

namespace kmv {

enum class ErrorKind {
  kNotBlockTriangular,
  kRankDeficientBlock,
  kGridTooCoarse,
  kRegularityError,
  kNotHypoelliptic,
  kQuadratureError,
  kNoConvergence,
  kLadderExhausted,
  kGradientBoundViolated,
  kNonConvergence,
  kNotADensity,
  kConfigError,
  kInvalidArgument,
  kIoError,
};

const char* to_string(ErrorKind kind);

/// All library failures are reported through this exception; `kind()` lets
/// callers (the CLI in particular) map failures to exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kNotBlockTriangular: return "NotBlockTriangular";
    case ErrorKind::kRankDeficientBlock: return "RankDeficientBlock";
    case ErrorKind::kGridTooCoarse: return "GridTooCoarse";
    case ErrorKind::kRegularityError: return "RegularityError";
    case ErrorKind::kNotHypoelliptic: return "NotHypoelliptic";
    case ErrorKind::kQuadratureError: return "QuadratureError";
    case ErrorKind::kNoConvergence: return "NoConvergence";
    case ErrorKind::kLadderExhausted: return "LadderExhausted";
    case ErrorKind::kGradientBoundViolated: return "GradientBoundViolated";
    case ErrorKind::kNonConvergence: return "NonConvergence";
    case ErrorKind::kNotADensity: return "NotADensity";
    case ErrorKind::kConfigError: return "ConfigError";
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
    case ErrorKind::kIoError: return "IoError";
  }
  return "Error";
}

#define KMV_THROW(kind, msg) throw ::kmv::Error(::kmv::ErrorKind::kind, (msg))

#define KMV_DEMAND(cond, msg)                                           \
  do {                                                                  \
    if (!(cond)) KMV_THROW(kInvalidArgument, std::string(msg) + " [" #cond "]"); \
  } while (0)

}  // namespace kmv
