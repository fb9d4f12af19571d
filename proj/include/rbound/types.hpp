#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>

namespace rbound {

using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class ErrorCode {
  AlgebraicSolveFailure,
  IntegrationDiverged,
  EventChattering,
  NoEquilibrium,
  EquilibriumUnstable,
  SensitivityJumpSingular,
  BackendUnsupported,
  Inconclusive,
  StartNotRecovered,
  ZeroGradient,
  MaxIterations,
  TangentUndefined,
  CorrectorFailed,
  LineSearchExhausted,
  LinearSystemSingular,
  UnknownModel,
  BadOverride,
  InvalidArgument,
};

[[nodiscard]] const char* to_string(ErrorCode code) noexcept;

/// Single exception type for every failure the library reports; `code()`
/// identifies which one.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace rbound
