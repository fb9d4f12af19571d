/**
 * @file recovery_metrics.hpp
 * @brief Recovery classification and the inverse-sensitivity metrics
 *        H(p, t) = 1 / ||chi(p, t)||_1 and G(p) = min_t H(p, t).
 *
 * G is strictly positive on the recovery region and vanishes on its
 * boundary, so boundary points are roots of G. Its gradient is
 * dH/dp(p, t_hat), which needs second-order sensitivities only at t_hat.
 */
#pragma once

#include "rbound/sensitivities.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace rbound {

/// Rows of chi entering the norm. Empty selection means all states.
struct StateMask {
  std::vector<bool> selected;

  static StateMask all(std::size_t n) { return {std::vector<bool>(n, true)}; }
  static StateMask from_names(const HybridSystem& sys, const std::vector<std::string>& names);

  [[nodiscard]] bool includes(std::size_t i) const { return selected.empty() || selected.at(i); }
  [[nodiscard]] std::size_t count(std::size_t n) const;
  /// Throws InvalidArgument on a size mismatch or an empty selection.
  void check(std::size_t n) const;
};

/// 1 / sum over masked rows of |chi_ij|; +inf when that sum is zero.
template <class Derived>
typename Derived::Scalar evaluate_H(const Eigen::MatrixBase<Derived>& chi, const StateMask& mask) {
  using Scalar = typename Derived::Scalar;
  Scalar norm(0);
  for (Eigen::Index r = 0; r < chi.rows(); ++r) {
    if (mask.includes(static_cast<std::size_t>(r))) norm += chi.row(r).cwiseAbs().sum();
  }
  if (norm == Scalar(0)) return std::numeric_limits<Scalar>::infinity();
  return Scalar(1) / norm;
}

struct RecoveryConfig {
  /// End of simulation, measured from disturbance onset.
  double horizon = 20.0;
  /// Radius of the recovery ball in the infinity norm.
  double delta = 1e-3;
  /// Settling window as a fraction of the horizon, taken at its end.
  double window_fraction = 0.1;
  /// Upper limit of the G minimization (defaults to the horizon).
  std::optional<double> g_horizon;
  /// Boundary tolerance on |G|.
  double epsilon = 1e-5;
  /// Per-state deviation from the SEP that proves non-recovery (empty or
  /// +inf entries disable). Checked during the post-disturbance phase.
  Vector escape_radius;
  /// Minimize H from disturbance onset (true) or from clearing (false).
  bool include_disturbance = true;
  /// Golden-section resolution for t_hat relative to the G-horizon.
  double time_resolution = 1e-8;

  [[nodiscard]] double g_end() const { return g_horizon.value_or(horizon); }
  void check() const;
};

enum class RecoveryStatus { Recovered, NotRecovered, Diverged, Escaped, SettledElsewhere, Inconclusive };

[[nodiscard]] const char* to_string(RecoveryStatus s) noexcept;

/// Full classification; never throws.
[[nodiscard]] RecoveryStatus assess_recovery(const StateTrajectory& traj, const Vector& x_sep,
                                             const RecoveryConfig& cfg);

/// True iff the trajectory stays within delta of x_sep over the settling
/// window. Throws Inconclusive when it neither settles nor escapes.
[[nodiscard]] bool classify_recovery(const StateTrajectory& traj, const Vector& x_sep,
                                     const RecoveryConfig& cfg);

/// Everything needed to evaluate G at a parameter value.
struct Scenario {
  HybridSystem system;
  PhaseSchedule schedule;
  StateMask mask;
  RecoveryConfig recovery;
  IntegrationConfig integration;
};

/// The gradient's finite-difference step for p_j is capped at this fraction
/// of 1/|chi_j|_1, an estimate of the distance to the boundary along p_j.
inline constexpr double kBoundaryStepFraction = 1e-3;

struct GOptions {
  bool want_gradient = false;
  /// Skip the 2P perturbed runs when the point does not recover.
  bool gradient_only_if_recovered = false;
  bool want_series = false;
  std::size_t jobs = 1;
};

struct GEvaluation {
  Vector p;
  double G = kInf;
  double t_hat = 0.0;
  std::optional<RowVector> DG;
  bool recovered = false;
  RecoveryStatus status = RecoveryStatus::NotRecovered;
  /// Set when t_hat sits on an event time; DG may be one-sided there.
  bool gradient_at_kink = false;
  Matrix chi_hat;
  Vector x_sep;
  std::vector<std::pair<double, double>> H_series;
  std::size_t event_count = 0;
  double min_indicator_margin = kInf;
  std::size_t simulations = 0;
  /// Filled by evaluate_many when the evaluation threw.
  std::optional<std::string> error;
};

/// Post-disturbance stable equilibrium, searched from the pre-disturbance state.
[[nodiscard]] Equilibrium post_disturbance_equilibrium(const Scenario& sc, const Vector& p);

[[nodiscard]] GEvaluation evaluate_G(const Scenario& sc, const Vector& p,
                                     const GOptions& options = {});

[[nodiscard]] GEvaluation evaluate_G(const HybridSystem& sys, const PhaseSchedule& schedule,
                                     const Vector& p, const StateMask& mask,
                                     const RecoveryConfig& recovery,
                                     const IntegrationConfig& integration, bool want_gradient);

/// DG from chi and chi2 at one instant, masked. sign(0) = +1.
[[nodiscard]] RowVector gradient_from_sensitivities(const Matrix& chi, const Matrix& chi2,
                                                    const StateMask& mask);

/// Evaluates many points on up to `jobs` threads. Failures land in
/// GEvaluation::error instead of aborting the batch; results keep input order.
[[nodiscard]] std::vector<GEvaluation> evaluate_many(const Scenario& sc,
                                                     const std::vector<Vector>& points,
                                                     const GOptions& options, std::size_t jobs);

}  // namespace rbound
