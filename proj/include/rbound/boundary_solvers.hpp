/**
 * @file boundary_solvers.hpp
 * @brief Points on the recovery boundary G(p) = 0: Newton with backtracking
 *        in one parameter, predictor-corrector continuation in two, and the
 *        closest boundary point (safety margin) by SQP in any dimension.
 *
 * All solvers talk to G through an injected oracle, so they run equally on
 * simulation-backed evaluations and on synthetic test functions. Only
 * recovered points are accepted as iterates; non-recovered evaluations
 * trigger step halving.
 */
#pragma once

#include "rbound/recovery_metrics.hpp"

#include <atomic>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace rbound {

struct GSample {
  double G = 0.0;
  RowVector DG;
  bool recovered = false;
};

using GOracle = std::function<GSample(const Vector& p)>;

/// Oracle with an explicit recovery predicate, for tests and experiments
/// that bypass simulation.
[[nodiscard]] GOracle synthetic_oracle(std::function<double(const Vector&)> G,
                                       std::function<RowVector(const Vector&)> DG,
                                       std::function<bool(const Vector&)> recovered);

/// Oracle backed by evaluate_G with gradient. `counter`, when given, is
/// incremented once per call.
[[nodiscard]] GOracle simulation_oracle(const Scenario& scenario, std::size_t jobs = 1,
                                        std::atomic<std::size_t>* counter = nullptr);

// -- one parameter -------------------------------------------------------------

struct Solver1DConfig {
  double epsilon = 1e-5;
  int max_iterations = 50;
  double zero_gradient = 1e-14;
};

struct Iterate1D {
  double p = 0.0;
  double G = 0.0;
  double DG = 0.0;
  bool recovered = false;
  double mu = 0.0;  ///< step fraction that produced this iterate (0 for the start)
};

struct Solver1DResult {
  double p_star = 0.0;
  double G_star = 0.0;
  double DG_star = 0.0;
  std::vector<Iterate1D> history;
  bool converged = false;
  int newton_steps = 0;      ///< accepted (recovered) updates
  std::size_t evaluations = 0;
};

/// Throws StartNotRecovered, ZeroGradient or MaxIterations.
[[nodiscard]] Solver1DResult find_boundary_1d(const GOracle& oracle, double p0,
                                              const Solver1DConfig& cfg = {});

// -- two parameters --------------------------------------------------------------

struct TraceConfig {
  double epsilon = 1e-5;
  double hyperplane_tolerance = 1e-10;
  int max_corrector_iterations = 25;
  int max_line_search_evaluations = 24;
  double kappa_min_fraction = 1e-4;
  double kappa_growth = 1.5;
  /// Trace stops on leaving this box (either may be empty).
  Vector lower;
  Vector upper;
  bool stop_on_loop = true;
};

struct TracePoint {
  Vector p;
  double G = 0.0;
  RowVector DG;
  Vector eta;                 ///< tangent used for the predictor from the previous point
  double kappa = 0.0;         ///< predictor step that produced this point
  int corrector_iterations = 0;
  double hyperplane_residual = 0.0;
};

struct BoundaryTrace {
  std::vector<TracePoint> points;
  std::size_t evaluations = 0;
  int kappa_reductions = 0;
  std::string stop_reason;
};

/// Tangent [b, -a] / ||DG|| for DG = [a, b].
[[nodiscard]] Vector boundary_tangent(const RowVector& DG);

/// `direction` (+1 or -1) orients the first tangent. Throws TangentUndefined
/// when DG vanishes and CorrectorFailed once kappa drops below
/// kappa_min_fraction of its initial value.
[[nodiscard]] BoundaryTrace trace_boundary_2d(const GOracle& oracle, const Vector& p_start,
                                              double kappa, std::size_t n_points, int direction,
                                              const TraceConfig& cfg = {});

// -- safety margin -----------------------------------------------------------------

struct MarginConfig {
  double epsilon = 1e-5;
  int max_iterations = 100;
  double step_tolerance = 1e-8;
  double kkt_tolerance = 1e-6;
  int max_backtracks = 40;
  double singular_gradient = 1e-14;
};

struct MarginIterate {
  Vector p;
  double G = 0.0;
  RowVector DG;
  bool recovered = false;
  double mu = 0.0;
  double lambda = 0.0;
};

struct MarginResult {
  Vector p0;
  Vector p_star;
  double G_star = 0.0;
  RowVector DG_star;
  double margin = 0.0;    ///< 0.5 (p* - p0)^T A (p* - p0)
  double distance = 0.0;  ///< sqrt((p* - p0)^T A (p* - p0))
  double lambda = 0.0;
  double kkt_residual = 0.0;
  double collinearity_angle = 0.0;  ///< angle between A (p* - p0) and DG(p*)^T, radians
  std::vector<MarginIterate> history;
  int iterations = 0;
  std::size_t evaluations = 0;
  bool converged = false;
};

/// Least-squares multiplier and the stationarity residual
/// ||A (p - p0) + DG^T lambda||_inf.
[[nodiscard]] std::pair<double, double> kkt_residual(const Matrix& A, const Vector& p,
                                                     const Vector& p0, const RowVector& DG);

/// Angle between u and v, ignoring sign (0 when either vanishes).
[[nodiscard]] double line_angle(const Vector& u, const Vector& v);

/// Throws StartNotRecovered, LinearSystemSingular, LineSearchExhausted or
/// MaxIterations. `A` defaults to the identity.
[[nodiscard]] MarginResult safety_margin_nd(const GOracle& oracle, const Vector& p0,
                                            const std::optional<Matrix>& A = std::nullopt,
                                            const MarginConfig& cfg = {});

}  // namespace rbound
