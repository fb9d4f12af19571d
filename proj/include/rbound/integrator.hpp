/**
 * @file integrator.hpp
 * @brief Dormand-Prince 5(4) integration of a switched semi-explicit
 *        index-1 DAE with event localization on the dense output.
 *
 * The algebraic states are eliminated at every stage by a Newton solve of
 * the active constraints. Extra quantities integrated alongside x (the
 * trajectory sensitivities, for instance) plug in through Augmentation and
 * share the step-size control, dense output and event handling.
 */
#pragma once

#include "rbound/hybrid_model.hpp"

#include <Eigen/Eigenvalues>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace rbound {

struct IntegrationConfig {
  double rel_tol = 1e-8;
  double abs_tol = 1e-10;
  double event_time_tolerance = 1e-10;
  double indicator_tolerance = 1e-7;
  double max_step = 0.05;
  /// End of the simulation, measured from disturbance onset.
  double horizon = 20.0;
  double output_step = 0.01;
  double divergence_threshold = 1e6;
  std::size_t max_events = 10000;
  std::size_t max_steps = 5'000'000;
  AlgebraicConfig algebraic{};
  /// When false a divergent run ends early with StateTrajectory::diverged set.
  bool divergence_is_error = true;

  /// Throws InvalidArgument on non-positive tolerances or horizon.
  void check() const;
};

enum class EventKind { Indicator, PhaseBoundary };

struct EventRecord {
  EventKind kind = EventKind::Indicator;
  double time = 0.0;
  std::size_t indicator = 0;  ///< segment index for Indicator events
  int transition = 0;         ///< +1 for minus->plus, -1 for plus->minus, 0 for phase boundaries
  std::string label;
  Vector x_minus, y_minus, x_plus, y_plus;
  Vector f_minus, f_plus;
  RowVector gradient_x, gradient_y, gradient_p;
  double indicator_value = 0.0;
};

/// Time-sampled x(t), y(t) plus every event in time order. Samples at an
/// event time hold the post-event values.
struct StateTrajectory {
  std::vector<double> times;
  std::vector<Vector> x;
  std::vector<Vector> y;
  std::vector<EventRecord> events;
  double end_time = 0.0;
  double post_start_time = 0.0;  ///< start of the post-disturbance phase
  bool diverged = false;
  bool stopped_early = false;
};

/// Piecewise 4th-order interpolant over the integrated vector, one piece
/// per accepted step. Right-continuous at event times.
class DenseOutput {
 public:
  struct Piece {
    double t0 = 0.0;
    double h = 0.0;
    double t_end = 0.0;
    Matrix coeffs;  ///< dim x 5
  };

  void append(Piece piece) { pieces_.push_back(std::move(piece)); }
  [[nodiscard]] bool empty() const { return pieces_.empty(); }
  [[nodiscard]] double begin_time() const { return pieces_.front().t0; }
  [[nodiscard]] double end_time() const { return pieces_.back().t_end; }
  [[nodiscard]] Vector operator()(double t) const;
  [[nodiscard]] const std::vector<Piece>& pieces() const { return pieces_; }

  static Vector evaluate(const Piece& piece, double t);

 private:
  std::vector<Piece> pieces_;
};

/// Local linearization of the active DAE at one point.
struct Linearization {
  PartialJacobians f;
  PartialJacobians g;
  Eigen::PartialPivLU<Matrix> gy;  ///< factorization of dg/dy (m > 0)

  /// dx'/dx with y eliminated: fx - fy gy^-1 gx.
  [[nodiscard]] Matrix reduced_dx() const;
  /// dx'/dp with y eliminated.
  [[nodiscard]] Matrix reduced_dp() const;
  /// dy/dx and dy/dp along the constraint manifold.
  [[nodiscard]] Matrix dy_dx() const;
  [[nodiscard]] Matrix dy_dp() const;
};

[[nodiscard]] Linearization linearize(const HybridSystem& sys, const Vector& x, const Vector& y,
                                      const Vector& p, Mode mode, const Branches& branches);

struct PointContext {
  const HybridSystem& system;
  double t;
  Mode mode;
  const Vector& x;
  const Vector& y;
  const Vector& p;
  const Branches& branches;
  const Vector& f;
  const Linearization& lin;
};

struct InitialContext {
  const HybridSystem& system;
  const Vector& p;
  Mode mode;
  const Vector& x0;
  const Vector& y0;
  const Branches& branches;
  bool from_equilibrium;
};

struct JumpContext {
  EventKind kind;
  double time;
  const PointContext& before;
  const PointContext& after;
  /// Indicator events: gradient of s at the event.
  std::optional<IndicatorGradient> gradient;
  /// Phase boundaries: d(boundary time)/dp.
  RowVector boundary_time_gradient;
  std::size_t indicator = 0;
  std::string label;
};

/// Extra state carried through integration. Implementations must be
/// deterministic; one instance serves one run.
class Augmentation {
 public:
  virtual ~Augmentation() = default;
  [[nodiscard]] virtual Eigen::Index size() const = 0;
  [[nodiscard]] virtual Vector initial(const InitialContext& ctx) = 0;
  virtual void derivative(const PointContext& ctx, const Eigen::Ref<const Vector>& a,
                          Eigen::Ref<Vector> da) const = 0;
  virtual void jump(const JumpContext& ctx, Eigen::Ref<Vector> a) = 0;
};

struct RunOptions {
  bool grid_output = true;
  bool store_dense = false;
  /// Additional output instants (any order); reported in ascending order.
  std::vector<double> extra_times;
  /// Early stop predicate checked after each accepted step.
  std::function<bool(double t, const Vector& x)> stop_when;
};

struct RunResult {
  StateTrajectory trajectory;
  std::vector<Vector> augmented;  ///< per grid sample
  std::vector<double> extra_times;
  std::vector<Vector> extra_x;
  std::vector<Vector> extra_augmented;
  DenseOutput dense;  ///< over [x; augmented]
  Vector x_initial;
  Vector y_initial;
  Branches initial_branches;
  bool from_equilibrium = false;
  std::size_t steps = 0;
  std::size_t rejected_steps = 0;
};

/// Integrates the schedule at p. `augmentation` may be null.
[[nodiscard]] RunResult simulate(const HybridSystem& sys, const PhaseSchedule& schedule,
                                 const Vector& p, const IntegrationConfig& config,
                                 Augmentation* augmentation = nullptr,
                                 const RunOptions& options = {});

[[nodiscard]] StateTrajectory integrate(const HybridSystem& sys, const PhaseSchedule& schedule,
                                        const Vector& p, const IntegrationConfig& config);

struct EquilibriumConfig {
  double tolerance = 1e-10;
  int max_iterations = 100;
  bool require_stable = true;
};

struct Equilibrium {
  Vector x;
  Vector y;
  Branches branches;
  Eigen::VectorXcd eigenvalues;
  int iterations = 0;
};

/// Damped Newton on [f; g] = 0 followed by a linearization stability check.
[[nodiscard]] Equilibrium find_equilibrium(const HybridSystem& sys, const Vector& p,
                                           const Vector& x_guess, const Vector& y_guess,
                                           Mode mode, const EquilibriumConfig& config = {});

/// Convenience overload: y_guess from the model (or zeros), mode 0.
[[nodiscard]] Equilibrium find_equilibrium(const HybridSystem& sys, const Vector& p,
                                           const Vector& x_guess);

/// State the disturbance starts from: the equilibrium in the schedule's
/// equilibrium mode, or the model's explicit initial state.
struct InitialPoint {
  Vector x;
  Vector y;
  Branches branches;
  bool from_equilibrium = false;
};

[[nodiscard]] InitialPoint pre_disturbance_state(const HybridSystem& sys,
                                                 const PhaseSchedule& schedule, const Vector& p,
                                                 const AlgebraicConfig& algebraic = {});

}  // namespace rbound
