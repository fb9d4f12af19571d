/**
 * @file hybrid_model.hpp
 * @brief Parameterized switched differential-algebraic systems and the
 *        disturbance scenario applied to them.
 *
 * A system is
 *
 *     x' = f(x, y, p, mode)
 *     0  = g(x, y, p, mode)   assembled from switched constraint segments,
 *
 * where every segment i contributes rows g_i^+ while its indicator s_i >= 0
 * and g_i^- while s_i < 0. The mode is an integer chosen by the phase
 * schedule (pre-disturbance, disturbance-on, post-disturbance, ...).
 */
#pragma once

#include "rbound/types.hpp"

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace rbound {

using Mode = int;

using VectorField =
    std::function<Vector(const Vector& x, const Vector& y, const Vector& p, Mode mode)>;
using IndicatorFn = std::function<double(const Vector& x, const Vector& y, const Vector& p)>;

/// Partial derivatives of a vector-valued map with respect to x, y and p.
struct PartialJacobians {
  Matrix dx;
  Matrix dy;
  Matrix dp;
};

using JacobianFn =
    std::function<PartialJacobians(const Vector& x, const Vector& y, const Vector& p, Mode mode)>;

/// Gradient rows of a scalar switching indicator.
struct IndicatorGradient {
  RowVector dx;
  RowVector dy;
  RowVector dp;
};

using IndicatorGradientFn =
    std::function<IndicatorGradient(const Vector& x, const Vector& y, const Vector& p)>;

enum class Branch : unsigned char { Plus, Minus };
using Branches = std::vector<Branch>;

/// One block of algebraic equations. Unswitched blocks leave `indicator`
/// and `branch_minus` empty and always use `branch_plus`.
struct SwitchedConstraint {
  std::string name;
  std::size_t rows = 0;
  VectorField branch_plus;
  VectorField branch_minus;
  IndicatorFn indicator;
  double hysteresis_band = 0.0;

  JacobianFn plus_jacobian;
  JacobianFn minus_jacobian;
  IndicatorGradientFn indicator_gradient;

  [[nodiscard]] bool switched() const { return static_cast<bool>(indicator); }
};

/// The switched DAE. Immutable once built; all evaluation helpers below are
/// free functions taking it by const reference.
struct HybridSystem {
  std::string name;
  std::size_t n = 0;
  std::size_t m = 0;
  std::size_t parameter_count = 0;
  std::vector<std::string> state_names;
  std::vector<std::string> algebraic_names;

  VectorField f;
  JacobianFn f_jacobian;
  std::vector<SwitchedConstraint> constraints;

  /// When set, the disturbance starts from this state instead of the
  /// pre-disturbance equilibrium.
  std::function<Vector(const Vector& p)> initial_state;
  std::function<Matrix(const Vector& p)> initial_state_jacobian;

  /// Starting point for equilibrium and algebraic solves.
  std::function<std::pair<Vector, Vector>(const Vector& p)> equilibrium_guess;
};

struct Phase {
  std::string label;
  Mode mode = 0;
  double duration = 0.0;
  /// Duration read from p[*duration_parameter] instead of `duration`.
  std::optional<std::size_t> duration_parameter;
};

/// Pre-disturbance equilibrium in `equilibrium_mode`, then the disturbance
/// phases back to back from t = 0, then the post-disturbance mode until the
/// integration horizon.
struct PhaseSchedule {
  Mode equilibrium_mode = 0;
  std::vector<Phase> disturbance;
  Mode post_mode = 0;
  std::string post_label = "post";
};

/// Phase durations evaluated at p. Throws InvalidArgument on a negative
/// duration; zero-length phases are kept and skipped by the integrator.
[[nodiscard]] std::vector<double> phase_durations(const PhaseSchedule& schedule, const Vector& p);

/// d(end time of disturbance phase k)/dp for every k.
[[nodiscard]] std::vector<RowVector> phase_end_gradients(const PhaseSchedule& schedule,
                                                         std::size_t parameter_count);

struct ParameterSpace {
  std::vector<std::string> names;
  Vector nominal;
  Vector lower;  ///< -inf where unbounded
  Vector upper;  ///< +inf where unbounded
  std::vector<std::string> units;
  std::optional<Matrix> weight;

  [[nodiscard]] std::size_t dimension() const { return names.size(); }
  [[nodiscard]] std::optional<std::size_t> index_of(const std::string& name) const;
  [[nodiscard]] Matrix weight_or_identity() const;
};

/// Builds an unbounded, unweighted space from names and nominal values.
[[nodiscard]] ParameterSpace make_parameter_space(std::vector<std::string> names, Vector nominal);

struct ValidationReport {
  std::vector<std::string> errors;
  std::vector<std::string> notes;
  std::vector<std::string> finite_difference_fallbacks;

  [[nodiscard]] bool ok() const { return errors.empty(); }
  [[nodiscard]] std::string summary() const;
};

/// Structural and numerical sanity checks at the nominal parameters. Never
/// throws for model defects; they land in the report.
[[nodiscard]] ValidationReport validate(const HybridSystem& system, const ParameterSpace& space);
[[nodiscard]] ValidationReport validate(const HybridSystem& system, const ParameterSpace& space,
                                        const PhaseSchedule& schedule);

// -- evaluation helpers ------------------------------------------------------

[[nodiscard]] Vector eval_f(const HybridSystem& sys, const Vector& x, const Vector& y,
                            const Vector& p, Mode mode);
[[nodiscard]] Vector eval_g(const HybridSystem& sys, const Vector& x, const Vector& y,
                            const Vector& p, Mode mode, const Branches& branches);
[[nodiscard]] double eval_indicator(const HybridSystem& sys, std::size_t segment, const Vector& x,
                                    const Vector& y, const Vector& p);

/// Analytic when registered, otherwise central differences with step
/// 1e-7 * max(1, |value|).
[[nodiscard]] PartialJacobians f_jacobians(const HybridSystem& sys, const Vector& x,
                                           const Vector& y, const Vector& p, Mode mode);
[[nodiscard]] PartialJacobians g_jacobians(const HybridSystem& sys, const Vector& x,
                                           const Vector& y, const Vector& p, Mode mode,
                                           const Branches& branches);
[[nodiscard]] IndicatorGradient indicator_gradient(const HybridSystem& sys, std::size_t segment,
                                                   const Vector& x, const Vector& y,
                                                   const Vector& p);

/// Branch implied by the sign of each indicator; s == 0 selects Plus.
[[nodiscard]] Branches select_branches(const HybridSystem& sys, const Vector& x, const Vector& y,
                                       const Vector& p);

/// True when indicator value `s` has left the region of `current`,
/// accounting for the hysteresis band.
[[nodiscard]] bool indicator_crossed(Branch current, double s, double hysteresis_band);

struct AlgebraicConfig {
  double tolerance = 1e-10;
  int max_iterations = 50;
};

struct AlgebraicSolution {
  Vector y;
  Branches branches;
  int iterations = 0;
};

/// Solves the active algebraic constraints for y at fixed (x, p). Branches
/// come from the indicators evaluated at y_guess.
[[nodiscard]] AlgebraicSolution solve_algebraic(const HybridSystem& sys, const Vector& x,
                                                const Vector& p, const Vector& y_guess, Mode mode,
                                                const AlgebraicConfig& config = {});

/// Same with the active branches fixed by the caller.
[[nodiscard]] Vector solve_algebraic_fixed(const HybridSystem& sys, const Vector& x,
                                           const Vector& p, const Vector& y_guess, Mode mode,
                                           const Branches& branches,
                                           const AlgebraicConfig& config = {},
                                           int* iterations = nullptr);

/// A system and schedule reparameterized onto a subset of the parameters;
/// the rest are frozen at `base`.
struct ParameterSelection {
  HybridSystem system;
  PhaseSchedule schedule;
  ParameterSpace space;
  std::vector<std::size_t> indices;  ///< positions in the full vector
  Vector base;                       ///< full vector used for frozen entries

  [[nodiscard]] Vector embed(const Vector& sub) const;
};

[[nodiscard]] ParameterSelection select_parameters(const HybridSystem& system,
                                                   const PhaseSchedule& schedule,
                                                   const ParameterSpace& full,
                                                   const std::vector<std::string>& names,
                                                   const Vector& base);

}  // namespace rbound
