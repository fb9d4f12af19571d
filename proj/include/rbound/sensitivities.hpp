/**
 * @file sensitivities.hpp
 * @brief First- and second-order trajectory sensitivities of the switched DAE.
 *
 * chi(t) = dx(t)/dp is integrated together with x. Between events it obeys
 * the variational equation with y eliminated through the active constraint;
 * at events it jumps by (f- - f+) * dtau/dp. Second-order sensitivities
 * chi_ij = d2x/dp_i dp_j come from central differences of re-simulated
 * first-order runs, or from the second-order variational equation on
 * event-free scenarios.
 */
#pragma once

#include "rbound/integrator.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace rbound {

/// Transversality denominators below this are treated as grazing contact.
inline constexpr double kGrazingThreshold = 1e-12;

/// One applied sensitivity jump.
struct JumpAudit {
  EventKind kind = EventKind::Indicator;
  double time = 0.0;
  std::size_t indicator = 0;
  std::string label;
  RowVector tau_p;            ///< d(event time)/dp
  double denominator = 0.0;   ///< ds/dt along the flow; 0 for phase boundaries
  Matrix chi_minus;
  Matrix chi_plus;
};

struct SensitivityOptions {
  bool grid_output = true;
  bool store_dense = false;
  std::vector<double> extra_times;
  std::function<bool(double t, const Vector& x)> stop_when;
  /// Worker threads for second-order finite differences (0 = hardware).
  std::size_t jobs = 0;
};

struct SensitivityTrajectory {
  StateTrajectory states;
  std::size_t parameter_count = 0;
  /// n x P per output sample.
  std::vector<Matrix> chi;
  /// n x P^2 per output sample when second order was requested; column
  /// j*P + i holds chi_ij = d chi_i / d p_j.
  std::vector<Matrix> chi2;
  std::vector<JumpAudit> jumps;
  Matrix chi_initial;  ///< at disturbance onset

  std::vector<double> extra_times;
  std::vector<Vector> extra_x;
  std::vector<Matrix> extra_chi;
  std::vector<Matrix> extra_chi2;

  /// Over [x; vec(chi)] (and the second-order block for the variational
  /// backend) when SensitivityOptions::store_dense was set.
  DenseOutput dense;

  /// chi at the start of the post-disturbance phase.
  [[nodiscard]] Matrix chi_post_start() const;
  /// chi_ij at one grid sample.
  [[nodiscard]] Vector second(std::size_t sample, std::size_t i, std::size_t j) const;
};

[[nodiscard]] SensitivityTrajectory propagate_first_order(const HybridSystem& sys,
                                                          const PhaseSchedule& schedule,
                                                          const Vector& p,
                                                          const IntegrationConfig& config,
                                                          const SensitivityOptions& options = {});

enum class SecondOrderBackend { FiniteDifference, Variational };

/// Step used by the finite-difference backend for parameter value v.
[[nodiscard]] inline double second_order_step(double v) {
  return 1e-5 * std::max(1.0, std::abs(v));
}

/// First-order trajectory plus chi2 at every output sample. The
/// Variational backend throws BackendUnsupported on indicator events and on
/// phase boundaries whose time depends on p.
[[nodiscard]] SensitivityTrajectory propagate_second_order(
    const HybridSystem& sys, const PhaseSchedule& schedule, const Vector& p,
    const IntegrationConfig& config,
    SecondOrderBackend backend = SecondOrderBackend::FiniteDifference,
    const SensitivityOptions& options = {});

/// chi at the initial state: implicit differentiation of the equilibrium
/// conditions, or the derivative of the model's explicit initial state.
[[nodiscard]] Matrix initial_sensitivity(const InitialContext& ctx);

}  // namespace rbound
