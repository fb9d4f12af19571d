/**
 * @file models.hpp
 * @brief Built-in desk-scale power system models.
 *
 * smib           classical machine against an infinite bus; the fault zeroes
 *                the electrical power until it clears.
 * three_machine  three classical machines and an infinite bus on a lossless
 *                four-bus network with exponential loads, a bolted-fault
 *                shunt and one first-order exciter with an output limiter.
 */
#pragma once

#include "rbound/recovery_metrics.hpp"

#include <map>
#include <string>
#include <vector>

namespace rbound {

using Overrides = std::map<std::string, double>;

struct ModelBundle {
  std::string name;
  HybridSystem system;
  PhaseSchedule schedule;
  ParameterSpace space;
  RecoveryConfig recovery;
  IntegrationConfig integration;
  StateMask mask;
  /// Named parameter subsets, e.g. nested sets for margin studies.
  std::map<std::string, std::vector<std::string>> parameter_sets;
  /// Model constants after overrides, for metadata export.
  std::map<std::string, double> constants;

  [[nodiscard]] Scenario scenario() const {
    return {system, schedule, mask, recovery, integration};
  }
};

[[nodiscard]] std::vector<std::string> model_names();

/// Keys of `overrides` are parameter names (setting the nominal value) or
/// model constants. Throws UnknownModel or BadOverride.
[[nodiscard]] ModelBundle build(const std::string& name, const Overrides& overrides = {});

/// The model reduced to the named parameters, nominal values elsewhere.
/// Schedule, recovery and integration settings carry over.
[[nodiscard]] ModelBundle restrict_parameters(const ModelBundle& model,
                                              const std::vector<std::string>& names);

/// Angular base frequency of both models, rad/s.
inline constexpr double kOmegaBase = 2.0 * 3.14159265358979323846 * 60.0;

}  // namespace rbound
