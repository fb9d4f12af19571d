/**
 * @file cli.hpp
 * @brief Scenario configuration documents and the batch commands behind the
 *        `rbound` executable.
 *
 * A config is a JSON object. Every field is optional except `model`; absent
 * fields fall back to the model's defaults. Unknown keys are rejected so that
 * typos surface as config errors instead of silently ignored settings.
 */
#pragma once

#include "rbound/serialization.hpp"

#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace rbound {

/// Malformed or inconsistent configuration; maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

using DenseRows = std::vector<std::vector<double>>;

struct RecoverySettings {
  std::optional<double> horizon, delta, window_fraction, g_horizon, epsilon, time_resolution;
  std::optional<bool> include_disturbance;
  std::optional<std::vector<double>> escape_radius;

  template <class F>
  void visit(F&& f) {
    f("horizon", horizon);
    f("delta", delta);
    f("window_fraction", window_fraction);
    f("g_horizon", g_horizon);
    f("epsilon", epsilon);
    f("time_resolution", time_resolution);
    f("include_disturbance", include_disturbance);
    f("escape_radius", escape_radius);
  }
  bool operator==(const RecoverySettings&) const = default;
};

struct IntegrationSettings {
  std::optional<double> rel_tol, abs_tol, event_time_tolerance, indicator_tolerance, max_step,
      output_step, divergence_threshold;
  std::optional<int> max_events;

  template <class F>
  void visit(F&& f) {
    f("rel_tol", rel_tol);
    f("abs_tol", abs_tol);
    f("event_time_tolerance", event_time_tolerance);
    f("indicator_tolerance", indicator_tolerance);
    f("max_step", max_step);
    f("output_step", output_step);
    f("divergence_threshold", divergence_threshold);
    f("max_events", max_events);
  }
  bool operator==(const IntegrationSettings&) const = default;
};

struct SweepSettings {
  std::optional<std::string> parameter;
  std::optional<double> lower, upper;
  std::optional<int> n;

  template <class F>
  void visit(F&& f) {
    f("parameter", parameter);
    f("lower", lower);
    f("upper", upper);
    f("n", n);
  }
  bool operator==(const SweepSettings&) const = default;
};

struct Boundary1DSettings {
  std::optional<std::string> parameter;
  std::optional<double> start, epsilon;
  std::optional<int> max_iterations;

  template <class F>
  void visit(F&& f) {
    f("parameter", parameter);
    f("start", start);
    f("epsilon", epsilon);
    f("max_iterations", max_iterations);
  }
  bool operator==(const Boundary1DSettings&) const = default;
};

struct Trace2DSettings {
  std::optional<std::vector<std::string>> parameters;
  /// Absent: located by a 1-D boundary search along the first parameter.
  std::optional<std::vector<double>> start;
  std::optional<double> kappa, epsilon, hyperplane_tolerance;
  std::optional<int> n_points, direction, max_corrector_iterations;
  std::optional<std::vector<double>> lower, upper;

  template <class F>
  void visit(F&& f) {
    f("parameters", parameters);
    f("start", start);
    f("kappa", kappa);
    f("epsilon", epsilon);
    f("hyperplane_tolerance", hyperplane_tolerance);
    f("n_points", n_points);
    f("direction", direction);
    f("max_corrector_iterations", max_corrector_iterations);
    f("lower", lower);
    f("upper", upper);
  }
  bool operator==(const Trace2DSettings&) const = default;
};

struct MarginSettings {
  /// Parameter sets declared by the model, run in order.
  std::optional<std::vector<std::string>> sets;
  /// Ad hoc sets, run after `sets`.
  std::optional<std::map<std::string, std::vector<std::string>>> custom_sets;
  /// Weight matrix per set name (dense rows); identity when absent.
  std::optional<std::map<std::string, DenseRows>> weights;
  std::optional<double> epsilon, kkt_tolerance, step_tolerance;
  std::optional<int> max_iterations;

  template <class F>
  void visit(F&& f) {
    f("sets", sets);
    f("custom_sets", custom_sets);
    f("weights", weights);
    f("epsilon", epsilon);
    f("kkt_tolerance", kkt_tolerance);
    f("step_tolerance", step_tolerance);
    f("max_iterations", max_iterations);
  }
  bool operator==(const MarginSettings&) const = default;
};

struct ScenarioConfig {
  std::optional<std::string> model;
  /// Parameter nominal values and model constants by name.
  std::optional<std::map<std::string, double>> overrides;
  /// Parameters carried by simulate (sensitivities, G); all when absent.
  std::optional<std::vector<std::string>> parameters;
  /// State names entering the norm of chi; the model's mask when absent.
  std::optional<std::vector<std::string>> mask;
  std::optional<RecoverySettings> recovery;
  std::optional<IntegrationSettings> integration;
  std::optional<SweepSettings> sweep;
  std::optional<Boundary1DSettings> boundary1d;
  std::optional<Trace2DSettings> trace2d;
  std::optional<MarginSettings> margin;
  std::optional<std::string> output;

  template <class F>
  void visit(F&& f) {
    f("model", model);
    f("overrides", overrides);
    f("parameters", parameters);
    f("mask", mask);
    f("recovery", recovery);
    f("integration", integration);
    f("sweep", sweep);
    f("boundary1d", boundary1d);
    f("trace2d", trace2d);
    f("margin", margin);
    f("output", output);
  }
  bool operator==(const ScenarioConfig&) const = default;
};

/// Throws ConfigError on unknown keys, wrong types or a missing model.
[[nodiscard]] ScenarioConfig parse_config(const Json& j);
[[nodiscard]] ScenarioConfig load_config(const std::string& path);
/// Only the fields that are set, in declaration order.
[[nodiscard]] Json config_to_json(const ScenarioConfig& cfg);
/// FNV-1a over the compact canonical form, ignoring the output directory.
[[nodiscard]] std::string config_hash(const ScenarioConfig& cfg);

/// Model with overrides, mask and recovery / integration settings applied.
/// Throws ConfigError for anything the config gets wrong.
[[nodiscard]] ModelBundle prepare_model(const ScenarioConfig& cfg);

struct CommandOptions {
  std::string command;
  std::string config_path;
  std::optional<std::string> out_dir;
  std::size_t jobs = 1;
};

/// Runs one command and writes its artifacts. Returns the exit code; errors
/// are reported on `log` and, once the output directory is known, in
/// error.json.
int run_command(const CommandOptions& options, std::ostream& log);

/// argv front end (CLI11).
int run_cli(int argc, char** argv);

}  // namespace rbound
