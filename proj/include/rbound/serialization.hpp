/**
 * @file serialization.hpp
 * @brief CSV and JSON export of trajectories, G evaluations and solver
 *        results.
 *
 * Floats go out as %.12e in CSV and rounded to the same precision in
 * JSON, so repeated runs produce byte-identical files. Every artifact
 * carries the tool version and a hash of the configuration that made it.
 */
#pragma once

#include "rbound/boundary_solvers.hpp"
#include "rbound/models.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace rbound {

using Json = nlohmann::ordered_json;

inline constexpr const char* kToolVersion = "0.1.0";

struct Provenance {
  std::string config_hash;
  std::string tool_version = kToolVersion;
};

/// 64-bit FNV-1a.
[[nodiscard]] std::uint64_t fnv1a64(std::string_view bytes) noexcept;
[[nodiscard]] std::string hex64(std::uint64_t v);

/// %.12e, with nan / inf / -inf spelled out.
[[nodiscard]] std::string format_double(double v);
/// The value %.12e prints, as a JSON number; null when not finite.
[[nodiscard]] Json json_number(double v);
[[nodiscard]] Json json_vector(const Vector& v);
[[nodiscard]] Json json_matrix(const Matrix& m);

[[nodiscard]] std::string dump(const Json& j);
/// Writes `text` to `path`, creating parent directories. Throws
/// InvalidArgument when the file cannot be written.
void write_text(const std::filesystem::path& path, const std::string& text);

// -- CSV ----------------------------------------------------------------------
// First line is a '#' comment with version and config hash, then a header.

/// Columns t, x..., y... (model names when available).
[[nodiscard]] std::string trajectory_csv(const StateTrajectory& traj, const HybridSystem& sys,
                                         const Provenance& prov);
/// Columns t, then chi in row-major (state, parameter) order.
[[nodiscard]] std::string sensitivity_csv(const SensitivityTrajectory& st, const HybridSystem& sys,
                                          const std::vector<std::string>& parameters,
                                          const Provenance& prov);
[[nodiscard]] std::string h_series_csv(const GEvaluation& ev, const Provenance& prov);

/// Generic table with a header and %.12e cells (strings pass through).
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}
  CsvTable& row();
  CsvTable& cell(double v);
  CsvTable& cell(const std::string& s);
  CsvTable& cell(int v) { return cell(std::to_string(v)); }
  CsvTable& cell(bool v) { return cell(std::string(v ? "1" : "0")); }
  [[nodiscard]] std::string str(const Provenance& prov) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

// -- JSON ---------------------------------------------------------------------

[[nodiscard]] Json with_provenance(Json body, const Provenance& prov);
[[nodiscard]] Json to_json(const EventRecord& e);
[[nodiscard]] Json to_json(const StateTrajectory& traj, const HybridSystem& sys);
[[nodiscard]] Json to_json(const GEvaluation& ev, const std::vector<std::string>& parameters);
[[nodiscard]] Json to_json(const Solver1DResult& r);
[[nodiscard]] Json to_json(const BoundaryTrace& t);
[[nodiscard]] Json to_json(const MarginResult& r, const std::vector<std::string>& parameters);
[[nodiscard]] Json to_json(const ValidationReport& r);
/// Names, nominal values, bounds and units of parameters and states.
[[nodiscard]] Json model_metadata(const ModelBundle& model);

}  // namespace rbound
