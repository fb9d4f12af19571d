#include "rbound/serialization.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>

namespace rbound {

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) v = 0.0;  // no "-0"
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12e", v);
  return buf;
}

Json json_number(double v) {
  if (!std::isfinite(v)) return nullptr;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12e", v);
  return std::strtod(buf, nullptr);
}

Json json_vector(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(json_number(v[i]));
  return out;
}

namespace {

Json json_row(const RowVector& v) { return json_vector(v.transpose()); }

Json json_vector(const std::vector<double>& v) {
  Json out = Json::array();
  for (double d : v) out.push_back(json_number(d));
  return out;
}

std::string provenance_line(const Provenance& prov) {
  return "# rbound " + prov.tool_version + " config " + prov.config_hash + "\n";
}

std::string join_row(const std::vector<std::string>& cells) {
  std::string s;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) s += ',';
    s += cells[i];
  }
  s += '\n';
  return s;
}

std::string name_or(const std::vector<std::string>& names, std::size_t i, const char* prefix) {
  if (i < names.size() && !names[i].empty()) return names[i];
  return prefix + std::to_string(i + 1);
}

const char* to_string(EventKind k) { return k == EventKind::Indicator ? "indicator" : "phase"; }

}  // namespace

Json json_matrix(const Matrix& m) {
  Json out = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(json_row(m.row(r)));
  return out;
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::InvalidArgument, "write failed for " + path.string());
}

// -- CSV ----------------------------------------------------------------------

CsvTable& CsvTable::row() {
  rows_.emplace_back();
  return *this;
}

CsvTable& CsvTable::cell(double v) { return cell(format_double(v)); }

CsvTable& CsvTable::cell(const std::string& s) {
  if (rows_.empty()) rows_.emplace_back();
  rows_.back().push_back(s);
  return *this;
}

std::string CsvTable::str(const Provenance& prov) const {
  std::string out = provenance_line(prov) + join_row(header_);
  for (const auto& r : rows_) out += join_row(r);
  return out;
}

std::string trajectory_csv(const StateTrajectory& traj, const HybridSystem& sys,
                           const Provenance& prov) {
  std::vector<std::string> header{"t"};
  for (std::size_t i = 0; i < sys.n; ++i) header.push_back(name_or(sys.state_names, i, "x"));
  for (std::size_t i = 0; i < sys.m; ++i) header.push_back(name_or(sys.algebraic_names, i, "y"));
  CsvTable table(std::move(header));
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    table.row().cell(traj.times[k]);
    for (Eigen::Index i = 0; i < traj.x[k].size(); ++i) table.cell(traj.x[k][i]);
    for (Eigen::Index i = 0; i < traj.y[k].size(); ++i) table.cell(traj.y[k][i]);
  }
  return table.str(prov);
}

std::string sensitivity_csv(const SensitivityTrajectory& st, const HybridSystem& sys,
                            const std::vector<std::string>& parameters, const Provenance& prov) {
  std::vector<std::string> header{"t"};
  for (std::size_t i = 0; i < sys.n; ++i)
    for (std::size_t j = 0; j < st.parameter_count; ++j)
      header.push_back("d" + name_or(sys.state_names, i, "x") + "/d" + name_or(parameters, j, "p"));
  CsvTable table(std::move(header));
  const std::size_t samples = std::min(st.states.times.size(), st.chi.size());
  for (std::size_t k = 0; k < samples; ++k) {
    table.row().cell(st.states.times[k]);
    const Matrix& chi = st.chi[k];
    for (Eigen::Index i = 0; i < chi.rows(); ++i)
      for (Eigen::Index j = 0; j < chi.cols(); ++j) table.cell(chi(i, j));
  }
  return table.str(prov);
}

std::string h_series_csv(const GEvaluation& ev, const Provenance& prov) {
  CsvTable table({"t", "H"});
  for (const auto& [t, h] : ev.H_series) table.row().cell(t).cell(h);
  return table.str(prov);
}

// -- JSON ---------------------------------------------------------------------

Json with_provenance(Json body, const Provenance& prov) {
  body["provenance"] = {{"tool", "rbound"},
                        {"version", prov.tool_version},
                        {"config_hash", prov.config_hash}};
  return body;
}

Json to_json(const EventRecord& e) {
  Json j;
  j["kind"] = to_string(e.kind);
  j["time"] = json_number(e.time);
  j["label"] = e.label;
  if (e.kind == EventKind::Indicator) {
    j["indicator"] = e.indicator;
    j["transition"] = e.transition;
    j["indicator_value"] = json_number(e.indicator_value);
  }
  j["x_minus"] = json_vector(e.x_minus);
  j["x_plus"] = json_vector(e.x_plus);
  j["y_minus"] = json_vector(e.y_minus);
  j["y_plus"] = json_vector(e.y_plus);
  return j;
}

Json to_json(const StateTrajectory& traj, const HybridSystem& sys) {
  Json j;
  Json states = Json::array(), algebraic = Json::array();
  for (std::size_t i = 0; i < sys.n; ++i) states.push_back(name_or(sys.state_names, i, "x"));
  for (std::size_t i = 0; i < sys.m; ++i) algebraic.push_back(name_or(sys.algebraic_names, i, "y"));
  j["states"] = std::move(states);
  j["algebraic"] = std::move(algebraic);
  j["end_time"] = json_number(traj.end_time);
  j["post_start_time"] = json_number(traj.post_start_time);
  j["diverged"] = traj.diverged;
  j["stopped_early"] = traj.stopped_early;
  j["t"] = json_vector(traj.times);
  Json x = Json::array(), y = Json::array();
  for (const auto& v : traj.x) x.push_back(json_vector(v));
  for (const auto& v : traj.y) y.push_back(json_vector(v));
  j["x"] = std::move(x);
  j["y"] = std::move(y);
  Json events = Json::array();
  for (const auto& e : traj.events) events.push_back(to_json(e));
  j["events"] = std::move(events);
  return j;
}

Json to_json(const GEvaluation& ev, const std::vector<std::string>& parameters) {
  Json j;
  j["parameters"] = parameters;
  j["p"] = json_vector(ev.p);
  j["G"] = json_number(ev.G);
  j["t_hat"] = json_number(ev.t_hat);
  j["recovered"] = ev.recovered;
  j["status"] = to_string(ev.status);
  j["DG"] = ev.DG ? json_row(*ev.DG) : Json(nullptr);
  j["gradient_at_kink"] = ev.gradient_at_kink;
  j["x_sep"] = json_vector(ev.x_sep);
  j["event_count"] = ev.event_count;
  j["min_indicator_margin"] = json_number(ev.min_indicator_margin);
  j["simulations"] = ev.simulations;
  if (ev.error) j["error"] = *ev.error;
  return j;
}

Json to_json(const Solver1DResult& r) {
  Json j;
  j["converged"] = r.converged;
  j["p_star"] = json_number(r.p_star);
  j["G_star"] = json_number(r.G_star);
  j["DG_star"] = json_number(r.DG_star);
  j["newton_steps"] = r.newton_steps;
  j["evaluations"] = r.evaluations;
  Json h = Json::array();
  for (const auto& it : r.history) {
    h.push_back({{"p", json_number(it.p)},
                 {"G", json_number(it.G)},
                 {"DG", json_number(it.DG)},
                 {"recovered", it.recovered},
                 {"mu", json_number(it.mu)}});
  }
  j["history"] = std::move(h);
  return j;
}

Json to_json(const BoundaryTrace& t) {
  Json j;
  j["stop_reason"] = t.stop_reason;
  j["evaluations"] = t.evaluations;
  j["kappa_reductions"] = t.kappa_reductions;
  Json pts = Json::array();
  for (const auto& p : t.points) {
    pts.push_back({{"p", json_vector(p.p)},
                   {"G", json_number(p.G)},
                   {"DG", json_row(p.DG)},
                   {"eta", json_vector(p.eta)},
                   {"kappa", json_number(p.kappa)},
                   {"corrector_iterations", p.corrector_iterations},
                   {"hyperplane_residual", json_number(p.hyperplane_residual)}});
  }
  j["points"] = std::move(pts);
  return j;
}

Json to_json(const MarginResult& r, const std::vector<std::string>& parameters) {
  Json j;
  j["parameters"] = parameters;
  j["converged"] = r.converged;
  j["margin"] = json_number(r.margin);
  j["distance"] = json_number(r.distance);
  j["lambda"] = json_number(r.lambda);
  j["kkt_residual"] = json_number(r.kkt_residual);
  j["collinearity_angle"] = json_number(r.collinearity_angle);
  j["iterations"] = r.iterations;
  j["evaluations"] = r.evaluations;
  j["p0"] = json_vector(r.p0);
  j["p_star"] = json_vector(r.p_star);
  j["G_star"] = json_number(r.G_star);
  j["DG_star"] = json_row(r.DG_star);
  Json h = Json::array();
  for (const auto& it : r.history) {
    h.push_back({{"p", json_vector(it.p)},
                 {"G", json_number(it.G)},
                 {"DG", json_row(it.DG)},
                 {"recovered", it.recovered},
                 {"mu", json_number(it.mu)},
                 {"lambda", json_number(it.lambda)}});
  }
  j["history"] = std::move(h);
  return j;
}

Json to_json(const ValidationReport& r) {
  return {{"ok", r.ok()},
          {"errors", r.errors},
          {"notes", r.notes},
          {"finite_difference_fallbacks", r.finite_difference_fallbacks}};
}

Json model_metadata(const ModelBundle& model) {
  Json j;
  j["model"] = model.name;
  Json params = Json::array();
  const ParameterSpace& s = model.space;
  for (std::size_t i = 0; i < s.dimension(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    params.push_back({{"name", s.names[i]},
                      {"nominal", json_number(s.nominal[k])},
                      {"lower", s.lower.size() ? json_number(s.lower[k]) : Json(nullptr)},
                      {"upper", s.upper.size() ? json_number(s.upper[k]) : Json(nullptr)},
                      {"unit", i < s.units.size() ? s.units[i] : std::string()}});
  }
  j["parameters"] = std::move(params);
  j["states"] = model.system.state_names;
  j["algebraic"] = model.system.algebraic_names;
  Json constants = Json::object();
  for (const auto& [k, v] : model.constants) constants[k] = json_number(v);
  j["constants"] = std::move(constants);
  Json sets = Json::object();
  for (const auto& [k, v] : model.parameter_sets) sets[k] = v;
  j["parameter_sets"] = std::move(sets);
  return j;
}

}  // namespace rbound
