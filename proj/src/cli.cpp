#include "rbound/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iostream>
#include <set>
#include <type_traits>

namespace rbound {

namespace fs = std::filesystem;

// -- config codec -----------------------------------------------------------------

namespace {

template <class T>
concept Visitable = requires(T& t) { t.visit([](const char*, auto&) {}); };

template <class T>
struct is_vector : std::false_type {};
template <class U>
struct is_vector<std::vector<U>> : std::true_type {};

template <class T>
struct is_string_map : std::false_type {};
template <class U>
struct is_string_map<std::map<std::string, U>> : std::true_type {};

template <class T>
Json encode(const T& v) {
  if constexpr (Visitable<T>) {
    Json out = Json::object();
    // visit() is non-const; the callback only reads.
    const_cast<T&>(v).visit([&](const char* key, const auto& field) {
      if (field) out[key] = encode(*field);
    });
    return out;
  } else if constexpr (is_vector<T>::value) {
    Json out = Json::array();
    for (const auto& e : v) out.push_back(encode(e));
    return out;
  } else if constexpr (is_string_map<T>::value) {
    Json out = Json::object();
    for (const auto& [k, e] : v) out[k] = encode(e);
    return out;
  } else {
    return Json(v);
  }
}

[[noreturn]] void type_error(const std::string& path, const char* expected) {
  throw ConfigError("'" + path + "' must be " + expected);
}

template <class T>
T decode(const Json& j, const std::string& path) {
  if constexpr (Visitable<T>) {
    if (!j.is_object()) type_error(path, "an object");
    T out;
    std::set<std::string> known;
    out.visit([&](const char* key, auto& field) {
      known.insert(key);
      const auto it = j.find(key);
      if (it == j.end() || it->is_null()) return;
      using Field = typename std::decay_t<decltype(field)>::value_type;
      field = decode<Field>(*it, path.empty() ? std::string(key) : path + "." + key);
    });
    for (const auto& [key, value] : j.items()) {
      if (!known.count(key)) {
        throw ConfigError("unknown key '" + (path.empty() ? key : path + "." + key) + "'");
      }
    }
    return out;
  } else if constexpr (is_vector<T>::value) {
    if (!j.is_array()) type_error(path, "an array");
    T out;
    for (std::size_t i = 0; i < j.size(); ++i) {
      out.push_back(decode<typename T::value_type>(j[i], path + "[" + std::to_string(i) + "]"));
    }
    return out;
  } else if constexpr (is_string_map<T>::value) {
    if (!j.is_object()) type_error(path, "an object");
    T out;
    for (const auto& [key, value] : j.items()) {
      out[key] = decode<typename T::mapped_type>(value, path + "." + key);
    }
    return out;
  } else if constexpr (std::is_same_v<T, bool>) {
    if (!j.is_boolean()) type_error(path, "a boolean");
    return j.get<bool>();
  } else if constexpr (std::is_same_v<T, int>) {
    if (!j.is_number_integer()) type_error(path, "an integer");
    return j.get<int>();
  } else if constexpr (std::is_same_v<T, double>) {
    if (!j.is_number()) type_error(path, "a number");
    return j.get<double>();
  } else {
    static_assert(std::is_same_v<T, std::string>);
    if (!j.is_string()) type_error(path, "a string");
    return j.get<std::string>();
  }
}

}  // namespace

ScenarioConfig parse_config(const Json& j) {
  ScenarioConfig cfg = decode<ScenarioConfig>(j, "");
  if (!cfg.model) throw ConfigError("missing 'model'");
  return cfg;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

Json config_to_json(const ScenarioConfig& cfg) { return encode(cfg); }

std::string config_hash(const ScenarioConfig& cfg) {
  ScenarioConfig c = cfg;
  c.output.reset();
  return hex64(fnv1a64(config_to_json(c).dump()));
}

// -- model preparation --------------------------------------------------------------

namespace {

void check_names(const ModelBundle& mb, const std::vector<std::string>& names, const char* what) {
  if (names.empty()) throw ConfigError(std::string(what) + ": no parameters given");
  std::set<std::string> seen;
  for (const auto& n : names) {
    if (!mb.space.index_of(n)) {
      throw ConfigError(std::string(what) + ": model '" + mb.name + "' has no parameter '" + n + "'");
    }
    if (!seen.insert(n).second) {
      throw ConfigError(std::string(what) + ": parameter '" + n + "' listed twice");
    }
  }
}

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

ModelBundle prepare_model(const ScenarioConfig& cfg) {
  if (!cfg.model) throw ConfigError("missing 'model'");
  ModelBundle mb;
  try {
    mb = build(*cfg.model, cfg.overrides.value_or(Overrides{}));
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  try {
    if (cfg.mask) mb.mask = StateMask::from_names(mb.system, *cfg.mask);
    mb.mask.check(mb.system.n);

    RecoveryConfig& rc = mb.recovery;
    if (const auto& r = cfg.recovery) {
      if (r->horizon) rc.horizon = *r->horizon;
      if (r->delta) rc.delta = *r->delta;
      if (r->window_fraction) rc.window_fraction = *r->window_fraction;
      if (r->g_horizon) rc.g_horizon = *r->g_horizon;
      if (r->epsilon) rc.epsilon = *r->epsilon;
      if (r->time_resolution) rc.time_resolution = *r->time_resolution;
      if (r->include_disturbance) rc.include_disturbance = *r->include_disturbance;
      if (r->escape_radius) {
        if (r->escape_radius->size() != mb.system.n) {
          throw ConfigError("recovery.escape_radius needs one entry per state");
        }
        rc.escape_radius = to_vector(*r->escape_radius);
      }
    }
    IntegrationConfig& ic = mb.integration;
    if (const auto& s = cfg.integration) {
      if (s->rel_tol) ic.rel_tol = *s->rel_tol;
      if (s->abs_tol) ic.abs_tol = *s->abs_tol;
      if (s->event_time_tolerance) ic.event_time_tolerance = *s->event_time_tolerance;
      if (s->indicator_tolerance) ic.indicator_tolerance = *s->indicator_tolerance;
      if (s->max_step) ic.max_step = *s->max_step;
      if (s->output_step) ic.output_step = *s->output_step;
      if (s->divergence_threshold) ic.divergence_threshold = *s->divergence_threshold;
      if (s->max_events) {
        if (*s->max_events < 1) throw ConfigError("integration.max_events must be positive");
        ic.max_events = static_cast<std::size_t>(*s->max_events);
      }
    }
    ic.horizon = rc.horizon;
    mb.constants["horizon"] = rc.horizon;
    rc.check();
    ic.check();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (cfg.parameters) check_names(mb, *cfg.parameters, "parameters");
  return mb;
}

// -- commands -------------------------------------------------------------------------

namespace {

struct Context {
  ScenarioConfig cfg;
  ModelBundle model;
  Provenance prov;
  fs::path out;
  std::size_t jobs = 1;
  std::ostream& log;
};

void write_json(const Context& ctx, const std::string& file, Json body) {
  write_text(ctx.out / file, dump(with_provenance(std::move(body), ctx.prov)));
}

void write_csv(const Context& ctx, const std::string& file, const std::string& text) {
  write_text(ctx.out / file, text);
}

// Keeps CSV cells single-line and comma-free.
std::string csv_safe(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  }
  return s;
}

std::string file_safe(std::string s) {
  for (char& c : s) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
    if (!ok) c = '_';
  }
  return s;
}

double bound_or(const ParameterSpace& s, const std::string& name, bool upper) {
  const auto k = static_cast<Eigen::Index>(*s.index_of(name));
  const Vector& b = upper ? s.upper : s.lower;
  return b.size() ? b[k] : (upper ? kInf : -kInf);
}

// The one parameter a 1-D command works on: explicit, or the sole entry of
// the top-level selection.
std::string single_parameter(const Context& ctx, const std::optional<std::string>& explicit_name,
                             const char* section) {
  std::string name;
  if (explicit_name) {
    name = *explicit_name;
  } else if (ctx.cfg.parameters && ctx.cfg.parameters->size() == 1) {
    name = ctx.cfg.parameters->front();
  } else {
    throw ConfigError(std::string(section) + ".parameter is required");
  }
  check_names(ctx.model, {name}, section);
  return name;
}

GOptions g_options(std::size_t jobs, bool gradient) {
  GOptions o;
  o.want_gradient = gradient;
  o.jobs = jobs;
  return o;
}

int cmd_simulate(const Context& ctx) {
  const std::vector<std::string> names = ctx.cfg.parameters.value_or(ctx.model.space.names);
  const ModelBundle sub = restrict_parameters(ctx.model, names);
  const Vector p = sub.space.nominal;

  SensitivityOptions so;
  so.jobs = ctx.jobs;
  const SensitivityTrajectory st =
      propagate_first_order(sub.system, sub.schedule, p, sub.integration, so);
  GOptions go = g_options(ctx.jobs, false);
  go.want_series = true;
  const GEvaluation ev = evaluate_G(sub.scenario(), p, go);

  write_csv(ctx, "trajectory.csv", trajectory_csv(st.states, sub.system, ctx.prov));
  write_json(ctx, "trajectory.json", to_json(st.states, sub.system));
  write_csv(ctx, "sensitivities.csv", sensitivity_csv(st, sub.system, names, ctx.prov));
  write_csv(ctx, "h_series.csv", h_series_csv(ev, ctx.prov));
  Json rec = to_json(ev, names);
  rec["model"] = sub.name;
  write_json(ctx, "recovery.json", std::move(rec));

  char line[160];
  std::snprintf(line, sizeof line, "simulate: %s, G = %.6e at t = %.4f\n", to_string(ev.status),
                ev.G, ev.t_hat);
  ctx.log << line;
  return kExitOk;
}

int cmd_gsweep(const Context& ctx) {
  const SweepSettings s = ctx.cfg.sweep.value_or(SweepSettings{});
  const std::string name = single_parameter(ctx, s.parameter, "sweep");
  const double lo = s.lower.value_or(bound_or(ctx.model.space, name, false));
  const double hi = s.upper.value_or(bound_or(ctx.model.space, name, true));
  const int n = s.n.value_or(21);
  if (!std::isfinite(lo) || !std::isfinite(hi)) {
    throw ConfigError("sweep.lower and sweep.upper are required for unbounded '" + name + "'");
  }
  if (n < 1) throw ConfigError("sweep.n must be positive");
  if (n > 1 && !(lo < hi)) throw ConfigError("sweep.lower must be below sweep.upper");

  std::vector<Vector> points;
  for (int k = 0; k < n; ++k) {
    const double t = n == 1 ? 0.0 : static_cast<double>(k) / (n - 1);
    points.push_back(Vector::Constant(1, k == n - 1 && n > 1 ? hi : lo + t * (hi - lo)));
  }
  const ModelBundle sub = restrict_parameters(ctx.model, {name});
  const std::vector<GEvaluation> evs =
      evaluate_many(sub.scenario(), points, g_options(1, false), ctx.jobs);

  CsvTable table({name, "G", "recovered", "status", "t_hat", "error"});
  std::size_t failed = 0;
  for (std::size_t k = 0; k < evs.size(); ++k) {
    const GEvaluation& ev = evs[k];
    table.row().cell(points[k][0]);
    if (ev.error) {
      ++failed;
      table.cell(std::nan("")).cell(false).cell(std::string("error")).cell(std::nan(""));
      table.cell(csv_safe(*ev.error));
    } else {
      table.cell(ev.G).cell(ev.recovered).cell(std::string(to_string(ev.status))).cell(ev.t_hat);
      table.cell(std::string());
    }
  }
  write_csv(ctx, "gsweep.csv", table.str(ctx.prov));
  ctx.log << "gsweep: " << n << " points over " << name << ", " << failed << " failed\n";
  return kExitOk;
}

Solver1DConfig solver1d(const ModelBundle& mb, std::optional<double> eps, std::optional<int> iters) {
  Solver1DConfig c;
  c.epsilon = eps.value_or(mb.recovery.epsilon);
  if (iters) c.max_iterations = *iters;
  if (!(c.epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (c.max_iterations < 1) throw ConfigError("max_iterations must be positive");
  return c;
}

CsvTable history_1d(const Solver1DResult& r, const std::string& name) {
  CsvTable table({"k", name, "G", "DG", "recovered", "mu"});
  for (std::size_t k = 0; k < r.history.size(); ++k) {
    const Iterate1D& it = r.history[k];
    table.row().cell(static_cast<int>(k)).cell(it.p).cell(it.G).cell(it.DG).cell(it.recovered).cell(
        it.mu);
  }
  return table;
}

int cmd_boundary1d(const Context& ctx) {
  const Boundary1DSettings s = ctx.cfg.boundary1d.value_or(Boundary1DSettings{});
  const std::string name = single_parameter(ctx, s.parameter, "boundary1d");
  const Solver1DConfig sc = solver1d(ctx.model, s.epsilon, s.max_iterations);
  const ModelBundle sub = restrict_parameters(ctx.model, {name});
  const double start = s.start.value_or(sub.space.nominal[0]);

  const Solver1DResult r = find_boundary_1d(simulation_oracle(sub.scenario(), ctx.jobs), start, sc);
  Json body = to_json(r);
  body["parameter"] = name;
  body["start"] = json_number(start);
  write_json(ctx, "boundary1d.json", std::move(body));
  write_csv(ctx, "boundary1d.csv", history_1d(r, name).str(ctx.prov));

  char line[160];
  std::snprintf(line, sizeof line, "boundary1d: %s* = %.10f, G = %.3e, %zu evaluations\n",
                name.c_str(), r.p_star, r.G_star, r.evaluations);
  ctx.log << line;
  return kExitOk;
}

int cmd_trace2d(const Context& ctx) {
  const Trace2DSettings s = ctx.cfg.trace2d.value_or(Trace2DSettings{});
  if (!s.parameters || s.parameters->size() != 2) {
    throw ConfigError("trace2d.parameters must name exactly two parameters");
  }
  const std::vector<std::string>& names = *s.parameters;
  check_names(ctx.model, names, "trace2d");
  const ModelBundle sub = restrict_parameters(ctx.model, names);

  const double kappa = s.kappa.value_or(0.05);
  const int n_points = s.n_points.value_or(20);
  const int direction = s.direction.value_or(1);
  if (!(kappa > 0.0)) throw ConfigError("trace2d.kappa must be positive");
  if (n_points < 1) throw ConfigError("trace2d.n_points must be positive");
  if (direction != 1 && direction != -1) throw ConfigError("trace2d.direction must be 1 or -1");

  TraceConfig tc;
  tc.epsilon = s.epsilon.value_or(sub.recovery.epsilon);
  if (s.hyperplane_tolerance) tc.hyperplane_tolerance = *s.hyperplane_tolerance;
  if (s.max_corrector_iterations) tc.max_corrector_iterations = *s.max_corrector_iterations;
  const auto box = [&](const std::optional<std::vector<double>>& given, bool upper) -> Vector {
    if (given) {
      if (given->size() != 2) throw ConfigError("trace2d bounds need two entries");
      return to_vector(*given);
    }
    return Vector{{bound_or(ctx.model.space, names[0], upper),
                   bound_or(ctx.model.space, names[1], upper)}};
  };
  tc.lower = box(s.lower, false);
  tc.upper = box(s.upper, true);
  if (!(tc.epsilon > 0.0)) throw ConfigError("trace2d.epsilon must be positive");

  const GOracle oracle = simulation_oracle(sub.scenario(), ctx.jobs);
  Json body;
  body["parameters"] = names;
  Vector start;
  if (s.start) {
    if (s.start->size() != 2) throw ConfigError("trace2d.start needs two entries");
    start = to_vector(*s.start);
  } else {
    // Walk the first parameter to the boundary, the second held at nominal.
    const Vector nominal = sub.space.nominal;
    const GOracle along_first = [&](const Vector& q) {
      Vector full = nominal;
      full[0] = q[0];
      GSample g = oracle(full);
      if (g.DG.size() == 2) g.DG = RowVector::Constant(1, g.DG[0]);
      return g;
    };
    Solver1DConfig sc;
    sc.epsilon = tc.epsilon;
    const Solver1DResult r = find_boundary_1d(along_first, nominal[0], sc);
    start = nominal;
    start[0] = r.p_star;
    body["start_search"] = to_json(r);
  }
  body["start"] = json_vector(start);

  const BoundaryTrace t = trace_boundary_2d(oracle, start, kappa,
                                            static_cast<std::size_t>(n_points), direction, tc);
  const Json traced = to_json(t);
  for (auto it = traced.begin(); it != traced.end(); ++it) body[it.key()] = *it;
  write_json(ctx, "trace2d.json", std::move(body));

  CsvTable table({"k", names[0], names[1], "G", "kappa", "corrector_iterations",
                  "hyperplane_residual"});
  for (std::size_t k = 0; k < t.points.size(); ++k) {
    const TracePoint& pt = t.points[k];
    table.row().cell(static_cast<int>(k)).cell(pt.p[0]).cell(pt.p[1]).cell(pt.G).cell(pt.kappa);
    table.cell(pt.corrector_iterations).cell(pt.hyperplane_residual);
  }
  write_csv(ctx, "trace2d.csv", table.str(ctx.prov));
  ctx.log << "trace2d: " << t.points.size() << " points, " << t.evaluations
          << " evaluations, stop: " << t.stop_reason << "\n";
  return kExitOk;
}

int cmd_margin(const Context& ctx) {
  const MarginSettings s = ctx.cfg.margin.value_or(MarginSettings{});
  std::vector<std::pair<std::string, std::vector<std::string>>> sets;
  if (s.sets) {
    for (const auto& name : *s.sets) {
      const auto it = ctx.model.parameter_sets.find(name);
      if (it == ctx.model.parameter_sets.end()) {
        throw ConfigError("model '" + ctx.model.name + "' declares no parameter set '" + name + "'");
      }
      sets.emplace_back(name, it->second);
    }
  }
  if (s.custom_sets) {
    for (const auto& [name, list] : *s.custom_sets) sets.emplace_back(name, list);
  }
  if (!s.sets && !s.custom_sets) {
    for (const auto& [name, list] : ctx.model.parameter_sets) sets.emplace_back(name, list);
  }
  if (sets.empty()) throw ConfigError("margin: no parameter sets to run");

  MarginConfig mc;
  mc.epsilon = s.epsilon.value_or(ctx.model.recovery.epsilon);
  if (s.kkt_tolerance) mc.kkt_tolerance = *s.kkt_tolerance;
  if (s.step_tolerance) mc.step_tolerance = *s.step_tolerance;
  if (s.max_iterations) mc.max_iterations = *s.max_iterations;
  if (!(mc.epsilon > 0.0) || !(mc.kkt_tolerance > 0.0) || mc.max_iterations < 1) {
    throw ConfigError("margin tolerances and max_iterations must be positive");
  }

  // Everything is checked before the first (slow) solve starts.
  std::vector<std::optional<Matrix>> weights;
  for (const auto& [name, list] : sets) {
    check_names(ctx.model, list, ("margin set " + name).c_str());
    std::optional<Matrix> A;
    if (s.weights && s.weights->count(name)) {
      const DenseRows& rows = s.weights->at(name);
      const auto dim = static_cast<Eigen::Index>(list.size());
      A = Matrix(dim, dim);
      if (static_cast<Eigen::Index>(rows.size()) != dim) {
        throw ConfigError("margin weight for '" + name + "' must be square of the set's size");
      }
      for (Eigen::Index r = 0; r < dim; ++r) {
        const auto& row = rows[static_cast<std::size_t>(r)];
        if (static_cast<Eigen::Index>(row.size()) != dim) {
          throw ConfigError("margin weight for '" + name + "' must be square of the set's size");
        }
        for (Eigen::Index c = 0; c < dim; ++c) (*A)(r, c) = row[static_cast<std::size_t>(c)];
      }
    }
    weights.push_back(std::move(A));
  }
  if (s.weights) {
    for (const auto& [name, rows] : *s.weights) {
      const bool used = std::any_of(sets.begin(), sets.end(),
                                    [&](const auto& e) { return e.first == name; });
      if (!used) throw ConfigError("margin weight given for unused set '" + name + "'");
    }
  }

  CsvTable summary({"set", "dimension", "margin", "distance", "kkt_residual",
                    "collinearity_angle", "iterations", "evaluations", "converged"});
  for (std::size_t k = 0; k < sets.size(); ++k) {
    const auto& [name, list] = sets[k];
    const ModelBundle sub = restrict_parameters(ctx.model, list);
    const MarginResult r =
        safety_margin_nd(simulation_oracle(sub.scenario(), ctx.jobs), sub.space.nominal, weights[k], mc);
    Json body = to_json(r, list);
    body["set"] = name;
    write_json(ctx, "margin_" + file_safe(name) + ".json", std::move(body));
    summary.row().cell(name).cell(static_cast<int>(list.size())).cell(r.margin).cell(r.distance);
    summary.cell(r.kkt_residual).cell(r.collinearity_angle).cell(r.iterations);
    summary.cell(static_cast<int>(r.evaluations)).cell(r.converged);

    char line[200];
    std::snprintf(line, sizeof line, "margin %s: %.8e (KKT %.2e, %d iterations)\n", name.c_str(),
                  r.margin, r.kkt_residual, r.iterations);
    ctx.log << line;
  }
  write_csv(ctx, "margin.csv", summary.str(ctx.prov));
  return kExitOk;
}

int cmd_validate(const Context& ctx) {
  const ValidationReport rep = validate(ctx.model.system, ctx.model.space, ctx.model.schedule);
  Json body;
  body["report"] = to_json(rep);
  body["model"] = model_metadata(ctx.model);
  body["config"] = config_to_json(ctx.cfg);
  write_json(ctx, "validation.json", std::move(body));
  ctx.log << "validate: " << (rep.ok() ? "ok" : rep.summary()) << "\n";
  return rep.ok() ? kExitOk : kExitConfig;
}

const std::map<std::string, int (*)(const Context&)>& commands() {
  static const std::map<std::string, int (*)(const Context&)> table{
      {"simulate", cmd_simulate}, {"gsweep", cmd_gsweep}, {"boundary1d", cmd_boundary1d},
      {"trace2d", cmd_trace2d},   {"margin", cmd_margin}, {"validate", cmd_validate}};
  return table;
}

void write_error(const fs::path& out, const Provenance& prov, const std::string& command,
                 int exit_code, const std::string& kind, const std::string& message) {
  Json body;
  body["command"] = command;
  body["exit_code"] = exit_code;
  body["error"] = kind;
  body["message"] = message;
  try {
    write_text(out / "error.json", dump(with_provenance(std::move(body), prov)));
  } catch (const Error&) {
    // The output directory itself may be the problem; stderr already has it.
  }
}

}  // namespace

int run_command(const CommandOptions& options, std::ostream& log) {
  const auto cmd = commands().find(options.command);
  if (cmd == commands().end()) {
    log << "error: unknown command '" << options.command << "'\n";
    return kExitConfig;
  }

  ScenarioConfig cfg;
  try {
    cfg = load_config(options.config_path);
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  const fs::path out = options.out_dir.value_or(cfg.output.value_or("rbound_out"));
  const Provenance prov{config_hash(cfg)};

  const auto fail = [&](int code, const std::string& kind, const std::string& message) {
    log << (code == kExitConfig ? "config error: " : "error: ") << message << "\n";
    write_error(out, prov, options.command, code, kind, message);
    return code;
  };

  try {
    Context ctx{cfg, prepare_model(cfg), prov, out, std::max<std::size_t>(1, options.jobs), log};
    return cmd->second(ctx);
  } catch (const ConfigError& e) {
    return fail(kExitConfig, "ConfigError", e.what());
  } catch (const Error& e) {
    return fail(kExitNumerical, to_string(e.code()), e.what());
  } catch (const std::exception& e) {
    return fail(kExitNumerical, "Unexpected", e.what());
  }
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Recovery boundaries and safety margins of parameterized hybrid systems."};
  app.require_subcommand(1);

  CommandOptions opts;
  std::string out;
  const std::vector<std::pair<const char*, const char*>> entries{
      {"simulate", "Simulate the nominal scenario; write trajectory, sensitivities and recovery"},
      {"gsweep", "Evaluate G over a 1-D parameter grid"},
      {"boundary1d", "Newton search for the recovery boundary in one parameter"},
      {"trace2d", "Trace the recovery boundary in two parameters"},
      {"margin", "Safety margin for each configured parameter set"},
      {"validate", "Check the configured model"}};
  for (const auto& [name, help] : entries) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opts.config_path, "Scenario config (JSON)")->required();
    sub->add_option("--out", out, "Output directory (overrides the config)");
    sub->add_option("--jobs", opts.jobs, "Worker threads")->check(CLI::PositiveNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  CLI::App* chosen = app.get_subcommands().front();
  opts.command = chosen->get_name();
  if (chosen->count("--out")) opts.out_dir = out;
  return run_command(opts, std::cout);
}

}  // namespace rbound
