// Acceptance run: one PASS/FAIL line per criterion, details indented below.
// Optional arguments select criteria by number, e.g. `acceptance 1 4`.

#include "rbound/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

using namespace rbound;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::vector<std::string> details;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Classification that never throws: anything failing counts as not recovered.
bool recovers(const Scenario& sc, const Vector& p) {
  try {
    return evaluate_G(sc, p).recovered;
  } catch (const Error&) {
    return false;
  }
}

// -- 1: first-order sensitivities against central differences ----------------------

Outcome sensitivity_correctness() {
  const ModelBundle mb = build("smib");
  const Vector p = mb.space.nominal;
  const double t_clear = p[6];
  IntegrationConfig cfg = mb.integration;
  cfg.horizon = 3.0;
  cfg.rel_tol = 1e-12;
  cfg.abs_tol = 1e-14;
  cfg.output_step = 0.01;

  const auto st = propagate_first_order(mb.system, mb.schedule, p, cfg);
  const std::size_t P = static_cast<std::size_t>(p.size());
  std::vector<Matrix> fd(st.states.times.size(), Matrix::Zero(2, static_cast<Eigen::Index>(P)));
  for (std::size_t j = 0; j < P; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const double h = 1e-5 * std::max(1.0, std::abs(p[jj]));
    Vector lo = p, hi = p;
    lo[jj] -= h;
    hi[jj] += h;
    const auto a = integrate(mb.system, mb.schedule, hi, cfg);
    const auto b = integrate(mb.system, mb.schedule, lo, cfg);
    if (a.times.size() != st.states.times.size() || b.times.size() != st.states.times.size()) {
      return {false, {"perturbed runs produced a different sample grid"}};
    }
    for (std::size_t k = 0; k < a.times.size(); ++k) fd[k].col(jj) = (a.x[k] - b.x[k]) / (2 * h);
  }

  // Per-sample relative error in the max norm. Samples within 1 ms of the
  // clearing time straddle the event in the perturbed runs and are skipped.
  double fault_on = 0.0, post = 0.0;
  std::size_t n_on = 0, n_post = 0;
  for (std::size_t k = 0; k < fd.size(); ++k) {
    const double t = st.states.times[k];
    if (std::abs(t - t_clear) < 1e-3) continue;
    const double scale = fd[k].cwiseAbs().maxCoeff();
    const double err = (st.chi[k] - fd[k]).cwiseAbs().maxCoeff() / std::max(scale, 1e-12);
    if (t < t_clear) {
      fault_on = std::max(fault_on, err);
      ++n_on;
    } else {
      post = std::max(post, err);
      ++n_post;
    }
  }
  Outcome o;
  o.pass = fault_on <= 1e-4 && post <= 1e-2 && n_on > 5 && n_post > 100;
  o.details.push_back(fmt("event-free window (fault on, %zu samples): max rel error %.2e (<= 1e-4)",
                          n_on, fault_on));
  o.details.push_back(fmt("across the clearing event (%zu samples to t = 3 s): max rel error %.2e (<= 1e-2)",
                          n_post, post));
  return o;
}

// -- 2: critical clearing time ------------------------------------------------------

// Recovery by direct inspection: the post-fault equilibrium of the SMIB is
// the pre-fault one, delta_s = asin(pm x / (e v)).
bool smib_settles(const ModelBundle& mb, double t_clear) {
  Vector p = mb.space.nominal;
  p[6] = t_clear;
  IntegrationConfig cfg = mb.integration;
  cfg.divergence_is_error = false;
  const auto traj = integrate(mb.system, mb.schedule, p, cfg);
  const double ds = std::asin(p[0] * p[5] / (p[3] * p[4]));
  if (traj.end_time < cfg.horizon - 1e-9) return false;
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    if (traj.times[k] < 0.9 * cfg.horizon) continue;
    if (std::abs(traj.x[k][0] - ds) > 1e-3 || std::abs(traj.x[k][1]) > 1e-3) return false;
  }
  return true;
}

Outcome critical_clearing_time() {
  const ModelBundle full = build("smib");
  double lo = 0.2, hi = 0.6;
  if (!smib_settles(full, lo) || smib_settles(full, hi)) return {false, {"oracle bracket invalid"}};
  while (hi - lo > 1e-8) {
    const double mid = 0.5 * (lo + hi);
    (smib_settles(full, mid) ? lo : hi) = mid;
  }
  const double cct = 0.5 * (lo + hi);

  const ModelBundle mb = restrict_parameters(full, {"t_clear"});
  const Solver1DResult r = find_boundary_1d(simulation_oracle(mb.scenario()), 0.2);
  Outcome o;
  const double gap = std::abs(r.p_star - cct);
  o.pass = r.converged && std::abs(r.G_star) <= 1e-5 && gap <= 1e-4 && r.evaluations <= 15 &&
           r.newton_steps <= 10;
  o.details.push_back(fmt("bisection CCT %.8f s; Newton from 0.2 s: t* = %.8f s, |G| = %.2e, gap %.2e s",
                          cct, r.p_star, std::abs(r.G_star), gap));
  o.details.push_back(fmt("%zu G-evaluations (<= 15), %d accepted Newton steps (<= 10)", r.evaluations,
                          r.newton_steps));

  // Same solver on the three-machine clearing time, for comparison.
  try {
    const ModelBundle m3 = restrict_parameters(build("three_machine"), {"t_clear"});
    const Solver1DResult r3 = find_boundary_1d(simulation_oracle(m3.scenario()), m3.space.nominal[0]);
    o.details.push_back(fmt("three_machine clearing time: t* = %.8f s, |G| = %.2e, %zu evaluations "
                            "(informational)", r3.p_star, std::abs(r3.G_star), r3.evaluations));
  } catch (const Error& e) {
    o.details.push_back(std::string("three_machine clearing time: ") + e.what());
  }
  return o;
}

// -- 3: positivity of G on recovered samples ----------------------------------------------

struct Box {
  std::string name;
  double lo, hi;
};

// Classification oracle: settle within delta of the SEP over the last tenth
// of the horizon, read straight off the trajectory.
bool settles(const ModelBundle& mb, const Vector& p) {
  try {
    const Equilibrium eq = post_disturbance_equilibrium(mb.scenario(), p);
    IntegrationConfig cfg = mb.integration;
    cfg.divergence_is_error = false;
    const auto traj = integrate(mb.system, mb.schedule, p, cfg);
    if (traj.end_time < cfg.horizon - 1e-9) return false;
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
      if (traj.times[k] < 0.9 * cfg.horizon) continue;
      if ((traj.x[k] - eq.x).cwiseAbs().maxCoeff() > mb.recovery.delta) return false;
    }
    return true;
  } catch (const Error&) {
    return false;
  }
}

Outcome positivity_suite() {
  std::mt19937_64 rng(20240611);
  const std::vector<std::pair<std::string, std::vector<Box>>> plan{
      {"smib", {{"pm", 0.5, 1.0}, {"d", 10.0, 30.0}, {"t_clear", 0.05, 0.6}}},
      {"three_machine", {{"sigma", 0.9, 1.2}, {"alpha_q", 1.5, 2.5}, {"t_clear", 0.1, 0.4}}}};
  Outcome o;
  o.pass = true;
  std::size_t recovered = 0, rejected = 0, nonpositive = 0, unflagged = 0, disagree = 0;
  for (const auto& [model, boxes] : plan) {
    std::vector<std::string> names;
    for (const auto& b : boxes) names.push_back(b.name);
    const ModelBundle mb = restrict_parameters(build(model), names);
    std::vector<Vector> pts;
    for (int s = 0; s < 50; ++s) {
      Vector p(static_cast<Eigen::Index>(boxes.size()));
      for (std::size_t i = 0; i < boxes.size(); ++i) {
        p[static_cast<Eigen::Index>(i)] = std::uniform_real_distribution<double>(boxes[i].lo, boxes[i].hi)(rng);
      }
      pts.push_back(p);
    }
    const auto evs = evaluate_many(mb.scenario(), pts, {}, 1);
    for (std::size_t s = 0; s < pts.size(); ++s) {
      const GEvaluation& ev = evs[s];
      const bool flagged = ev.error || !ev.recovered;
      const bool oracle = settles(mb, pts[s]);
      if (!flagged) {
        ++recovered;
        if (!(ev.G > 0.0) || !std::isfinite(ev.G)) ++nonpositive;
      } else {
        ++rejected;
      }
      if (!oracle && !flagged) ++unflagged;
      if (oracle == flagged) ++disagree;
    }
  }
  o.pass = nonpositive == 0 && unflagged == 0 && recovered > 0 && rejected > 0;
  o.details.push_back(fmt("100 samples: %zu recovered, %zu not recovered", recovered, rejected));
  o.details.push_back(fmt("recovered with G <= 0: %zu; oracle non-recovered but not flagged: %zu", nonpositive,
                          unflagged));
  o.details.push_back(fmt("classification disagreements with the trajectory oracle: %zu", disagree));
  return o;
}

// -- 4: synthetic-oracle solver suite ---------------------------------------------------

std::vector<MarginResult> g_sphere_results;

Outcome synthetic_suite() {
  Outcome o;
  bool ok = true;

  // Unit circle, G = 1 - |p|^2.
  const GOracle disc = synthetic_oracle(
      [](const Vector& p) { return 1.0 - p.squaredNorm(); },
      [](const Vector& p) { RowVector g = -2.0 * p.transpose(); return g; },
      [](const Vector& p) { return p.squaredNorm() < 1.0; });
  TraceConfig tc;
  tc.epsilon = 1e-8;
  const BoundaryTrace t = trace_boundary_2d(disc, Vector{{1.0, 0.0}}, 0.05, 400, 1, tc);
  double radial = 0.0;
  for (const auto& pt : t.points) radial = std::max(radial, std::abs(pt.p.norm() - 1.0));
  ok = ok && t.points.size() >= 100 && radial <= 1e-6;
  o.details.push_back(fmt("circle trace: %zu points (stop: %s), max radial error %.2e (<= 1e-6)",
                          t.points.size(), t.stop_reason.c_str(), radial));

  // Sphere of radius 1 about the origin, G = (1 - |p|^2) / 2.
  g_sphere_results.clear();
  for (int P : {2, 5, 20, 86}) {
    Vector p0(P);
    for (int i = 0; i < P; ++i) p0[i] = std::sin(1.0 + i) + 0.5;
    p0 *= 0.4 / p0.norm();
    const GOracle sphere = synthetic_oracle(
        [](const Vector& p) { return 0.5 * (1.0 - p.squaredNorm()); },
        [](const Vector& p) { RowVector g = -p.transpose(); return g; },
        [](const Vector& p) { return p.squaredNorm() < 1.0; });
    MarginConfig mc;
    mc.epsilon = 1e-12;
    mc.step_tolerance = 1e-11;
    mc.kkt_tolerance = 1e-10;
    const MarginResult r = safety_margin_nd(sphere, p0, std::nullopt, mc);
    const double exact = 0.5 * 0.6 * 0.6;
    const double perr = (r.p_star - p0 / 0.4).cwiseAbs().maxCoeff();
    const bool good = r.converged && std::abs(r.margin - exact) <= 1e-8 && perr <= 1e-8;
    ok = ok && good;
    g_sphere_results.push_back(r);
    o.details.push_back(fmt("sphere P = %2d: margin %.12f vs %.12f, |p* - exact| %.1e, %d iterations", P,
                            r.margin, exact, perr, r.iterations));
  }

  // G -> cG with epsilon -> c epsilon leaves every Newton iterate unchanged.
  const double root = std::acos(0.5);
  std::vector<Solver1DResult> runs;
  for (double c : {1e-3, 1.0, 1e3}) {
    const GOracle g = synthetic_oracle(
        [c](const Vector& p) { return c * (std::cos(p[0]) - 0.5); },
        [c](const Vector& p) { return RowVector::Constant(1, -c * std::sin(p[0])); },
        [root](const Vector& p) { return p[0] < root; });
    Solver1DConfig sc;
    sc.epsilon = 1e-10 * c;
    // cos is concave here, so overshooting steps are halved and convergence is linear.
    sc.max_iterations = 200;
    runs.push_back(find_boundary_1d(g, 0.1, sc));
  }
  double spread = 0.0;
  bool same_path = true;
  for (const auto& r : runs) {
    spread = std::max(spread, std::abs(r.p_star - runs[1].p_star));
    same_path = same_path && r.history.size() == runs[1].history.size() && r.converged;
  }
  const bool scale_ok = same_path && spread <= 1e-12 && std::abs(runs[1].p_star - root) <= 1e-8;
  ok = ok && scale_ok;
  o.details.push_back(fmt("Newton under G -> cG, c in {1e-3, 1, 1e3}: p* spread %.1e, same iterate count: %s, "
                          "|p* - pi/3| = %.1e", spread, same_path ? "yes" : "no", std::abs(runs[1].p_star - root)));
  o.pass = ok;
  return o;
}

// -- 5: continuation integrity on the three-machine (sigma, alpha_q) boundary ---------------

Outcome continuation_integrity() {
  const ModelBundle mb = restrict_parameters(build("three_machine"), {"sigma", "alpha_q"});
  const Scenario sc = mb.scenario();
  const GOracle oracle = simulation_oracle(sc);
  const Vector nominal = mb.space.nominal;

  const GOracle along_sigma = [&](const Vector& q) {
    Vector full = nominal;
    full[0] = q[0];
    GSample g = oracle(full);
    if (g.DG.size() == 2) g.DG = RowVector::Constant(1, g.DG[0]);
    return g;
  };
  const Solver1DResult start = find_boundary_1d(along_sigma, nominal[0]);
  Vector p_start = nominal;
  p_start[0] = start.p_star;

  const BoundaryTrace t = trace_boundary_2d(oracle, p_start, 0.1, 30, 1);
  Outcome o;
  double worst_g = 0.0, worst_h = 0.0;
  for (std::size_t s = 0; s < t.points.size(); ++s) {
    worst_g = std::max(worst_g, std::abs(t.points[s].G));
    if (s > 0) worst_h = std::max(worst_h, t.points[s].hyperplane_residual);
  }
  o.details.push_back(fmt("%zu trace points from (%.6f, %.1f), %zu evaluations; max |G| %.2e (<= 1e-5), "
                          "max hyperplane residual %.1e (<= 1e-10)",
                          t.points.size(), p_start[0], p_start[1], t.evaluations, worst_g, worst_h));

  // Twenty accepted points, drawn with a fixed seed, each checked against a
  // bisection of the recovery classification along its own hyperplane.
  std::vector<std::size_t> idx(t.points.size() > 1 ? t.points.size() - 1 : 0);
  std::iota(idx.begin(), idx.end(), 1);
  std::mt19937_64 rng(7);
  std::shuffle(idx.begin(), idx.end(), rng);
  if (idx.size() > 20) idx.resize(20);
  std::sort(idx.begin(), idx.end());

  double worst_gap = 0.0;
  std::size_t unbracketed = 0;
  for (std::size_t s : idx) {
    const TracePoint& pt = t.points[s];
    const Vector base = t.points[s - 1].p + pt.kappa * pt.eta;
    const Vector nu{{-pt.eta[1], pt.eta[0]}};
    const double tau = (pt.p - base).dot(nu);
    const auto inside = [&](double x) { return recovers(sc, base + x * nu); };
    double w = 1e-3, a = 0.0, b = 0.0;
    bool ia = false, ib = false;
    for (; w <= 0.2; w *= 4.0) {
      a = tau - w;
      b = tau + w;
      ia = inside(a);
      ib = inside(b);
      if (ia != ib) break;
    }
    if (ia == ib) {
      ++unbracketed;
      continue;
    }
    while (b - a > 1e-7) {
      const double m = 0.5 * (a + b);
      (inside(m) == ia ? a : b) = m;
    }
    worst_gap = std::max(worst_gap, std::abs(0.5 * (a + b) - tau));
  }
  o.details.push_back(fmt("%zu sampled points vs hyperplane bisection: max distance %.2e (<= 1e-4), "
                          "%zu without a bracket", idx.size(), worst_gap, unbracketed));
  o.pass = t.points.size() >= 21 && worst_g <= 1e-5 && worst_h <= 1e-10 && idx.size() == 20 &&
           unbracketed == 0 && worst_gap <= 1e-4;
  return o;
}

// -- 6 / 7: nested margins and KKT collinearity ------------------------------------------------

std::vector<std::pair<std::string, MarginResult>> g_margins;

void run_margins() {
  if (!g_margins.empty()) return;
  const ModelBundle full = build("three_machine");
  for (const char* set : {"S1", "S2", "S3"}) {
    const ModelBundle mb = restrict_parameters(full, full.parameter_sets.at(set));
    g_margins.emplace_back(set, safety_margin_nd(simulation_oracle(mb.scenario()), mb.space.nominal));
  }
}

Outcome nested_margins() {
  run_margins();
  Outcome o;
  bool ok = true;
  double prev = kInf;
  for (const auto& [set, r] : g_margins) {
    const bool good = r.converged && r.kkt_residual <= 1e-6 && r.iterations <= 100 && r.margin <= prev;
    ok = ok && good;
    prev = r.margin;
    o.details.push_back(fmt("%s (%td parameters): margin %.8e, KKT %.1e, %d iterations, %zu evaluations",
                            set.c_str(), r.p0.size(), r.margin, r.kkt_residual, r.iterations, r.evaluations));
  }
  o.pass = ok;
  return o;
}

Outcome kkt_collinearity() {
  run_margins();
  if (g_sphere_results.empty()) (void)synthetic_suite();
  Outcome o;
  double worst = 0.0;
  std::size_t counted = 0;
  for (const auto& [set, r] : g_margins) {
    if (!r.converged) continue;
    worst = std::max(worst, r.collinearity_angle);
    ++counted;
    o.details.push_back(fmt("%s: angle %.2e rad", set.c_str(), r.collinearity_angle));
  }
  for (const auto& r : g_sphere_results) {
    if (!r.converged) continue;
    worst = std::max(worst, r.collinearity_angle);
    ++counted;
  }
  o.details.push_back(fmt("%zu converged margins (incl. synthetic spheres), worst angle %.2e rad (<= 1e-4)",
                          counted, worst));
  o.pass = counted > 0 && worst <= 1e-4;
  return o;
}

// -- 8: determinism of CLI artifacts --------------------------------------------------------

std::map<std::string, std::string> read_tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    out[fs::relative(e.path(), dir).string()] = ss.str();
  }
  return out;
}

Outcome determinism() {
  const fs::path work = "acceptance_determinism";
  fs::remove_all(work);
  fs::create_directories(work);
  const std::vector<std::pair<std::string, std::string>> runs{
      {"simulate", R"({"model": "smib"})"},
      {"gsweep", R"({"model": "smib", "sweep": {"parameter": "pm", "lower": 0.5, "upper": 1.1, "n": 7}})"},
      {"boundary1d", R"({"model": "smib", "boundary1d": {"parameter": "t_clear"}})"},
      {"trace2d", R"({"model": "three_machine", "trace2d": {"parameters": ["sigma", "alpha_q"],
                    "kappa": 0.1, "n_points": 4}})"},
      {"margin", R"({"model": "smib", "margin": {"custom_sets": {"pm_tclear": ["pm", "t_clear"]}}})"},
      {"validate", R"({"model": "three_machine"})"}};
  Outcome o;
  bool ok = true;
  for (const auto& [cmd, text] : runs) {
    const fs::path cfg = work / (cmd + ".json");
    std::ofstream(cfg) << text;
    std::ostringstream log;
    const int c1 = run_command({cmd, cfg.string(), (work / (cmd + "_a")).string(), 1}, log);
    const int c2 = run_command({cmd, cfg.string(), (work / (cmd + "_b")).string(), 2}, log);
    const auto a = read_tree(work / (cmd + "_a"));
    const auto b = read_tree(work / (cmd + "_b"));
    const bool same = c1 == kExitOk && c2 == kExitOk && !a.empty() && a == b;
    ok = ok && same;
    o.details.push_back(fmt("%-10s exit %d/%d, %zu artifacts, %s", cmd.c_str(), c1, c2, a.size(),
                            same ? "byte-identical" : "DIFFER"));
  }
  o.pass = ok;
  return o;
}

struct Criterion {
  int id;
  const char* title;
  double budget_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "sensitivity correctness (SMIB)", 10.0, sensitivity_correctness},
      {2, "critical clearing time equivalence", 60.0, critical_clearing_time},
      {3, "positivity of G on recovered samples", 300.0, positivity_suite},
      {4, "synthetic-oracle solver suite", 10.0, synthetic_suite},
      {5, "continuation integrity", 900.0, continuation_integrity},
      {6, "nested-margin monotonicity", 1800.0, nested_margins},
      {7, "KKT collinearity", 1800.0, kkt_collinearity},
      {8, "determinism", 600.0, determinism},
  };
  std::set<int> chosen;
  for (int i = 1; i < argc; ++i) chosen.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!chosen.empty() && !chosen.count(c.id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.details.push_back(std::string("threw: ") + e.what());
    }
    const double dt = seconds_since(t0);
    const bool in_time = dt < c.budget_seconds;
    const bool pass = o.pass && in_time;
    failed += pass ? 0 : 1;
    std::printf("[%s] criterion %d: %s (%.1f s, budget %.0f s%s)\n", pass ? "PASS" : "FAIL", c.id, c.title, dt,
                c.budget_seconds, in_time ? "" : ", exceeded");
    for (const auto& d : o.details) std::printf("    %s\n", d.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
