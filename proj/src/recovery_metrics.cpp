#include "rbound/recovery_metrics.hpp"

#include "rbound/parallel.hpp"

#include <algorithm>
#include <numeric>

namespace rbound {

StateMask StateMask::from_names(const HybridSystem& sys, const std::vector<std::string>& names) {
  StateMask mask{std::vector<bool>(sys.n, false)};
  for (const auto& name : names) {
    const auto it = std::find(sys.state_names.begin(), sys.state_names.end(), name);
    if (it == sys.state_names.end()) {
      throw Error(ErrorCode::InvalidArgument, "mask names unknown state '" + name + "'");
    }
    mask.selected[static_cast<std::size_t>(it - sys.state_names.begin())] = true;
  }
  return mask;
}

std::size_t StateMask::count(std::size_t n) const {
  if (selected.empty()) return n;
  return static_cast<std::size_t>(std::count(selected.begin(), selected.end(), true));
}

void StateMask::check(std::size_t n) const {
  if (!selected.empty() && selected.size() != n) {
    throw Error(ErrorCode::InvalidArgument, "state mask size does not match the model");
  }
  if (count(n) == 0) throw Error(ErrorCode::InvalidArgument, "state mask selects no states");
}

void RecoveryConfig::check() const {
  if (!(horizon > 0.0)) throw Error(ErrorCode::InvalidArgument, "horizon must be positive");
  if (!(delta > 0.0)) throw Error(ErrorCode::InvalidArgument, "recovery radius must be positive");
  if (!(window_fraction > 0.0 && window_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "settling window must lie strictly inside the horizon");
  }
  if (!(epsilon > 0.0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be positive");
  if (g_horizon && !(*g_horizon > 0.0 && *g_horizon <= horizon)) {
    throw Error(ErrorCode::InvalidArgument, "G-horizon must lie in (0, horizon]");
  }
  if (!(time_resolution > 0.0 && time_resolution < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "time resolution must lie in (0, 1)");
  }
}

const char* to_string(RecoveryStatus s) noexcept {
  switch (s) {
    case RecoveryStatus::Recovered: return "recovered";
    case RecoveryStatus::NotRecovered: return "not_recovered";
    case RecoveryStatus::Diverged: return "diverged";
    case RecoveryStatus::Escaped: return "escaped";
    case RecoveryStatus::SettledElsewhere: return "settled_elsewhere";
    case RecoveryStatus::Inconclusive: return "inconclusive";
  }
  return "unknown";
}

namespace {

bool escaped(const Vector& x, const Vector& x_sep, const Vector& radius) {
  if (radius.size() != x.size()) return false;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (std::abs(x(i) - x_sep(i)) > radius(i)) return true;
  }
  return false;
}

}  // namespace

RecoveryStatus assess_recovery(const StateTrajectory& traj, const Vector& x_sep,
                               const RecoveryConfig& cfg) {
  if (traj.diverged) return RecoveryStatus::Diverged;
  if (traj.stopped_early) return RecoveryStatus::Escaped;
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    if (traj.times[k] >= traj.post_start_time && escaped(traj.x[k], x_sep, cfg.escape_radius)) {
      return RecoveryStatus::Escaped;
    }
  }
  const double window_start = cfg.horizon * (1.0 - cfg.window_fraction);
  if (traj.end_time < cfg.horizon * (1.0 - 1e-12)) return RecoveryStatus::NotRecovered;
  double deviation = 0.0;
  Vector lo, hi;
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    if (traj.times[k] < window_start) continue;
    const Vector& x = traj.x[k];
    deviation = std::max(deviation, (x - x_sep).lpNorm<Eigen::Infinity>());
    if (lo.size() == 0) {
      lo = hi = x;
    } else {
      lo = lo.cwiseMin(x);
      hi = hi.cwiseMax(x);
    }
  }
  if (lo.size() == 0) return RecoveryStatus::Inconclusive;
  if (deviation <= cfg.delta) return RecoveryStatus::Recovered;
  if ((hi - lo).maxCoeff() <= cfg.delta) return RecoveryStatus::SettledElsewhere;
  return RecoveryStatus::Inconclusive;
}

bool classify_recovery(const StateTrajectory& traj, const Vector& x_sep, const RecoveryConfig& cfg) {
  const RecoveryStatus s = assess_recovery(traj, x_sep, cfg);
  if (s == RecoveryStatus::Inconclusive) {
    throw Error(ErrorCode::Inconclusive,
                "trajectory neither settles nor escapes within the horizon; extend it");
  }
  return s == RecoveryStatus::Recovered;
}

Equilibrium post_disturbance_equilibrium(const Scenario& sc, const Vector& p) {
  const InitialPoint ip =
      pre_disturbance_state(sc.system, sc.schedule, p, sc.integration.algebraic);
  return find_equilibrium(sc.system, p, ip.x, ip.y, sc.schedule.post_mode);
}

RowVector gradient_from_sensitivities(const Matrix& chi, const Matrix& chi2,
                                      const StateMask& mask) {
  const auto n = chi.rows();
  const auto P = chi.cols();
  double norm = 0.0;
  RowVector dnorm = RowVector::Zero(P);
  for (Eigen::Index r = 0; r < n; ++r) {
    if (!mask.includes(static_cast<std::size_t>(r))) continue;
    for (Eigen::Index i = 0; i < P; ++i) {
      const double sign = chi(r, i) >= 0.0 ? 1.0 : -1.0;
      norm += std::abs(chi(r, i));
      for (Eigen::Index j = 0; j < P; ++j) dnorm(j) += sign * chi2(r, j * P + i);
    }
  }
  return -dnorm / (norm * norm);
}

namespace {

Matrix unpack_chi(const Vector& z, Eigen::Index n, Eigen::Index P) {
  return Eigen::Map<const Matrix>(z.data() + n, n, P);
}

// Golden-section minimum of h on [a, b].
template <class Fn>
std::pair<double, double> golden_minimum(Fn&& h, double a, double b, double tol) {
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - r * (b - a);
  double d = a + r * (b - a);
  double hc = h(c), hd = h(d);
  while (b - a > tol) {
    if (hc <= hd) {
      b = d;
      d = c;
      hd = hc;
      c = b - r * (b - a);
      hc = h(c);
    } else {
      a = c;
      c = d;
      hc = hd;
      d = a + r * (b - a);
      hd = h(d);
    }
  }
  return hc <= hd ? std::make_pair(c, hc) : std::make_pair(d, hd);
}

}  // namespace

GEvaluation evaluate_G(const Scenario& sc, const Vector& p, const GOptions& options) {
  const HybridSystem& sys = sc.system;
  const RecoveryConfig& rc = sc.recovery;
  rc.check();
  sc.mask.check(sys.n);
  const auto n = static_cast<Eigen::Index>(sys.n);
  const auto P = p.size();

  IntegrationConfig icfg = sc.integration;
  icfg.horizon = rc.horizon;
  icfg.divergence_is_error = false;

  GEvaluation ev;
  ev.p = p;

  std::optional<Equilibrium> sep;
  try {
    sep = post_disturbance_equilibrium(sc, p);
    ev.x_sep = sep->x;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoEquilibrium && e.code() != ErrorCode::EquilibriumUnstable) throw;
  }

  const std::vector<double> durations = phase_durations(sc.schedule, p);
  const double post_start = std::accumulate(durations.begin(), durations.end(), 0.0);

  SensitivityOptions so;
  so.store_dense = true;
  if (sep && rc.escape_radius.size() == n) {
    const Vector x_sep = sep->x;
    const Vector radius = rc.escape_radius;
    so.stop_when = [x_sep, radius, post_start](double t, const Vector& x) {
      return t >= post_start && escaped(x, x_sep, radius);
    };
  }
  const SensitivityTrajectory st = propagate_first_order(sys, sc.schedule, p, icfg, so);
  ev.simulations = 1;
  ev.status = sep ? assess_recovery(st.states, sep->x, rc) : RecoveryStatus::NotRecovered;
  ev.recovered = ev.status == RecoveryStatus::Recovered;

  for (const auto& e : st.states.events) {
    if (e.kind == EventKind::Indicator) ++ev.event_count;
  }
  for (std::size_t k = 0; k < st.states.times.size(); ++k) {
    for (std::size_t i = 0; i < sys.constraints.size(); ++i) {
      if (!sys.constraints[i].switched()) continue;
      const double s = sys.constraints[i].indicator(st.states.x[k], st.states.y[k], p);
      ev.min_indicator_margin = std::min(ev.min_indicator_margin, std::abs(s));
    }
  }

  // Discrete minimum over samples and post-event states.
  const double t_lo = rc.include_disturbance ? 0.0 : post_start;
  const double t_hi = std::min(rc.g_end(), st.states.end_time);
  const double tie = 1e-12 * std::max(1.0, t_hi);
  std::vector<std::pair<double, double>> cand;
  for (std::size_t k = 0; k < st.states.times.size(); ++k) {
    const double t = st.states.times[k];
    const double H = evaluate_H(st.chi[k], sc.mask);
    if (options.want_series) ev.H_series.emplace_back(t, H);
    if (t >= t_lo - tie && t <= t_hi + tie) cand.emplace_back(t, H);
  }
  std::vector<double> event_times;
  for (const auto& j : st.jumps) {
    event_times.push_back(j.time);
    if (j.time >= t_lo - tie && j.time <= t_hi + tie) {
      cand.emplace_back(j.time, evaluate_H(j.chi_plus, sc.mask));
    }
  }
  std::stable_sort(cand.begin(), cand.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::size_t best = cand.size();
  for (std::size_t k = 0; k < cand.size(); ++k) {
    if (std::isfinite(cand[k].second) && (best == cand.size() || cand[k].second < cand[best].second)) {
      best = k;
    }
  }
  if (best == cand.size()) {
    ev.G = kInf;
    ev.t_hat = t_lo;
    ev.chi_hat = st.chi.empty() ? Matrix::Zero(n, P) : st.chi.front();
    if (options.want_gradient) ev.DG = RowVector::Zero(P);
    return ev;
  }

  double t_star = cand[best].first;
  double H_star = cand[best].second;
  double a = best > 0 ? cand[best - 1].first : t_star;
  double b = best + 1 < cand.size() ? cand[best + 1].first : t_star;
  for (double tau : event_times) {
    if (tau < t_star - tie) {
      a = std::max(a, tau);
    } else if (tau > t_star + tie) {
      b = std::min(b, tau);
    } else {
      a = std::max(a, t_star);
    }
  }
  const double resolution = rc.time_resolution * rc.g_end();
  if (b - a > resolution && !st.dense.empty()) {
    const auto H_at = [&](double t) { return evaluate_H(unpack_chi(st.dense(t), n, P), sc.mask); };
    const auto [t_ref, H_ref] = golden_minimum(H_at, a, b, resolution);
    if (H_ref < H_star) {
      t_star = t_ref;
      H_star = H_ref;
    }
  }
  ev.G = H_star;
  ev.t_hat = t_star;
  ev.chi_hat = st.dense.empty() ? st.chi[0] : unpack_chi(st.dense(t_star), n, P);
  std::optional<std::size_t> kink;
  for (std::size_t k = 0; k < st.jumps.size(); ++k) {
    if (std::abs(st.jumps[k].time - t_star) <= icfg.event_time_tolerance + 2.0 * resolution) {
      kink = k;
      ev.gradient_at_kink = true;
      ev.chi_hat = st.jumps[k].chi_plus;
    }
  }

  if (!options.want_gradient || (options.gradient_only_if_recovered && !ev.recovered)) return ev;

  IntegrationConfig pcfg = icfg;
  SensitivityOptions po;
  po.grid_output = false;
  // A minimum pinned to an event moves with the event, so the perturbed
  // runs report the post-jump chi of the same event rather than chi at t_hat.
  double t_stop = t_star;
  if (kink) {
    t_stop = t_star + 1e-3 * std::max(1.0, t_star);
  } else {
    po.extra_times = {t_star};
  }
  po.stop_when = [t_stop](double t, const Vector&) { return t >= t_stop; };
  // Near the boundary chi grows like 1/distance, so 1/|chi_j|_1 bounds how
  // far p_j may move before the perturbed runs reach the boundary.
  Vector upper(P), lower(P);
  for (Eigen::Index j = 0; j < P; ++j) {
    double col = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) {
      if (sc.mask.includes(static_cast<std::size_t>(r))) col += std::abs(ev.chi_hat(r, j));
    }
    double h = second_order_step(p(j));
    if (col > 0.0) h = std::min(h, kBoundaryStepFraction / col);
    upper(j) = p(j) + h;
    lower(j) = p(j) - h;
  }
  std::vector<Matrix> chis(static_cast<std::size_t>(2 * P));
  parallel_for(chis.size(), options.jobs, [&](std::size_t k) {
    const auto j = static_cast<Eigen::Index>(k / 2);
    Vector pj = p;
    pj(j) = k % 2 == 0 ? upper(j) : lower(j);
    const SensitivityTrajectory r = propagate_first_order(sys, sc.schedule, pj, pcfg, po);
    if (kink) {
      if (r.jumps.size() <= *kink) {
        throw Error(ErrorCode::IntegrationDiverged, "perturbed run lost the event at t_hat");
      }
      chis[k] = r.jumps[*kink].chi_plus;
      return;
    }
    if (r.extra_chi.empty()) {
      throw Error(ErrorCode::IntegrationDiverged, "perturbed run ended before t_hat");
    }
    chis[k] = r.extra_chi.front();
  });
  ev.simulations += chis.size();
  Matrix chi2(n, P * P);
  for (Eigen::Index j = 0; j < P; ++j) {
    chi2.middleCols(j * P, P) =
        (chis[static_cast<std::size_t>(2 * j)] - chis[static_cast<std::size_t>(2 * j + 1)]) /
        (upper(j) - lower(j));
  }
  ev.DG = gradient_from_sensitivities(ev.chi_hat, chi2, sc.mask);
  return ev;
}

GEvaluation evaluate_G(const HybridSystem& sys, const PhaseSchedule& schedule, const Vector& p,
                       const StateMask& mask, const RecoveryConfig& recovery,
                       const IntegrationConfig& integration, bool want_gradient) {
  const Scenario sc{sys, schedule, mask, recovery, integration};
  GOptions opts;
  opts.want_gradient = want_gradient;
  return evaluate_G(sc, p, opts);
}

std::vector<GEvaluation> evaluate_many(const Scenario& sc, const std::vector<Vector>& points,
                                       const GOptions& options, std::size_t jobs) {
  std::vector<GEvaluation> out(points.size());
  GOptions inner = options;
  inner.jobs = 1;
  parallel_for(points.size(), jobs, [&](std::size_t k) {
    try {
      out[k] = evaluate_G(sc, points[k], inner);
    } catch (const Error& e) {
      out[k].p = points[k];
      out[k].status = RecoveryStatus::NotRecovered;
      out[k].error = e.what();
    }
  });
  return out;
}

}  // namespace rbound
