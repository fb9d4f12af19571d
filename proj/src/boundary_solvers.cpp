#include "rbound/boundary_solvers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rbound {

GOracle synthetic_oracle(std::function<double(const Vector&)> G,
                         std::function<RowVector(const Vector&)> DG,
                         std::function<bool(const Vector&)> recovered) {
  return [G = std::move(G), DG = std::move(DG), rec = std::move(recovered)](const Vector& p) {
    return GSample{G(p), DG(p), rec(p)};
  };
}

GOracle simulation_oracle(const Scenario& scenario, std::size_t jobs,
                          std::atomic<std::size_t>* counter) {
  return [scenario, jobs, counter](const Vector& p) {
    if (counter) ++*counter;
    GOptions opts;
    opts.want_gradient = true;
    opts.gradient_only_if_recovered = true;
    opts.jobs = jobs;
    try {
      const GEvaluation ev = evaluate_G(scenario, p, opts);
      return GSample{ev.G, ev.DG.value_or(RowVector::Zero(p.size())), ev.recovered};
    } catch (const Error& e) {
      // No operating point, or the network equations lose their solution
      // along the trajectory: either way p lies outside the recovery region.
      switch (e.code()) {
        case ErrorCode::NoEquilibrium:
        case ErrorCode::EquilibriumUnstable:
        case ErrorCode::AlgebraicSolveFailure:
        case ErrorCode::IntegrationDiverged:
          return GSample{std::numeric_limits<double>::quiet_NaN(), RowVector::Zero(p.size()), false};
        default:
          throw;
      }
    }
  };
}

// -- one parameter -------------------------------------------------------------

Solver1DResult find_boundary_1d(const GOracle& oracle, double p0, const Solver1DConfig& cfg) {
  Solver1DResult res;
  const auto eval = [&](double p) {
    ++res.evaluations;
    return oracle(Vector::Constant(1, p));
  };
  GSample sk = eval(p0);
  res.history.push_back({p0, sk.G, sk.DG(0), sk.recovered, 0.0});
  if (!sk.recovered) {
    throw Error(ErrorCode::StartNotRecovered, "starting parameter lies outside the recovery region");
  }
  double pk = p0;
  int k = 0;
  int i = 1;
  for (;;) {
    if (std::abs(sk.G) <= cfg.epsilon) {
      res.converged = true;
      break;
    }
    if (std::abs(sk.DG(0)) < cfg.zero_gradient) {
      throw Error(ErrorCode::ZeroGradient, "DG vanishes at p = " + std::to_string(pk));
    }
    if (i > cfg.max_iterations) {
      throw Error(ErrorCode::MaxIterations,
                  "no boundary point within " + std::to_string(cfg.max_iterations) + " iterations");
    }
    const double mu = std::pow(0.5, i - k - 1);
    const double pi = pk - mu * sk.G / sk.DG(0);
    const GSample si = eval(pi);
    res.history.push_back({pi, si.G, si.DG(0), si.recovered, mu});
    if (si.recovered) {
      pk = pi;
      sk = si;
      k = i;
      ++res.newton_steps;
    }
    ++i;
  }
  res.p_star = pk;
  res.G_star = sk.G;
  res.DG_star = sk.DG(0);
  return res;
}

// -- two parameters --------------------------------------------------------------

Vector boundary_tangent(const RowVector& DG) {
  if (DG.size() != 2) throw Error(ErrorCode::InvalidArgument, "tangent needs a 2-parameter DG");
  const double norm = DG.norm();
  if (!(norm > 1e-14) || !std::isfinite(norm)) {
    throw Error(ErrorCode::TangentUndefined, "DG vanishes; boundary tangent undefined");
  }
  Vector eta(2);
  eta << DG(1) / norm, -DG(0) / norm;
  return eta;
}

namespace {

struct Correction {
  bool ok = false;
  Vector p;
  GSample s;
  int iterations = 0;
  double residual = 0.0;
  bool line_search_failed = false;
};

Correction correct(const GOracle& oracle, const TracePoint& from, const Vector& eta, double kappa,
                   const TraceConfig& cfg, std::size_t& evals) {
  Correction out;
  const auto eval = [&](const Vector& p) {
    ++evals;
    return oracle(p);
  };
  const Vector pred = from.p + kappa * eta;
  Vector w = pred;
  GSample sw = eval(pred);

  if (!sw.recovered) {
    // Search along the hyperplane for a recovered start, trying first the
    // side where the linearized G vanishes.
    Vector nu(2);
    nu << -eta(1), eta(0);
    const double slope = sw.DG.size() == 2 ? sw.DG.dot(nu) : 0.0;
    const double first = (slope != 0.0 && -sw.G / slope < 0.0) ? -1.0 : 1.0;
    int used = 0;
    bool found = false;
    double tau_good = 0.0, tau_bad = 0.0;
    GSample s_good;
    double bad_side[2] = {0.0, 0.0};
    for (double d : {kappa / 8, kappa / 4, kappa / 2, kappa, 2 * kappa}) {
      for (double sign : {first, -first}) {
        if (used >= cfg.max_line_search_evaluations) break;
        const double tau = sign * d;
        const GSample s = eval(pred + tau * nu);
        ++used;
        if (s.recovered) {
          found = true;
          tau_good = tau;
          s_good = s;
          tau_bad = bad_side[sign > 0 ? 0 : 1];
          break;
        }
        bad_side[sign > 0 ? 0 : 1] = tau;
      }
      if (found) break;
    }
    if (!found) {
      out.line_search_failed = true;
      return out;
    }
    // Bisect toward the boundary so the corrector starts close to it.
    for (int b = 0; b < 6 && used < cfg.max_line_search_evaluations; ++b, ++used) {
      const double mid = 0.5 * (tau_good + tau_bad);
      const GSample s = eval(pred + mid * nu);
      if (s.recovered) {
        tau_good = mid;
        s_good = s;
      } else {
        tau_bad = mid;
      }
    }
    w = pred + tau_good * nu;
    sw = s_good;
  }

  int since = 0;
  for (int it = 0; it <= cfg.max_corrector_iterations; ++it) {
    const double hyp = (w - from.p).dot(eta) - kappa;
    if (std::abs(sw.G) <= cfg.epsilon && std::abs(hyp) <= cfg.hyperplane_tolerance) {
      out.ok = true;
      out.p = w;
      out.s = sw;
      out.residual = std::abs(hyp);
      return out;
    }
    if (it == cfg.max_corrector_iterations) break;
    Eigen::Matrix2d DF;
    DF << sw.DG(0), sw.DG(1), eta(0), eta(1);
    if (!(std::abs(DF.determinant()) > 1e-14 * std::max(1.0, sw.DG.norm()))) break;
    const Eigen::Vector2d F(sw.G, hyp);
    const double mu = std::pow(0.5, since);
    const Vector wi = w - mu * Vector(DF.partialPivLu().solve(F));
    const GSample si = eval(wi);
    ++out.iterations;
    if (si.recovered) {
      w = wi;
      sw = si;
      since = 0;
    } else {
      ++since;
    }
  }
  return out;
}

double segment_distance(const Vector& a, const Vector& b, const Vector& q) {
  const Vector ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0.0 ? std::clamp((q - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (a + t * ab - q).norm();
}

bool outside(const Vector& p, const TraceConfig& cfg) {
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (cfg.lower.size() == p.size() && p(i) < cfg.lower(i)) return true;
    if (cfg.upper.size() == p.size() && p(i) > cfg.upper(i)) return true;
  }
  return false;
}

}  // namespace

BoundaryTrace trace_boundary_2d(const GOracle& oracle, const Vector& p_start, double kappa,
                                std::size_t n_points, int direction, const TraceConfig& cfg) {
  if (p_start.size() != 2) throw Error(ErrorCode::InvalidArgument, "trace needs two parameters");
  if (!(kappa > 0.0)) throw Error(ErrorCode::InvalidArgument, "kappa must be positive");
  if (direction != 1 && direction != -1) {
    throw Error(ErrorCode::InvalidArgument, "direction must be +1 or -1");
  }
  BoundaryTrace trace;
  const GSample s0 = oracle(p_start);
  ++trace.evaluations;
  if (std::abs(s0.G) > cfg.epsilon) {
    throw Error(ErrorCode::InvalidArgument, "trace must start on the boundary (|G| <= epsilon)");
  }
  TracePoint start;
  start.p = p_start;
  start.G = s0.G;
  start.DG = s0.DG;
  trace.points.push_back(start);

  double kappa_now = kappa;
  int quick = 0;
  std::optional<Vector> eta_prev;
  while (trace.points.size() < n_points) {
    const TracePoint& cur = trace.points.back();
    Vector eta = boundary_tangent(cur.DG);
    if (!eta_prev) {
      eta *= static_cast<double>(direction);
    } else if (eta.dot(*eta_prev) < 0.0) {
      eta = -eta;
    }

    Correction c;
    try {
      c = correct(oracle, cur, eta, kappa_now, cfg, trace.evaluations);
    } catch (const Error&) {
      c.ok = false;
    }
    if (c.ok) {
      const double dist = (c.p - cur.p).norm();
      if (dist < 0.25 * kappa_now || dist > 4.0 * kappa_now) c.ok = false;
    }
    if (!c.ok) {
      kappa_now *= 0.5;
      quick = 0;
      ++trace.kappa_reductions;
      if (kappa_now < cfg.kappa_min_fraction * kappa) {
        if (c.line_search_failed) {
          throw Error(ErrorCode::LineSearchExhausted,
                      "no recovered point on the corrector hyperplane");
        }
        throw Error(ErrorCode::CorrectorFailed, "continuation step shrank below the minimum");
      }
      continue;
    }

    TracePoint next;
    next.p = c.p;
    next.G = c.s.G;
    next.DG = c.s.DG;
    next.eta = eta;
    next.kappa = kappa_now;
    next.corrector_iterations = c.iterations;
    next.hyperplane_residual = c.residual;
    if (outside(next.p, cfg)) {
      trace.stop_reason = "left_bounds";
      return trace;
    }
    const Vector prev_p = cur.p;
    trace.points.push_back(std::move(next));
    eta_prev = eta;

    if (cfg.stop_on_loop && trace.points.size() > 3 &&
        segment_distance(prev_p, trace.points.back().p, p_start) <= 0.5 * kappa_now) {
      trace.stop_reason = "loop_closed";
      return trace;
    }
    if (c.iterations <= 3) {
      if (++quick >= 2) {
        kappa_now = std::min(kappa, kappa_now * cfg.kappa_growth);
        quick = 0;
      }
    } else {
      quick = 0;
    }
  }
  trace.stop_reason = "n_points";
  return trace;
}

// -- safety margin -----------------------------------------------------------------

std::pair<double, double> kkt_residual(const Matrix& A, const Vector& p, const Vector& p0,
                                       const RowVector& DG) {
  const Vector u = A * (p - p0);
  const double dd = DG.squaredNorm();
  const double lambda = dd > 0.0 ? -DG.dot(u) / dd : 0.0;
  const Vector r = u + DG.transpose() * lambda;
  return {lambda, r.lpNorm<Eigen::Infinity>()};
}

double line_angle(const Vector& u, const Vector& v) {
  const double nu = u.norm(), nv = v.norm();
  if (nu == 0.0 || nv == 0.0) return 0.0;
  const Vector a = u / nu, b = v / nv;
  const double c = std::abs(a.dot(b));
  const double s = (a - a.dot(b) * b).norm();
  return std::atan2(s, c);
}

MarginResult safety_margin_nd(const GOracle& oracle, const Vector& p0,
                              const std::optional<Matrix>& A_in, const MarginConfig& cfg) {
  const auto P = p0.size();
  if (P < 1) throw Error(ErrorCode::InvalidArgument, "margin needs at least one parameter");
  const Matrix A = A_in.value_or(Matrix::Identity(P, P));
  if (A.rows() != P || A.cols() != P) {
    throw Error(ErrorCode::InvalidArgument, "weight matrix has wrong dimension");
  }
  if (!A.isApprox(A.transpose(), 1e-12) || Eigen::LLT<Matrix>(A).info() != Eigen::Success) {
    throw Error(ErrorCode::InvalidArgument, "weight matrix not positive definite");
  }

  MarginResult res;
  res.p0 = p0;
  const auto eval = [&](const Vector& p) {
    ++res.evaluations;
    return oracle(p);
  };
  GSample sk = eval(p0);
  res.history.push_back({p0, sk.G, sk.DG, sk.recovered, 0.0, 0.0});
  if (!sk.recovered) {
    throw Error(ErrorCode::StartNotRecovered, "nominal parameters lie outside the recovery region");
  }
  Vector pk = p0;
  const Vector Ap0 = A * p0;
  for (int it = 1;; ++it) {
    if (it > cfg.max_iterations) {
      throw Error(ErrorCode::MaxIterations,
                  "SQP did not converge within " + std::to_string(cfg.max_iterations) +
                      " iterations");
    }
    if (!(sk.DG.norm() > cfg.singular_gradient)) {
      throw Error(ErrorCode::LinearSystemSingular, "DG vanishes; KKT system singular");
    }
    Matrix K = Matrix::Zero(P + 1, P + 1);
    K.topLeftCorner(P, P) = A;
    K.topRightCorner(P, 1) = sk.DG.transpose();
    K.bottomLeftCorner(1, P) = sk.DG;
    const Eigen::PartialPivLU<Matrix> lu(K);
    if (!(lu.rcond() > 1e-15)) {
      throw Error(ErrorCode::LinearSystemSingular, "KKT system singular");
    }
    const double step_limit = cfg.step_tolerance * (1.0 + pk.lpNorm<Eigen::Infinity>());

    // Backtracks from pk toward the QP solution for the linearized
    // constraint DG (p - pk) = level. Empty when G is already within
    // tolerance and every recovered candidate would move less than the step
    // tolerance.
    double mu = 1.0;
    const auto search = [&](double level) -> std::optional<std::pair<Vector, GSample>> {
      Vector rhs(P + 1);
      rhs.head(P) = Ap0;
      rhs(P) = sk.DG.dot(pk) + level;
      const Vector target = lu.solve(rhs).head(P);
      const double full_step = (target - pk).lpNorm<Eigen::Infinity>();
      mu = 1.0;
      Vector cand = target;
      GSample sc = eval(cand);
      for (int backtracks = 0; !sc.recovered; ++backtracks) {
        if (mu * full_step <= step_limit && std::abs(sk.G) <= cfg.epsilon) return std::nullopt;
        if (backtracks >= cfg.max_backtracks) {
          throw Error(ErrorCode::LineSearchExhausted, "backtracking found no recovered point");
        }
        mu *= 0.5;
        cand = pk + mu * (target - pk);
        sc = eval(cand);
      }
      return std::make_pair(cand, sc);
    };

    // Once |G| <= epsilon, hold the level set through pk instead of aiming
    // at G = 0: trajectories that close to the boundary linger near the
    // unstable equilibrium and the gradient loses all accuracy there.
    const bool in_band = std::abs(sk.G) <= cfg.epsilon;
    auto moved = search(in_band ? 0.0 : -sk.G);
    double step = 0.0;
    if (!moved) {
      const auto [lambda, kkt] = kkt_residual(A, pk, p0, sk.DG);
      if (kkt <= cfg.kkt_tolerance) {
        // Nothing admissible left to do: pk is the answer.
        res.history.push_back({pk, sk.G, sk.DG, true, 0.0, lambda});
        res.iterations = it;
        res.converged = true;
        res.lambda = lambda;
        res.kkt_residual = kkt;
        break;
      }
      throw Error(ErrorCode::LineSearchExhausted,
                  "no recovered point within the step tolerance and the current iterate is "
                  "not a KKT point");
    }
    step = (moved->first - pk).lpNorm<Eigen::Infinity>();
    pk = moved->first;
    sk = moved->second;
    const auto [lambda, kkt] = kkt_residual(A, pk, p0, sk.DG);
    res.history.push_back({pk, sk.G, sk.DG, true, mu, lambda});
    res.iterations = it;
    if (std::abs(sk.G) <= cfg.epsilon && step <= step_limit && kkt <= cfg.kkt_tolerance) {
      res.converged = true;
      res.lambda = lambda;
      res.kkt_residual = kkt;
      break;
    }
  }
  res.p_star = pk;
  res.G_star = sk.G;
  res.DG_star = sk.DG;
  const Vector d = pk - p0;
  const double q = d.dot(A * d);
  res.margin = 0.5 * q;
  res.distance = std::sqrt(std::max(0.0, q));
  res.collinearity_angle = line_angle(A * d, sk.DG.transpose());
  return res;
}

}  // namespace rbound
