#include "rbound/integrator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

namespace rbound {

void IntegrationConfig::check() const {
  const auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
  if (!positive(rel_tol) || !positive(abs_tol) || !positive(event_time_tolerance) ||
      !positive(indicator_tolerance) || !positive(algebraic.tolerance)) {
    throw Error(ErrorCode::InvalidArgument, "tolerances must be strictly positive");
  }
  if (!positive(horizon)) throw Error(ErrorCode::InvalidArgument, "horizon must be positive");
  if (!positive(max_step)) throw Error(ErrorCode::InvalidArgument, "max_step must be positive");
  if (!positive(output_step)) {
    throw Error(ErrorCode::InvalidArgument, "output_step must be positive");
  }
  if (!positive(divergence_threshold)) {
    throw Error(ErrorCode::InvalidArgument, "divergence threshold must be positive");
  }
}

// -- dense output --------------------------------------------------------------

Vector DenseOutput::evaluate(const Piece& piece, double t) {
  const double th = (t - piece.t0) / piece.h;
  const double th1 = 1.0 - th;
  const auto& c = piece.coeffs;
  return c.col(0) + th * (c.col(1) + th1 * (c.col(2) + th * (c.col(3) + th1 * c.col(4))));
}

Vector DenseOutput::operator()(double t) const {
  if (pieces_.empty()) throw Error(ErrorCode::InvalidArgument, "empty dense output");
  auto it = std::upper_bound(pieces_.begin(), pieces_.end(), t,
                             [](double v, const Piece& p) { return v < p.t0; });
  if (it != pieces_.begin()) --it;
  return evaluate(*it, t);
}

// -- linearization -------------------------------------------------------------

Linearization linearize(const HybridSystem& sys, const Vector& x, const Vector& y,
                        const Vector& p, Mode mode, const Branches& branches) {
  Linearization lin;
  lin.f = f_jacobians(sys, x, y, p, mode);
  if (sys.m > 0) {
    lin.g = g_jacobians(sys, x, y, p, mode, branches);
    lin.gy.compute(lin.g.dy);
  }
  return lin;
}

Matrix Linearization::dy_dx() const {
  if (g.dy.size() == 0) return Matrix::Zero(0, f.dx.cols());
  return -gy.solve(g.dx);
}

Matrix Linearization::dy_dp() const {
  if (g.dy.size() == 0) return Matrix::Zero(0, f.dp.cols());
  return -gy.solve(g.dp);
}

Matrix Linearization::reduced_dx() const {
  if (g.dy.size() == 0) return f.dx;
  return f.dx + f.dy * dy_dx();
}

Matrix Linearization::reduced_dp() const {
  if (g.dy.size() == 0) return f.dp;
  return f.dp + f.dy * dy_dp();
}

// -- equilibrium -----------------------------------------------------------------

Equilibrium find_equilibrium(const HybridSystem& sys, const Vector& p, const Vector& x_guess,
                             const Vector& y_guess, Mode mode, const EquilibriumConfig& config) {
  const auto n = static_cast<Eigen::Index>(sys.n);
  const auto m = static_cast<Eigen::Index>(sys.m);
  if (x_guess.size() != n || y_guess.size() != m) {
    throw Error(ErrorCode::InvalidArgument, "equilibrium guess has wrong dimension");
  }
  Equilibrium eq;
  eq.branches = select_branches(sys, x_guess, y_guess, p);

  const auto residual = [&](const Vector& x, const Vector& y, const Branches& br) {
    Vector r(n + m);
    r.head(n) = eval_f(sys, x, y, p, mode);
    if (m > 0) r.tail(m) = eval_g(sys, x, y, p, mode, br);
    return r;
  };

  std::size_t switched = 0;
  for (const auto& c : sys.constraints) switched += c.switched() ? 1 : 0;

  Vector x = x_guess;
  Vector y = y_guess;
  bool converged = false;
  for (std::size_t attempt = 0; attempt <= 2 * switched && !converged; ++attempt) {
    Vector r = residual(x, y, eq.branches);
    for (int it = 0; it <= config.max_iterations; ++it) {
      if (!r.allFinite()) break;
      if (r.lpNorm<Eigen::Infinity>() <= config.tolerance) {
        converged = true;
        eq.iterations += it;
        break;
      }
      if (it == config.max_iterations) break;
      Matrix jac(n + m, n + m);
      const PartialJacobians fj = f_jacobians(sys, x, y, p, mode);
      jac.topLeftCorner(n, n) = fj.dx;
      if (m > 0) {
        const PartialJacobians gj = g_jacobians(sys, x, y, p, mode, eq.branches);
        jac.topRightCorner(n, m) = fj.dy;
        jac.bottomLeftCorner(m, n) = gj.dx;
        jac.bottomRightCorner(m, m) = gj.dy;
      }
      const Eigen::PartialPivLU<Matrix> lu(jac);
      if (!(lu.rcond() > 1e-15)) break;
      const Vector step = -lu.solve(r);
      const double r0 = r.norm();
      double lambda = 1.0;
      Vector xt, yt, rt;
      for (;;) {
        xt = x + lambda * step.head(n);
        yt = y + lambda * step.tail(m);
        rt = residual(xt, yt, eq.branches);
        if ((rt.allFinite() && rt.norm() <= (1.0 - 1e-4 * lambda) * r0) || lambda < 1e-3) break;
        lambda *= 0.5;
      }
      x = std::move(xt);
      y = std::move(yt);
      r = std::move(rt);
    }
    if (!converged) break;
    for (std::size_t i = 0; i < sys.constraints.size(); ++i) {
      const auto& c = sys.constraints[i];
      if (c.switched() && indicator_crossed(eq.branches[i], c.indicator(x, y, p), c.hysteresis_band)) {
        eq.branches[i] = eq.branches[i] == Branch::Plus ? Branch::Minus : Branch::Plus;
        converged = false;
        break;
      }
    }
  }
  if (!converged) {
    throw Error(ErrorCode::NoEquilibrium, "damped Newton on [f; g] = 0 did not converge");
  }
  eq.x = x;
  eq.y = y;
  const Linearization lin = linearize(sys, x, y, p, mode, eq.branches);
  if (m > 0 && !(lin.gy.rcond() > 1e-14)) {
    throw Error(ErrorCode::NoEquilibrium, "algebraic Jacobian singular at the equilibrium");
  }
  const Eigen::EigenSolver<Matrix> es(lin.reduced_dx(), false);
  eq.eigenvalues = es.eigenvalues();
  if (config.require_stable && eq.eigenvalues.size() > 0 &&
      eq.eigenvalues.real().maxCoeff() >= 0.0) {
    throw Error(ErrorCode::EquilibriumUnstable,
                "linearization has an eigenvalue with non-negative real part");
  }
  return eq;
}

Equilibrium find_equilibrium(const HybridSystem& sys, const Vector& p, const Vector& x_guess) {
  Vector y_guess = Vector::Zero(static_cast<Eigen::Index>(sys.m));
  if (sys.equilibrium_guess) y_guess = sys.equilibrium_guess(p).second;
  return find_equilibrium(sys, p, x_guess, y_guess, 0);
}

InitialPoint pre_disturbance_state(const HybridSystem& sys, const PhaseSchedule& schedule,
                                   const Vector& p, const AlgebraicConfig& algebraic) {
  InitialPoint ip;
  Vector xg = Vector::Zero(static_cast<Eigen::Index>(sys.n));
  Vector yg = Vector::Zero(static_cast<Eigen::Index>(sys.m));
  if (sys.equilibrium_guess) std::tie(xg, yg) = sys.equilibrium_guess(p);
  if (sys.initial_state) {
    ip.x = sys.initial_state(p);
    const AlgebraicSolution sol =
        solve_algebraic(sys, ip.x, p, yg, schedule.equilibrium_mode, algebraic);
    ip.y = sol.y;
    ip.branches = sol.branches;
    ip.from_equilibrium = false;
    return ip;
  }
  const Equilibrium eq = find_equilibrium(sys, p, xg, yg, schedule.equilibrium_mode);
  ip.x = eq.x;
  ip.y = eq.y;
  ip.branches = eq.branches;
  ip.from_equilibrium = true;
  return ip;
}

// -- integration engine ------------------------------------------------------------

namespace {

// Dormand-Prince 5(4) tableau with Hairer's continuous extension.
namespace dp {
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                 a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;
constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                 d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                 d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;
}  // namespace dp

struct Segment {
  Mode mode;
  double t0;
  double t1;
  std::string label;
  RowVector end_gradient;
};

class Engine {
 public:
  Engine(const HybridSystem& sys, const PhaseSchedule& schedule, const Vector& p,
         const IntegrationConfig& cfg, Augmentation* aug, const RunOptions& opts)
      : sys_(sys), schedule_(schedule), p_(p), cfg_(cfg), aug_(aug), opts_(opts),
        n_(static_cast<Eigen::Index>(sys.n)), na_(aug ? aug->size() : 0) {}

  RunResult run();

 private:
  struct Step {
    Vector z1;
    Vector y1;
    Matrix k;  // dim x 7
    double err = 0.0;
  };

  Vector rhs(const Vector& z, Vector& y_io) const;
  bool try_step(double h, Step& step);
  DenseOutput::Piece make_piece(double h, const Step& step) const;
  double localize(std::size_t i, const DenseOutput::Piece& piece, double t0, double t1,
                  Vector y_guess) const;
  void process_state_event(std::size_t i);
  void settle_branches();
  void phase_boundary(Mode next, const std::string& label, const RowVector& gradient);
  bool integrate_segment(const Segment& seg);
  double initial_step(const Vector& k1) const;
  double tie(double t) const { return 1e-12 * std::max(1.0, std::abs(t)); }

  template <class Eval>
  void emit(double t_hi, bool inclusive, Eval&& eval_z);
  void emit_current(double t) {
    emit(t, true, [this](double) { return z_; });
  }
  void store_piece(DenseOutput::Piece piece) {
    if (opts_.store_dense && piece.t_end > piece.t0) out_.dense.append(std::move(piece));
  }

  const HybridSystem& sys_;
  const PhaseSchedule& schedule_;
  const Vector& p_;
  const IntegrationConfig& cfg_;
  Augmentation* aug_;
  const RunOptions& opts_;
  const Eigen::Index n_;
  const Eigen::Index na_;

  RunResult out_;
  double t_ = 0.0;
  Vector z_;
  Vector y_;
  Mode mode_ = 0;
  Branches br_;
  double h_ = 0.0;
  std::size_t events_ = 0;

  std::vector<double> grid_;
  std::size_t next_grid_ = 0;
  std::vector<std::pair<double, std::size_t>> extras_;
  std::size_t next_extra_ = 0;
};

Vector Engine::rhs(const Vector& z, Vector& y_io) const {
  const Vector x = z.head(n_);
  y_io = solve_algebraic_fixed(sys_, x, p_, y_io, mode_, br_, cfg_.algebraic);
  const Vector f = eval_f(sys_, x, y_io, p_, mode_);
  Vector dz(n_ + na_);
  dz.head(n_) = f;
  if (aug_) {
    const Linearization lin = linearize(sys_, x, y_io, p_, mode_, br_);
    const PointContext ctx{sys_, t_, mode_, x, y_io, p_, br_, f, lin};
    aug_->derivative(ctx, z.tail(na_), dz.tail(na_));
  }
  return dz;
}

bool Engine::try_step(double h, Step& s) {
  using namespace dp;
  const Eigen::Index dim = n_ + na_;
  s.k.resize(dim, 7);
  Vector y = y_;
  try {
    s.k.col(0) = rhs(z_, y);
    s.k.col(1) = rhs(z_ + h * a21 * s.k.col(0), y);
    s.k.col(2) = rhs(z_ + h * (a31 * s.k.col(0) + a32 * s.k.col(1)), y);
    s.k.col(3) = rhs(z_ + h * (a41 * s.k.col(0) + a42 * s.k.col(1) + a43 * s.k.col(2)), y);
    s.k.col(4) = rhs(z_ + h * (a51 * s.k.col(0) + a52 * s.k.col(1) + a53 * s.k.col(2) +
                               a54 * s.k.col(3)),
                     y);
    s.k.col(5) = rhs(z_ + h * (a61 * s.k.col(0) + a62 * s.k.col(1) + a63 * s.k.col(2) +
                               a64 * s.k.col(3) + a65 * s.k.col(4)),
                     y);
    s.z1 = z_ + h * (a71 * s.k.col(0) + a73 * s.k.col(2) + a74 * s.k.col(3) + a75 * s.k.col(4) +
                     a76 * s.k.col(5));
    s.k.col(6) = rhs(s.z1, y);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::AlgebraicSolveFailure) throw;
    return false;
  }
  s.y1 = y;
  const Vector err = h * (e1 * s.k.col(0) + e3 * s.k.col(2) + e4 * s.k.col(3) +
                          e5 * s.k.col(4) + e6 * s.k.col(5) + e7 * s.k.col(6));
  const Vector scale =
      (cfg_.abs_tol + cfg_.rel_tol * z_.cwiseAbs().cwiseMax(s.z1.cwiseAbs()).array()).matrix();
  s.err = std::sqrt((err.cwiseQuotient(scale)).squaredNorm() / static_cast<double>(dim));
  if (!std::isfinite(s.err)) s.err = 1e10;
  return true;
}

DenseOutput::Piece Engine::make_piece(double h, const Step& s) const {
  using namespace dp;
  DenseOutput::Piece piece;
  piece.t0 = t_;
  piece.h = h;
  piece.t_end = t_ + h;
  piece.coeffs.resize(n_ + na_, 5);
  const Vector ydiff = s.z1 - z_;
  const Vector bspl = h * s.k.col(0) - ydiff;
  piece.coeffs.col(0) = z_;
  piece.coeffs.col(1) = ydiff;
  piece.coeffs.col(2) = bspl;
  piece.coeffs.col(3) = ydiff - h * s.k.col(6) - bspl;
  piece.coeffs.col(4) = h * (d1 * s.k.col(0) + d3 * s.k.col(2) + d4 * s.k.col(3) +
                             d5 * s.k.col(4) + d6 * s.k.col(5) + d7 * s.k.col(6));
  return piece;
}

double Engine::initial_step(const Vector& k1) const {
  const Vector scale = (cfg_.abs_tol + cfg_.rel_tol * z_.cwiseAbs().array()).matrix();
  const double d0 = z_.cwiseQuotient(scale).norm();
  const double d1 = k1.cwiseQuotient(scale).norm();
  double h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  return std::clamp(h, 1e-8, cfg_.max_step);
}

template <class Eval>
void Engine::emit(double t_hi, bool inclusive, Eval&& eval_z) {
  const double tol = tie(t_hi);
  const auto due = [&](double t) { return t < t_hi - tol || (inclusive && t <= t_hi + tol); };
  auto& traj = out_.trajectory;
  while (opts_.grid_output && next_grid_ < grid_.size() && due(grid_[next_grid_])) {
    const double t = grid_[next_grid_++];
    const Vector z = eval_z(t);
    const Vector x = z.head(n_);
    traj.times.push_back(t);
    traj.x.push_back(x);
    traj.y.push_back(solve_algebraic_fixed(sys_, x, p_, y_, mode_, br_, cfg_.algebraic));
    if (aug_) out_.augmented.push_back(z.tail(na_));
  }
  while (next_extra_ < extras_.size() && due(extras_[next_extra_].first)) {
    const double t = extras_[next_extra_++].first;
    const Vector z = eval_z(t);
    out_.extra_times.push_back(t);
    out_.extra_x.push_back(z.head(n_));
    out_.extra_augmented.push_back(aug_ ? Vector(z.tail(na_)) : Vector());
  }
}

double Engine::localize(std::size_t i, const DenseOutput::Piece& piece, double t0, double t1,
                        Vector y_guess) const {
  const auto& c = sys_.constraints[i];
  const Branch cur = br_[i];
  const auto probe = [&](double t, double& phi) {
    const Vector x = DenseOutput::evaluate(piece, t).head(n_);
    y_guess = solve_algebraic_fixed(sys_, x, p_, y_guess, mode_, br_, cfg_.algebraic);
    const double s = c.indicator(x, y_guess, p_);
    phi = cur == Branch::Plus ? s + c.hysteresis_band : c.hysteresis_band - s;
    return indicator_crossed(cur, s, c.hysteresis_band);
  };
  double a = t0, b = t1, fa = 0.0, fb = 0.0;
  if (probe(a, fa)) return a;
  probe(b, fb);
  int last = 0;
  for (int it = 0; it < 400 && (b - a) > cfg_.event_time_tolerance; ++it) {
    double t = (fa * b - fb * a) / (fa - fb);
    if (it % 3 == 2 || !std::isfinite(t) || t <= a || t >= b) t = 0.5 * (a + b);
    double ft = 0.0;
    if (probe(t, ft)) {
      b = t;
      fb = ft;
      if (last == -1) fa *= 0.5;
      last = -1;
    } else {
      a = t;
      fa = ft;
      if (last == +1) fb *= 0.5;
      last = +1;
    }
  }
  return b;
}

void Engine::process_state_event(std::size_t i) {
  const Vector x = z_.head(n_);
  const Vector y_minus = y_;
  const Vector f_minus = eval_f(sys_, x, y_minus, p_, mode_);
  const IndicatorGradient grad = indicator_gradient(sys_, i, x, y_minus, p_);
  const double s = eval_indicator(sys_, i, x, y_minus, p_);
  const Branches br_minus = br_;
  const Branch old = br_[i];
  br_[i] = old == Branch::Plus ? Branch::Minus : Branch::Plus;
  y_ = solve_algebraic_fixed(sys_, x, p_, y_minus, mode_, br_, cfg_.algebraic);
  const Vector f_plus = eval_f(sys_, x, y_, p_, mode_);

  EventRecord rec;
  rec.kind = EventKind::Indicator;
  rec.time = t_;
  rec.indicator = i;
  rec.transition = old == Branch::Minus ? +1 : -1;
  rec.label = sys_.constraints[i].name;
  rec.x_minus = x;
  rec.y_minus = y_minus;
  rec.x_plus = x;
  rec.y_plus = y_;
  rec.f_minus = f_minus;
  rec.f_plus = f_plus;
  rec.gradient_x = grad.dx;
  rec.gradient_y = grad.dy;
  rec.gradient_p = grad.dp;
  rec.indicator_value = s;
  out_.trajectory.events.push_back(std::move(rec));

  if (aug_) {
    const Linearization lin_minus = linearize(sys_, x, y_minus, p_, mode_, br_minus);
    const Linearization lin_plus = linearize(sys_, x, y_, p_, mode_, br_);
    const PointContext before{sys_, t_, mode_, x, y_minus, p_, br_minus, f_minus, lin_minus};
    const PointContext after{sys_, t_, mode_, x, y_, p_, br_, f_plus, lin_plus};
    const JumpContext jc{EventKind::Indicator, t_, before, after, grad, RowVector(), i,
                         sys_.constraints[i].name};
    aug_->jump(jc, z_.tail(na_));
  }
  if (++events_ > cfg_.max_events) {
    throw Error(ErrorCode::EventChattering,
                "more than " + std::to_string(cfg_.max_events) + " switching events");
  }
}

void Engine::settle_branches() {
  const Vector x = z_.head(n_);
  for (std::size_t guard = 0; guard < 4 * sys_.constraints.size() + 4; ++guard) {
    bool changed = false;
    for (std::size_t i = 0; i < sys_.constraints.size(); ++i) {
      const auto& c = sys_.constraints[i];
      if (!c.switched()) continue;
      if (indicator_crossed(br_[i], c.indicator(x, y_, p_), c.hysteresis_band)) {
        process_state_event(i);
        changed = true;
        break;
      }
    }
    if (!changed) return;
  }
  throw Error(ErrorCode::EventChattering, "branches do not settle at t = " + std::to_string(t_));
}

void Engine::phase_boundary(Mode next, const std::string& label, const RowVector& gradient) {
  const Vector x = z_.head(n_);
  const Vector y_minus = y_;
  const Mode old_mode = mode_;
  const Vector f_minus = eval_f(sys_, x, y_minus, p_, old_mode);
  mode_ = next;
  y_ = solve_algebraic_fixed(sys_, x, p_, y_minus, mode_, br_, cfg_.algebraic);
  const Vector f_plus = eval_f(sys_, x, y_, p_, mode_);

  EventRecord rec;
  rec.kind = EventKind::PhaseBoundary;
  rec.time = t_;
  rec.label = label;
  rec.x_minus = x;
  rec.y_minus = y_minus;
  rec.x_plus = x;
  rec.y_plus = y_;
  rec.f_minus = f_minus;
  rec.f_plus = f_plus;
  rec.gradient_p = gradient;
  out_.trajectory.events.push_back(std::move(rec));

  if (aug_) {
    const Linearization lin_minus = linearize(sys_, x, y_minus, p_, old_mode, br_);
    const Linearization lin_plus = linearize(sys_, x, y_, p_, mode_, br_);
    const PointContext before{sys_, t_, old_mode, x, y_minus, p_, br_, f_minus, lin_minus};
    const PointContext after{sys_, t_, mode_, x, y_, p_, br_, f_plus, lin_plus};
    const JumpContext jc{EventKind::PhaseBoundary, t_, before, after, std::nullopt, gradient, 0,
                         label};
    aug_->jump(jc, z_.tail(na_));
  }
  settle_branches();
}

bool Engine::integrate_segment(const Segment& seg) {
  Vector y_tmp = y_;
  h_ = initial_step(rhs(z_, y_tmp));
  bool last_rejected = false;
  while (t_ < seg.t1 - tie(seg.t1)) {
    if (out_.steps + out_.rejected_steps >= cfg_.max_steps) {
      throw Error(ErrorCode::IntegrationDiverged, "step budget exhausted");
    }
    double h = std::min(h_, cfg_.max_step);
    bool to_end = false;
    if (t_ + h > seg.t1 - 0.01 * h) {
      h = seg.t1 - t_;
      to_end = true;
    }
    Step step;
    if (!try_step(h, step)) {
      ++out_.rejected_steps;
      h_ = 0.25 * h;
      last_rejected = true;
      if (h_ < 1e-14 * std::max(1.0, std::abs(t_))) {
        throw Error(ErrorCode::AlgebraicSolveFailure,
                    "algebraic constraints unsolvable near t = " + std::to_string(t_));
      }
      continue;
    }
    if (step.err > 1.0) {
      ++out_.rejected_steps;
      h_ = h * std::max(0.2, 0.9 * std::pow(step.err, -0.2));
      last_rejected = true;
      if (h_ < 1e-14 * std::max(1.0, std::abs(t_))) {
        throw Error(ErrorCode::IntegrationDiverged,
                    "step size underflow near t = " + std::to_string(t_));
      }
      continue;
    }
    ++out_.steps;
    double fac = std::min(5.0, std::max(0.2, 0.9 * std::pow(std::max(step.err, 1e-10), -0.2)));
    if (last_rejected) fac = std::min(fac, 1.0);
    last_rejected = false;
    const double t_new = to_end ? seg.t1 : t_ + h;
    DenseOutput::Piece piece = make_piece(h, step);
    piece.t_end = t_new;

    // Indicator crossings at the step end.
    std::optional<std::size_t> first;
    double tau = kInf;
    const Vector x1 = step.z1.head(n_);
    for (std::size_t i = 0; i < sys_.constraints.size(); ++i) {
      const auto& c = sys_.constraints[i];
      if (!c.switched()) continue;
      if (!indicator_crossed(br_[i], c.indicator(x1, step.y1, p_), c.hysteresis_band)) continue;
      const double ti = localize(i, piece, t_, t_new, y_);
      if (ti < tau - cfg_.event_time_tolerance) {
        tau = ti;
        first = i;
      }
    }

    if (first) {
      piece.t_end = tau;
      emit(tau, false, [&](double t) { return DenseOutput::evaluate(piece, t); });
      z_ = DenseOutput::evaluate(piece, tau);
      store_piece(std::move(piece));
      y_ = solve_algebraic_fixed(sys_, z_.head(n_), p_, step.y1, mode_, br_, cfg_.algebraic);
      t_ = tau;
      process_state_event(*first);
      settle_branches();
      emit_current(t_);
    } else {
      emit(t_new, false, [&](double t) { return DenseOutput::evaluate(piece, t); });
      store_piece(std::move(piece));
      t_ = t_new;
      z_ = step.z1;
      y_ = step.y1;
      if (!to_end) emit_current(t_);
    }
    h_ = h * fac;

    const Vector x = z_.head(n_);
    if (!x.allFinite() || x.lpNorm<Eigen::Infinity>() > cfg_.divergence_threshold) {
      if (cfg_.divergence_is_error) {
        throw Error(ErrorCode::IntegrationDiverged,
                    "state norm exceeded divergence threshold at t = " + std::to_string(t_));
      }
      out_.trajectory.diverged = true;
      emit_current(t_);
      return false;
    }
    if (opts_.stop_when && opts_.stop_when(t_, x)) {
      out_.trajectory.stopped_early = true;
      emit_current(t_);
      return false;
    }
  }
  return true;
}

RunResult Engine::run() {
  cfg_.check();
  if (static_cast<std::size_t>(p_.size()) != sys_.parameter_count) {
    throw Error(ErrorCode::InvalidArgument, "parameter vector has wrong dimension");
  }
  const InitialPoint ip = pre_disturbance_state(sys_, schedule_, p_, cfg_.algebraic);
  out_.x_initial = ip.x;
  out_.y_initial = ip.y;
  out_.initial_branches = ip.branches;
  out_.from_equilibrium = ip.from_equilibrium;

  z_.resize(n_ + na_);
  z_.head(n_) = ip.x;
  if (aug_) {
    const InitialContext ictx{sys_, p_, schedule_.equilibrium_mode, ip.x, ip.y, ip.branches,
                              ip.from_equilibrium};
    z_.tail(na_) = aug_->initial(ictx);
  }
  y_ = ip.y;
  br_ = ip.branches;
  mode_ = schedule_.equilibrium_mode;

  const std::vector<double> durations = phase_durations(schedule_, p_);
  const std::vector<RowVector> grads =
      phase_end_gradients(schedule_, static_cast<std::size_t>(p_.size()));
  std::vector<Segment> segs;
  double t = 0.0;
  for (std::size_t k = 0; k < schedule_.disturbance.size(); ++k) {
    if (durations[k] <= 0.0) continue;
    const auto& ph = schedule_.disturbance[k];
    segs.push_back({ph.mode, t, t + durations[k], ph.label, grads[k]});
    t += durations[k];
  }
  if (t >= cfg_.horizon) {
    throw Error(ErrorCode::InvalidArgument, "horizon must exceed the disturbance duration");
  }
  out_.trajectory.post_start_time = t;
  segs.push_back({schedule_.post_mode, t, cfg_.horizon, schedule_.post_label, RowVector()});

  const auto count = static_cast<std::size_t>(std::floor(cfg_.horizon / cfg_.output_step + 1e-9));
  for (std::size_t k = 0; k <= count; ++k) grid_.push_back(static_cast<double>(k) * cfg_.output_step);
  if (cfg_.horizon - grid_.back() > tie(cfg_.horizon)) grid_.push_back(cfg_.horizon);
  for (std::size_t k = 0; k < opts_.extra_times.size(); ++k) {
    extras_.emplace_back(opts_.extra_times[k], k);
  }
  std::sort(extras_.begin(), extras_.end());

  t_ = 0.0;
  if (segs.front().mode != mode_) {
    mode_ = segs.front().mode;
    y_ = solve_algebraic_fixed(sys_, z_.head(n_), p_, y_, mode_, br_, cfg_.algebraic);
    settle_branches();
  }
  emit_current(0.0);

  for (std::size_t k = 0; k < segs.size(); ++k) {
    if (!integrate_segment(segs[k])) break;
    t_ = segs[k].t1;
    if (k + 1 < segs.size()) {
      phase_boundary(segs[k + 1].mode, segs[k].label + "->" + segs[k + 1].label,
                     segs[k].end_gradient);
    }
    emit_current(t_);
  }
  out_.trajectory.end_time = t_;
  return std::move(out_);
}

}  // namespace

RunResult simulate(const HybridSystem& sys, const PhaseSchedule& schedule, const Vector& p,
                   const IntegrationConfig& config, Augmentation* augmentation,
                   const RunOptions& options) {
  Engine engine(sys, schedule, p, config, augmentation, options);
  return engine.run();
}

StateTrajectory integrate(const HybridSystem& sys, const PhaseSchedule& schedule, const Vector& p,
                          const IntegrationConfig& config) {
  return simulate(sys, schedule, p, config).trajectory;
}

}  // namespace rbound
