#include "rbound/sensitivities.hpp"

#include "rbound/parallel.hpp"

#include <limits>

namespace rbound {

namespace {

using ConstMatMap = Eigen::Map<const Matrix>;
using MatMap = Eigen::Map<Matrix>;

// dchi/dt = fx chi + fy Y + fp with Y = -gy^-1 (gx chi + gp).
Matrix variational_rhs(const Linearization& lin, const Eigen::Ref<const Matrix>& chi) {
  Matrix r = lin.f.dx * chi + lin.f.dp;
  if (lin.g.dy.size() > 0) {
    const Matrix Y = -lin.gy.solve(lin.g.dx * chi + lin.g.dp);
    r.noalias() += lin.f.dy * Y;
  }
  return r;
}

RowVector event_time_gradient(const JumpContext& ctx, const Eigen::Ref<const Matrix>& chi,
                              double& denominator) {
  const auto P = chi.cols();
  if (ctx.kind == EventKind::PhaseBoundary) {
    denominator = 0.0;
    if (ctx.boundary_time_gradient.size() == 0) return RowVector::Zero(P);
    return ctx.boundary_time_gradient;
  }
  const IndicatorGradient& s = *ctx.gradient;
  const PointContext& b = ctx.before;
  RowVector num = s.dx * chi;
  if (s.dp.size() == P) num += s.dp;
  double den = s.dx.dot(b.f);
  if (b.lin.g.dy.size() > 0 && s.dy.size() > 0) {
    const Matrix Y = -b.lin.gy.solve(b.lin.g.dx * chi + b.lin.g.dp);
    const Vector ydot = -b.lin.gy.solve(b.lin.g.dx * b.f);
    num += s.dy * Y;
    den += s.dy.dot(ydot);
  }
  denominator = den;
  if (!(std::abs(den) >= kGrazingThreshold)) {
    throw Error(ErrorCode::SensitivityJumpSingular,
                "grazing contact with switching surface '" + ctx.label + "' at t = " +
                    std::to_string(ctx.time));
  }
  return -num / den;
}

JumpAudit apply_first_order_jump(const JumpContext& ctx, Eigen::Ref<Matrix> chi) {
  JumpAudit rec;
  rec.kind = ctx.kind;
  rec.time = ctx.time;
  rec.indicator = ctx.indicator;
  rec.label = ctx.label;
  rec.chi_minus = chi;
  rec.tau_p = event_time_gradient(ctx, chi, rec.denominator);
  chi += (ctx.before.f - ctx.after.f) * rec.tau_p;
  rec.chi_plus = chi;
  return rec;
}

class FirstOrder : public Augmentation {
 public:
  FirstOrder(Eigen::Index n, Eigen::Index P) : n_(n), P_(P) {}

  Eigen::Index size() const override { return n_ * P_; }

  Vector initial(const InitialContext& ctx) override {
    chi0_ = initial_sensitivity(ctx);
    return Eigen::Map<const Vector>(chi0_.data(), chi0_.size());
  }

  void derivative(const PointContext& ctx, const Eigen::Ref<const Vector>& a,
                  Eigen::Ref<Vector> da) const override {
    MatMap(da.data(), n_, P_) = variational_rhs(ctx.lin, ConstMatMap(a.data(), n_, P_));
  }

  void jump(const JumpContext& ctx, Eigen::Ref<Vector> a) override {
    audit_.push_back(apply_first_order_jump(ctx, MatMap(a.data(), n_, P_)));
  }

  const Matrix& chi0() const { return chi0_; }
  std::vector<JumpAudit>& audit() { return audit_; }

 protected:
  Eigen::Index n_;
  Eigen::Index P_;
  Matrix chi0_;
  std::vector<JumpAudit> audit_;
};

// Second-order variational equation. The mixed derivative terms are central
// differences of the first-order right-hand side along (chi_j, e_j).
class SecondOrder : public FirstOrder {
 public:
  SecondOrder(Eigen::Index n, Eigen::Index P, const AlgebraicConfig& alg)
      : FirstOrder(n, P), alg_(alg) {}

  Eigen::Index size() const override { return n_ * P_ + n_ * P_ * P_; }

  Vector initial(const InitialContext& ctx) override {
    Vector a(size());
    a.head(n_ * P_) = FirstOrder::initial(ctx);
    MatMap chi2(a.data() + n_ * P_, n_, P_ * P_);
    if (ctx.from_equilibrium) {
      const Linearization lin = linearize(ctx.system, ctx.x0, ctx.y0, ctx.p, ctx.mode, ctx.branches);
      const Matrix terms = mixed_terms(ctx.system, ctx.x0, ctx.y0, ctx.p, ctx.mode, ctx.branches,
                                       chi0_);
      const Eigen::PartialPivLU<Matrix> lu(lin.reduced_dx());
      chi2 = -lu.solve(terms);
    } else {
      for (Eigen::Index j = 0; j < P_; ++j) {
        const double h = 1e-6 * std::max(1.0, std::abs(ctx.p(j)));
        Vector pp = ctx.p, pm = ctx.p;
        pp(j) += h;
        pm(j) -= h;
        const InitialContext cp{ctx.system, pp, ctx.mode, ctx.x0, ctx.y0, ctx.branches, false};
        const InitialContext cm{ctx.system, pm, ctx.mode, ctx.x0, ctx.y0, ctx.branches, false};
        chi2.middleCols(j * P_, P_) = (initial_sensitivity(cp) - initial_sensitivity(cm)) / (2 * h);
      }
    }
    return a;
  }

  void derivative(const PointContext& ctx, const Eigen::Ref<const Vector>& a,
                  Eigen::Ref<Vector> da) const override {
    const ConstMatMap chi(a.data(), n_, P_);
    MatMap(da.data(), n_, P_) = variational_rhs(ctx.lin, chi);
    const ConstMatMap chi2(a.data() + n_ * P_, n_, P_ * P_);
    MatMap dchi2(da.data() + n_ * P_, n_, P_ * P_);
    dchi2 = ctx.lin.reduced_dx() * chi2;
    dchi2 += mixed_terms(ctx.system, ctx.x, ctx.y, ctx.p, ctx.mode, ctx.branches, chi);
  }

  void jump(const JumpContext& ctx, Eigen::Ref<Vector> a) override {
    if (ctx.kind == EventKind::Indicator) {
      throw Error(ErrorCode::BackendUnsupported,
                  "variational second-order sensitivities do not cross switching events");
    }
    if (ctx.boundary_time_gradient.size() > 0 && !ctx.boundary_time_gradient.isZero(0.0)) {
      throw Error(ErrorCode::BackendUnsupported,
                  "variational second-order sensitivities need parameter-independent phase times");
    }
    FirstOrder::jump(ctx, a.head(n_ * P_));
  }

 private:
  // Column j*P + i: directional derivative of (F_x chi_i + F_p e_i) along (chi_j, e_j).
  Matrix mixed_terms(const HybridSystem& sys, const Vector& x, const Vector& y, const Vector& p,
                     Mode mode, const Branches& branches,
                     const Eigen::Ref<const Matrix>& chi) const {
    Matrix out(n_, P_ * P_);
    for (Eigen::Index j = 0; j < P_; ++j) {
      const double eps = 1e-6 / std::max(1.0, chi.col(j).lpNorm<Eigen::Infinity>());
      const auto phi = [&](double sign) {
        const Vector xs = x + sign * eps * chi.col(j);
        Vector ps = p;
        ps(j) += sign * eps;
        const Vector ys = sys.m > 0 ? solve_algebraic_fixed(sys, xs, ps, y, mode, branches, alg_)
                                    : Vector(y);
        return variational_rhs(linearize(sys, xs, ys, ps, mode, branches), chi);
      };
      out.middleCols(j * P_, P_) = (phi(+1.0) - phi(-1.0)) / (2 * eps);
    }
    return out;
  }

  AlgebraicConfig alg_;
};

RunOptions run_options(const SensitivityOptions& o) {
  RunOptions r;
  r.grid_output = o.grid_output;
  r.store_dense = o.store_dense;
  r.extra_times = o.extra_times;
  r.stop_when = o.stop_when;
  return r;
}

SensitivityTrajectory assemble(RunResult&& run, FirstOrder& aug, Eigen::Index n, Eigen::Index P,
                               bool second) {
  SensitivityTrajectory st;
  st.states = std::move(run.trajectory);
  st.parameter_count = static_cast<std::size_t>(P);
  st.chi_initial = aug.chi0();
  const Eigen::Index first = n * P;
  const auto split = [&](const Vector& a, std::vector<Matrix>& c1, std::vector<Matrix>* c2) {
    c1.push_back(ConstMatMap(a.data(), n, P));
    if (c2) c2->push_back(ConstMatMap(a.data() + first, n, P * P));
  };
  for (const auto& a : run.augmented) split(a, st.chi, second ? &st.chi2 : nullptr);
  for (const auto& a : run.extra_augmented) split(a, st.extra_chi, second ? &st.extra_chi2 : nullptr);
  st.extra_times = std::move(run.extra_times);
  st.extra_x = std::move(run.extra_x);
  st.dense = std::move(run.dense);
  st.jumps = std::move(aug.audit());
  return st;
}

}  // namespace

Matrix initial_sensitivity(const InitialContext& ctx) {
  const HybridSystem& sys = ctx.system;
  const auto n = static_cast<Eigen::Index>(sys.n);
  const auto m = static_cast<Eigen::Index>(sys.m);
  const auto P = ctx.p.size();
  if (ctx.from_equilibrium) {
    const PartialJacobians fj = f_jacobians(sys, ctx.x0, ctx.y0, ctx.p, ctx.mode);
    Matrix J(n + m, n + m);
    Matrix rhs(n + m, P);
    J.topLeftCorner(n, n) = fj.dx;
    rhs.topRows(n) = -fj.dp;
    if (m > 0) {
      const PartialJacobians gj = g_jacobians(sys, ctx.x0, ctx.y0, ctx.p, ctx.mode, ctx.branches);
      J.topRightCorner(n, m) = fj.dy;
      J.bottomLeftCorner(m, n) = gj.dx;
      J.bottomRightCorner(m, m) = gj.dy;
      rhs.bottomRows(m) = -gj.dp;
    }
    const Eigen::PartialPivLU<Matrix> lu(J);
    if (!(lu.rcond() > 1e-14)) {
      throw Error(ErrorCode::NoEquilibrium, "equilibrium Jacobian singular; cannot differentiate");
    }
    return lu.solve(rhs).topRows(n);
  }
  if (sys.initial_state_jacobian) return sys.initial_state_jacobian(ctx.p);
  if (!sys.initial_state) return Matrix::Zero(n, P);
  Matrix chi(n, P);
  for (Eigen::Index j = 0; j < P; ++j) {
    const double h = 1e-7 * std::max(1.0, std::abs(ctx.p(j)));
    Vector pp = ctx.p, pm = ctx.p;
    pp(j) += h;
    pm(j) -= h;
    chi.col(j) = (sys.initial_state(pp) - sys.initial_state(pm)) / (2 * h);
  }
  return chi;
}

Matrix SensitivityTrajectory::chi_post_start() const {
  Matrix out = chi_initial;
  for (const auto& j : jumps) {
    if (j.time <= states.post_start_time) out = j.chi_plus;
  }
  return out;
}

Vector SensitivityTrajectory::second(std::size_t sample, std::size_t i, std::size_t j) const {
  const auto P = static_cast<Eigen::Index>(parameter_count);
  return chi2.at(sample).col(static_cast<Eigen::Index>(j) * P + static_cast<Eigen::Index>(i));
}

SensitivityTrajectory propagate_first_order(const HybridSystem& sys, const PhaseSchedule& schedule,
                                            const Vector& p, const IntegrationConfig& config,
                                            const SensitivityOptions& options) {
  const auto n = static_cast<Eigen::Index>(sys.n);
  FirstOrder aug(n, p.size());
  RunResult run = simulate(sys, schedule, p, config, &aug, run_options(options));
  return assemble(std::move(run), aug, n, p.size(), false);
}

SensitivityTrajectory propagate_second_order(const HybridSystem& sys, const PhaseSchedule& schedule,
                                             const Vector& p, const IntegrationConfig& config,
                                             SecondOrderBackend backend,
                                             const SensitivityOptions& options) {
  const auto n = static_cast<Eigen::Index>(sys.n);
  const auto P = p.size();
  if (backend == SecondOrderBackend::Variational) {
    SecondOrder aug(n, P, config.algebraic);
    RunResult run = simulate(sys, schedule, p, config, &aug, run_options(options));
    return assemble(std::move(run), aug, n, P, true);
  }

  SensitivityTrajectory base = propagate_first_order(sys, schedule, p, config, options);
  SensitivityOptions sub = options;
  sub.store_dense = false;
  std::vector<SensitivityTrajectory> runs(static_cast<std::size_t>(2 * P));
  parallel_for(runs.size(), options.jobs, [&](std::size_t k) {
    const auto j = static_cast<Eigen::Index>(k / 2);
    Vector pj = p;
    pj(j) += (k % 2 == 0 ? 1.0 : -1.0) * second_order_step(p(j));
    runs[k] = propagate_first_order(sys, schedule, pj, config, sub);
  });

  const double nan = std::numeric_limits<double>::quiet_NaN();
  const auto fill = [&](const std::vector<Matrix>& ref, auto member, std::vector<Matrix>& out) {
    out.assign(ref.size(), Matrix::Constant(n, P * P, nan));
    for (Eigen::Index j = 0; j < P; ++j) {
      const auto& plus = runs[static_cast<std::size_t>(2 * j)].*member;
      const auto& minus = runs[static_cast<std::size_t>(2 * j + 1)].*member;
      const double h = second_order_step(p(j));
      for (std::size_t k = 0; k < out.size() && k < plus.size() && k < minus.size(); ++k) {
        out[k].middleCols(j * P, P) = (plus[k] - minus[k]) / (2 * h);
      }
    }
  };
  fill(base.chi, &SensitivityTrajectory::chi, base.chi2);
  fill(base.extra_chi, &SensitivityTrajectory::extra_chi, base.extra_chi2);
  return base;
}

}  // namespace rbound
