#include "rbound/hybrid_model.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <set>
#include <sstream>
#include <tuple>

namespace rbound {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::AlgebraicSolveFailure: return "AlgebraicSolveFailure";
    case ErrorCode::IntegrationDiverged: return "IntegrationDiverged";
    case ErrorCode::EventChattering: return "EventChattering";
    case ErrorCode::NoEquilibrium: return "NoEquilibrium";
    case ErrorCode::EquilibriumUnstable: return "EquilibriumUnstable";
    case ErrorCode::SensitivityJumpSingular: return "SensitivityJumpSingular";
    case ErrorCode::BackendUnsupported: return "BackendUnsupported";
    case ErrorCode::Inconclusive: return "Inconclusive";
    case ErrorCode::StartNotRecovered: return "StartNotRecovered";
    case ErrorCode::ZeroGradient: return "ZeroGradient";
    case ErrorCode::MaxIterations: return "MaxIterations";
    case ErrorCode::TangentUndefined: return "TangentUndefined";
    case ErrorCode::CorrectorFailed: return "CorrectorFailed";
    case ErrorCode::LineSearchExhausted: return "LineSearchExhausted";
    case ErrorCode::LinearSystemSingular: return "LinearSystemSingular";
    case ErrorCode::UnknownModel: return "UnknownModel";
    case ErrorCode::BadOverride: return "BadOverride";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

namespace {

constexpr double kFdRelStep = 1e-7;

double fd_step(double v) { return kFdRelStep * std::max(1.0, std::abs(v)); }

// Central-difference Jacobian of fn with respect to v.
template <class Fn>
Matrix fd_jacobian(Fn&& fn, const Vector& v, Eigen::Index rows) {
  Matrix jac(rows, v.size());
  Vector work = v;
  for (Eigen::Index j = 0; j < v.size(); ++j) {
    const double h = fd_step(v[j]);
    work[j] = v[j] + h;
    const Vector plus = fn(work);
    work[j] = v[j] - h;
    const Vector minus = fn(work);
    work[j] = v[j];
    jac.col(j) = (plus - minus) / (2.0 * h);
  }
  return jac;
}

PartialJacobians fd_partials(const VectorField& fn, const Vector& x, const Vector& y,
                             const Vector& p, Mode mode, Eigen::Index rows) {
  PartialJacobians out;
  out.dx = fd_jacobian([&](const Vector& v) { return fn(v, y, p, mode); }, x, rows);
  out.dy = fd_jacobian([&](const Vector& v) { return fn(x, v, p, mode); }, y, rows);
  out.dp = fd_jacobian([&](const Vector& v) { return fn(x, y, v, mode); }, p, rows);
  return out;
}

const VectorField& active_branch(const SwitchedConstraint& c, Branch b) {
  return (b == Branch::Minus && c.branch_minus) ? c.branch_minus : c.branch_plus;
}

const JacobianFn& active_jacobian(const SwitchedConstraint& c, Branch b) {
  return (b == Branch::Minus && c.branch_minus) ? c.minus_jacobian : c.plus_jacobian;
}

bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace

// -- schedule ----------------------------------------------------------------

std::vector<double> phase_durations(const PhaseSchedule& schedule, const Vector& p) {
  std::vector<double> out;
  out.reserve(schedule.disturbance.size());
  for (const auto& phase : schedule.disturbance) {
    double d = phase.duration;
    if (phase.duration_parameter) {
      if (*phase.duration_parameter >= static_cast<std::size_t>(p.size())) {
        throw Error(ErrorCode::InvalidArgument, "phase '" + phase.label +
                                                    "' duration parameter index out of range");
      }
      d = p[static_cast<Eigen::Index>(*phase.duration_parameter)];
    }
    if (!(d >= 0.0) || !std::isfinite(d)) {
      throw Error(ErrorCode::InvalidArgument,
                  "phase '" + phase.label + "' has a negative or non-finite duration");
    }
    out.push_back(d);
  }
  return out;
}

std::vector<RowVector> phase_end_gradients(const PhaseSchedule& schedule,
                                           std::size_t parameter_count) {
  std::vector<RowVector> out;
  RowVector acc = RowVector::Zero(static_cast<Eigen::Index>(parameter_count));
  for (const auto& phase : schedule.disturbance) {
    if (phase.duration_parameter && *phase.duration_parameter < parameter_count) {
      acc[static_cast<Eigen::Index>(*phase.duration_parameter)] += 1.0;
    }
    out.push_back(acc);
  }
  return out;
}

// -- parameter space ---------------------------------------------------------

std::optional<std::size_t> ParameterSpace::index_of(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names.begin());
}

Matrix ParameterSpace::weight_or_identity() const {
  const auto P = static_cast<Eigen::Index>(dimension());
  return weight ? *weight : Matrix::Identity(P, P);
}

ParameterSpace make_parameter_space(std::vector<std::string> names, Vector nominal) {
  ParameterSpace s;
  const auto P = static_cast<Eigen::Index>(names.size());
  s.names = std::move(names);
  s.nominal = std::move(nominal);
  s.lower = Vector::Constant(P, -kInf);
  s.upper = Vector::Constant(P, kInf);
  s.units.assign(static_cast<std::size_t>(P), "");
  return s;
}

// -- evaluation --------------------------------------------------------------

Vector eval_f(const HybridSystem& sys, const Vector& x, const Vector& y, const Vector& p,
              Mode mode) {
  Vector out = sys.f(x, y, p, mode);
  if (static_cast<std::size_t>(out.size()) != sys.n) {
    throw Error(ErrorCode::InvalidArgument, "f output dimension mismatch");
  }
  return out;
}

Vector eval_g(const HybridSystem& sys, const Vector& x, const Vector& y, const Vector& p,
              Mode mode, const Branches& branches) {
  Vector out(static_cast<Eigen::Index>(sys.m));
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < sys.constraints.size(); ++i) {
    const auto& c = sys.constraints[i];
    const Vector r = active_branch(c, branches[i])(x, y, p, mode);
    if (static_cast<std::size_t>(r.size()) != c.rows ||
        row + r.size() > static_cast<Eigen::Index>(sys.m)) {
      throw Error(ErrorCode::InvalidArgument,
                  "constraint '" + c.name + "' output dimension mismatch");
    }
    out.segment(row, r.size()) = r;
    row += r.size();
  }
  if (row != static_cast<Eigen::Index>(sys.m)) {
    throw Error(ErrorCode::InvalidArgument, "algebraic rows do not sum to m");
  }
  return out;
}

double eval_indicator(const HybridSystem& sys, std::size_t segment, const Vector& x,
                      const Vector& y, const Vector& p) {
  return sys.constraints[segment].indicator(x, y, p);
}

PartialJacobians f_jacobians(const HybridSystem& sys, const Vector& x, const Vector& y,
                             const Vector& p, Mode mode) {
  if (sys.f_jacobian) return sys.f_jacobian(x, y, p, mode);
  return fd_partials(sys.f, x, y, p, mode, static_cast<Eigen::Index>(sys.n));
}

PartialJacobians g_jacobians(const HybridSystem& sys, const Vector& x, const Vector& y,
                             const Vector& p, Mode mode, const Branches& branches) {
  const auto m = static_cast<Eigen::Index>(sys.m);
  PartialJacobians out{Matrix::Zero(m, x.size()), Matrix::Zero(m, y.size()),
                       Matrix::Zero(m, p.size())};
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < sys.constraints.size(); ++i) {
    const auto& c = sys.constraints[i];
    const auto rows = static_cast<Eigen::Index>(c.rows);
    const JacobianFn& analytic = active_jacobian(c, branches[i]);
    const PartialJacobians part = analytic
                                      ? analytic(x, y, p, mode)
                                      : fd_partials(active_branch(c, branches[i]), x, y, p, mode,
                                                    rows);
    out.dx.middleRows(row, rows) = part.dx;
    out.dy.middleRows(row, rows) = part.dy;
    out.dp.middleRows(row, rows) = part.dp;
    row += rows;
  }
  return out;
}

IndicatorGradient indicator_gradient(const HybridSystem& sys, std::size_t segment,
                                     const Vector& x, const Vector& y, const Vector& p) {
  const auto& c = sys.constraints[segment];
  if (c.indicator_gradient) return c.indicator_gradient(x, y, p);
  const auto scalar = [&](const Vector& xx, const Vector& yy, const Vector& pp, Mode) {
    return Vector::Constant(1, c.indicator(xx, yy, pp));
  };
  const PartialJacobians j = fd_partials(scalar, x, y, p, 0, 1);
  return {j.dx.row(0), j.dy.row(0), j.dp.row(0)};
}

Branches select_branches(const HybridSystem& sys, const Vector& x, const Vector& y,
                         const Vector& p) {
  Branches out(sys.constraints.size(), Branch::Plus);
  for (std::size_t i = 0; i < sys.constraints.size(); ++i) {
    if (sys.constraints[i].switched() && sys.constraints[i].indicator(x, y, p) < 0.0) {
      out[i] = Branch::Minus;
    }
  }
  return out;
}

bool indicator_crossed(Branch current, double s, double hysteresis_band) {
  if (current == Branch::Plus) return s < -hysteresis_band;
  return hysteresis_band > 0.0 ? s > hysteresis_band : s >= 0.0;
}

// -- algebraic solve ---------------------------------------------------------

Vector solve_algebraic_fixed(const HybridSystem& sys, const Vector& x, const Vector& p,
                             const Vector& y_guess, Mode mode, const Branches& branches,
                             const AlgebraicConfig& config, int* iterations) {
  if (sys.m == 0) {
    if (iterations) *iterations = 0;
    return Vector(0);
  }
  Vector y = y_guess;
  Vector r = eval_g(sys, x, y, p, mode, branches);
  for (int it = 0; it <= config.max_iterations; ++it) {
    if (!all_finite(r)) break;
    if (r.lpNorm<Eigen::Infinity>() <= config.tolerance) {
      if (iterations) *iterations = it;
      return y;
    }
    if (it == config.max_iterations) break;
    const Matrix jy = g_jacobians(sys, x, y, p, mode, branches).dy;
    const Eigen::PartialPivLU<Matrix> lu(jy);
    if (!(lu.rcond() > 1e-14)) {
      throw Error(ErrorCode::AlgebraicSolveFailure, "singular algebraic Jacobian");
    }
    const Vector dy = -lu.solve(r);
    const double r0 = r.norm();
    double lambda = 1.0;
    Vector y_try = y + dy;
    Vector r_try = eval_g(sys, x, y_try, p, mode, branches);
    while ((!all_finite(r_try) || r_try.norm() > (1.0 - 1e-4 * lambda) * r0) &&
           lambda > 1.0 / 64.0) {
      lambda *= 0.5;
      y_try = y + lambda * dy;
      r_try = eval_g(sys, x, y_try, p, mode, branches);
    }
    y = std::move(y_try);
    r = std::move(r_try);
  }
  throw Error(ErrorCode::AlgebraicSolveFailure,
              "damped Newton did not reach tolerance within " +
                  std::to_string(config.max_iterations) + " iterations");
}

AlgebraicSolution solve_algebraic(const HybridSystem& sys, const Vector& x, const Vector& p,
                                  const Vector& y_guess, Mode mode,
                                  const AlgebraicConfig& config) {
  AlgebraicSolution sol;
  sol.branches = select_branches(sys, x, y_guess, p);
  if (sys.m == 0) {
    sol.y = Vector(0);
    return sol;
  }
  std::size_t switched = 0;
  for (const auto& c : sys.constraints) switched += c.switched() ? 1 : 0;
  Vector guess = y_guess;
  for (std::size_t attempt = 0; attempt <= 2 * switched; ++attempt) {
    sol.y = solve_algebraic_fixed(sys, x, p, guess, mode, sol.branches, config, &sol.iterations);
    bool consistent = true;
    for (std::size_t i = 0; i < sys.constraints.size(); ++i) {
      const auto& c = sys.constraints[i];
      if (!c.switched()) continue;
      if (indicator_crossed(sol.branches[i], c.indicator(x, sol.y, p), c.hysteresis_band)) {
        sol.branches[i] = sol.branches[i] == Branch::Plus ? Branch::Minus : Branch::Plus;
        consistent = false;
        break;
      }
    }
    if (consistent) return sol;
    guess = sol.y;
  }
  throw Error(ErrorCode::AlgebraicSolveFailure, "no branch assignment is self-consistent");
}

// -- validation --------------------------------------------------------------

std::string ValidationReport::summary() const {
  std::ostringstream os;
  if (ok()) {
    os << "OK, Jacobians "
       << (finite_difference_fallbacks.empty() ? "analytic" : "partly finite-difference");
  } else {
    os << errors.size() << " error(s): ";
    for (std::size_t i = 0; i < errors.size(); ++i) os << (i ? "; " : "") << errors[i];
  }
  return os.str();
}

ValidationReport validate(const HybridSystem& sys, const ParameterSpace& space) {
  ValidationReport rep;
  const auto P = space.dimension();
  if (P == 0) rep.errors.push_back("parameter space is empty");
  {
    std::set<std::string> seen;
    for (const auto& name : space.names) {
      if (!seen.insert(name).second) rep.errors.push_back("duplicate parameter name '" + name + "'");
    }
  }
  if (static_cast<std::size_t>(space.nominal.size()) != P) {
    rep.errors.push_back("nominal vector length does not match parameter names");
  }
  if (sys.parameter_count != P) {
    rep.errors.push_back("model expects " + std::to_string(sys.parameter_count) +
                         " parameters, space has " + std::to_string(P));
  }
  if (space.weight) {
    const Matrix& a = *space.weight;
    const auto Pi = static_cast<Eigen::Index>(P);
    if (a.rows() != Pi || a.cols() != Pi) {
      rep.errors.push_back("weight matrix has wrong shape");
    } else if (!a.isApprox(a.transpose(), 1e-12) || !a.allFinite()) {
      rep.errors.push_back("weight matrix not symmetric");
    } else {
      const Eigen::LLT<Matrix> llt(a);
      bool pd = llt.info() == Eigen::Success;
      if (pd) pd = llt.matrixLLT().diagonal().minCoeff() > 1e-12 * std::max(1.0, a.norm());
      if (!pd) rep.errors.push_back("weight matrix not positive definite");
    }
  }
  if (!sys.f) {
    rep.errors.push_back("vector field f is missing");
    return rep;
  }
  std::size_t rows = 0;
  for (const auto& c : sys.constraints) {
    rows += c.rows;
    if (!c.branch_plus) rep.errors.push_back("constraint '" + c.name + "' has no branch");
    if (c.switched() && !c.branch_minus) {
      rep.errors.push_back("switched constraint '" + c.name + "' has no minus branch");
    }
    if (c.hysteresis_band < 0.0) {
      rep.errors.push_back("constraint '" + c.name + "' has a negative hysteresis band");
    }
  }
  if (rows != sys.m) {
    rep.errors.push_back("algebraic segment rows (" + std::to_string(rows) +
                         ") do not sum to m = " + std::to_string(sys.m));
  }

  if (!sys.f_jacobian) rep.finite_difference_fallbacks.push_back("f");
  for (const auto& c : sys.constraints) {
    if (!c.plus_jacobian || (c.branch_minus && !c.minus_jacobian)) {
      rep.finite_difference_fallbacks.push_back("g:" + c.name);
    }
    if (c.switched() && !c.indicator_gradient) {
      rep.finite_difference_fallbacks.push_back("s:" + c.name);
    }
  }
  for (const auto& which : rep.finite_difference_fallbacks) {
    rep.notes.push_back("Jacobian of " + which + " falls back to finite differences");
  }
  if (!rep.errors.empty() || static_cast<std::size_t>(space.nominal.size()) != P ||
      sys.parameter_count != P) {
    return rep;
  }

  Vector x = Vector::Zero(static_cast<Eigen::Index>(sys.n));
  Vector y = Vector::Zero(static_cast<Eigen::Index>(sys.m));
  try {
    if (sys.equilibrium_guess) {
      std::tie(x, y) = sys.equilibrium_guess(space.nominal);
    } else if (sys.initial_state) {
      x = sys.initial_state(space.nominal);
    }
  } catch (const std::exception& e) {
    rep.errors.push_back(std::string("initial guess evaluation failed: ") + e.what());
    return rep;
  }
  if (static_cast<std::size_t>(x.size()) != sys.n || static_cast<std::size_t>(y.size()) != sys.m) {
    rep.errors.push_back("initial guess dimension mismatch");
    return rep;
  }
  const Vector fx = sys.f(x, y, space.nominal, 0);
  if (static_cast<std::size_t>(fx.size()) != sys.n) {
    rep.errors.push_back("f output dimension mismatch");
  } else if (!fx.allFinite()) {
    rep.errors.push_back("f is not finite at the nominal parameters");
  }
  const Branches br = select_branches(sys, x, y, space.nominal);
  for (std::size_t i = 0; i < sys.constraints.size(); ++i) {
    const auto& c = sys.constraints[i];
    const Vector r = active_branch(c, br[i])(x, y, space.nominal, 0);
    if (static_cast<std::size_t>(r.size()) != c.rows) {
      rep.errors.push_back("constraint '" + c.name + "' output dimension mismatch");
    } else if (!r.allFinite()) {
      rep.errors.push_back("constraint '" + c.name + "' is not finite at the nominal parameters");
    }
  }
  return rep;
}

ValidationReport validate(const HybridSystem& system, const ParameterSpace& space,
                          const PhaseSchedule& schedule) {
  ValidationReport rep = validate(system, space);
  for (const auto& phase : schedule.disturbance) {
    if (phase.duration_parameter) {
      if (*phase.duration_parameter >= space.dimension()) {
        rep.errors.push_back("phase '" + phase.label + "' refers to an unknown parameter");
      } else if (!(space.nominal[static_cast<Eigen::Index>(*phase.duration_parameter)] > 0.0)) {
        rep.errors.push_back("phase '" + phase.label + "' duration is not strictly positive");
      }
    } else if (!(phase.duration > 0.0)) {
      rep.errors.push_back("phase '" + phase.label + "' duration is not strictly positive");
    }
  }
  return rep;
}

// -- parameter selection -----------------------------------------------------

Vector ParameterSelection::embed(const Vector& sub) const {
  Vector full = base;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    full[static_cast<Eigen::Index>(indices[k])] = sub[static_cast<Eigen::Index>(k)];
  }
  return full;
}

namespace {

Matrix take_columns(const Matrix& m, const std::vector<std::size_t>& idx) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    out.col(static_cast<Eigen::Index>(k)) = m.col(static_cast<Eigen::Index>(idx[k]));
  }
  return out;
}

RowVector take_columns(const RowVector& m, const std::vector<std::size_t>& idx) {
  RowVector out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    out[static_cast<Eigen::Index>(k)] = m[static_cast<Eigen::Index>(idx[k])];
  }
  return out;
}

}  // namespace

ParameterSelection select_parameters(const HybridSystem& system, const PhaseSchedule& schedule,
                                     const ParameterSpace& full,
                                     const std::vector<std::string>& names, const Vector& base) {
  if (names.empty()) throw Error(ErrorCode::InvalidArgument, "empty parameter selection");
  if (static_cast<std::size_t>(base.size()) != system.parameter_count) {
    throw Error(ErrorCode::InvalidArgument, "base parameter vector has wrong length");
  }
  ParameterSelection sel;
  sel.base = base;
  for (const auto& name : names) {
    const auto idx = full.index_of(name);
    if (!idx) throw Error(ErrorCode::InvalidArgument, "unknown parameter '" + name + "'");
    if (std::find(sel.indices.begin(), sel.indices.end(), *idx) != sel.indices.end()) {
      throw Error(ErrorCode::InvalidArgument, "parameter '" + name + "' selected twice");
    }
    sel.indices.push_back(*idx);
  }

  // Shared, immutable embedding state for the wrappers.
  const auto indices = std::make_shared<const std::vector<std::size_t>>(sel.indices);
  const auto frozen = std::make_shared<const Vector>(base);
  const auto embed = [indices, frozen](const Vector& sub) {
    Vector out = *frozen;
    for (std::size_t k = 0; k < indices->size(); ++k) {
      out[static_cast<Eigen::Index>((*indices)[k])] = sub[static_cast<Eigen::Index>(k)];
    }
    return out;
  };
  const auto wrap_field = [embed](const VectorField& fn) -> VectorField {
    if (!fn) return {};
    return [fn, embed](const Vector& x, const Vector& y, const Vector& p, Mode mode) {
      return fn(x, y, embed(p), mode);
    };
  };
  const auto wrap_jacobian = [embed, indices](const JacobianFn& fn) -> JacobianFn {
    if (!fn) return {};
    return [fn, embed, indices](const Vector& x, const Vector& y, const Vector& p, Mode mode) {
      PartialJacobians j = fn(x, y, embed(p), mode);
      j.dp = take_columns(j.dp, *indices);
      return j;
    };
  };

  HybridSystem& s = sel.system;
  s = system;
  s.parameter_count = sel.indices.size();
  s.f = wrap_field(system.f);
  s.f_jacobian = wrap_jacobian(system.f_jacobian);
  for (std::size_t i = 0; i < system.constraints.size(); ++i) {
    const auto& src = system.constraints[i];
    auto& dst = s.constraints[i];
    dst.branch_plus = wrap_field(src.branch_plus);
    dst.branch_minus = wrap_field(src.branch_minus);
    dst.plus_jacobian = wrap_jacobian(src.plus_jacobian);
    dst.minus_jacobian = wrap_jacobian(src.minus_jacobian);
    if (src.indicator) {
      dst.indicator = [fn = src.indicator, embed](const Vector& x, const Vector& y,
                                                  const Vector& p) { return fn(x, y, embed(p)); };
    }
    if (src.indicator_gradient) {
      dst.indicator_gradient = [fn = src.indicator_gradient, embed, indices](
                                   const Vector& x, const Vector& y, const Vector& p) {
        IndicatorGradient g = fn(x, y, embed(p));
        g.dp = take_columns(g.dp, *indices);
        return g;
      };
    }
  }
  if (system.initial_state) {
    s.initial_state = [fn = system.initial_state, embed](const Vector& p) { return fn(embed(p)); };
  }
  if (system.initial_state_jacobian) {
    s.initial_state_jacobian = [fn = system.initial_state_jacobian, embed,
                                indices](const Vector& p) {
      return take_columns(fn(embed(p)), *indices);
    };
  }
  if (system.equilibrium_guess) {
    s.equilibrium_guess = [fn = system.equilibrium_guess, embed](const Vector& p) {
      return fn(embed(p));
    };
  }

  sel.schedule = schedule;
  for (auto& phase : sel.schedule.disturbance) {
    if (!phase.duration_parameter) continue;
    const auto it =
        std::find(sel.indices.begin(), sel.indices.end(), *phase.duration_parameter);
    if (it == sel.indices.end()) {
      phase.duration = base[static_cast<Eigen::Index>(*phase.duration_parameter)];
      phase.duration_parameter.reset();
    } else {
      phase.duration_parameter = static_cast<std::size_t>(it - sel.indices.begin());
    }
  }

  std::vector<std::string> sub_names;
  Vector nominal(static_cast<Eigen::Index>(sel.indices.size()));
  for (std::size_t k = 0; k < sel.indices.size(); ++k) {
    sub_names.push_back(full.names[sel.indices[k]]);
    nominal[static_cast<Eigen::Index>(k)] = base[static_cast<Eigen::Index>(sel.indices[k])];
  }
  sel.space = make_parameter_space(std::move(sub_names), nominal);
  for (std::size_t k = 0; k < sel.indices.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(sel.indices[k]);
    const auto kk = static_cast<Eigen::Index>(k);
    if (full.lower.size() == static_cast<Eigen::Index>(full.dimension())) sel.space.lower[kk] = full.lower[i];
    if (full.upper.size() == static_cast<Eigen::Index>(full.dimension())) sel.space.upper[kk] = full.upper[i];
    if (full.units.size() == full.dimension()) sel.space.units[k] = full.units[sel.indices[k]];
  }
  return sel;
}

}  // namespace rbound
