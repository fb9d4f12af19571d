#include "rbound/models.hpp"

#include <cmath>
#include <memory>
#include <set>

namespace rbound {

namespace {

constexpr double kTwoPi = 2.0 * 3.14159265358979323846;

// Applies overrides to `values` (known keys only); returns keys left over.
std::set<std::string> apply_known(const Overrides& overrides, std::map<std::string, double>& values) {
  std::set<std::string> rest;
  for (const auto& [key, value] : overrides) {
    if (!std::isfinite(value)) throw Error(ErrorCode::BadOverride, "'" + key + "' is not finite");
    const auto it = values.find(key);
    if (it == values.end()) {
      rest.insert(key);
    } else {
      it->second = value;
    }
  }
  return rest;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::BadOverride, what);
}

// Sets nominal parameter values from overrides; anything else is unknown.
void apply_parameters(const std::set<std::string>& keys, const Overrides& overrides,
                      ParameterSpace& space) {
  for (const auto& key : keys) {
    const auto idx = space.index_of(key);
    if (!idx) throw Error(ErrorCode::BadOverride, "unknown override '" + key + "'");
    space.nominal[static_cast<Eigen::Index>(*idx)] = overrides.at(key);
  }
}

void check_bounds(const ParameterSpace& space) {
  for (std::size_t i = 0; i < space.dimension(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    require(space.nominal[k] >= space.lower[k] && space.nominal[k] <= space.upper[k],
            "parameter '" + space.names[i] + "' outside its admissible range");
  }
}

// -- single machine against an infinite bus ----------------------------------------

enum SmibParam : Eigen::Index { kPm, kH, kD, kE, kV, kX, kTclear, kSmibP };

ModelBundle build_smib(const Overrides& overrides) {
  ModelBundle mb;
  mb.name = "smib";
  mb.constants = {{"horizon", 15.0}};

  mb.space = make_parameter_space({"pm", "h", "d", "e", "v", "x", "t_clear"},
                                  (Vector(kSmibP) << 0.8, 5.0, 20.0, 1.1, 1.0, 0.5, 0.2).finished());
  mb.space.lower = (Vector(kSmibP) << 0.0, 1e-3, 0.0, 1e-3, 1e-3, 1e-3, 0.0).finished();
  mb.space.upper = (Vector(kSmibP) << 5.0, 50.0, 200.0, 5.0, 5.0, 5.0, 2.0).finished();
  mb.space.units = {"pu", "s", "pu", "pu", "pu", "pu", "s"};

  const auto rest = apply_known(overrides, mb.constants);
  apply_parameters(rest, overrides, mb.space);
  check_bounds(mb.space);
  require(mb.constants["horizon"] > mb.space.nominal[kTclear], "horizon must exceed t_clear");

  HybridSystem& s = mb.system;
  s.name = "smib";
  s.n = 2;
  s.m = 0;
  s.parameter_count = kSmibP;
  s.state_names = {"delta", "omega"};
  const double ws = kOmegaBase;

  s.f = [ws](const Vector& x, const Vector&, const Vector& p, Mode mode) {
    const double pe = mode == 1 ? 0.0 : p[kE] * p[kV] / p[kX] * std::sin(x[0]);
    Vector dx(2);
    dx << x[1], ws / (2 * p[kH]) * (p[kPm] - pe) - p[kD] / (2 * p[kH]) * x[1];
    return dx;
  };
  s.f_jacobian = [ws](const Vector& x, const Vector&, const Vector& p, Mode mode) {
    PartialJacobians j;
    j.dx = Matrix::Zero(2, 2);
    j.dy = Matrix::Zero(2, 0);
    j.dp = Matrix::Zero(2, kSmibP);
    const double c = ws / (2 * p[kH]);
    const bool fault = mode == 1;
    const double s = std::sin(x[0]);
    const double pmax = p[kE] * p[kV] / p[kX];
    const double pe = fault ? 0.0 : pmax * s;
    j.dx(0, 1) = 1.0;
    j.dx(1, 0) = fault ? 0.0 : -c * pmax * std::cos(x[0]);
    j.dx(1, 1) = -p[kD] / (2 * p[kH]);
    j.dp(1, kPm) = c;
    j.dp(1, kH) = -c / p[kH] * (p[kPm] - pe) + p[kD] / (2 * p[kH] * p[kH]) * x[1];
    j.dp(1, kD) = -x[1] / (2 * p[kH]);
    if (!fault) {
      j.dp(1, kE) = -c * p[kV] / p[kX] * s;
      j.dp(1, kV) = -c * p[kE] / p[kX] * s;
      j.dp(1, kX) = c * pmax / p[kX] * s;
    }
    return j;
  };
  s.equilibrium_guess = [](const Vector& p) {
    const double r = p[kPm] * p[kX] / (p[kE] * p[kV]);
    Vector x(2);
    x << (std::abs(r) < 1.0 ? std::asin(r) : 0.5), 0.0;
    return std::make_pair(x, Vector(0));
  };

  mb.schedule.equilibrium_mode = 0;
  mb.schedule.post_mode = 0;
  mb.schedule.post_label = "post";
  if (mb.space.nominal[kTclear] > 0.0) {
    mb.schedule.disturbance.push_back({"fault", 1, 0.0, static_cast<std::size_t>(kTclear)});
  }

  mb.recovery.horizon = mb.constants["horizon"];
  mb.recovery.escape_radius = (Vector(2) << kTwoPi, kInf).finished();
  mb.integration.horizon = mb.recovery.horizon;
  mb.mask = StateMask::all(2);
  return mb;
}

// -- three machines, four buses, infinite bus -----------------------------------------

enum TmParam : Eigen::Index {
  kTc, kSigma, kGamma, kAlphaP, kAlphaQ,
  kSb1, kSb3, kSb4,
  kDap1, kDap3, kDap4,
  kDaq1, kDaq3, kDaq4,
  kPm1, kPm2, kPm3,
  kTmP
};

struct Load {
  int bus;
  double p0;
  double q0;
  Eigen::Index scale;
  Eigen::Index dalpha_p;
  Eigen::Index dalpha_q;
};

struct ThreeMachine {
  static constexpr int kBuses = 4;
  double xd[3] = {0.25, 0.3, 0.2};
  double h[3] = {4.0, 3.5, 5.0};
  double d[3] = {16.0, 14.0, 20.0};
  double e_fixed[3] = {0.0, 1.1, 1.08};
  double k_a = 50.0, t_a = 0.5, v_ref = 1.04, e_max = 1.6;
  double v_inf = 1.0, x_inf = 0.5;
  int fault_bus = 1;  // zero-based
  double x_fault = 1e-3;
  Eigen::Matrix4d B = Eigen::Matrix4d::Zero();  // without the fault shunt
  std::vector<Load> loads;

  void add_line(int i, int j, double x) {
    B(i, i) -= 1.0 / x;
    B(j, j) -= 1.0 / x;
    B(i, j) += 1.0 / x;
    B(j, i) += 1.0 / x;
  }

  void finalize() {
    B.setZero();
    add_line(0, 1, 0.12);
    add_line(1, 2, 0.12);
    add_line(0, 3, 0.10);
    add_line(2, 3, 0.10);
    add_line(1, 3, 0.15);
    B(3, 3) -= 1.0 / x_inf;
    for (int g = 0; g < 3; ++g) B(g, g) -= 1.0 / xd[g];
    loads = {{0, 1.05, 0.35, kSb1, kDap1, kDaq1},
             {2, 0.875, 0.26, kSb3, kDap3, kDaq3},
             {3, 2.1, 0.7, kSb4, kDap4, kDaq4}};
  }

  double emf(int g, const Vector& y) const { return g == 0 ? y[8] : e_fixed[g]; }

  Vector f(const Vector& x, const Vector& y, const Vector& p) const {
    Vector dx(7);
    for (int g = 0; g < 3; ++g) {
      const double delta = x[2 * g], omega = x[2 * g + 1];
      const double e = y[2 * g], fv = y[2 * g + 1];
      const double pe = emf(g, y) / xd[g] * (e * std::sin(delta) - fv * std::cos(delta));
      dx[2 * g] = omega;
      dx[2 * g + 1] = kOmegaBase / (2 * h[g]) * (p[kPm1 + g] - pe) - d[g] / (2 * h[g]) * omega;
    }
    const double v1 = std::hypot(y[0], y[1]);
    dx[6] = (k_a * p[kGamma] * (v_ref - v1) - x[6]) / t_a;
    return dx;
  }

  PartialJacobians f_jac(const Vector& x, const Vector& y, const Vector& p) const {
    PartialJacobians j{Matrix::Zero(7, 7), Matrix::Zero(7, 9), Matrix::Zero(7, kTmP)};
    for (int g = 0; g < 3; ++g) {
      const double delta = x[2 * g];
      const double e = y[2 * g], fv = y[2 * g + 1];
      const double c = kOmegaBase / (2 * h[g]);
      const double E = emf(g, y);
      const double sn = std::sin(delta), cs = std::cos(delta);
      j.dx(2 * g, 2 * g + 1) = 1.0;
      j.dx(2 * g + 1, 2 * g) = -c * E / xd[g] * (e * cs + fv * sn);
      j.dx(2 * g + 1, 2 * g + 1) = -d[g] / (2 * h[g]);
      j.dy(2 * g + 1, 2 * g) = -c * E / xd[g] * sn;
      j.dy(2 * g + 1, 2 * g + 1) = c * E / xd[g] * cs;
      if (g == 0) j.dy(1, 8) = -c / xd[0] * (e * sn - fv * cs);
      j.dp(2 * g + 1, kPm1 + g) = c;
    }
    const double v1 = std::hypot(y[0], y[1]);
    j.dx(6, 6) = -1.0 / t_a;
    j.dy(6, 0) = -k_a * p[kGamma] * y[0] / (v1 * t_a);
    j.dy(6, 1) = -k_a * p[kGamma] * y[1] / (v1 * t_a);
    j.dp(6, kGamma) = k_a * (v_ref - v1) / t_a;
    return j;
  }

  double shunt(int b, Mode mode) const {
    return B(b, b) + ((mode == 1 && b == fault_bus) ? -1.0 / x_fault : 0.0);
  }

  // Current balance Y V - I_source + I_load = 0, real and imaginary rows per bus.
  Vector network(const Vector& x, const Vector& y, const Vector& p, Mode mode) const {
    Vector r = Vector::Zero(8);
    for (int b = 0; b < kBuses; ++b) {
      double re = 0.0, im = 0.0;
      for (int k = 0; k < kBuses; ++k) {
        const double bk = k == b ? shunt(b, mode) : B(b, k);
        re -= bk * y[2 * k + 1];
        im += bk * y[2 * k];
      }
      r[2 * b] = re;
      r[2 * b + 1] = im;
    }
    for (int g = 0; g < 3; ++g) {
      const double E = emf(g, y);
      r[2 * g] -= E * std::sin(x[2 * g]) / xd[g];
      r[2 * g + 1] += E * std::cos(x[2 * g]) / xd[g];
    }
    r[7] += v_inf / x_inf;
    for (const auto& ld : loads) {
      const double e = y[2 * ld.bus], fv = y[2 * ld.bus + 1];
      const double w = e * e + fv * fv;
      const double v = std::sqrt(w);
      const double k = p[kSigma] * p[ld.scale];
      const double P = k * ld.p0 * std::pow(v, p[kAlphaP] + p[ld.dalpha_p]);
      const double Q = k * ld.q0 * std::pow(v, p[kAlphaQ] + p[ld.dalpha_q]);
      r[2 * ld.bus] += (P * e + Q * fv) / w;
      r[2 * ld.bus + 1] += (P * fv - Q * e) / w;
    }
    return r;
  }

  PartialJacobians network_jac(const Vector& x, const Vector& y, const Vector& p, Mode mode) const {
    PartialJacobians j{Matrix::Zero(8, 7), Matrix::Zero(8, 9), Matrix::Zero(8, kTmP)};
    for (int b = 0; b < kBuses; ++b) {
      for (int k = 0; k < kBuses; ++k) {
        const double bk = k == b ? shunt(b, mode) : B(b, k);
        j.dy(2 * b, 2 * k + 1) = -bk;
        j.dy(2 * b + 1, 2 * k) = bk;
      }
    }
    for (int g = 0; g < 3; ++g) {
      const double E = emf(g, y);
      const double sn = std::sin(x[2 * g]), cs = std::cos(x[2 * g]);
      j.dx(2 * g, 2 * g) = -E * cs / xd[g];
      j.dx(2 * g + 1, 2 * g) = -E * sn / xd[g];
      if (g == 0) {
        j.dy(0, 8) = -sn / xd[0];
        j.dy(1, 8) = cs / xd[0];
      }
    }
    for (const auto& ld : loads) {
      const int re = 2 * ld.bus, im = re + 1;
      const double e = y[re], fv = y[im];
      const double w = e * e + fv * fv;
      const double lv = 0.5 * std::log(w);
      const double ap = p[kAlphaP] + p[ld.dalpha_p];
      const double aq = p[kAlphaQ] + p[ld.dalpha_q];
      const double base_p = ld.p0 * std::exp(ap * lv);
      const double base_q = ld.q0 * std::exp(aq * lv);
      const double k = p[kSigma] * p[ld.scale];
      const double P = k * base_p, Q = k * base_q;
      const double Pe = P * ap * e / w, Pf = P * ap * fv / w;
      const double Qe = Q * aq * e / w, Qf = Q * aq * fv / w;
      const double n_re = P * e + Q * fv, n_im = P * fv - Q * e;
      const double il_re = n_re / w, il_im = n_im / w;
      j.dy(re, re) += (Pe * e + P + Qe * fv - il_re * 2 * e) / w;
      j.dy(re, im) += (Pf * e + Qf * fv + Q - il_re * 2 * fv) / w;
      j.dy(im, re) += (Pe * fv - Qe * e - Q - il_im * 2 * e) / w;
      j.dy(im, im) += (Pf * fv + P - Qf * e - il_im * 2 * fv) / w;
      // Parameter partials through P and Q.
      const auto add = [&](Eigen::Index col, double dP, double dQ) {
        j.dp(re, col) += (dP * e + dQ * fv) / w;
        j.dp(im, col) += (dP * fv - dQ * e) / w;
      };
      add(kSigma, p[ld.scale] * base_p, p[ld.scale] * base_q);
      add(ld.scale, p[kSigma] * base_p, p[kSigma] * base_q);
      add(kAlphaP, P * lv, 0.0);
      add(ld.dalpha_p, P * lv, 0.0);
      add(kAlphaQ, 0.0, Q * lv);
      add(ld.dalpha_q, 0.0, Q * lv);
    }
    return j;
  }
};

ModelBundle build_three_machine(const Overrides& overrides) {
  ModelBundle mb;
  mb.name = "three_machine";
  mb.constants = {{"fault_bus", 2.0}, {"x_fault", 1e-3}, {"k_a", 50.0},   {"t_a", 0.5},
                  {"v_ref", 1.04},    {"e_max", 1.6},    {"e_2", 1.1},    {"e_3", 1.08},
                  {"v_inf", 1.0},     {"x_inf", 0.5},   {"horizon", 15.0}};

  mb.space = make_parameter_space(
      {"t_clear", "sigma", "gamma", "alpha_p", "alpha_q", "sigma_b1", "sigma_b3", "sigma_b4",
       "dalpha_p_b1", "dalpha_p_b3", "dalpha_p_b4", "dalpha_q_b1", "dalpha_q_b3", "dalpha_q_b4",
       "pm_1", "pm_2", "pm_3"},
      (Vector(kTmP) << 0.2, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 0, 0, 0, 0, 0, 0, 0.8, 0.9, 0.7)
          .finished());
  mb.space.lower = Vector::Constant(kTmP, -kInf);
  mb.space.upper = Vector::Constant(kTmP, kInf);
  mb.space.lower[kTc] = 0.0;
  mb.space.upper[kTc] = 2.0;
  for (Eigen::Index i : {kSigma, kGamma, kSb1, kSb3, kSb4}) {
    mb.space.lower[i] = 0.0;
    mb.space.upper[i] = 5.0;
  }
  for (Eigen::Index i : {kAlphaP, kAlphaQ, kDap1, kDap3, kDap4, kDaq1, kDaq3, kDaq4}) {
    mb.space.lower[i] = -3.0;
    mb.space.upper[i] = 5.0;
  }
  mb.space.units = {"s", "-", "-", "-", "-", "-", "-", "-", "-",
                    "-", "-", "-", "-", "-", "pu", "pu", "pu"};

  const auto rest = apply_known(overrides, mb.constants);
  apply_parameters(rest, overrides, mb.space);
  check_bounds(mb.space);

  auto tm = std::make_shared<ThreeMachine>();
  const double fb = mb.constants["fault_bus"];
  require(fb == std::round(fb) && fb >= 1 && fb <= 4, "fault_bus must be one of 1, 2, 3, 4");
  tm->fault_bus = static_cast<int>(fb) - 1;
  for (const char* key : {"x_fault", "k_a", "t_a", "e_max", "e_2", "e_3", "x_inf", "horizon"}) {
    require(mb.constants[key] > 0.0, std::string(key) + " must be positive");
  }
  require(mb.constants["horizon"] > mb.space.nominal[kTc], "horizon must exceed t_clear");
  tm->x_fault = mb.constants["x_fault"];
  tm->k_a = mb.constants["k_a"];
  tm->t_a = mb.constants["t_a"];
  tm->v_ref = mb.constants["v_ref"];
  tm->e_max = mb.constants["e_max"];
  tm->e_fixed[1] = mb.constants["e_2"];
  tm->e_fixed[2] = mb.constants["e_3"];
  tm->v_inf = mb.constants["v_inf"];
  tm->x_inf = mb.constants["x_inf"];
  tm->finalize();

  HybridSystem& s = mb.system;
  s.name = "three_machine";
  s.n = 7;
  s.m = 9;
  s.parameter_count = kTmP;
  s.state_names = {"delta_1", "omega_1", "delta_2", "omega_2", "delta_3", "omega_3", "v_r"};
  s.algebraic_names = {"vr_1", "vi_1", "vr_2", "vi_2", "vr_3", "vi_3", "vr_4", "vi_4", "e_1"};
  s.f = [tm](const Vector& x, const Vector& y, const Vector& p, Mode) { return tm->f(x, y, p); };
  s.f_jacobian = [tm](const Vector& x, const Vector& y, const Vector& p, Mode) {
    return tm->f_jac(x, y, p);
  };

  SwitchedConstraint net;
  net.name = "network";
  net.rows = 8;
  net.branch_plus = [tm](const Vector& x, const Vector& y, const Vector& p, Mode mode) {
    return tm->network(x, y, p, mode);
  };
  net.plus_jacobian = [tm](const Vector& x, const Vector& y, const Vector& p, Mode mode) {
    return tm->network_jac(x, y, p, mode);
  };
  s.constraints.push_back(std::move(net));

  SwitchedConstraint lim;
  lim.name = "exciter_limit";
  lim.rows = 1;
  lim.branch_plus = [tm](const Vector&, const Vector& y, const Vector&, Mode) {
    return Vector::Constant(1, y[8] - tm->e_max);
  };
  lim.branch_minus = [](const Vector& x, const Vector& y, const Vector&, Mode) {
    return Vector::Constant(1, y[8] - x[6]);
  };
  lim.plus_jacobian = [](const Vector&, const Vector&, const Vector&, Mode) {
    PartialJacobians j{Matrix::Zero(1, 7), Matrix::Zero(1, 9), Matrix::Zero(1, kTmP)};
    j.dy(0, 8) = 1.0;
    return j;
  };
  lim.minus_jacobian = [](const Vector&, const Vector&, const Vector&, Mode) {
    PartialJacobians j{Matrix::Zero(1, 7), Matrix::Zero(1, 9), Matrix::Zero(1, kTmP)};
    j.dx(0, 6) = -1.0;
    j.dy(0, 8) = 1.0;
    return j;
  };
  lim.indicator = [tm](const Vector& x, const Vector&, const Vector&) { return x[6] - tm->e_max; };
  lim.indicator_gradient = [](const Vector&, const Vector&, const Vector&) {
    IndicatorGradient g{RowVector::Zero(7), RowVector::Zero(9), RowVector::Zero(kTmP)};
    g.dx(6) = 1.0;
    return g;
  };
  s.constraints.push_back(std::move(lim));

  s.equilibrium_guess = [](const Vector&) {
    Vector x(7), y(9);
    x << -0.75, 0.0, -0.6, 0.0, -0.75, 0.0, 1.34;
    y << 0.62, -0.8, 0.64, -0.76, 0.6, -0.77, 0.57, -0.75, 1.34;
    return std::make_pair(x, y);
  };

  mb.schedule.equilibrium_mode = 0;
  mb.schedule.post_mode = 0;
  mb.schedule.post_label = "post";
  if (mb.space.nominal[kTc] > 0.0) {
    mb.schedule.disturbance.push_back({"fault", 1, 0.0, static_cast<std::size_t>(kTc)});
  }

  mb.recovery.horizon = mb.constants["horizon"];
  mb.recovery.escape_radius = (Vector(7) << kTwoPi, kInf, kTwoPi, kInf, kTwoPi, kInf, kInf).finished();
  mb.integration.horizon = mb.recovery.horizon;
  mb.mask = StateMask{{true, true, true, true, true, true, false}};
  mb.parameter_sets["S1"] = {"sigma_b1", "sigma_b3", "sigma_b4"};
  mb.parameter_sets["S2"] = {"sigma_b1",    "sigma_b3",    "sigma_b4",    "dalpha_p_b1", "dalpha_p_b3",
                             "dalpha_p_b4", "dalpha_q_b1", "dalpha_q_b3", "dalpha_q_b4"};
  mb.parameter_sets["S3"] = mb.parameter_sets["S2"];
  mb.parameter_sets["S3"].push_back("gamma");
  return mb;
}

}  // namespace

std::vector<std::string> model_names() { return {"smib", "three_machine"}; }

ModelBundle build(const std::string& name, const Overrides& overrides) {
  ModelBundle mb;
  if (name == "smib") {
    mb = build_smib(overrides);
  } else if (name == "three_machine") {
    mb = build_three_machine(overrides);
  } else {
    throw Error(ErrorCode::UnknownModel, "no built-in model named '" + name + "'");
  }
  const ValidationReport rep = validate(mb.system, mb.space, mb.schedule);
  if (!rep.ok()) throw Error(ErrorCode::BadOverride, "model fails validation: " + rep.summary());
  return mb;
}

ModelBundle restrict_parameters(const ModelBundle& model, const std::vector<std::string>& names) {
  ParameterSelection sel =
      select_parameters(model.system, model.schedule, model.space, names, model.space.nominal);
  ModelBundle out = model;
  out.system = std::move(sel.system);
  out.schedule = std::move(sel.schedule);
  out.space = std::move(sel.space);
  return out;
}

}  // namespace rbound
