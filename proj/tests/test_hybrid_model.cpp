#include <doctest.h>

#include "rbound/integrator.hpp"
#include "toy_systems.hpp"

using namespace rbound;

TEST_CASE("indicator crossing honours the hysteresis band") {
  CHECK_FALSE(indicator_crossed(Branch::Plus, 0.0, 0.0));
  CHECK(indicator_crossed(Branch::Plus, -1e-9, 0.0));
  CHECK_FALSE(indicator_crossed(Branch::Plus, -0.05, 0.1));
  CHECK(indicator_crossed(Branch::Plus, -0.2, 0.1));
  CHECK(indicator_crossed(Branch::Minus, 0.0, 0.0));
  CHECK_FALSE(indicator_crossed(Branch::Minus, 0.05, 0.1));
}

TEST_CASE("phase durations read parameters and reject negative values") {
  PhaseSchedule sc;
  sc.disturbance.push_back({"a", 1, 0.3, std::nullopt});
  sc.disturbance.push_back({"b", 2, 0.0, std::size_t{1}});
  const auto d = phase_durations(sc, Vector{{7.0, 0.25}});
  REQUIRE(d.size() == 2);
  CHECK(d[0] == 0.3);
  CHECK(d[1] == 0.25);
  CHECK_THROWS_AS((void)phase_durations(sc, Vector{{7.0, -0.1}}), Error);

  const auto g = phase_end_gradients(sc, 2);
  CHECK(g[0].isZero());
  CHECK(g[1][1] == 1.0);
}

TEST_CASE("algebraic solve picks the branch from the indicator") {
  const HybridSystem s = toy::switched_rate();
  const Vector p = Vector::Constant(1, 0.5);
  const auto below = solve_algebraic(s, Vector::Constant(1, 0.2), p, Vector::Zero(1), 0);
  CHECK(below.branches[0] == Branch::Minus);
  CHECK(below.y[0] == doctest::Approx(0.0));
  const auto above = solve_algebraic(s, Vector::Constant(1, 0.7), p, Vector::Zero(1), 0);
  CHECK(above.branches[0] == Branch::Plus);
  CHECK(above.y[0] == doctest::Approx(1.0));
}

TEST_CASE("finite-difference Jacobians agree with the analytic ones") {
  HybridSystem s;
  s.n = 2;
  s.parameter_count = 1;
  s.f = [](const Vector& x, const Vector&, const Vector& p, Mode) {
    return Vector{{std::sin(x[0]) * p[0], x[0] * x[1]}};
  };
  const Vector x{{0.3, -1.2}};
  const Vector p = Vector::Constant(1, 2.0);
  const PartialJacobians j = f_jacobians(s, x, Vector(0), p, 0);
  CHECK(j.dx(0, 0) == doctest::Approx(std::cos(0.3) * 2.0).epsilon(1e-7));
  CHECK(j.dx(1, 0) == doctest::Approx(-1.2).epsilon(1e-7));
  CHECK(j.dx(1, 1) == doctest::Approx(0.3).epsilon(1e-7));
  CHECK(j.dp(0, 0) == doctest::Approx(std::sin(0.3)).epsilon(1e-7));
}

TEST_CASE("validation reports structural defects without throwing") {
  HybridSystem s = toy::decay();
  ParameterSpace space = make_parameter_space({"a"}, Vector::Constant(1, 1.0));
  ValidationReport ok = validate(s, space);
  CHECK(ok.ok());
  CHECK_FALSE(ok.finite_difference_fallbacks.empty());

  ParameterSpace dup = make_parameter_space({"a", "a"}, Vector::Constant(2, 1.0));
  CHECK_FALSE(validate(s, dup).ok());

  HybridSystem bad = s;
  bad.f = [](const Vector&, const Vector&, const Vector&, Mode) { return Vector::Zero(3); };
  CHECK_FALSE(validate(bad, space).ok());

  PhaseSchedule sc;
  sc.disturbance.push_back({"x", 1, 0.0, std::size_t{4}});
  CHECK_FALSE(validate(s, space, sc).ok());
}

TEST_CASE("parameter selection freezes the rest at the base vector") {
  HybridSystem s;
  s.n = 1;
  s.parameter_count = 3;
  s.f = [](const Vector& x, const Vector&, const Vector& p, Mode) {
    return Vector::Constant(1, -p[0] * x[0] + p[1] + p[2]);
  };
  const ParameterSpace full = make_parameter_space({"a", "b", "c"}, Vector{{1.0, 2.0, 3.0}});
  const ParameterSelection sel = select_parameters(s, {}, full, {"c", "a"}, full.nominal);
  CHECK(sel.space.names == std::vector<std::string>{"c", "a"});
  CHECK(sel.space.nominal[0] == 3.0);
  const Vector e = sel.embed(Vector{{10.0, 20.0}});
  CHECK(e[0] == 20.0);
  CHECK(e[1] == 2.0);
  CHECK(e[2] == 10.0);
  const Vector fx = eval_f(sel.system, Vector::Constant(1, 1.0), Vector(0), Vector{{10.0, 20.0}}, 0);
  CHECK(fx[0] == doctest::Approx(-20.0 + 2.0 + 10.0));
  CHECK_THROWS_AS((void)select_parameters(s, {}, full, {"zz"}, full.nominal), Error);
}

TEST_CASE("equilibrium of a stable linear system") {
  HybridSystem s;
  s.n = 1;
  s.parameter_count = 1;
  s.f = [](const Vector& x, const Vector&, const Vector& p, Mode) {
    return Vector::Constant(1, -(x[0] - p[0]));
  };
  const Equilibrium eq = find_equilibrium(s, Vector::Constant(1, 0.7), Vector::Zero(1));
  CHECK(eq.x[0] == doctest::Approx(0.7));
  CHECK(eq.eigenvalues[0].real() < 0.0);
}
