#include <doctest.h>

#include "rbound/models.hpp"
#include "toy_systems.hpp"

#include <cmath>

using namespace rbound;

namespace {

StateTrajectory synthetic(double horizon, const std::function<double(double)>& x) {
  StateTrajectory t;
  for (double s = 0.0; s <= horizon + 1e-12; s += 0.1) {
    t.times.push_back(s);
    t.x.push_back(Vector::Constant(1, x(s)));
    t.y.push_back(Vector(0));
  }
  t.end_time = horizon;
  return t;
}

RecoveryConfig unit_config() {
  RecoveryConfig c;
  c.horizon = 10.0;
  c.delta = 1e-2;
  c.escape_radius = Vector::Constant(1, 5.0);
  return c;
}

}  // namespace

TEST_CASE("H is the reciprocal masked 1-norm") {
  Matrix chi{{1.0, -2.0}, {0.5, 0.5}};
  CHECK(evaluate_H(chi, StateMask::all(2)) == doctest::Approx(1.0 / 4.0));
  CHECK(evaluate_H(chi, StateMask{{false, true}}) == doctest::Approx(1.0));
  CHECK(std::isinf(evaluate_H(Matrix::Zero(2, 2), StateMask::all(2))));
  CHECK_THROWS_AS(StateMask({false, false}).check(2), Error);
}

TEST_CASE("recovery classification") {
  const RecoveryConfig cfg = unit_config();
  const Vector sep = Vector::Zero(1);
  CHECK(classify_recovery(synthetic(10.0, [](double t) { return std::exp(-t); }), sep, cfg));
  CHECK_FALSE(classify_recovery(synthetic(10.0, [](double t) { return t; }), sep, cfg));
  CHECK(assess_recovery(synthetic(10.0, [](double t) { return t; }), sep, cfg) ==
        RecoveryStatus::Escaped);
  const auto parked = synthetic(10.0, [](double) { return 0.5; });
  CHECK(assess_recovery(parked, sep, cfg) == RecoveryStatus::SettledElsewhere);
  // Keeps swinging well inside the escape radius.
  const auto slow = synthetic(10.0, [](double t) { return 0.5 * std::sin(t); });
  CHECK_THROWS_AS((void)classify_recovery(slow, sep, cfg), Error);
  CHECK(assess_recovery(slow, sep, cfg) == RecoveryStatus::Inconclusive);
  // A trajectory cut short cannot have settled.
  CHECK_FALSE(classify_recovery(synthetic(4.0, [](double t) { return std::exp(-t); }), sep, cfg));
}

TEST_CASE("recovery config checks") {
  RecoveryConfig c = unit_config();
  c.window_fraction = 1.0;
  CHECK_THROWS_AS(c.check(), Error);
  c = unit_config();
  c.g_horizon = 20.0;
  CHECK_THROWS_AS(c.check(), Error);
}

TEST_CASE("gradient from sensitivities uses the sign of chi") {
  // P = 1, n = 2: H = 1 / (|c0| + |c1|), dH/dp = -(sign c0 c0' + sign c1 c1') H^2.
  const Matrix chi{{2.0}, {-1.0}};
  const Matrix chi2{{0.5}, {0.25}};
  const RowVector g = gradient_from_sensitivities(chi, chi2, StateMask::all(2));
  CHECK(g[0] == doctest::Approx(-(0.5 - 0.25) / 9.0));
  const RowVector m = gradient_from_sensitivities(chi, chi2, StateMask{{true, false}});
  CHECK(m[0] == doctest::Approx(-0.5 / 4.0));
}

TEST_CASE("G on the single-machine model") {
  const ModelBundle mb = restrict_parameters(build("smib"), {"pm", "t_clear"});
  const Scenario sc = mb.scenario();
  const Vector p = mb.space.nominal;
  const GEvaluation ev = evaluate_G(sc, p, {true});
  REQUIRE(ev.recovered);
  CHECK(ev.G > 0.0);
  CHECK(ev.t_hat > 0.0);
  CHECK(ev.t_hat < sc.recovery.horizon);
  REQUIRE(ev.DG);

  // Gradient against central differences of G itself.
  for (Eigen::Index j = 0; j < 2; ++j) {
    const double h = 1e-6;
    Vector lo = p, hi = p;
    lo[j] -= h;
    hi[j] += h;
    const double fd = (evaluate_G(sc, hi).G - evaluate_G(sc, lo).G) / (2 * h);
    CHECK((*ev.DG)[j] == doctest::Approx(fd).epsilon(1e-3));
  }

  // Past the critical clearing time the machine slips a pole.
  const GEvaluation late = evaluate_G(sc, Vector{{0.8, 0.6}});
  CHECK_FALSE(late.recovered);
  CHECK(late.status == RecoveryStatus::Escaped);
}

TEST_CASE("batch evaluation keeps order and records failures") {
  const ModelBundle mb = restrict_parameters(build("smib"), {"t_clear"});
  const std::vector<Vector> pts{Vector::Constant(1, 0.1), Vector::Constant(1, -1.0),
                                Vector::Constant(1, 0.2)};
  const auto evs = evaluate_many(mb.scenario(), pts, {}, 2);
  REQUIRE(evs.size() == 3);
  CHECK(evs[0].p[0] == 0.1);
  CHECK(evs[1].error.has_value());
  CHECK(evs[2].p[0] == 0.2);
  CHECK(evs[0].G > evs[2].G);
}
