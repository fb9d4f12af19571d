#include <doctest.h>

#include "rbound/sensitivities.hpp"
#include "toy_systems.hpp"

#include <cmath>

using namespace rbound;

TEST_CASE("first-order sensitivity of exponential decay") {
  const double a = 0.9;
  const auto st = propagate_first_order(toy::decay(), {}, Vector::Constant(1, a), toy::tight(2.0));
  REQUIRE(st.chi.size() == st.states.times.size());
  double worst = 0.0;
  for (std::size_t k = 0; k < st.chi.size(); ++k) {
    const double t = st.states.times[k];
    worst = std::max(worst, std::abs(st.chi[k](0, 0) + t * std::exp(-a * t)));
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("jump condition at a parameter-dependent phase boundary") {
  const double tau = 0.3;
  const auto st = propagate_first_order(toy::ramp_then_decay(), toy::ramp_schedule(),
                                        Vector::Constant(1, tau), toy::tight(1.5));
  REQUIRE(st.jumps.size() == 1);
  CHECK(st.jumps[0].tau_p[0] == doctest::Approx(1.0));
  CHECK(st.jumps[0].chi_minus(0, 0) == doctest::Approx(0.0));
  // f- - f+ = 1 - (-tau)
  CHECK(st.jumps[0].chi_plus(0, 0) == doctest::Approx(1.0 + tau).epsilon(1e-9));
  const std::size_t k = toy::sample_at(st.states.times, 1.0);
  const double t = st.states.times[k];
  CHECK(st.chi[k](0, 0) == doctest::Approx((1.0 + tau) * std::exp(-(t - tau))).epsilon(1e-7));
}

TEST_CASE("jump condition at an indicator crossing") {
  const double c = 0.43;
  const auto st = propagate_first_order(toy::switched_rate(), {}, Vector::Constant(1, c), toy::tight(1.0));
  REQUIRE(st.jumps.size() == 1);
  CHECK(st.jumps[0].tau_p[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(st.jumps[0].denominator == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(st.chi.back()(0, 0) == doctest::Approx(-1.0).epsilon(1e-8));
}

TEST_CASE("second-order sensitivities of exponential decay") {
  const double a = 0.9;
  for (auto backend : {SecondOrderBackend::FiniteDifference, SecondOrderBackend::Variational}) {
    const auto st =
        propagate_second_order(toy::decay(), {}, Vector::Constant(1, a), toy::tight(2.0), backend);
    REQUIRE(st.chi2.size() == st.states.times.size());
    const std::size_t k = toy::sample_at(st.states.times, 1.5);
    const double t = st.states.times[k];
    // The variational backend differences the Jacobians with a 1e-6 step.
    const double tol = backend == SecondOrderBackend::Variational ? 1e-6 : 1e-5;
    CHECK(std::abs(st.second(k, 0, 0)[0] - t * t * std::exp(-a * t)) < tol);
  }
}

TEST_CASE("variational second order refuses indicator events") {
  CHECK_THROWS_AS((void)propagate_second_order(toy::switched_rate(), {}, Vector::Constant(1, 0.4),
                                               toy::tight(1.0), SecondOrderBackend::Variational),
                  Error);
}

TEST_CASE("initial sensitivity from the equilibrium conditions") {
  // x' = -(x - p) has equilibrium x = p, so dx/dp = 1 before the disturbance.
  HybridSystem s;
  s.n = 1;
  s.parameter_count = 1;
  s.f = [](const Vector& x, const Vector&, const Vector& p, Mode) {
    return Vector::Constant(1, -(x[0] - p[0]));
  };
  const auto st = propagate_first_order(s, {}, Vector::Constant(1, 0.4), toy::tight(1.0));
  CHECK(st.chi_initial(0, 0) == doctest::Approx(1.0));
  CHECK(st.chi.back()(0, 0) == doctest::Approx(1.0).epsilon(1e-8));
}
