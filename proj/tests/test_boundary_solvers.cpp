#include <doctest.h>

#include "rbound/boundary_solvers.hpp"

#include <cmath>

using namespace rbound;

namespace {

// G = 1 - |p|^2, recovered inside the unit disc.
GOracle disc() {
  return synthetic_oracle([](const Vector& p) { return 1.0 - p.squaredNorm(); },
                          [](const Vector& p) { RowVector g = -2.0 * p.transpose(); return g; },
                          [](const Vector& p) { return p.squaredNorm() < 1.0; });
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("tangent is a unit vector orthogonal to the gradient") {
  const RowVector dg{{3.0, -4.0}};
  const Vector eta = boundary_tangent(dg);
  CHECK(eta.norm() == doctest::Approx(1.0));
  CHECK(std::abs(dg * eta) < 1e-15);
  CHECK(eta[0] == doctest::Approx(-0.8));
  CHECK(eta[1] == doctest::Approx(-0.6));
}

TEST_CASE("1-D Newton on a line converges in one step") {
  const GOracle lin = synthetic_oracle([](const Vector& p) { return 2.0 - p[0]; },
                                       [](const Vector&) { return RowVector::Constant(1, -1.0); },
                                       [](const Vector& p) { return p[0] < 2.0; });
  // The exact root is not recovered, so the first full step gets halved.
  const Solver1DResult r = find_boundary_1d(lin, 0.0);
  CHECK(r.converged);
  CHECK(std::abs(r.G_star) <= 1e-5);
  for (const auto& it : r.history) {
    if (it.mu > 0.0 && it.recovered) CHECK(it.p < 2.0);
  }
}

TEST_CASE("1-D Newton on the disc accepts only recovered iterates") {
  const Solver1DResult r = find_boundary_1d(
      synthetic_oracle([](const Vector& p) { return 1.0 - p[0] * p[0]; },
                       [](const Vector& p) { return RowVector::Constant(1, -2.0 * p[0]); },
                       [](const Vector& p) { return std::abs(p[0]) < 1.0; }),
      0.3);
  CHECK(r.converged);
  CHECK(r.p_star == doctest::Approx(1.0).epsilon(1e-5));
  double last = kInf;
  for (const auto& it : r.history) {
    if (!it.recovered) continue;
    CHECK(std::abs(it.G) < last);
    last = std::abs(it.G);
  }
}

TEST_CASE("1-D solver error paths") {
  const GOracle flat = synthetic_oracle([](const Vector&) { return 1.0; },
                                        [](const Vector&) { return RowVector::Zero(1); },
                                        [](const Vector&) { return true; });
  CHECK(code_of([&] { (void)find_boundary_1d(flat, 0.0); }) == ErrorCode::ZeroGradient);
  CHECK(code_of([&] { (void)find_boundary_1d(disc(), 2.0); }) == ErrorCode::StartNotRecovered);
}

TEST_CASE("circle trace stays on the circle and on its hyperplanes") {
  TraceConfig cfg;
  cfg.epsilon = 1e-10;
  const BoundaryTrace t = trace_boundary_2d(disc(), Vector{{1.0, 0.0}}, 0.1, 40, 1, cfg);
  REQUIRE(t.points.size() == 40);
  for (std::size_t s = 1; s < t.points.size(); ++s) {
    const TracePoint& pt = t.points[s];
    CHECK(std::abs(pt.p.norm() - 1.0) < 1e-8);
    CHECK(pt.hyperplane_residual <= 1e-10);
    CHECK(std::abs((pt.p - t.points[s - 1].p).dot(pt.eta) - pt.kappa) <= 1e-10);
  }
  // Tangent orientation is continuous: all points advance the same way.
  for (std::size_t s = 2; s < t.points.size(); ++s) CHECK(t.points[s].eta.dot(t.points[s - 1].eta) > 0.0);
}

TEST_CASE("trace refuses a vanishing gradient") {
  // G = p0 p1 has a saddle on the boundary at the origin.
  const GOracle saddle = synthetic_oracle([](const Vector& p) { return p[0] * p[1]; },
                                          [](const Vector& p) { return RowVector{{p[1], p[0]}}; },
                                          [](const Vector&) { return true; });
  CHECK(code_of([&] { (void)trace_boundary_2d(saddle, Vector{{0.0, 0.0}}, 0.1, 5, 1); }) ==
        ErrorCode::TangentUndefined);
  CHECK(code_of([&] { (void)trace_boundary_2d(disc(), Vector{{0.0, 0.0}}, 0.1, 5, 1); }) ==
        ErrorCode::InvalidArgument);
}

TEST_CASE("margin to a half-space has the closed form") {
  // G = 1 - a.p; distance from the origin is 1 / |a|.
  const Vector a{{1.0, 2.0, -2.0}};
  const GOracle plane = synthetic_oracle([a](const Vector& p) { return 1.0 - a.dot(p); },
                                         [a](const Vector&) { RowVector g = -a.transpose(); return g; },
                                         [a](const Vector& p) { return a.dot(p) < 1.0; });
  // The result lands anywhere in the |G| <= epsilon band, so tighten it.
  MarginConfig cfg;
  cfg.epsilon = 1e-10;
  const MarginResult r = safety_margin_nd(plane, Vector::Zero(3), std::nullopt, cfg);
  CHECK(r.converged);
  CHECK(r.distance == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
  CHECK(r.margin == doctest::Approx(0.5 / 9.0).epsilon(1e-6));
  CHECK(r.collinearity_angle < 1e-6);

  // Weighted norm: minimize 1/2 p^T A p with a.p = 1, distance^2 = 1 / (a^T A^-1 a).
  Matrix A = Matrix::Identity(3, 3);
  A(0, 0) = 4.0;
  A(2, 2) = 0.25;
  const MarginResult w = safety_margin_nd(plane, Vector::Zero(3), A, cfg);
  const double expect = 1.0 / std::sqrt(a.dot(A.inverse() * a));
  CHECK(w.distance == doctest::Approx(expect).epsilon(1e-6));
  CHECK(w.collinearity_angle < 1e-6);
}

TEST_CASE("KKT helpers") {
  const Matrix A = Matrix::Identity(2, 2);
  const auto [lambda, res] = kkt_residual(A, Vector{{0.0, 1.0}}, Vector::Zero(2), RowVector{{0.0, -2.0}});
  CHECK(lambda == doctest::Approx(0.5));
  CHECK(res == doctest::Approx(0.0));
  CHECK(line_angle(Vector{{1.0, 0.0}}, Vector{{-2.0, 0.0}}) == doctest::Approx(0.0));
  CHECK(line_angle(Vector{{1.0, 0.0}}, Vector{{0.0, 3.0}}) == doctest::Approx(M_PI / 2));
  CHECK(code_of([&] { (void)safety_margin_nd(disc(), Vector{{3.0, 0.0}}); }) ==
        ErrorCode::StartNotRecovered);
}
