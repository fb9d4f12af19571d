#include <doctest.h>

#include "rbound/serialization.hpp"
#include "toy_systems.hpp"

#include <cmath>

using namespace rbound;

TEST_CASE("FNV-1a reference values") {
  CHECK(hex64(fnv1a64("")) == "cbf29ce484222325");
  CHECK(hex64(fnv1a64("a")) == "af63dc4c8601ec8c");
  CHECK(hex64(fnv1a64("foobar")) == "85944171f73967e8");
}

TEST_CASE("float formatting") {
  CHECK(format_double(0.1) == "1.000000000000e-01");
  CHECK(format_double(-0.0) == "0.000000000000e+00");
  CHECK(format_double(std::nan("")) == "nan");
  CHECK(format_double(-kInf) == "-inf");
  CHECK(json_number(1.0 / 3.0).get<double>() == 0.3333333333333);
  CHECK(json_number(kInf).is_null());
  CHECK(json_number(2.5).dump() == "2.5");
}

TEST_CASE("CSV tables carry provenance and a header") {
  CsvTable t({"a", "b"});
  t.row().cell(1.0).cell(std::string("x"));
  t.row().cell(true).cell(3);
  CHECK(t.str({"abc", "9.9"}) ==
        "# rbound 9.9 config abc\na,b\n1.000000000000e+00,x\n1,3\n");
}

TEST_CASE("trajectory exports") {
  const HybridSystem sys = toy::ramp_then_decay();
  const auto traj = integrate(sys, toy::ramp_schedule(), Vector::Constant(1, 0.2), toy::tight(0.5));
  const std::string csv = trajectory_csv(traj, sys, {"h"});
  CHECK(csv.rfind("# rbound", 0) == 0);
  CHECK(csv.find("\nt,x\n") != std::string::npos);

  const Json j = to_json(traj, sys);
  CHECK(j["events"].size() == 1);
  CHECK(j["events"][0]["kind"] == "phase");
  CHECK(j["t"].size() == traj.times.size());

  const auto st = propagate_first_order(sys, toy::ramp_schedule(), Vector::Constant(1, 0.2),
                                        toy::tight(0.5));
  const std::string s = sensitivity_csv(st, sys, {"tau"}, {"h"});
  CHECK(s.find("\nt,dx/dtau\n") != std::string::npos);
}

TEST_CASE("solver results serialize their histories") {
  Solver1DResult r;
  r.p_star = 0.5;
  r.history.push_back({0.1, 0.2, -1.0, true, 0.0});
  r.history.push_back({0.5, 0.0, -1.0, true, 1.0});
  const Json j = with_provenance(to_json(r), {"h"});
  CHECK(j["history"].size() == 2);
  CHECK(j["provenance"]["config_hash"] == "h");
  CHECK(j["provenance"]["version"] == kToolVersion);
}

TEST_CASE("output is repeatable") {
  const HybridSystem sys = toy::decay();
  const auto a = integrate(sys, {}, Vector::Constant(1, 0.7), toy::tight(1.0));
  const auto b = integrate(sys, {}, Vector::Constant(1, 0.7), toy::tight(1.0));
  CHECK(dump(to_json(a, sys)) == dump(to_json(b, sys)));
  CHECK(trajectory_csv(a, sys, {"h"}) == trajectory_csv(b, sys, {"h"}));
}
