#include <doctest.h>

#include "rbound/cli.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace rbound;
namespace fs = std::filesystem;

namespace {

std::string write_config(const std::string& name, const std::string& text) {
  const fs::path p = fs::path("cli_configs") / name;
  fs::create_directories(p.parent_path());
  std::ofstream(p) << text;
  return p.string();
}

int run(const std::string& command, const std::string& config, const std::string& out) {
  std::ostringstream log;
  fs::remove_all(out);
  return run_command({command, config, out, 1}, log);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config round trip") {
  const Json j = Json::parse(R"({
    "model": "three_machine",
    "overrides": {"gamma": 1.25, "sigma": 0.95},
    "parameters": ["sigma", "gamma"],
    "mask": ["delta_1", "omega_1"],
    "recovery": {"horizon": 12.5, "include_disturbance": false},
    "integration": {"rel_tol": 1e-9, "max_events": 500},
    "sweep": {"parameter": "sigma", "lower": 0.9, "upper": 1.2, "n": 7},
    "boundary1d": {"parameter": "sigma", "start": 1.0},
    "trace2d": {"parameters": ["sigma", "alpha_q"], "kappa": 0.1, "lower": [0.5, 0.0]},
    "margin": {"sets": ["S1"], "custom_sets": {"mine": ["sigma"]}, "weights": {"mine": [[2.0]]}},
    "output": "somewhere"
  })");
  const ScenarioConfig cfg = parse_config(j);
  CHECK(config_to_json(cfg) == j);
  CHECK(parse_config(config_to_json(cfg)) == cfg);
  CHECK(cfg.recovery->horizon == 12.5);
  CHECK(cfg.margin->weights->at("mine")[0][0] == 2.0);
}

TEST_CASE("config hash ignores the output directory only") {
  ScenarioConfig a = parse_config(Json::parse(R"({"model": "smib", "output": "x"})"));
  ScenarioConfig b = parse_config(Json::parse(R"({"model": "smib", "output": "y"})"));
  ScenarioConfig c = parse_config(Json::parse(R"({"model": "smib", "overrides": {"pm": 0.7}})"));
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a) != config_hash(c));
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS((void)parse_config(Json::parse(R"({"model": "smib", "typo": 1})")), ConfigError);
  CHECK_THROWS_AS((void)parse_config(Json::parse(R"({"model": "smib", "recovery": {"horizn": 1}})")),
                  ConfigError);
  CHECK_THROWS_AS((void)parse_config(Json::parse(R"({"model": 3})")), ConfigError);
  CHECK_THROWS_AS((void)parse_config(Json::parse(R"({"overrides": {}})")), ConfigError);
  CHECK_THROWS_AS((void)parse_config(Json::parse(R"({"model": "smib", "sweep": {"n": 2.5}})")),
                  ConfigError);
  CHECK_THROWS_AS((void)prepare_model(parse_config(Json::parse(R"({"model": "nope"})"))), ConfigError);
  CHECK_THROWS_AS(
      (void)prepare_model(parse_config(Json::parse(R"({"model": "smib", "parameters": ["zz"]})"))),
      ConfigError);
  CHECK_THROWS_AS(
      (void)prepare_model(parse_config(Json::parse(R"({"model": "smib", "mask": ["theta"]})"))),
      ConfigError);
}

TEST_CASE("simulate writes its artifacts") {
  const auto cfg = write_config("nominal.json", R"({"model": "smib"})");
  REQUIRE(run("simulate", cfg, "out_nominal") == kExitOk);
  for (const char* f : {"trajectory.csv", "trajectory.json", "sensitivities.csv", "recovery.json",
                        "h_series.csv"}) {
    CHECK(fs::exists(fs::path("out_nominal") / f));
  }
  const Json rec = Json::parse(slurp("out_nominal/recovery.json"));
  CHECK(rec["recovered"] == true);
  CHECK(rec["provenance"]["config_hash"].get<std::string>().size() == 16);

  const auto late = write_config("late.json", R"({"model": "smib", "overrides": {"t_clear": 0.8}})");
  REQUIRE(run("simulate", late, "out_late") == kExitOk);
  CHECK(Json::parse(slurp("out_late/recovery.json"))["recovered"] == false);
}

TEST_CASE("exit codes") {
  const auto zero = write_config("zero.json", R"({"model": "smib", "recovery": {"horizon": 0}})");
  CHECK(run("simulate", zero, "out_zero") == kExitConfig);
  CHECK(run("simulate", "cli_configs/missing.json", "out_missing") == kExitConfig);
  const auto junk = write_config("junk.json", "{ not json");
  CHECK(run("validate", junk, "out_junk") == kExitConfig);

  const auto outside = write_config(
      "outside.json", R"({"model": "smib", "boundary1d": {"parameter": "t_clear", "start": 0.6}})");
  CHECK(run("boundary1d", outside, "out_outside") == kExitNumerical);
  const Json err = Json::parse(slurp("out_outside/error.json"));
  CHECK(err["error"] == "StartNotRecovered");

  const auto nosweep = write_config("nosweep.json", R"({"model": "smib"})");
  CHECK(run("gsweep", nosweep, "out_nosweep") == kExitConfig);
}

TEST_CASE("sweep rows are sorted and failures become rows") {
  const auto cfg = write_config(
      "sweep.json",
      R"({"model": "smib", "sweep": {"parameter": "t_clear", "lower": -0.1, "upper": 0.5, "n": 4}})");
  REQUIRE(run("gsweep", cfg, "out_sweep") == kExitOk);
  std::istringstream in(slurp("out_sweep/gsweep.csv"));
  std::string line;
  std::getline(in, line);
  CHECK(line.rfind("# rbound", 0) == 0);
  std::getline(in, line);
  CHECK(line == "t_clear,G,recovered,status,t_hat,error");
  std::vector<std::string> rows;
  while (std::getline(in, line)) rows.push_back(line);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].find(",error,") != std::string::npos);
  CHECK(rows[1].find(",1,recovered,") != std::string::npos);
  CHECK(rows[3].find(",0,") != std::string::npos);
}

TEST_CASE("sweep of a parameter the model ignores gives a constant G column") {
  // Without a fault phase, t_clear never enters the dynamics.
  const auto cfg = write_config(
      "ignored.json",
      R"({"model": "smib", "overrides": {"t_clear": 0.0},
          "sweep": {"parameter": "t_clear", "lower": 0.1, "upper": 0.3, "n": 3}})");
  REQUIRE(run("gsweep", cfg, "out_ignored") == kExitOk);
  std::istringstream in(slurp("out_ignored/gsweep.csv"));
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  std::set<std::string> g;
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    const auto c0 = line.find(',');
    g.insert(line.substr(c0 + 1, line.find(',', c0 + 1) - c0 - 1));
  }
  CHECK(rows == 3);
  CHECK(g.size() == 1);
}

TEST_CASE("validate reports model metadata") {
  const auto cfg = write_config("val.json", R"({"model": "three_machine"})");
  REQUIRE(run("validate", cfg, "out_val") == kExitOk);
  const Json v = Json::parse(slurp("out_val/validation.json"));
  CHECK(v["report"]["ok"] == true);
  CHECK(v["model"]["parameters"].size() == 17);
}
