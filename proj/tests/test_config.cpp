#include "doctest.h"
#include "eqmv/config.hpp"

using namespace eqmv;
using nlohmann::json;

namespace {

json benchmark_json() {
  return json::parse(R"({
    "seed": 12345,
    "market": {
      "horizon": 1.0,
      "steps": 500,
      "rate": [[0.0, 0.0]],
      "theta": [[0.0, [1.0]]]
    },
    "objective": {"mu1": 1.0, "mu2": 0.0, "x0": 1.0},
    "cone": {"kind": "orthant", "dim": 1},
    "numerics": {
      "simulation": {"n_paths": 100000, "n_steps": 500},
      "bsde": {"n_paths": 10000, "n_steps": 50, "basis_degree": 3},
      "spike": {"n_outer": 200, "n_inner": 2000}
    }
  })");
}

}  // namespace

TEST_CASE("benchmark config parses and resolves") {
  const RunConfig cfg = parse_config(benchmark_json());
  CHECK(cfg.seed == 12345);
  CHECK_FALSE(cfg.is_random());

  const DeterministicCoefficients coeffs = build_deterministic_coefficients(cfg);
  CHECK(coeffs.grid.n_steps() == 500);
  CHECK(coeffs.rate.cwiseAbs().maxCoeff() == 0.0);
  CHECK(coeffs.theta(0, 250) == 1.0);

  const ConeSpec cone = build_cone(cfg.cone);
  CHECK(cone.kind() == ConeKind::NonnegativeOrthant);

  const SimulationConfig sim = build_simulation_config(cfg);
  CHECK(sim.n_paths == 100000);
  CHECK(sim.seed == 12345);
}

TEST_CASE("config echo round-trips") {
  const RunConfig cfg = parse_config(benchmark_json());
  const json echoed = to_json(cfg);
  const RunConfig reparsed = parse_config(echoed);
  CHECK(to_json(reparsed) == echoed);
  CHECK(to_json(reparsed).dump(2) == echoed.dump(2));
}

TEST_CASE("unknown and missing keys are named") {
  json j = benchmark_json();
  j["market"]["stepz"] = 5;
  CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("stepz"),
                       std::invalid_argument);

  json missing = benchmark_json();
  missing["objective"].erase("x0");
  CHECK_THROWS_WITH_AS(parse_config(missing), doctest::Contains("x0"),
                       std::invalid_argument);
}

TEST_CASE("structural validation") {
  // Both theta and factor present.
  json both = benchmark_json();
  both["market"]["factor"] = {{"kappa", 1.0}, {"mean", 0.0}, {"vol", 0.2}, {"y0", 0.0},
                              {"theta_base", {1.0}}, {"beta", {0.5}}};
  CHECK_THROWS_AS(parse_config(both), std::invalid_argument);

  // Cone dimension disagrees with theta.
  json mismatch = benchmark_json();
  mismatch["cone"]["dim"] = 2;
  CHECK_THROWS_WITH_AS(parse_config(mismatch), doctest::Contains("dimension"),
                       std::invalid_argument);

  // Breakpoints must start at zero and increase.
  json bad_rate = benchmark_json();
  bad_rate["market"]["rate"] = {{0.5, 0.01}};
  CHECK_THROWS_AS(parse_config(bad_rate), std::invalid_argument);

  json bad_scheme = benchmark_json();
  bad_scheme["numerics"]["simulation"]["scheme"] = "milstein";
  CHECK_THROWS_AS(parse_config(bad_scheme), std::invalid_argument);
}

TEST_CASE("factor config builds the model") {
  json j = benchmark_json();
  j["market"].erase("theta");
  j["market"]["factor"] = {{"kappa", 1.0}, {"mean", 0.0}, {"vol", 0.2}, {"y0", 0.0},
                           {"bm_index", 0}, {"theta_base", {1.0}}, {"beta", {0.5}}};
  const RunConfig cfg = parse_config(j);
  CHECK(cfg.is_random());
  const FactorThetaModel model = build_factor_model(cfg);
  CHECK(model.kappa == 1.0);
  CHECK(model.vol == 0.2);
  CHECK(model.theta_at(0.0)[0] == 1.0);
  CHECK_THROWS_AS(build_deterministic_coefficients(cfg), std::invalid_argument);
}

TEST_CASE("breakpoint schedules resolve by last-at-or-before lookup") {
  json j = benchmark_json();
  j["market"]["steps"] = 10;
  j["market"]["rate"] = {{0.0, 0.01}, {0.5, 0.03}};
  j["market"]["theta"] = {{0.0, {1.0}}, {0.7, {-1.0}}};
  j["numerics"]["simulation"]["n_steps"] = 10;
  const RunConfig cfg = parse_config(j);
  const DeterministicCoefficients coeffs = build_deterministic_coefficients(cfg);
  CHECK(coeffs.rate[0] == 0.01);
  CHECK(coeffs.rate[4] == 0.01);
  CHECK(coeffs.rate[5] == 0.03);
  CHECK(coeffs.theta(0, 6) == 1.0);
  CHECK(coeffs.theta(0, 7) == -1.0);
  CHECK(coeffs.theta(0, 10) == -1.0);
}
