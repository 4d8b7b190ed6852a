#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "eqmv/bsde.hpp"
#include "eqmv/cone.hpp"
#include "eqmv/market.hpp"
#include "eqmv/montecarlo.hpp"

#include "json.hpp"

namespace eqmv {

struct RateBreakpoint {
  double time = 0.0;
  double value = 0.0;
};

struct ThetaBreakpoint {
  double time = 0.0;
  Eigen::VectorXd value;
};

struct FactorSection {
  double kappa = 0.0;
  double mean = 0.0;
  double vol = 0.0;
  double y0 = 0.0;
  int bm_index = 0;
  Eigen::VectorXd theta_base;
  Eigen::VectorXd beta;
};

struct MarketSection {
  double horizon = 1.0;
  int steps = 500;
  std::vector<RateBreakpoint> rate;
  std::optional<std::vector<ThetaBreakpoint>> theta;  // deterministic premium
  std::optional<FactorSection> factor;                // factor-driven premium
  double rate_max = 1.0;
  double theta_max = 10.0;
};

struct ObjectiveSection {
  double mu1 = 1.0;
  double mu2 = 0.0;
  double x0 = 1.0;
};

struct ConeSection {
  std::string kind;  // full | orthant | ray | generated
  int dim = 0;       // full/orthant
  Eigen::VectorXd direction;
  std::vector<Eigen::VectorXd> generators;
};

struct SimulationSection {
  int n_paths = 100000;
  int n_steps = 500;
  std::string scheme = "log-euler";
  bool antithetic = false;
};

struct BsdeSection {
  int n_paths = 10000;
  int n_steps = 50;
  int basis_degree = 3;
  double floor_c = 0.0;  // 0 -> positivity floor default
};

struct SpikeSection {
  int n_outer = 200;
  int n_inner = 2000;
};

struct NumericsSection {
  SimulationSection simulation;
  BsdeSection bsde;
  SpikeSection spike;
};

struct RunConfig {
  std::uint64_t seed = 0;
  int threads = 1;
  std::string output_dir = "out";
  MarketSection market;
  ObjectiveSection objective;
  ConeSection cone;
  NumericsSection numerics;

  bool is_random() const { return market.factor.has_value(); }
};

/// Strict parse: unknown keys and missing required keys are errors naming
/// the offending key.
RunConfig parse_config(const nlohmann::json& j);
RunConfig parse_config_file(const std::filesystem::path& path);

/// Canonical echo with every default made explicit; re-parses to the same
/// configuration.
nlohmann::json to_json(const RunConfig& config);

TimeGrid build_grid(const MarketSection& market);
DeterministicCoefficients build_deterministic_coefficients(const RunConfig& config);
FactorThetaModel build_factor_model(const RunConfig& config);
ConeSpec build_cone(const ConeSection& section);
Objective build_objective(const ObjectiveSection& section);
SimulationConfig build_simulation_config(const RunConfig& config);
BsdeConfig build_bsde_config(const RunConfig& config);
SpikeConfig build_spike_config(const RunConfig& config);

}  // namespace eqmv
