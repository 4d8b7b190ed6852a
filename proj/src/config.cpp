#include "eqmv/config.hpp"

#include <fstream>
#include <set>

namespace eqmv {

namespace {

using nlohmann::json;

[[noreturn]] void missing(const std::string& where, const std::string& key) {
  throw std::invalid_argument("config: missing key '" + key + "' in " + where);
}

void reject_unknown(const json& j, const std::string& where,
                    const std::set<std::string>& allowed) {
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key))
      throw std::invalid_argument("config: unknown key '" + key + "' in " + where);
  }
}

const json& require(const json& j, const std::string& where, const std::string& key) {
  const auto it = j.find(key);
  if (it == j.end()) missing(where, key);
  return *it;
}

Eigen::VectorXd parse_vector(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty())
    throw std::invalid_argument("config: " + where + " must be a nonempty array");
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number())
      throw std::invalid_argument("config: " + where + " must hold numbers");
    v[i] = j[i].get<double>();
  }
  return v;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

MarketSection parse_market(const json& j) {
  reject_unknown(j, "market",
                 {"horizon", "steps", "rate", "theta", "factor", "rate_max", "theta_max"});
  MarketSection m;
  m.horizon = require(j, "market", "horizon").get<double>();
  m.steps = require(j, "market", "steps").get<int>();
  const json& rate = require(j, "market", "rate");
  if (!rate.is_array() || rate.empty())
    throw std::invalid_argument("config: market.rate must be a nonempty breakpoint array");
  for (const auto& bp : rate) {
    if (!bp.is_array() || bp.size() != 2)
      throw std::invalid_argument("config: rate breakpoints are [time, value] pairs");
    m.rate.push_back({bp[0].get<double>(), bp[1].get<double>()});
  }
  if (m.rate.front().time != 0.0)
    throw std::invalid_argument("config: first rate breakpoint must be at time 0");
  for (std::size_t i = 1; i < m.rate.size(); ++i)
    if (m.rate[i].time <= m.rate[i - 1].time)
      throw std::invalid_argument("config: rate breakpoint times must be increasing");
  if (j.contains("rate_max")) m.rate_max = j["rate_max"].get<double>();
  if (j.contains("theta_max")) m.theta_max = j["theta_max"].get<double>();

  const bool has_theta = j.contains("theta");
  const bool has_factor = j.contains("factor");
  if (has_theta == has_factor)
    throw std::invalid_argument(
        "config: market needs exactly one of 'theta' (deterministic) or 'factor'");
  if (has_theta) {
    std::vector<ThetaBreakpoint> breaks;
    const json& theta = j["theta"];
    if (!theta.is_array() || theta.empty())
      throw std::invalid_argument("config: market.theta must be a nonempty breakpoint array");
    for (const auto& bp : theta) {
      if (!bp.is_array() || bp.size() != 2)
        throw std::invalid_argument("config: theta breakpoints are [time, vector] pairs");
      breaks.push_back({bp[0].get<double>(), parse_vector(bp[1], "market.theta value")});
    }
    if (breaks.front().time != 0.0)
      throw std::invalid_argument("config: first theta breakpoint must be at time 0");
    for (std::size_t i = 1; i < breaks.size(); ++i)
      if (breaks[i].time <= breaks[i - 1].time)
        throw std::invalid_argument("config: theta breakpoint times must be increasing");
    m.theta = std::move(breaks);
  } else {
    const json& f = j["factor"];
    reject_unknown(f, "market.factor",
                   {"kappa", "mean", "vol", "y0", "bm_index", "theta_base", "beta"});
    FactorSection fs;
    fs.kappa = require(f, "market.factor", "kappa").get<double>();
    fs.mean = require(f, "market.factor", "mean").get<double>();
    fs.vol = require(f, "market.factor", "vol").get<double>();
    fs.y0 = require(f, "market.factor", "y0").get<double>();
    if (f.contains("bm_index")) fs.bm_index = f["bm_index"].get<int>();
    fs.theta_base = parse_vector(require(f, "market.factor", "theta_base"),
                                 "market.factor.theta_base");
    fs.beta = parse_vector(require(f, "market.factor", "beta"), "market.factor.beta");
    m.factor = std::move(fs);
  }
  return m;
}

ConeSection parse_cone(const json& j) {
  reject_unknown(j, "cone", {"kind", "dim", "direction", "generators"});
  ConeSection c;
  c.kind = require(j, "cone", "kind").get<std::string>();
  if (c.kind == "full" || c.kind == "orthant") {
    c.dim = require(j, "cone", "dim").get<int>();
  } else if (c.kind == "ray") {
    c.direction = parse_vector(require(j, "cone", "direction"), "cone.direction");
    c.dim = static_cast<int>(c.direction.size());
  } else if (c.kind == "generated") {
    const json& gens = require(j, "cone", "generators");
    if (!gens.is_array() || gens.empty())
      throw std::invalid_argument("config: cone.generators must be a nonempty array");
    for (const auto& g : gens)
      c.generators.push_back(parse_vector(g, "cone.generators entry"));
    c.dim = static_cast<int>(c.generators.front().size());
    for (const auto& g : c.generators)
      if (g.size() != c.dim)
        throw std::invalid_argument("config: cone.generators must share one dimension");
  } else {
    throw std::invalid_argument("config: cone.kind must be one of full|orthant|ray|generated");
  }
  return c;
}

}  // namespace

RunConfig parse_config(const json& j) {
  reject_unknown(j, "top level",
                 {"seed", "threads", "output_dir", "market", "objective", "cone", "numerics"});
  RunConfig cfg;
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("threads")) cfg.threads = j["threads"].get<int>();
  if (j.contains("output_dir")) cfg.output_dir = j["output_dir"].get<std::string>();

  cfg.market = parse_market(require(j, "top level", "market"));

  const json& obj = require(j, "top level", "objective");
  reject_unknown(obj, "objective", {"mu1", "mu2", "x0"});
  cfg.objective.mu1 = require(obj, "objective", "mu1").get<double>();
  if (obj.contains("mu2")) cfg.objective.mu2 = obj["mu2"].get<double>();
  cfg.objective.x0 = require(obj, "objective", "x0").get<double>();

  cfg.cone = parse_cone(require(j, "top level", "cone"));

  if (j.contains("numerics")) {
    const json& num = j["numerics"];
    reject_unknown(num, "numerics", {"simulation", "bsde", "spike"});
    if (num.contains("simulation")) {
      const json& s = num["simulation"];
      reject_unknown(s, "numerics.simulation",
                     {"n_paths", "n_steps", "scheme", "antithetic"});
      if (s.contains("n_paths")) cfg.numerics.simulation.n_paths = s["n_paths"].get<int>();
      if (s.contains("n_steps")) cfg.numerics.simulation.n_steps = s["n_steps"].get<int>();
      if (s.contains("scheme")) {
        cfg.numerics.simulation.scheme = s["scheme"].get<std::string>();
        if (cfg.numerics.simulation.scheme != "log-euler" &&
            cfg.numerics.simulation.scheme != "euler")
          throw std::invalid_argument("config: scheme must be log-euler or euler");
      }
      if (s.contains("antithetic"))
        cfg.numerics.simulation.antithetic = s["antithetic"].get<bool>();
    }
    if (num.contains("bsde")) {
      const json& b = num["bsde"];
      reject_unknown(b, "numerics.bsde", {"n_paths", "n_steps", "basis_degree", "floor_c"});
      if (b.contains("n_paths")) cfg.numerics.bsde.n_paths = b["n_paths"].get<int>();
      if (b.contains("n_steps")) cfg.numerics.bsde.n_steps = b["n_steps"].get<int>();
      if (b.contains("basis_degree"))
        cfg.numerics.bsde.basis_degree = b["basis_degree"].get<int>();
      if (b.contains("floor_c")) cfg.numerics.bsde.floor_c = b["floor_c"].get<double>();
    }
    if (num.contains("spike")) {
      const json& s = num["spike"];
      reject_unknown(s, "numerics.spike", {"n_outer", "n_inner"});
      if (s.contains("n_outer")) cfg.numerics.spike.n_outer = s["n_outer"].get<int>();
      if (s.contains("n_inner")) cfg.numerics.spike.n_inner = s["n_inner"].get<int>();
    }
  }

  // Cross-section consistency.
  const int theta_dim = cfg.market.theta
                            ? static_cast<int>(cfg.market.theta->front().value.size())
                            : static_cast<int>(cfg.market.factor->theta_base.size());
  if (cfg.market.theta)
    for (const auto& bp : *cfg.market.theta)
      if (bp.value.size() != theta_dim)
        throw std::invalid_argument("config: theta breakpoints must share one dimension");
  if (cfg.cone.dim != theta_dim)
    throw std::invalid_argument("config: cone dimension " + std::to_string(cfg.cone.dim) +
                                " does not match theta dimension " +
                                std::to_string(theta_dim));
  return cfg;
}

RunConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config: invalid JSON in " + path.string() + ": " +
                                e.what());
  }
  return parse_config(j);
}

json to_json(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  j["output_dir"] = cfg.output_dir;

  json market;
  market["horizon"] = cfg.market.horizon;
  market["steps"] = cfg.market.steps;
  market["rate_max"] = cfg.market.rate_max;
  market["theta_max"] = cfg.market.theta_max;
  json rate = json::array();
  for (const auto& bp : cfg.market.rate) rate.push_back({bp.time, bp.value});
  market["rate"] = rate;
  if (cfg.market.theta) {
    json theta = json::array();
    for (const auto& bp : *cfg.market.theta)
      theta.push_back({bp.time, vector_to_json(bp.value)});
    market["theta"] = theta;
  } else {
    const FactorSection& f = *cfg.market.factor;
    market["factor"] = {{"kappa", f.kappa},   {"mean", f.mean},
                        {"vol", f.vol},       {"y0", f.y0},
                        {"bm_index", f.bm_index}, {"theta_base", vector_to_json(f.theta_base)},
                        {"beta", vector_to_json(f.beta)}};
  }
  j["market"] = market;

  j["objective"] = {{"mu1", cfg.objective.mu1}, {"mu2", cfg.objective.mu2},
                    {"x0", cfg.objective.x0}};

  json cone;
  cone["kind"] = cfg.cone.kind;
  if (cfg.cone.kind == "full" || cfg.cone.kind == "orthant") {
    cone["dim"] = cfg.cone.dim;
  } else if (cfg.cone.kind == "ray") {
    cone["direction"] = vector_to_json(cfg.cone.direction);
  } else {
    json gens = json::array();
    for (const auto& g : cfg.cone.generators) gens.push_back(vector_to_json(g));
    cone["generators"] = gens;
  }
  j["cone"] = cone;

  j["numerics"] = {
      {"simulation",
       {{"n_paths", cfg.numerics.simulation.n_paths},
        {"n_steps", cfg.numerics.simulation.n_steps},
        {"scheme", cfg.numerics.simulation.scheme},
        {"antithetic", cfg.numerics.simulation.antithetic}}},
      {"bsde",
       {{"n_paths", cfg.numerics.bsde.n_paths},
        {"n_steps", cfg.numerics.bsde.n_steps},
        {"basis_degree", cfg.numerics.bsde.basis_degree},
        {"floor_c", cfg.numerics.bsde.floor_c}}},
      {"spike",
       {{"n_outer", cfg.numerics.spike.n_outer},
        {"n_inner", cfg.numerics.spike.n_inner}}}};
  return j;
}

TimeGrid build_grid(const MarketSection& market) {
  return TimeGrid(market.horizon, market.steps);
}

namespace {

// Step-function lookup: value of the last breakpoint at or before t.
template <typename T, typename Value>
Value lookup(const std::vector<T>& breaks, double t, Value T::*field) {
  if (breaks.front().time > 0.0)
    throw std::invalid_argument("config: first breakpoint must be at time 0");
  Value v = breaks.front().*field;
  for (const auto& bp : breaks) {
    if (bp.time <= t + 1e-12) v = bp.*field;
  }
  return v;
}

Eigen::VectorXd resolve_rate(const MarketSection& market, const TimeGrid& grid) {
  Eigen::VectorXd rate(grid.n_nodes());
  for (int i = 0; i <= grid.n_steps(); ++i)
    rate[i] = lookup(market.rate, grid.node(i), &RateBreakpoint::value);
  return rate;
}

}  // namespace

DeterministicCoefficients build_deterministic_coefficients(const RunConfig& cfg) {
  if (!cfg.market.theta)
    throw std::invalid_argument(
        "config: this command needs a deterministic theta; use the bsde command for "
        "factor-driven premia");
  const TimeGrid grid = build_grid(cfg.market);
  const auto& breaks = *cfg.market.theta;
  Eigen::MatrixXd theta(breaks.front().value.size(), grid.n_nodes());
  for (int i = 0; i <= grid.n_steps(); ++i)
    theta.col(i) = lookup(breaks, grid.node(i), &ThetaBreakpoint::value);
  return DeterministicCoefficients(grid, resolve_rate(cfg.market, grid), theta,
                                   cfg.market.rate_max, cfg.market.theta_max);
}

FactorThetaModel build_factor_model(const RunConfig& cfg) {
  if (!cfg.market.factor)
    throw std::invalid_argument("config: market.factor section required");
  const TimeGrid grid = build_grid(cfg.market);
  const FactorSection& f = *cfg.market.factor;
  return FactorThetaModel(grid, resolve_rate(cfg.market, grid), f.kappa, f.mean, f.vol,
                          f.y0, f.bm_index, f.theta_base, f.beta, cfg.market.rate_max,
                          cfg.market.theta_max);
}

ConeSpec build_cone(const ConeSection& section) {
  if (section.kind == "full") return ConeSpec::full_space(section.dim);
  if (section.kind == "orthant") return ConeSpec::nonnegative_orthant(section.dim);
  if (section.kind == "ray") return ConeSpec::ray(section.direction);
  Eigen::MatrixXd gens(section.dim, static_cast<Eigen::Index>(section.generators.size()));
  for (std::size_t k = 0; k < section.generators.size(); ++k)
    gens.col(static_cast<Eigen::Index>(k)) = section.generators[k];
  return ConeSpec::finitely_generated(gens);
}

Objective build_objective(const ObjectiveSection& section) {
  return Objective(section.mu1, section.mu2, section.x0);
}

SimulationConfig build_simulation_config(const RunConfig& cfg) {
  SimulationConfig sim;
  sim.n_paths = cfg.numerics.simulation.n_paths;
  sim.n_steps = cfg.numerics.simulation.n_steps;
  sim.seed = cfg.seed;
  sim.scheme = cfg.numerics.simulation.scheme == "euler" ? Scheme::Euler : Scheme::LogEuler;
  sim.antithetic = cfg.numerics.simulation.antithetic;
  sim.threads = cfg.threads;
  return sim;
}

BsdeConfig build_bsde_config(const RunConfig& cfg) {
  BsdeConfig b;
  b.n_paths = cfg.numerics.bsde.n_paths;
  b.n_steps = cfg.numerics.bsde.n_steps;
  b.basis_degree = cfg.numerics.bsde.basis_degree;
  b.floor_c = cfg.numerics.bsde.floor_c;
  b.seed = cfg.seed;
  b.threads = cfg.threads;
  return b;
}

SpikeConfig build_spike_config(const RunConfig& cfg) {
  SpikeConfig s;
  s.n_outer = cfg.numerics.spike.n_outer;
  s.n_inner = cfg.numerics.spike.n_inner;
  s.seed = cfg.seed;
  s.threads = cfg.threads;
  return s;
}

}  // namespace eqmv
