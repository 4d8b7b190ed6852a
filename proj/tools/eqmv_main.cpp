// eqmv: time-consistent mean-variance strategies under cone constraints.
//
// Commands: solve | compare | simulate | verify | bsde.
// Exit codes: 0 success, 1 verification failure, 2 suspect numerics,
// 64 usage/configuration error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "eqmv/config.hpp"
#include "eqmv/csv.hpp"
#include "eqmv/equilibrium.hpp"
#include "eqmv/montecarlo.hpp"
#include "eqmv/nnls.hpp"

namespace fs = std::filesystem;
using namespace eqmv;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerificationFailure = 1;
constexpr int kExitSuspectNumerics = 2;
constexpr int kExitUsage = 64;

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<int> threads;
};

RunConfig load_config(const GlobalOptions& opts) {
  RunConfig cfg = parse_config_file(opts.config_path);
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.out_dir) cfg.output_dir = *opts.out_dir;
  if (opts.threads) cfg.threads = *opts.threads;
  return cfg;
}

fs::path prepare_output(const RunConfig& cfg) {
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  std::ofstream echo(dir / "resolved_config.json");
  echo << to_json(cfg).dump(2) << '\n';
  return dir;
}

std::vector<std::string> real_row(const std::vector<double>& values) {
  std::vector<std::string> cells;
  cells.reserve(values.size());
  for (double v : values) cells.push_back(format_real(v));
  return cells;
}

void write_policy_csv(const fs::path& path, const DeterministicCoefficients& coeffs,
                      const EquilibriumSolution& eq, const PrecommitSolution& pre) {
  const int dim = coeffs.dim();
  CsvWriter csv(path);
  std::vector<std::string> header{"time", "M", "rho"};
  for (int j = 1; j <= dim; ++j) header.push_back("c_" + std::to_string(j));
  for (int j = 1; j <= dim; ++j) header.push_back("pre_slope_" + std::to_string(j));
  for (int j = 1; j <= dim; ++j) header.push_back("pre_intercept_" + std::to_string(j));
  csv.write_row(header);
  for (int i = 0; i < coeffs.grid.n_nodes(); ++i) {
    std::vector<double> row{coeffs.grid.node(i), eq.M[i], rho(coeffs, coeffs.grid.node(i))};
    for (int j = 0; j < dim; ++j) row.push_back(eq.policy.c(j, i));
    for (int j = 0; j < dim; ++j) row.push_back(pre.policy.c(j, i));
    for (int j = 0; j < dim; ++j) row.push_back((*pre.policy.intercept)(j, i));
    csv.write_row(real_row(row));
  }
}

LinearFeedbackPolicy read_policy_file(const fs::path& path,
                                      const DeterministicCoefficients& coeffs) {
  const CsvTable table = read_csv(path);
  const int dim = coeffs.dim();
  const std::size_t linear_cols = 1 + static_cast<std::size_t>(dim);
  const std::size_t affine_cols = 1 + 2 * static_cast<std::size_t>(dim);
  if (table.header.size() != linear_cols && table.header.size() != affine_cols)
    throw std::invalid_argument(
        "policy file: expected columns time,c_1..c_" + std::to_string(dim) +
        " (optionally intercept_1..intercept_" + std::to_string(dim) + "), found " +
        std::to_string(table.header.size()) + " columns");
  if (table.rows.size() != static_cast<std::size_t>(coeffs.grid.n_nodes()))
    throw std::invalid_argument("policy file: expected " +
                                std::to_string(coeffs.grid.n_nodes()) + " rows, found " +
                                std::to_string(table.rows.size()));
  LinearFeedbackPolicy policy;
  policy.c.resize(dim, coeffs.grid.n_nodes());
  const bool affine = table.header.size() == affine_cols;
  if (affine) policy.intercept = Eigen::MatrixXd(dim, coeffs.grid.n_nodes());
  for (int i = 0; i < coeffs.grid.n_nodes(); ++i) {
    const auto& row = table.rows[i];
    if (std::abs(row[0] - coeffs.grid.node(i)) > 1e-9 * (1.0 + coeffs.grid.horizon()))
      throw std::invalid_argument("policy file: row times must match the grid nodes");
    for (int j = 0; j < dim; ++j) policy.c(j, i) = row[1 + j];
    if (affine)
      for (int j = 0; j < dim; ++j) (*policy.intercept)(j, i) = row[1 + dim + j];
  }
  return policy;
}

int cmd_solve(const GlobalOptions& opts, const std::string& fbe_path) {
  const RunConfig cfg = load_config(opts);
  const DeterministicCoefficients coeffs = build_deterministic_coefficients(cfg);
  const ConeSpec cone = build_cone(cfg.cone);
  const Objective objective = build_objective(cfg.objective);
  const fs::path dir = prepare_output(cfg);

  const EquilibriumSolution eq = solve_equilibrium(coeffs, cone, objective);
  const PrecommitSolution pre = precommit_solution(coeffs, cone, objective);
  write_policy_csv(dir / "policy.csv", coeffs, eq, pre);

  std::optional<LinearFeedbackPolicy> fbe;
  if (!fbe_path.empty()) fbe = read_policy_file(fbe_path, coeffs);
  const StrategyComparison cmp =
      compare_strategies(coeffs, cone, objective, fbe ? &*fbe : nullptr);

  CsvWriter report(dir / "report.csv");
  report.write_row({"strategy", "mean_T", "var_T", "J0"});
  auto row = [&](const std::string& name, const PolicyEvaluation& e) {
    report.write_row({name, format_real(e.mean_T), format_real(e.var_T),
                      format_real(e.J0)});
  };
  row("equilibrium", cmp.equilibrium);
  row("precommit", cmp.precommit);
  if (cmp.user_feedback) row("user_feedback", *cmp.user_feedback);

  std::cout << "J_eq = " << format_real(cmp.equilibrium.J0)
            << "  J_pre = " << format_real(cmp.precommit.J0);
  if (cmp.user_feedback) std::cout << "  J_fbe = " << format_real(cmp.user_feedback->J0);
  std::cout << '\n';
  if (!cmp.ordering_holds) {
    for (const auto& v : cmp.violations) std::cerr << "violation: " << v << '\n';
    return kExitVerificationFailure;
  }
  return kExitOk;
}

int cmd_simulate(const GlobalOptions& opts, const std::string& policy_name,
                 const std::string& policy_file, bool dump_terminal) {
  const RunConfig cfg = load_config(opts);
  const Objective objective = build_objective(cfg.objective);
  const ConeSpec cone = build_cone(cfg.cone);
  const fs::path dir = prepare_output(cfg);
  const SimulationConfig sim = build_simulation_config(cfg);

  SimulationReport report;
  std::vector<double> terminal;
  std::vector<double>* terminal_ptr = dump_terminal ? &terminal : nullptr;

  if (cfg.is_random()) {
    if (policy_name != "equilibrium")
      throw std::invalid_argument(
          "simulate: factor-driven configs support --policy equilibrium only");
    const FactorThetaModel model = build_factor_model(cfg);
    const BsdeSolution solution =
        solve_quadratic_bsde(model, cone, objective.mu1, build_bsde_config(cfg));
    const StateFeedbackPolicy policy =
        equilibrium_policy_random(std::move(solution), model, cone, objective.mu1);
    SimulationConfig sim_rs = sim;
    sim_rs.n_steps = policy.solution().grid().n_steps();
    report = simulate_state_feedback(policy, objective, sim_rs, terminal_ptr);
  } else {
    const DeterministicCoefficients coeffs = build_deterministic_coefficients(cfg);
    if (policy_name == "equilibrium") {
      report = simulate_policy(coeffs, equilibrium_policy(coeffs, cone, objective.mu1),
                               objective, sim, terminal_ptr);
    } else if (policy_name == "precommit") {
      report = estimate_J_for_precommit(coeffs, cone, objective, sim);
    } else if (policy_name == "zero") {
      LinearFeedbackPolicy zero;
      zero.c = Eigen::MatrixXd::Zero(coeffs.dim(), coeffs.grid.n_nodes());
      report = simulate_policy(coeffs, zero, objective, sim, terminal_ptr);
    } else if (policy_name == "file") {
      if (policy_file.empty())
        throw std::invalid_argument("simulate: --policy file requires --policy-file");
      report = simulate_policy(coeffs, read_policy_file(policy_file, coeffs), objective,
                               sim, terminal_ptr);
    } else {
      throw std::invalid_argument("simulate: unknown policy '" + policy_name + "'");
    }
  }

  CsvWriter csv(dir / "sim_report.csv");
  std::vector<std::string> header{
      "policy",   "n_paths", "n_steps", "seed",          "scheme",
      "antithetic", "mean_T", "se_mean", "var_T",        "se_var",
      "J0",       "se_J",    "min_T",   "max_T",         "nonpositive_paths",
      "floor_clamps"};
  const bool analytic = report.analytic.has_value();
  if (analytic) {
    header.insert(header.end(),
                  {"analytic_mean", "analytic_var", "analytic_J", "within_3se"});
  }
  csv.write_row(header);
  std::vector<std::string> row{
      policy_name,
      std::to_string(report.n_paths),
      std::to_string(report.n_steps),
      std::to_string(report.seed),
      report.scheme == Scheme::LogEuler ? "log-euler" : "euler",
      report.antithetic ? "1" : "0",
      format_real(report.mean_T),
      format_real(report.se_mean),
      format_real(report.var_T),
      format_real(report.se_var),
      format_real(report.J0),
      format_real(report.se_J),
      format_real(report.min_T),
      format_real(report.max_T),
      std::to_string(report.nonpositive_wealth_paths),
      std::to_string(report.floor_clamp_count)};
  bool within = true;
  if (analytic) {
    const PolicyEvaluation& a = *report.analytic;
    within = std::abs(report.mean_T - a.mean_T) <= 3.0 * report.se_mean &&
             std::abs(report.var_T - a.var_T) <= 3.0 * report.se_var &&
             std::abs(report.J0 - a.J0) <= 3.0 * report.se_J;
    row.insert(row.end(), {format_real(a.mean_T), format_real(a.var_T),
                           format_real(a.J0), within ? "1" : "0"});
  }
  csv.write_row(row);

  if (dump_terminal) {
    CsvWriter tcsv(dir / "terminal.csv");
    tcsv.write_row({"path_id", "X_T"});
    for (std::size_t p = 0; p < terminal.size(); ++p)
      tcsv.write_row({std::to_string(p), format_real(terminal[p])});
  }

  std::cout << "mean_T = " << format_real(report.mean_T)
            << "  var_T = " << format_real(report.var_T)
            << "  J0 = " << format_real(report.J0) << '\n';
  return kExitOk;
}

int cmd_verify(const GlobalOptions& opts, std::vector<double> ts,
               std::vector<std::string> w_specs, std::vector<double> eps,
               const std::string& policy_name) {
  const RunConfig cfg = load_config(opts);
  const DeterministicCoefficients coeffs = build_deterministic_coefficients(cfg);
  const ConeSpec cone = build_cone(cfg.cone);
  const Objective objective = build_objective(cfg.objective);
  const fs::path dir = prepare_output(cfg);

  LinearFeedbackPolicy policy;
  if (policy_name == "equilibrium") {
    policy = equilibrium_policy(coeffs, cone, objective.mu1);
  } else if (policy_name == "zero") {
    policy.c = Eigen::MatrixXd::Zero(coeffs.dim(), coeffs.grid.n_nodes());
  } else {
    throw std::invalid_argument("verify: --policy must be equilibrium or zero");
  }

  if (ts.empty())
    ts = {0.0, 0.25 * coeffs.grid.horizon(), 0.5 * coeffs.grid.horizon(),
          0.75 * coeffs.grid.horizon()};
  if (eps.empty()) eps = {0.02, 0.01};
  std::vector<Eigen::VectorXd> ws;
  for (const auto& spec : w_specs) {
    std::stringstream ss(spec);
    std::vector<double> values;
    std::string cell;
    while (std::getline(ss, cell, ',')) values.push_back(std::stod(cell));
    ws.push_back(Eigen::Map<Eigen::VectorXd>(values.data(),
                                             static_cast<Eigen::Index>(values.size())));
  }

  SimulationConfig sim = build_simulation_config(cfg);
  sim.n_steps = coeffs.grid.n_steps();
  const SpikeTestReport report = spike_variation_test(
      coeffs, cone, objective, policy, ts, ws, eps, build_spike_config(cfg), sim);

  CsvWriter csv(dir / "spike.csv");
  std::vector<std::string> header{"t", "epsilon"};
  for (int j = 1; j <= coeffs.dim(); ++j) header.push_back("w_" + std::to_string(j));
  header.insert(header.end(), {"dJ_over_eps", "se", "first_order", "second_order",
                               "kappa", "pass"});
  csv.write_row(header);
  for (const auto& row : report.rows) {
    std::vector<std::string> cells{format_real(row.t), format_real(row.epsilon)};
    for (int j = 0; j < coeffs.dim(); ++j) cells.push_back(format_real(row.w[j]));
    cells.insert(cells.end(),
                 {format_real(row.dj_over_eps), format_real(row.se),
                  format_real(row.first_order), format_real(row.second_order),
                  format_real(row.kappa), row.pass ? "1" : "0"});
    csv.write_row(cells);
  }

  int failed = 0;
  for (const auto& row : report.rows)
    if (!row.pass) ++failed;
  std::cout << report.rows.size() << " spike rows, " << failed << " failed\n";
  return report.all_pass ? kExitOk : kExitVerificationFailure;
}

int cmd_bsde(const GlobalOptions& opts, int dump_paths) {
  const RunConfig cfg = load_config(opts);
  if (!cfg.is_random())
    throw std::invalid_argument("bsde: config must define market.factor");
  const FactorThetaModel model = build_factor_model(cfg);
  const ConeSpec cone = build_cone(cfg.cone);
  const Objective objective = build_objective(cfg.objective);
  const fs::path dir = prepare_output(cfg);
  const BsdeConfig bsde_cfg = build_bsde_config(cfg);

  const BsdeSolution solution = solve_quadratic_bsde(model, cone, objective.mu1, bsde_cfg);
  const TimeGrid& grid = solution.grid();
  const int deg = bsde_cfg.basis_degree;
  const int dim = model.dim();

  CsvWriter csv(dir / "bsde.csv");
  std::vector<std::string> header{"time", "min_M", "max_absU"};
  for (int k = 0; k <= deg; ++k) header.push_back("m_coef_" + std::to_string(k));
  for (int j = 1; j <= dim; ++j)
    for (int k = 0; k <= deg; ++k)
      header.push_back("u" + std::to_string(j) + "_coef_" + std::to_string(k));
  header.insert(header.end(), {"basis_mean", "basis_scale", "basis_degree"});
  csv.write_row(header);
  for (int i = 0; i <= grid.n_steps(); ++i) {
    std::vector<double> row{grid.node(i), solution.diagnostics.min_M_node[i],
                            solution.diagnostics.max_abs_U_node[i]};
    for (int k = 0; k <= deg; ++k) row.push_back(solution.m_coef()(k, i));
    for (int j = 0; j < dim; ++j)
      for (int k = 0; k <= deg; ++k) row.push_back(solution.u_coef()[i](j, k));
    row.insert(row.end(), {solution.basis()[i].mean, solution.basis()[i].scale,
                           static_cast<double>(solution.basis()[i].degree)});
    csv.write_row(real_row(row));
  }

  if (dump_paths > 0) {
    const FactorPaths paths =
        sample_factor_paths(model, std::min(dump_paths, bsde_cfg.n_paths), cfg.seed,
                            cfg.threads);
    CsvWriter pcsv(dir / "factor_paths.csv");
    std::vector<std::string> pheader{"path_id", "step", "time", "Y"};
    for (int j = 1; j <= dim; ++j) pheader.push_back("theta_" + std::to_string(j));
    pcsv.write_row(pheader);
    for (int p = 0; p < paths.n_paths; ++p) {
      for (int i = 0; i <= model.grid.n_steps(); ++i) {
        std::vector<std::string> cells{std::to_string(p), std::to_string(i),
                                       format_real(model.grid.node(i)),
                                       format_real(paths.y(p, i))};
        const Eigen::VectorXd theta = model.theta_at(paths.y(p, i));
        for (int j = 0; j < dim; ++j) cells.push_back(format_real(theta[j]));
        pcsv.write_row(cells);
      }
    }
  }

  double max_rel_err = 0.0;
  if (model.vol == 0.0) {
    const DeterministicCoefficients det = model.to_deterministic();
    // Compare against the analytic M on the solver grid.
    DeterministicCoefficients det_rs = [&] {
      if (det.grid.n_steps() == grid.n_steps()) return det;
      Eigen::VectorXd rate(grid.n_nodes());
      Eigen::MatrixXd theta(det.dim(), grid.n_nodes());
      for (int i = 0; i <= grid.n_steps(); ++i) {
        const int cell =
            i == grid.n_steps() ? det.grid.n_steps() : det.grid.cell_index(grid.node(i));
        rate[i] = det.rate[cell];
        theta.col(i) = det.theta.col(cell);
      }
      return DeterministicCoefficients(grid, rate, theta, det.rate_max, det.theta_max);
    }();
    const Eigen::VectorXd m_exact = compute_M(det_rs, cone, objective.mu1);
    const Eigen::VectorXd y_det =
        FactorThetaModel(grid, det_rs.rate, model.kappa, model.mean_level, 0.0, model.y0,
                         model.bm_index, model.theta_base, model.beta, model.rate_max,
                         model.theta_max)
            .deterministic_factor_path();
    CsvWriter ccsv(dir / "bsde_consistency.csv");
    ccsv.write_row({"time", "M_solver", "M_analytic", "rel_error"});
    for (int i = 0; i <= grid.n_steps(); ++i) {
      const double m_solver = solution.M_at(i, y_det[i]);
      const double rel = std::abs(m_solver - m_exact[i]) / std::abs(m_exact[i]);
      max_rel_err = std::max(max_rel_err, rel);
      ccsv.write_row({format_real(grid.node(i)), format_real(m_solver),
                      format_real(m_exact[i]), format_real(rel)});
    }
    std::cout << "deterministic-limit max relative M error = " << format_real(max_rel_err)
              << '\n';
  }

  std::cout << "min M = " << format_real(solution.diagnostics.min_M)
            << "  max |U| = " << format_real(solution.diagnostics.max_abs_U)
            << "  floor binds = " << solution.diagnostics.floor_bind_count << '\n';
  if (solution.diagnostics.floor_binding) {
    std::cerr << "bsde: truncation floor binds at convergence; result suspect\n";
    return kExitSuspectNumerics;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-consistent mean-variance strategies under cone constraints"};
  app.require_subcommand(1);

  GlobalOptions opts;
  app.add_option("--config", opts.config_path, "Path to the JSON configuration")
      ->required();
  std::uint64_t seed_opt = 0;
  std::string out_opt;
  int threads_opt = 0;
  auto* seed_flag = app.add_option("--seed", seed_opt, "Override the config seed");
  auto* out_flag = app.add_option("--out", out_opt, "Override the output directory");
  auto* threads_flag = app.add_option("--threads", threads_opt, "Override worker count");

  auto* solve = app.add_subcommand("solve", "Closed-form deterministic engine");
  std::string fbe_path;
  solve->add_option("--fbe", fbe_path, "Optional user feedback policy CSV");
  auto* compare = app.add_subcommand("compare", "Alias of solve");
  std::string fbe_path2;
  compare->add_option("--fbe", fbe_path2, "Optional user feedback policy CSV");

  auto* simulate = app.add_subcommand("simulate", "Monte Carlo wealth simulation");
  std::string policy_name = "equilibrium";
  std::string policy_file;
  bool dump_terminal = false;
  simulate->add_option("--policy", policy_name,
                       "equilibrium | precommit | zero | file");
  simulate->add_option("--policy-file", policy_file, "Policy CSV for --policy file");
  simulate->add_flag("--dump-terminal", dump_terminal, "Write terminal.csv");

  auto* verify = app.add_subcommand("verify", "Spike-variation equilibrium check");
  std::vector<double> ts, eps;
  std::vector<std::string> w_specs;
  std::string verify_policy = "equilibrium";
  verify->add_option("--t", ts, "Spike times (grid nodes)");
  verify->add_option("--w", w_specs, "Spike directions, comma-separated components");
  verify->add_option("--eps", eps, "Epsilon ladder");
  verify->add_option("--policy", verify_policy, "equilibrium | zero");

  auto* bsde = app.add_subcommand("bsde", "Quadratic BSDE solver (factor-driven theta)");
  int dump_paths = 0;
  bsde->add_option("--dump-paths", dump_paths, "Also write the first N factor paths");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitUsage;
  }

  if (seed_flag->count()) opts.seed = seed_opt;
  if (out_flag->count()) opts.out_dir = out_opt;
  if (threads_flag->count()) opts.threads = threads_opt;

  try {
    if (solve->parsed()) return cmd_solve(opts, fbe_path);
    if (compare->parsed()) return cmd_solve(opts, fbe_path2);
    if (simulate->parsed())
      return cmd_simulate(opts, policy_name, policy_file, dump_terminal);
    if (verify->parsed()) return cmd_verify(opts, ts, w_specs, eps, verify_policy);
    if (bsde->parsed()) return cmd_bsde(opts, dump_paths);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NnlsError& e) {
    std::cerr << "numeric error: " << e.what() << " (kkt residual " << e.kkt_residual()
              << ")\n";
    return kExitSuspectNumerics;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitVerificationFailure;
  }
  return kExitUsage;
}
