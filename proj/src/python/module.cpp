#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "eqmv/bsde.hpp"
#include "eqmv/cone.hpp"
#include "eqmv/equilibrium.hpp"
#include "eqmv/market.hpp"
#include "eqmv/montecarlo.hpp"

namespace py = pybind11;
using namespace eqmv;

PYBIND11_MODULE(eqmv, m) {
  m.doc() = "Time-consistent mean-variance strategies under convex cone constraints";

  py::class_<ConeSpec>(m, "ConeSpec")
      .def_static("full_space", &ConeSpec::full_space, py::arg("dim"))
      .def_static("nonnegative_orthant", &ConeSpec::nonnegative_orthant, py::arg("dim"))
      .def_static("ray", &ConeSpec::ray, py::arg("direction"))
      .def_static("finitely_generated", &ConeSpec::finitely_generated,
                  py::arg("generators"))
      .def_property_readonly("dim", &ConeSpec::dim);

  m.def("project", &project, py::arg("cone"), py::arg("a"));
  m.def("contains", &contains, py::arg("cone"), py::arg("a"), py::arg("tol"));
  m.def("polar_residual", &polar_residual, py::arg("cone"), py::arg("a"));

  py::class_<TimeGrid>(m, "TimeGrid")
      .def(py::init<double, int>(), py::arg("horizon"), py::arg("n_steps"))
      .def_property_readonly("horizon", &TimeGrid::horizon)
      .def_property_readonly("n_steps", &TimeGrid::n_steps)
      .def_property_readonly("dt", &TimeGrid::dt)
      .def("node", &TimeGrid::node);

  py::class_<DeterministicCoefficients>(m, "DeterministicCoefficients")
      .def(py::init<TimeGrid, Eigen::VectorXd, Eigen::MatrixXd, double, double>(),
           py::arg("grid"), py::arg("rate"), py::arg("theta"), py::arg("rate_max") = 1.0,
           py::arg("theta_max") = 10.0)
      .def_readonly("rate", &DeterministicCoefficients::rate)
      .def_readonly("theta", &DeterministicCoefficients::theta)
      .def_property_readonly("dim", &DeterministicCoefficients::dim);

  m.def("rho", &rho, py::arg("coeffs"), py::arg("s"));
  m.def("integral_proj_theta_sq", &integral_proj_theta_sq, py::arg("coeffs"),
        py::arg("cone"), py::arg("s"));

  py::class_<Objective>(m, "Objective")
      .def(py::init<double, double, double>(), py::arg("mu1"), py::arg("mu2"),
           py::arg("x0"))
      .def_readonly("mu1", &Objective::mu1)
      .def_readonly("mu2", &Objective::mu2)
      .def_readonly("x0", &Objective::x0);

  py::class_<LinearFeedbackPolicy>(m, "LinearFeedbackPolicy")
      .def(py::init([](const Eigen::MatrixXd& c) {
             LinearFeedbackPolicy p;
             p.c = c;
             return p;
           }),
           py::arg("c"))
      .def_readonly("c", &LinearFeedbackPolicy::c)
      .def_property_readonly("intercept",
                             [](const LinearFeedbackPolicy& p)
                                 -> std::optional<Eigen::MatrixXd> { return p.intercept; });

  py::class_<PolicyEvaluation>(m, "PolicyEvaluation")
      .def_readonly("mean_T", &PolicyEvaluation::mean_T)
      .def_readonly("var_T", &PolicyEvaluation::var_T)
      .def_readonly("J0", &PolicyEvaluation::J0);

  py::class_<EquilibriumSolution>(m, "EquilibriumSolution")
      .def_readonly("M", &EquilibriumSolution::M)
      .def_readonly("policy", &EquilibriumSolution::policy)
      .def_readonly("mean_T", &EquilibriumSolution::mean_T)
      .def_readonly("var_T", &EquilibriumSolution::var_T)
      .def_readonly("J0", &EquilibriumSolution::J0)
      .def_readonly("int_c", &EquilibriumSolution::int_c)
      .def_readonly("int_c_sq", &EquilibriumSolution::int_c_sq);

  py::class_<PrecommitSolution>(m, "PrecommitSolution")
      .def_readonly("policy", &PrecommitSolution::policy)
      .def_readonly("V_pre", &PrecommitSolution::V_pre)
      .def_readonly("mean_T", &PrecommitSolution::mean_T)
      .def_readonly("var_T", &PrecommitSolution::var_T);

  py::class_<StrategyComparison>(m, "StrategyComparison")
      .def_readonly("equilibrium", &StrategyComparison::equilibrium)
      .def_readonly("precommit", &StrategyComparison::precommit)
      .def_readonly("user_feedback", &StrategyComparison::user_feedback)
      .def_readonly("ordering_holds", &StrategyComparison::ordering_holds)
      .def_readonly("violations", &StrategyComparison::violations);

  m.def("compute_M", &compute_M, py::arg("coeffs"), py::arg("cone"), py::arg("mu1"));
  m.def("equilibrium_policy", &equilibrium_policy, py::arg("coeffs"), py::arg("cone"),
        py::arg("mu1"));
  m.def("solve_equilibrium", &solve_equilibrium, py::arg("coeffs"), py::arg("cone"),
        py::arg("objective"));
  m.def("evaluate_linear_feedback", &evaluate_linear_feedback, py::arg("coeffs"),
        py::arg("policy"), py::arg("objective"));
  m.def("precommit_solution", &precommit_solution, py::arg("coeffs"), py::arg("cone"),
        py::arg("objective"));
  m.def(
      "compare_strategies",
      [](const DeterministicCoefficients& coeffs, const ConeSpec& cone,
         const Objective& objective, std::optional<LinearFeedbackPolicy> fbe) {
        return compare_strategies(coeffs, cone, objective, fbe ? &*fbe : nullptr);
      },
      py::arg("coeffs"), py::arg("cone"), py::arg("objective"),
      py::arg("user_feedback") = std::nullopt);

  py::enum_<Scheme>(m, "Scheme")
      .value("LogEuler", Scheme::LogEuler)
      .value("Euler", Scheme::Euler);

  py::class_<SimulationConfig>(m, "SimulationConfig")
      .def(py::init<>())
      .def_readwrite("n_paths", &SimulationConfig::n_paths)
      .def_readwrite("n_steps", &SimulationConfig::n_steps)
      .def_readwrite("seed", &SimulationConfig::seed)
      .def_readwrite("scheme", &SimulationConfig::scheme)
      .def_readwrite("antithetic", &SimulationConfig::antithetic)
      .def_readwrite("threads", &SimulationConfig::threads);

  py::class_<SimulationReport>(m, "SimulationReport")
      .def_readonly("mean_T", &SimulationReport::mean_T)
      .def_readonly("var_T", &SimulationReport::var_T)
      .def_readonly("J0", &SimulationReport::J0)
      .def_readonly("se_mean", &SimulationReport::se_mean)
      .def_readonly("se_var", &SimulationReport::se_var)
      .def_readonly("se_J", &SimulationReport::se_J)
      .def_readonly("min_T", &SimulationReport::min_T)
      .def_readonly("max_T", &SimulationReport::max_T)
      .def_readonly("nonpositive_wealth_paths",
                    &SimulationReport::nonpositive_wealth_paths)
      .def_readonly("floor_clamp_count", &SimulationReport::floor_clamp_count)
      .def_readonly("analytic", &SimulationReport::analytic);

  m.def(
      "simulate_policy",
      [](const DeterministicCoefficients& coeffs, const LinearFeedbackPolicy& policy,
         const Objective& objective, const SimulationConfig& config) {
        return simulate_policy(coeffs, policy, objective, config);
      },
      py::arg("coeffs"), py::arg("policy"), py::arg("objective"), py::arg("config"));
  m.def("estimate_J_for_precommit", &estimate_J_for_precommit, py::arg("coeffs"),
        py::arg("cone"), py::arg("objective"), py::arg("config"));
  m.def("second_order_coefficient", &second_order_coefficient, py::arg("coeffs"),
        py::arg("t"));

  py::class_<SpikeConfig>(m, "SpikeConfig")
      .def(py::init<>())
      .def_readwrite("n_outer", &SpikeConfig::n_outer)
      .def_readwrite("n_inner", &SpikeConfig::n_inner)
      .def_readwrite("seed", &SpikeConfig::seed)
      .def_readwrite("threads", &SpikeConfig::threads);

  py::class_<SpikeRow>(m, "SpikeRow")
      .def_readonly("t", &SpikeRow::t)
      .def_readonly("epsilon", &SpikeRow::epsilon)
      .def_readonly("w", &SpikeRow::w)
      .def_readonly("dj_over_eps", &SpikeRow::dj_over_eps)
      .def_readonly("se", &SpikeRow::se)
      .def_readonly("first_order", &SpikeRow::first_order)
      .def_readonly("second_order", &SpikeRow::second_order)
      .def_readonly("kappa", &SpikeRow::kappa)
      .def_readonly("pass_rule", &SpikeRow::pass_rule)
      .def_readonly("matches_expansion", &SpikeRow::matches_expansion)
      .def_property_readonly("passed", [](const SpikeRow& r) { return r.pass; });

  py::class_<SpikeTestReport>(m, "SpikeTestReport")
      .def_readonly("rows", &SpikeTestReport::rows)
      .def_readonly("all_pass", &SpikeTestReport::all_pass);

  m.def("spike_variation_test", &spike_variation_test, py::arg("coeffs"), py::arg("cone"),
        py::arg("objective"), py::arg("policy"), py::arg("times"), py::arg("ws"),
        py::arg("epsilons"), py::arg("spike_config"), py::arg("sim_config"));

  py::class_<FactorThetaModel>(m, "FactorThetaModel")
      .def(py::init<TimeGrid, Eigen::VectorXd, double, double, double, double, int,
                    Eigen::VectorXd, Eigen::VectorXd, double, double>(),
           py::arg("grid"), py::arg("rate"), py::arg("kappa"), py::arg("mean_level"),
           py::arg("vol"), py::arg("y0"), py::arg("bm_index"), py::arg("theta_base"),
           py::arg("beta"), py::arg("rate_max") = 1.0, py::arg("theta_max") = 10.0)
      .def("theta_at", &FactorThetaModel::theta_at)
      .def("to_deterministic", &FactorThetaModel::to_deterministic)
      .def_property_readonly("dim", &FactorThetaModel::dim);

  py::class_<FactorPaths>(m, "FactorPaths")
      .def_readonly("n_paths", &FactorPaths::n_paths)
      .def_readonly("y", &FactorPaths::y)
      .def_readonly("dw", &FactorPaths::dw);

  m.def("sample_factor_paths", &sample_factor_paths, py::arg("model"),
        py::arg("n_paths"), py::arg("seed"), py::arg("threads") = 1);

  py::class_<BsdeConfig>(m, "BsdeConfig")
      .def(py::init<>())
      .def_readwrite("n_paths", &BsdeConfig::n_paths)
      .def_readwrite("n_steps", &BsdeConfig::n_steps)
      .def_readwrite("basis_degree", &BsdeConfig::basis_degree)
      .def_readwrite("floor_c", &BsdeConfig::floor_c)
      .def_readwrite("seed", &BsdeConfig::seed)
      .def_readwrite("threads", &BsdeConfig::threads);

  py::class_<BsdeDiagnostics>(m, "BsdeDiagnostics")
      .def_readonly("min_M", &BsdeDiagnostics::min_M)
      .def_readonly("max_abs_U", &BsdeDiagnostics::max_abs_U)
      .def_readonly("floor_bind_count", &BsdeDiagnostics::floor_bind_count)
      .def_readonly("floor_binding", &BsdeDiagnostics::floor_binding)
      .def_readonly("residual_mean", &BsdeDiagnostics::residual_mean)
      .def_readonly("residual_se", &BsdeDiagnostics::residual_se);

  py::class_<BsdeSolution>(m, "BsdeSolution")
      .def("M_at", &BsdeSolution::M_at, py::arg("node"), py::arg("y"))
      .def("U_at", &BsdeSolution::U_at, py::arg("node"), py::arg("y"))
      .def_property_readonly("floor", &BsdeSolution::floor)
      .def_readonly("diagnostics", &BsdeSolution::diagnostics);

  m.def("positivity_floor", &positivity_floor, py::arg("model"), py::arg("mu1"));
  m.def("solve_quadratic_bsde", &solve_quadratic_bsde, py::arg("model"), py::arg("cone"),
        py::arg("mu1"), py::arg("config"));

  py::class_<StateFeedbackPolicy>(m, "StateFeedbackPolicy")
      .def("alpha",
           [](const StateFeedbackPolicy& p, int node, double y) {
             return p.alpha(node, y);
           },
           py::arg("node"), py::arg("y"));

  m.def(
      "equilibrium_policy_random",
      [](const BsdeSolution& solution, const FactorThetaModel& model,
         const ConeSpec& cone, double mu1) {
        return equilibrium_policy_random(solution, model, cone, mu1);
      },
      py::arg("solution"), py::arg("model"), py::arg("cone"), py::arg("mu1"));
  m.def(
      "simulate_state_feedback",
      [](const StateFeedbackPolicy& policy, const Objective& objective,
         const SimulationConfig& config) {
        return simulate_state_feedback(policy, objective, config);
      },
      py::arg("policy"), py::arg("objective"), py::arg("config"));
}
