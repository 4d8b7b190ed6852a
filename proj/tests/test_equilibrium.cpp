#include <memory>
#include <random>

#include "doctest.h"
#include "eqmv/equilibrium.hpp"
#include "support/oracles.hpp"

using namespace eqmv;

namespace {

DeterministicCoefficients benchmark_market(int steps = 500) {
  TimeGrid grid(1.0, steps);
  return DeterministicCoefficients(grid, Eigen::VectorXd::Zero(grid.n_nodes()),
                                   Eigen::MatrixXd::Ones(1, grid.n_nodes()));
}

const Objective kBenchmarkObjective(1.0, 0.0, 1.0);

// Fully independent route to M_s and c_s: quadrature of the displayed
// formulas, with rho itself obtained by quadrature.
class QuadratureOracle {
 public:
  QuadratureOracle(const DeterministicCoefficients& coeffs, const ConeSpec& cone,
                   double mu1)
      : grid_(coeffs.grid), mu1_(mu1), rate_(coeffs.rate),
        proj_theta_(coeffs.dim(), coeffs.grid.n_nodes()) {
    for (int i = 0; i < grid_.n_nodes(); ++i)
      proj_theta_.col(i) = project(cone, coeffs.theta.col(i));
    rate_table_ = std::make_unique<oracles::CellQuadTable>(
        [this](double t) { return rate_[grid_.cell_index(t)]; }, grid_);
    inner_table_ = std::make_unique<oracles::CellQuadTable>(
        [this](double v) {
          return std::exp(-rate_table_->from(v)) *
                 proj_theta_.col(grid_.cell_index(v)).squaredNorm();
        },
        grid_);
  }

  double m(double s) const {
    return std::exp(2.0 * rate_table_->from(s)) * (1.0 + mu1_ * inner_table_->from(s));
  }
  double c(double s) const {
    const int cell = grid_.cell_index(s);
    return mu1_ * std::exp(rate_table_->from(s)) * proj_theta_(0, cell) / m(s);
  }

 private:
  TimeGrid grid_;
  double mu1_;
  Eigen::VectorXd rate_;
  Eigen::MatrixXd proj_theta_;
  std::unique_ptr<oracles::CellQuadTable> rate_table_;
  std::unique_ptr<oracles::CellQuadTable> inner_table_;
};

}  // namespace

TEST_CASE("compute_M closed forms") {
  const ConeSpec orthant = ConeSpec::nonnegative_orthant(1);

  SUBCASE("degenerate objective") {
    const auto coeffs = benchmark_market(50);
    const Eigen::VectorXd m = compute_M(coeffs, orthant, 0.0);
    for (int i = 0; i < m.size(); ++i) CHECK(m[i] == doctest::Approx(1.0).epsilon(1e-14));
  }

  SUBCASE("benchmark instance") {
    const auto coeffs = benchmark_market(100);
    const Eigen::VectorXd m = compute_M(coeffs, orthant, 1.0);
    CHECK(m[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(m[100] == 1.0);
    for (int i = 0; i <= 100; ++i) {
      const double s = coeffs.grid.node(i);
      CHECK(m[i] == doctest::Approx(2.0 - s).epsilon(1e-12));
    }
    // Quadrature oracle for the display itself.
    const QuadratureOracle oracle(coeffs, orthant, 1.0);
    for (double s : {0.0, 0.25, 0.61, 1.0})
      CHECK(m[coeffs.grid.node_index(s)] ==
            doctest::Approx(oracle.m(s)).epsilon(1e-10));
  }

  SUBCASE("vanishing projection leaves the discount term") {
    TimeGrid grid(1.0, 80);
    DeterministicCoefficients coeffs(grid,
                                     Eigen::VectorXd::Constant(grid.n_nodes(), 0.05),
                                     Eigen::MatrixXd::Constant(1, grid.n_nodes(), -1.0));
    const Eigen::VectorXd m = compute_M(coeffs, orthant, 1.0);
    for (int i = 0; i <= 80; ++i) {
      const double s = grid.node(i);
      CHECK(m[i] == doctest::Approx(std::exp(0.1 * (1.0 - s))).epsilon(1e-12));
    }
  }
}

TEST_CASE("equilibrium feedback path") {
  const ConeSpec orthant = ConeSpec::nonnegative_orthant(1);
  const auto coeffs = benchmark_market(100);
  const LinearFeedbackPolicy policy = equilibrium_policy(coeffs, orthant, 1.0);
  CHECK(policy.c(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(policy.c(0, 100) == doctest::Approx(1.0).epsilon(1e-12));
  for (int i = 0; i <= 100; ++i) {
    const double s = coeffs.grid.node(i);
    CHECK(policy.c(0, i) == doctest::Approx(1.0 / (2.0 - s)).epsilon(1e-12));
  }

  // No investable premium -> zero feedback.
  TimeGrid grid(1.0, 40);
  DeterministicCoefficients neg(grid, Eigen::VectorXd::Zero(grid.n_nodes()),
                                Eigen::MatrixXd::Constant(1, grid.n_nodes(), -2.0));
  CHECK(equilibrium_policy(neg, orthant, 1.0).c.cwiseAbs().maxCoeff() == 0.0);

  // Full space: projection is the identity.
  const ConeSpec full = ConeSpec::full_space(1);
  const DeterministicEquilibrium engine(neg, full, 1.0);
  for (int i = 0; i <= 40; ++i) {
    const double expected = 1.0 * neg.theta(0, i) / engine.M()[i];
    CHECK(engine.c_node(i)[0] == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("exact evaluation of the equilibrium on the benchmark") {
  const ConeSpec orthant = ConeSpec::nonnegative_orthant(1);
  const auto coeffs = benchmark_market(500);
  const EquilibriumSolution sol = solve_equilibrium(coeffs, orthant, kBenchmarkObjective);

  CHECK(sol.M[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(sol.int_c[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(sol.int_c_sq == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(sol.mean_T == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(sol.var_T == doctest::Approx(4.0 * (std::exp(0.5) - 1.0)).epsilon(1e-12));
  CHECK(sol.J0 == doctest::Approx(2.0 * (std::exp(0.5) - 2.0)).epsilon(1e-12));

  // Independent quadrature of the smooth feedback.
  const QuadratureOracle oracle(coeffs, orthant, 1.0);
  auto c_of = [&](double s) { return oracle.c(s); };
  const double int_c = oracles::simpson_on_cells(c_of, coeffs.grid, 0.0, 8);
  auto c_sq = [&](double s) {
    const double c = c_of(s);
    return c * c;
  };
  const double int_c_sq = oracles::simpson_on_cells(c_sq, coeffs.grid, 0.0, 8);
  CHECK(sol.int_c[0] == doctest::Approx(int_c).epsilon(1e-8));
  CHECK(sol.int_c_sq == doctest::Approx(int_c_sq).epsilon(1e-8));
}

TEST_CASE("evaluation is independent of the grid resolution") {
  const ConeSpec orthant = ConeSpec::nonnegative_orthant(1);
  const EquilibriumSolution coarse =
      solve_equilibrium(benchmark_market(7), orthant, kBenchmarkObjective);
  const EquilibriumSolution fine =
      solve_equilibrium(benchmark_market(500), orthant, kBenchmarkObjective);
  CHECK(coarse.J0 == doctest::Approx(fine.J0).epsilon(1e-13));
  CHECK(coarse.mean_T == doctest::Approx(fine.mean_T).epsilon(1e-13));
}

TEST_CASE("step policy evaluation") {
  const auto coeffs = benchmark_market(100);

  LinearFeedbackPolicy cash;
  cash.c = Eigen::MatrixXd::Zero(1, coeffs.grid.n_nodes());
  const PolicyEvaluation ev = evaluate_linear_feedback(coeffs, cash, kBenchmarkObjective);
  CHECK(ev.mean_T == 1.0);
  CHECK(ev.var_T == 0.0);
  CHECK(ev.J0 == -1.0);

  // mu1 = 0: the equilibrium strategy is cash-only and J vanishes.
  const Objective null_obj(0.0, 0.0, 1.0);
  const EquilibriumSolution sol =
      solve_equilibrium(coeffs, ConeSpec::nonnegative_orthant(1), null_obj);
  CHECK(sol.J0 == 0.0);

  LinearFeedbackPolicy affine;
  affine.c = Eigen::MatrixXd::Zero(1, coeffs.grid.n_nodes());
  affine.intercept = Eigen::MatrixXd::Ones(1, coeffs.grid.n_nodes());
  CHECK_THROWS_AS(evaluate_linear_feedback(coeffs, affine, kBenchmarkObjective),
                  std::invalid_argument);
}

TEST_CASE("precommitted solution") {
  const ConeSpec orthant = ConeSpec::nonnegative_orthant(1);

  SUBCASE("benchmark value") {
    const PrecommitSolution pre =
        precommit_solution(benchmark_market(500), orthant, kBenchmarkObjective);
    CHECK(pre.V_pre ==
          doctest::Approx(-(std::exp(1.0) - 1.0) / 2.0 - 1.0).epsilon(1e-12));
    CHECK(pre.mean_T == doctest::Approx(std::exp(1.0)).epsilon(1e-12));
    CHECK(pre.var_T == doctest::Approx(std::exp(1.0) - 1.0).epsilon(1e-12));
    CHECK(pre.policy.c(0, 0) == doctest::Approx(-1.0));
    // Slope -Proj(theta), intercept e^{int r}(x0 + lambda e^{int(q - r)}) Proj(theta).
    CHECK((*pre.policy.intercept)(0, 0) ==
          doctest::Approx(1.0 + std::exp(1.0)).epsilon(1e-12));
  }

  SUBCASE("no investable premium") {
    TimeGrid grid(1.0, 40);
    DeterministicCoefficients neg(grid,
                                  Eigen::VectorXd::Constant(grid.n_nodes(), 0.05),
                                  Eigen::MatrixXd::Constant(1, grid.n_nodes(), -1.0));
    const Objective obj(2.0, 0.5, 1.5);
    const PrecommitSolution pre = precommit_solution(neg, orthant, obj);
    const double lambda = 2.0 * 1.5 + 0.5;
    CHECK(pre.V_pre ==
          doctest::Approx(-lambda * std::exp(0.05) * 1.5).epsilon(1e-12));
    CHECK(pre.policy.c.cwiseAbs().maxCoeff() == 0.0);
    CHECK(pre.policy.intercept->cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("null objective") {
    const PrecommitSolution pre =
        precommit_solution(benchmark_market(50), orthant, Objective(0.0, 0.0, 1.0));
    CHECK(pre.V_pre == 0.0);
  }
}

TEST_CASE("strategy comparison") {
  const ConeSpec orthant = ConeSpec::nonnegative_orthant(1);
  const auto coeffs = benchmark_market(200);

  const StrategyComparison cmp = compare_strategies(coeffs, orthant, kBenchmarkObjective);
  CHECK(cmp.ordering_holds);
  CHECK(cmp.equilibrium.J0 == doctest::Approx(-0.7025574586).epsilon(1e-9));
  CHECK(cmp.precommit.J0 == doctest::Approx(-1.8591409142).epsilon(1e-9));
  CHECK(cmp.equilibrium.J0 > cmp.precommit.J0);

  // Supplying the engine's own policy reproduces J_eq exactly.
  const LinearFeedbackPolicy fbe = equilibrium_policy(coeffs, orthant, 1.0);
  const StrategyComparison with_fbe =
      compare_strategies(coeffs, orthant, kBenchmarkObjective, &fbe);
  REQUIRE(with_fbe.user_feedback.has_value());
  CHECK(with_fbe.user_feedback->J0 == with_fbe.equilibrium.J0);
  CHECK(with_fbe.ordering_holds);

  // Cash-only market: both strategies coincide.
  TimeGrid grid(1.0, 50);
  DeterministicCoefficients neg(grid, Eigen::VectorXd::Constant(grid.n_nodes(), 0.03),
                                Eigen::MatrixXd::Constant(1, grid.n_nodes(), -1.0));
  const StrategyComparison flat = compare_strategies(neg, orthant, kBenchmarkObjective);
  CHECK(flat.ordering_holds);
  CHECK(flat.equilibrium.J0 ==
        doctest::Approx(-std::exp(0.03)).epsilon(1e-12));
  CHECK(flat.equilibrium.J0 == doctest::Approx(flat.precommit.J0).epsilon(1e-12));

  CHECK_THROWS_AS(compare_strategies(coeffs, orthant, Objective(1.0, 0.5, 1.0)),
                  std::invalid_argument);
}

TEST_CASE("scaling of the initial wealth") {
  const ConeSpec orthant = ConeSpec::nonnegative_orthant(1);
  const auto coeffs = benchmark_market(100);
  const EquilibriumSolution base = solve_equilibrium(coeffs, orthant, kBenchmarkObjective);
  const double lambda = 2.5;
  const EquilibriumSolution scaled =
      solve_equilibrium(coeffs, orthant, Objective(1.0, 0.0, lambda));
  CHECK(scaled.mean_T == doctest::Approx(lambda * base.mean_T).epsilon(1e-12));
  CHECK(scaled.var_T == doctest::Approx(lambda * lambda * base.var_T).epsilon(1e-12));
  CHECK(scaled.J0 == doctest::Approx(lambda * lambda * base.J0).epsilon(1e-12));
}

TEST_CASE("adjoint processes") {
  const ConeSpec orthant = ConeSpec::nonnegative_orthant(1);
  const auto coeffs = benchmark_market(100);
  const AdjointProcesses adj(coeffs, orthant, kBenchmarkObjective);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> wealth(0.2, 3.0);
  for (int t_node : {0, 13, 50, 99}) {
    const double x_t = wealth(rng);
    // p(t;t) = -rho_t mu1 X_t.
    CHECK(adj.p(t_node, t_node, x_t, x_t) ==
          doctest::Approx(-1.0 * x_t).epsilon(1e-12));
    // Terminal condition p(T;t) = X_T - E_t[X_T] - mu1 X_t with M_T = 1.
    const double x_T = wealth(rng);
    const double growth = DeterministicEquilibrium(coeffs, orthant, 1.0)
                              .mean_growth(t_node, 100);
    CHECK(adj.p(100, t_node, x_T, x_t) ==
          doctest::Approx(x_T - growth * x_t - x_t).epsilon(1e-12));
  }

  // Lambda(0;0) vanishes on the benchmark (theta lies in the cone).
  CHECK(adj.lambda_tt(0, 1.0).cwiseAbs().maxCoeff() < 1e-12);

  // Zero policy: Lambda(t;t) = -mu1 rho_t theta_t X_t.
  LinearFeedbackPolicy zero;
  zero.c = Eigen::MatrixXd::Zero(1, coeffs.grid.n_nodes());
  const AdjointProcesses adj_zero(coeffs, orthant, kBenchmarkObjective, &zero);
  CHECK(adj_zero.lambda_tt(0, 1.0)[0] == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("equilibrium first-order condition on random instances") {
  std::mt19937_64 rng(314159);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss;
  for (int trial = 0; trial < 12; ++trial) {
    const int dim = 1 + static_cast<int>(unif(rng) * 3.0);
    TimeGrid grid(1.0 + unif(rng), 40);
    Eigen::VectorXd rate(grid.n_nodes());
    Eigen::MatrixXd theta(dim, grid.n_nodes());
    for (int i = 0; i < grid.n_nodes(); ++i) {
      rate[i] = 0.08 * (unif(rng) - 0.3);
      for (int j = 0; j < dim; ++j) theta(j, i) = gauss(rng);
    }
    DeterministicCoefficients coeffs(grid, rate, theta);
    const ConeSpec cone = trial % 2 ? ConeSpec::nonnegative_orthant(dim)
                                    : ConeSpec::full_space(dim);
    const double mu1 = 0.3 + unif(rng);
    const DeterministicEquilibrium engine(coeffs, cone, mu1);

    // <m_t - c_t, w - c_t> <= 0 for w in K: the projection variational
    // inequality behind <Lambda(t;t), v - u*> >= 0.
    for (int i = 0; i < grid.n_nodes(); i += 7) {
      const Eigen::VectorXd m_t =
          mu1 * engine.rho_nodes()[i] * coeffs.theta.col(i) / engine.M()[i];
      const Eigen::VectorXd c_t = engine.c_node(i);
      for (int k = 0; k < 8; ++k) {
        Eigen::VectorXd w(dim);
        for (int j = 0; j < dim; ++j) w[j] = gauss(rng);
        w = project(cone, w);
        REQUIRE((m_t - c_t).dot(w - c_t) <= 1e-10);
      }
    }

    // M stays above the pure-discount level when mu1 >= 0.
    const Eigen::VectorXd m = engine.M();
    CHECK(m[grid.n_steps()] == 1.0);
    for (int i = 0; i < grid.n_nodes(); ++i) {
      const double floor = std::pow(rho(coeffs, grid.node(i)), 2);
      REQUIRE(m[i] >= floor - 1e-12);
    }
  }
}

TEST_CASE("cash-only reduction") {
  const ConeSpec orthant = ConeSpec::nonnegative_orthant(1);
  TimeGrid grid(1.0, 60);
  DeterministicCoefficients neg(grid, Eigen::VectorXd::Constant(grid.n_nodes(), 0.02),
                                Eigen::MatrixXd::Constant(1, grid.n_nodes(), -0.7));
  const EquilibriumSolution sol = solve_equilibrium(neg, orthant, kBenchmarkObjective);
  CHECK(sol.policy.c.cwiseAbs().maxCoeff() == 0.0);
  CHECK(sol.var_T == 0.0);
  CHECK(sol.mean_T == doctest::Approx(std::exp(0.02)).epsilon(1e-12));
}
