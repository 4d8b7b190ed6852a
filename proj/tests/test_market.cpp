#include <random>

#include "doctest.h"
#include "eqmv/market.hpp"
#include "support/oracles.hpp"

using namespace eqmv;

namespace {

DeterministicCoefficients constant_market(double rate, double theta, int steps = 100,
                                          double horizon = 1.0) {
  TimeGrid grid(horizon, steps);
  return DeterministicCoefficients(grid, Eigen::VectorXd::Constant(grid.n_nodes(), rate),
                                   Eigen::MatrixXd::Constant(1, grid.n_nodes(), theta));
}

bool bit_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         (a.array() == b.array()).all();
}

}  // namespace

TEST_CASE("grid nodes and lookups") {
  TimeGrid grid(1.0, 4);
  CHECK(grid.node(4) == 1.0);
  CHECK(grid.dt() == 0.25);
  CHECK(grid.cell_index(0.999) == 3);
  CHECK(grid.cell_index(1.0) == 3);
  CHECK(grid.node_index(0.75) == 3);
  CHECK_THROWS_AS(grid.node_index(0.3), std::invalid_argument);
  CHECK_THROWS_AS(TimeGrid(0.0, 4), std::invalid_argument);
}

TEST_CASE("rho closed form") {
  const auto flat = constant_market(0.0, 1.0);
  CHECK(rho(flat, 0.0) == 1.0);
  CHECK(rho(flat, 0.37) == 1.0);
  CHECK(rho(flat, 1.0) == 1.0);

  const auto lifted = constant_market(0.05, 1.0);
  CHECK(rho(lifted, 0.0) == doctest::Approx(std::exp(0.05)).epsilon(1e-12));
  CHECK(rho(lifted, 1.0) == 1.0);
  CHECK_THROWS_AS(rho(lifted, 1.5), std::invalid_argument);

  // Quadrature oracle on a rate path with a breakpoint.
  TimeGrid grid(2.0, 8);
  Eigen::VectorXd rate(grid.n_nodes());
  for (int i = 0; i <= 8; ++i) rate[i] = grid.node(i) < 1.0 ? 0.02 : -0.01;
  DeterministicCoefficients coeffs(grid, rate,
                                   Eigen::MatrixXd::Constant(1, grid.n_nodes(), 1.0),
                                   1.0, 10.0);
  auto r_of_t = [&](double t) { return rate[grid.cell_index(t)]; };
  for (double s : {0.0, 0.4, 1.0, 1.3, 2.0}) {
    const double expected = std::exp(oracles::simpson_on_cells(r_of_t, grid, s));
    CHECK(rho(coeffs, s) == doctest::Approx(expected).epsilon(1e-12));
  }

  // Multiplicative over adjacent intervals.
  for (double s : {0.0, 0.25, 0.75}) {
    for (double u : {1.0, 1.25, 1.75}) {
      const double left = std::exp(oracles::simpson_on_cells(r_of_t, grid, s) -
                                   oracles::simpson_on_cells(r_of_t, grid, u));
      CHECK(rho(coeffs, s) == doctest::Approx(left * rho(coeffs, u)).epsilon(1e-12));
    }
  }
}

TEST_CASE("integral of projected premium") {
  const ConeSpec orthant = ConeSpec::nonnegative_orthant(1);
  CHECK(integral_proj_theta_sq(constant_market(0.0, 1.0), orthant, 0.0) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(integral_proj_theta_sq(constant_market(0.0, -1.0), orthant, 0.3) == 0.0);
  CHECK(integral_proj_theta_sq(constant_market(0.0, 1.0), orthant, 1.0) == 0.0);

  // Oracle on a two-piece theta.
  TimeGrid grid(1.0, 10);
  Eigen::MatrixXd theta(1, grid.n_nodes());
  for (int i = 0; i <= 10; ++i) theta(0, i) = grid.node(i) < 0.5 ? 1.5 : -0.5;
  DeterministicCoefficients coeffs(grid, Eigen::VectorXd::Zero(grid.n_nodes()), theta);
  auto integrand = [&](double t) {
    const Eigen::VectorXd th = theta.col(grid.cell_index(t));
    return project(orthant, th).squaredNorm();
  };
  for (double s : {0.0, 0.2, 0.5, 0.9}) {
    CHECK(integral_proj_theta_sq(coeffs, orthant, s) ==
          doctest::Approx(oracles::simpson_on_cells(integrand, grid, s)).epsilon(1e-12));
  }
}

TEST_CASE("market bounds are validated") {
  TimeGrid grid(1.0, 10);
  CHECK_THROWS_AS(DeterministicCoefficients(
                      grid, Eigen::VectorXd::Constant(grid.n_nodes(), 2.0),
                      Eigen::MatrixXd::Constant(1, grid.n_nodes(), 1.0)),
                  std::invalid_argument);
  CHECK_THROWS_AS(DeterministicCoefficients(
                      grid, Eigen::VectorXd::Zero(grid.n_nodes()),
                      Eigen::MatrixXd::Constant(1, grid.n_nodes(), 11.0)),
                  std::invalid_argument);
}

TEST_CASE("factor sampling: degenerate and determinism") {
  TimeGrid grid(1.0, 50);
  const Eigen::VectorXd rate = Eigen::VectorXd::Zero(grid.n_nodes());
  const Eigen::VectorXd base = Eigen::VectorXd::Constant(1, 1.0);
  const Eigen::VectorXd beta = Eigen::VectorXd::Constant(1, 0.5);

  FactorThetaModel frozen(grid, rate, 0.0, 0.0, 0.0, 0.7, 0, base, beta);
  const FactorPaths paths = sample_factor_paths(frozen, 16, 99);
  for (int p = 0; p < 16; ++p)
    for (int i = 0; i <= 50; ++i) CHECK(paths.y(p, i) == 0.7);
  CHECK(frozen.theta_at(0.7)[0] == doctest::Approx(1.35));

  FactorThetaModel model(grid, rate, 1.0, 0.0, 0.2, 0.0, 0, base, beta);
  const FactorPaths a = sample_factor_paths(model, 64, 4);
  const FactorPaths b = sample_factor_paths(model, 64, 4);
  CHECK(bit_equal(a.y, b.y));
  CHECK(bit_equal(a.dw[0], b.dw[0]));
  const FactorPaths c = sample_factor_paths(model, 64, 5);
  CHECK_FALSE(bit_equal(a.y, c.y));

  // Worker count does not change the sample.
  const FactorPaths threaded = sample_factor_paths(model, 5000, 4, 4);
  const FactorPaths serial = sample_factor_paths(model, 5000, 4, 1);
  CHECK(bit_equal(threaded.y, serial.y));
}

TEST_CASE("factor sampling matches the OU mean") {
  TimeGrid grid(1.0, 100);
  FactorThetaModel model(grid, Eigen::VectorXd::Zero(grid.n_nodes()), 1.0, 0.0, 0.2, 0.0,
                         0, Eigen::VectorXd::Constant(1, 1.0),
                         Eigen::VectorXd::Constant(1, 0.5));
  const int n_paths = 100000;
  const FactorPaths paths = sample_factor_paths(model, n_paths, 2024);
  const auto terminal = paths.y.col(grid.n_steps());
  const double mean = terminal.mean();
  const double sd = std::sqrt((terminal.array() - mean).square().mean());
  const double se = sd / std::sqrt(static_cast<double>(n_paths));
  // OU mean m + (Y0 - m) e^{-kappa T} = 0 here.
  CHECK(std::abs(mean - 0.0) <= 3.0 * se);
}

TEST_CASE("sampled premia respect the clip bound") {
  TimeGrid grid(1.0, 40);
  FactorThetaModel model(grid, Eigen::VectorXd::Zero(grid.n_nodes()), 0.2, 0.0, 3.0, 0.0,
                         0, Eigen::VectorXd::Constant(1, 1.0),
                         Eigen::VectorXd::Constant(1, 8.0), 1.0, 2.5);
  const FactorPaths paths = sample_factor_paths(model, 500, 11);
  double max_abs = 0.0;
  for (int p = 0; p < paths.n_paths; ++p)
    for (int i = 0; i <= 40; ++i)
      max_abs = std::max(max_abs, model.theta_at(paths.y(p, i)).cwiseAbs().maxCoeff());
  CHECK(max_abs <= 2.5);
}
