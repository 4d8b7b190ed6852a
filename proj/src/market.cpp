#include "eqmv/market.hpp"

#include "eqmv/rng.hpp"

namespace eqmv {

namespace {

void check_bounds(const Eigen::VectorXd& rate, const Eigen::MatrixXd& theta,
                  double rate_max, double theta_max, const TimeGrid& grid) {
  if (rate.size() != grid.n_nodes())
    throw std::invalid_argument("market: rate path must have one value per node");
  if (theta.cols() != grid.n_nodes())
    throw std::invalid_argument("market: theta path must have one value per node");
  if (theta.rows() < 1) throw std::invalid_argument("market: theta dimension >= 1");
  if (rate.cwiseAbs().maxCoeff() > rate_max)
    throw std::invalid_argument("market: |r| exceeds rate_max");
  if (theta.size() > 0 && theta.cwiseAbs().maxCoeff() > theta_max)
    throw std::invalid_argument("market: |theta| exceeds theta_max");
}

}  // namespace

DeterministicCoefficients::DeterministicCoefficients(TimeGrid g, Eigen::VectorXd r,
                                                     Eigen::MatrixXd th, double r_max,
                                                     double th_max)
    : grid(g), rate(std::move(r)), theta(std::move(th)), rate_max(r_max),
      theta_max(th_max) {
  check_bounds(rate, theta, rate_max, theta_max, grid);
}

double rho(const DeterministicCoefficients& coeffs, double s) {
  const TimeGrid& grid = coeffs.grid;
  if (s < -1e-12 || s > grid.horizon() * (1.0 + 1e-12))
    throw std::invalid_argument("rho: s outside [0, T]");
  if (s >= grid.horizon()) return 1.0;
  const double dt = grid.dt();
  const int first = grid.cell_index(s);
  double integral = coeffs.rate[first] * (grid.node(first + 1) - s);
  for (int i = first + 1; i < grid.n_steps(); ++i) integral += coeffs.rate[i] * dt;
  return std::exp(integral);
}

double integral_proj_theta_sq(const DeterministicCoefficients& coeffs,
                              const ConeSpec& cone, double s) {
  const TimeGrid& grid = coeffs.grid;
  if (s < -1e-12 || s > grid.horizon() * (1.0 + 1e-12))
    throw std::invalid_argument("integral_proj_theta_sq: s outside [0, T]");
  if (s >= grid.horizon()) return 0.0;
  const double dt = grid.dt();
  const int first = grid.cell_index(s);
  double total = project(cone, coeffs.theta.col(first)).squaredNorm() *
                 (grid.node(first + 1) - s);
  for (int i = first + 1; i < grid.n_steps(); ++i)
    total += project(cone, coeffs.theta.col(i)).squaredNorm() * dt;
  return total;
}

FactorThetaModel::FactorThetaModel(TimeGrid g, Eigen::VectorXd r, double kappa_,
                                   double mean_level_, double vol_, double y0_,
                                   int bm_index_, Eigen::VectorXd base,
                                   Eigen::VectorXd loading, double r_max, double th_max)
    : grid(g), rate(std::move(r)), kappa(kappa_), mean_level(mean_level_), vol(vol_),
      y0(y0_), bm_index(bm_index_), theta_base(std::move(base)),
      beta(std::move(loading)), rate_max(r_max), theta_max(th_max) {
  if (rate.size() != grid.n_nodes())
    throw std::invalid_argument("factor: rate path must have one value per node");
  if (rate.cwiseAbs().maxCoeff() > rate_max)
    throw std::invalid_argument("factor: |r| exceeds rate_max");
  if (theta_base.size() != beta.size())
    throw std::invalid_argument("factor: theta_base and beta dimensions differ");
  if (theta_base.size() < 1) throw std::invalid_argument("factor: dimension >= 1");
  if (kappa < 0.0 || vol < 0.0)
    throw std::invalid_argument("factor: kappa and vol must be nonnegative");
  if (bm_index < 0 || bm_index >= dim())
    throw std::invalid_argument("factor: bm_index outside Brownian dimension");
}

Eigen::VectorXd FactorThetaModel::deterministic_factor_path() const {
  Eigen::VectorXd y(grid.n_nodes());
  y[0] = y0;
  const double dt = grid.dt();
  for (int i = 0; i < grid.n_steps(); ++i)
    y[i + 1] = y[i] + kappa * (mean_level - y[i]) * dt;
  return y;
}

DeterministicCoefficients FactorThetaModel::to_deterministic() const {
  const Eigen::VectorXd y = deterministic_factor_path();
  Eigen::MatrixXd theta(dim(), grid.n_nodes());
  for (int i = 0; i < grid.n_nodes(); ++i) theta.col(i) = theta_at(y[i]);
  return DeterministicCoefficients(grid, rate, theta, rate_max, theta_max);
}

FactorPaths sample_factor_paths(const FactorThetaModel& model, int n_paths,
                                std::uint64_t seed, int threads) {
  if (n_paths < 1) throw std::invalid_argument("sample_factor_paths: n_paths >= 1");
  const int n_steps = model.grid.n_steps();
  const int d = model.dim();
  const double dt = model.grid.dt();
  const double sqrt_dt = std::sqrt(dt);

  FactorPaths paths;
  paths.n_paths = n_paths;
  paths.y.resize(n_paths, n_steps + 1);
  paths.dw.assign(d, Eigen::MatrixXd(n_paths, n_steps));

  parallel_for(n_paths, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      NormalStream stream(seed, purpose::kFactor, p);
      double y = model.y0;
      paths.y(p, 0) = y;
      for (int i = 0; i < n_steps; ++i) {
        for (int j = 0; j < d; ++j) paths.dw[j](p, i) = sqrt_dt * stream.next();
        y += model.kappa * (model.mean_level - y) * dt +
             model.vol * paths.dw[model.bm_index](p, i);
        paths.y(p, i + 1) = y;
      }
    }
  });
  return paths;
}

}  // namespace eqmv
