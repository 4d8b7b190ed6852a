#include "eqmv/bsde.hpp"

#include <cmath>

#include "eqmv/rng.hpp"

namespace eqmv {

namespace {

Eigen::VectorXd basis_row(const BsdeNodeBasis& basis, double y) {
  Eigen::VectorXd row(basis.degree + 1);
  const double z = (y - basis.mean) / basis.scale;
  double p = 1.0;
  for (int k = 0; k <= basis.degree; ++k) {
    row[k] = p;
    p *= z;
  }
  return row;
}

// Resample the model onto a grid with the requested number of steps.
FactorThetaModel regrid(const FactorThetaModel& model, int n_steps) {
  if (model.grid.n_steps() == n_steps) return model;
  TimeGrid grid(model.grid.horizon(), n_steps);
  Eigen::VectorXd rate(grid.n_nodes());
  for (int i = 0; i <= n_steps; ++i) {
    const double t = grid.node(i);
    const int cell = i == n_steps ? model.grid.n_steps() : model.grid.cell_index(t);
    rate[i] = model.rate[cell];
  }
  return FactorThetaModel(grid, rate, model.kappa, model.mean_level, model.vol,
                          model.y0, model.bm_index, model.theta_base, model.beta,
                          model.rate_max, model.theta_max);
}

struct Regression {
  Eigen::VectorXd coef;
  double rmse = 0.0;
};

Regression fit(const Eigen::MatrixXd& phi, const Eigen::VectorXd& target, double ridge) {
  const Eigen::Index k = phi.cols();
  Eigen::MatrixXd gram = phi.transpose() * phi;
  gram.diagonal().array() += ridge;
  Regression out;
  out.coef = gram.ldlt().solve(phi.transpose() * target);
  if (!out.coef.allFinite())
    throw std::runtime_error("bsde: regression ill-conditioned; lower basis_degree");
  const Eigen::VectorXd resid = target - phi * out.coef;
  out.rmse = std::sqrt(resid.squaredNorm() / static_cast<double>(target.size()));
  (void)k;
  return out;
}

}  // namespace

double BsdeSolution::M_at(int node, double y) const {
  return basis_row(basis_[node], y).dot(m_coef_.col(node).head(basis_[node].degree + 1));
}

Eigen::VectorXd BsdeSolution::U_at(int node, double y) const {
  return u_coef_[node].leftCols(basis_[node].degree + 1) * basis_row(basis_[node], y);
}

double positivity_floor(const FactorThetaModel& model, double mu1) {
  if (mu1 < 0.0) throw std::invalid_argument("positivity_floor: mu1 must be nonnegative");
  const double sup_r = model.rate.cwiseAbs().maxCoeff();
  return std::exp(-2.0 * sup_r * model.grid.horizon());
}

BsdeSolution solve_quadratic_bsde(const FactorThetaModel& model_in, const ConeSpec& cone,
                                  double mu1, const BsdeConfig& config) {
  if (config.n_paths < 1000) throw std::invalid_argument("bsde: n_paths must be >= 1000");
  if (config.n_steps < 10) throw std::invalid_argument("bsde: n_steps must be >= 10");
  if (config.basis_degree < 1 || config.basis_degree > 5)
    throw std::invalid_argument("bsde: basis_degree must be in [1, 5]");
  if (cone.dim() != model_in.dim())
    throw std::invalid_argument("bsde: cone and model dimensions differ");
  if (mu1 < 0.0) throw std::invalid_argument("bsde: mu1 must be nonnegative");

  const FactorThetaModel model = regrid(model_in, config.n_steps);
  const TimeGrid& grid = model.grid;
  const int n = grid.n_steps();
  const int n_paths = config.n_paths;
  const int d = model.dim();
  const double dt = grid.dt();
  const double floor =
      config.floor_c > 0.0 ? config.floor_c : positivity_floor(model, mu1);

  const FactorPaths paths = sample_factor_paths(model, n_paths, config.seed,
                                                config.threads);

  Eigen::VectorXd rho_nodes(n + 1);
  rho_nodes[n] = 1.0;
  for (int i = n - 1; i >= 0; --i)
    rho_nodes[i] = rho_nodes[i + 1] * std::exp(model.rate[i] * dt);

  std::vector<BsdeNodeBasis> bases(n + 1);
  Eigen::MatrixXd m_coef = Eigen::MatrixXd::Zero(config.basis_degree + 1, n + 1);
  std::vector<Eigen::MatrixXd> u_coef(
      n + 1, Eigen::MatrixXd::Zero(d, config.basis_degree + 1));
  m_coef(0, n) = 1.0;

  BsdeDiagnostics diag;
  diag.residual_mean.resize(n);
  diag.residual_se.resize(n);
  diag.regression_rmse.resize(n);
  diag.min_M_node.resize(n + 1);
  diag.max_abs_U_node = Eigen::VectorXd::Zero(n + 1);
  diag.min_M_node[n] = 1.0;
  diag.min_M = 1.0;

  Eigen::VectorXd m_next = Eigen::VectorXd::Ones(n_paths);
  Eigen::VectorXd m_now(n_paths);
  Eigen::MatrixXd u_now(n_paths, d);
  std::vector<double> resid(n_paths);

  for (int i = n - 1; i >= 0; --i) {
    const auto y = paths.y.col(i);

    BsdeNodeBasis basis;
    basis.mean = y.mean();
    const double sd = std::sqrt((y.array() - basis.mean).square().mean());
    if (sd > 1e-12 * (1.0 + std::abs(basis.mean))) {
      basis.scale = sd;
      basis.degree = config.basis_degree;
    }
    bases[i] = basis;

    Eigen::MatrixXd phi(n_paths, basis.degree + 1);
    for (int p = 0; p < n_paths; ++p)
      phi.row(p) = basis_row(basis, y[p]).transpose();

    const Regression ce_fit = fit(phi, m_next, config.ridge);
    diag.regression_rmse[i] = ce_fit.rmse;
    const Eigen::VectorXd ce = phi * ce_fit.coef;
    const Eigen::VectorXd centered = m_next - ce;

    for (int j = 0; j < d; ++j) {
      const Eigen::VectorXd target = centered.cwiseProduct(paths.dw[j].col(i)) / dt;
      const Regression u_fit = fit(phi, target, config.ridge);
      u_coef[i].row(j).head(basis.degree + 1) = u_fit.coef.transpose();
      u_now.col(j) = phi * u_fit.coef;
    }

    const double rho_i = rho_nodes[i];
    const double r_i = model.rate[i];
    std::atomic<int> bind_count{0};
    std::atomic<bool> diverged{false};
    parallel_for(n_paths, config.threads, [&](std::size_t begin, std::size_t end) {
      int local_bind = 0;
      for (std::size_t p = begin; p < end; ++p) {
        const Eigen::VectorXd theta = model.theta_at(y[p]);
        const Eigen::VectorXd u = u_now.row(p).transpose();
        double m = ce[p];
        bool converged = false;
        for (int it = 0; it < config.fixed_point_max_iter; ++it) {
          const double mc = std::max(m, floor);
          const Eigen::VectorXd alpha =
              project(cone, (rho_i * mu1 * theta - u) / mc);
          const double drift = 2.0 * r_i * m + (theta * mc + u).dot(alpha);
          const double m_new = ce[p] + dt * drift;
          if (std::abs(m_new - m) <= config.fixed_point_tol * std::max(1.0, std::abs(m))) {
            m = m_new;
            converged = true;
            break;
          }
          m = m_new;
        }
        if (!converged) {
          diverged.store(true, std::memory_order_relaxed);
          return;
        }
        if (m < floor) ++local_bind;
        m_now[p] = m;
        double u_dw = 0.0;
        for (int j = 0; j < d; ++j) u_dw += u[j] * paths.dw[j](p, i);
        resid[p] = centered[p] - u_dw;
      }
      bind_count.fetch_add(local_bind, std::memory_order_relaxed);
    });
    if (diverged.load())
      throw std::runtime_error("bsde: implicit step did not converge at node " +
                               std::to_string(i));
    diag.floor_bind_count += bind_count.load();

    const double res_mean =
        pairwise_sum(std::span<const double>(resid.data(), resid.size())) / n_paths;
    std::vector<double> res_sq(n_paths);
    for (int p = 0; p < n_paths; ++p) {
      const double dres = resid[p] - res_mean;
      res_sq[p] = dres * dres;
    }
    const double res_var =
        pairwise_sum(std::span<const double>(res_sq.data(), res_sq.size())) /
        std::max(1, n_paths - 1);
    diag.residual_mean[i] = res_mean;
    diag.residual_se[i] = std::sqrt(res_var / n_paths);

    const Regression m_fit = fit(phi, m_now, config.ridge);
    m_coef.col(i).head(basis.degree + 1) = m_fit.coef;

    diag.min_M_node[i] = m_now.minCoeff();
    diag.max_abs_U_node[i] = u_now.rowwise().norm().maxCoeff();
    diag.min_M = std::min(diag.min_M, diag.min_M_node[i]);
    diag.max_abs_U = std::max(diag.max_abs_U, diag.max_abs_U_node[i]);

    m_next = m_now;
  }

  bases[n] = BsdeNodeBasis{};
  diag.floor_binding = diag.floor_bind_count > 0;

  return BsdeSolution(grid, floor, std::move(bases), std::move(m_coef),
                      std::move(u_coef), std::move(diag));
}

StateFeedbackPolicy::StateFeedbackPolicy(const FactorThetaModel& model,
                                         const ConeSpec& cone, double mu1,
                                         BsdeSolution solution)
    : model_(regrid(model, solution.grid().n_steps())), cone_(cone), mu1_(mu1),
      solution_(std::move(solution)) {
  const int n = solution_.grid().n_steps();
  const double dt = solution_.grid().dt();
  rho_.resize(n + 1);
  rho_[n] = 1.0;
  for (int i = n - 1; i >= 0; --i) rho_[i] = rho_[i + 1] * std::exp(model_.rate[i] * dt);
}

Eigen::VectorXd StateFeedbackPolicy::alpha(int node, double y, bool* clamped) const {
  double m = solution_.M_at(node, y);
  if (clamped) *clamped = false;
  if (m < solution_.floor()) {
    m = solution_.floor();
    if (clamped) *clamped = true;
  }
  const Eigen::VectorXd theta = model_.theta_at(y);
  const Eigen::VectorXd u = solution_.U_at(node, y);
  return project(cone_, (rho_[node] * mu1_ * theta - u) / m);
}

StateFeedbackPolicy equilibrium_policy_random(BsdeSolution solution,
                                              const FactorThetaModel& model,
                                              const ConeSpec& cone, double mu1) {
  return StateFeedbackPolicy(model, cone, mu1, std::move(solution));
}

}  // namespace eqmv
