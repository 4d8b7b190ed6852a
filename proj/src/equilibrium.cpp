#include "eqmv/equilibrium.hpp"

#include <cmath>

namespace eqmv {

namespace {

// (1 - e^{-r tau}) / r, stable through r = 0.
double psi(double r, double tau) {
  const double x = r * tau;
  if (std::abs(x) < 1e-8) return tau * (1.0 - 0.5 * x + x * x / 6.0);
  return (1.0 - std::exp(-x)) / r;
}

constexpr double kRelTol = 1e-9;

bool strictly_greater(double lhs, double rhs) {
  return lhs - rhs > kRelTol * std::max({1.0, std::abs(lhs), std::abs(rhs)});
}

bool approximately_equal(double lhs, double rhs) {
  return std::abs(lhs - rhs) <= kRelTol * std::max({1.0, std::abs(lhs), std::abs(rhs)});
}

}  // namespace

DeterministicEquilibrium::DeterministicEquilibrium(const DeterministicCoefficients& coeffs,
                                                   const ConeSpec& cone, double mu1)
    : coeffs_(coeffs), mu1_(mu1) {
  if (cone.dim() != coeffs.dim())
    throw std::invalid_argument("equilibrium: cone and theta dimensions differ");
  if (mu1 < 0.0) throw std::invalid_argument("equilibrium: mu1 must be nonnegative");

  const TimeGrid& grid = coeffs_.grid;
  const int n = grid.n_steps();
  const int dim = coeffs_.dim();
  const double dt = grid.dt();

  rho_.resize(n + 1);
  proj_theta_.resize(dim, n + 1);
  q_.resize(n + 1);
  a_.resize(n + 1);
  M_.resize(n + 1);
  cell_c_theta_.resize(n);
  cell_c_sq_.resize(n);
  cell_c_.resize(dim, n);

  for (int i = 0; i <= n; ++i) {
    proj_theta_.col(i) = project(cone, coeffs_.theta.col(i));
    q_[i] = proj_theta_.col(i).squaredNorm();
  }

  rho_[n] = 1.0;
  a_[n] = 1.0;
  for (int i = n - 1; i >= 0; --i) {
    const double r = coeffs_.rate[i];
    rho_[i] = rho_[i + 1] * std::exp(r * dt);
    // I_{t_i} = I_{t_{i+1}} + q_i psi(r_i, dt) / rho_{i+1}
    a_[i] = a_[i + 1] + mu1_ * q_[i] * psi(r, dt) / rho_[i + 1];
  }
  for (int i = 0; i <= n; ++i) M_[i] = rho_[i] * rho_[i] * a_[i];

  for (int i = 0; i < n; ++i) {
    const double r = coeffs_.rate[i];
    const double a = a_[i];
    const double b = a_[i + 1];
    if (q_[i] > 0.0 && mu1_ > 0.0) {
      const double log_ratio = std::log(a / b);
      cell_c_theta_[i] = log_ratio;
      cell_c_.col(i) = proj_theta_.col(i) * (log_ratio / q_[i]);
      cell_c_sq_[i] = (r / q_[i]) * (-log_ratio + (a - b) / a) +
                      (mu1_ / rho_[i + 1]) * (a - b) / (a * b);
    } else {
      cell_c_theta_[i] = 0.0;
      cell_c_sq_[i] = 0.0;
      cell_c_.col(i).setZero();
    }
  }
}

Eigen::VectorXd DeterministicEquilibrium::c_node(int i) const {
  return mu1_ * proj_theta_.col(i) / (rho_[i] * a_[i]);
}

LinearFeedbackPolicy DeterministicEquilibrium::policy() const {
  LinearFeedbackPolicy p;
  const int nodes = coeffs_.grid.n_nodes();
  p.c.resize(coeffs_.dim(), nodes);
  for (int i = 0; i < nodes; ++i) p.c.col(i) = c_node(i);
  p.exact = LinearFeedbackPolicy::ExactCellIntegrals{cell_c_theta_, cell_c_sq_, cell_c_};
  return p;
}

Eigen::VectorXd DeterministicEquilibrium::c_at(double t) const {
  const TimeGrid& grid = coeffs_.grid;
  if (t >= grid.horizon()) return c_node(grid.n_steps());
  const int i = grid.cell_index(t);
  const double tau = grid.node(i + 1) - t;
  const double r = coeffs_.rate[i];
  const double rho_t = rho_[i + 1] * std::exp(r * tau);
  const double a_t = a_[i + 1] + mu1_ * q_[i] * psi(r, tau) / rho_[i + 1];
  return mu1_ * proj_theta_.col(i) / (rho_t * a_t);
}

double DeterministicEquilibrium::M_at(double t) const {
  const TimeGrid& grid = coeffs_.grid;
  if (t >= grid.horizon()) return 1.0;
  const int i = grid.cell_index(t);
  const double tau = grid.node(i + 1) - t;
  const double r = coeffs_.rate[i];
  const double rho_t = rho_[i + 1] * std::exp(r * tau);
  const double a_t = a_[i + 1] + mu1_ * q_[i] * psi(r, tau) / rho_[i + 1];
  return rho_t * rho_t * a_t;
}

double DeterministicEquilibrium::mean_growth(int node_from, int node_to) const {
  if (node_from > node_to) throw std::invalid_argument("mean_growth: nodes out of order");
  // exp(int (r + c' theta)) = (rho_from / rho_to) * (a_from / a_to)
  return (rho_[node_from] / rho_[node_to]) * (a_[node_from] / a_[node_to]);
}

Eigen::VectorXd DeterministicEquilibrium::total_int_c() const {
  return cell_c_.rowwise().sum();
}

double DeterministicEquilibrium::total_int_c_sq() const { return cell_c_sq_.sum(); }

PolicyEvaluation DeterministicEquilibrium::evaluate(const Objective& objective) const {
  const double dt = coeffs_.grid.dt();
  double drift = 0.0;
  double drift2 = 0.0;
  for (int i = 0; i < coeffs_.grid.n_steps(); ++i) {
    const double r_dt = coeffs_.rate[i] * dt;
    drift += r_dt + cell_c_theta_[i];
    drift2 += 2.0 * r_dt + 2.0 * cell_c_theta_[i] + cell_c_sq_[i];
  }
  PolicyEvaluation out;
  out.mean_T = objective.x0 * std::exp(drift);
  const double second = objective.x0 * objective.x0 * std::exp(drift2);
  out.var_T = second - out.mean_T * out.mean_T;
  out.J0 = 0.5 * out.var_T - objective.mu1 * objective.x0 * out.mean_T;
  return out;
}

Eigen::VectorXd compute_M(const DeterministicCoefficients& coeffs, const ConeSpec& cone,
                          double mu1) {
  return DeterministicEquilibrium(coeffs, cone, mu1).M();
}

LinearFeedbackPolicy equilibrium_policy(const DeterministicCoefficients& coeffs,
                                        const ConeSpec& cone, double mu1) {
  return DeterministicEquilibrium(coeffs, cone, mu1).policy();
}

EquilibriumSolution solve_equilibrium(const DeterministicCoefficients& coeffs,
                                      const ConeSpec& cone, const Objective& objective) {
  DeterministicEquilibrium engine(coeffs, cone, objective.mu1);
  EquilibriumSolution out;
  out.M = engine.M();
  out.policy = engine.policy();
  const PolicyEvaluation eval = engine.evaluate(objective);
  out.mean_T = eval.mean_T;
  out.var_T = eval.var_T;
  out.J0 = eval.J0;
  out.int_c = engine.total_int_c();
  out.int_c_sq = engine.total_int_c_sq();
  return out;
}

PolicyEvaluation evaluate_linear_feedback(const DeterministicCoefficients& coeffs,
                                          const LinearFeedbackPolicy& policy,
                                          const Objective& objective) {
  if (policy.is_affine())
    throw std::invalid_argument("evaluate_linear_feedback: policy must have zero intercept");
  if (policy.c.rows() != coeffs.dim() || policy.c.cols() != coeffs.grid.n_nodes())
    throw std::invalid_argument("evaluate_linear_feedback: policy shape mismatch");
  const double dt = coeffs.grid.dt();
  double drift = 0.0;
  double drift2 = 0.0;
  for (int i = 0; i < coeffs.grid.n_steps(); ++i) {
    const double r_dt = coeffs.rate[i] * dt;
    double c_theta;
    double c_sq;
    if (policy.exact) {
      c_theta = policy.exact->c_dot_theta[i];
      c_sq = policy.exact->c_squared[i];
    } else {
      c_theta = policy.c.col(i).dot(coeffs.theta.col(i)) * dt;
      c_sq = policy.c.col(i).squaredNorm() * dt;
    }
    drift += r_dt + c_theta;
    drift2 += 2.0 * r_dt + 2.0 * c_theta + c_sq;
  }
  PolicyEvaluation out;
  out.mean_T = objective.x0 * std::exp(drift);
  const double second = objective.x0 * objective.x0 * std::exp(drift2);
  out.var_T = second - out.mean_T * out.mean_T;
  out.J0 = 0.5 * out.var_T - objective.mu1 * objective.x0 * out.mean_T;
  return out;
}

PrecommitSolution precommit_solution(const DeterministicCoefficients& coeffs,
                                     const ConeSpec& cone, const Objective& objective) {
  if (cone.dim() != coeffs.dim())
    throw std::invalid_argument("precommit: cone and theta dimensions differ");
  const TimeGrid& grid = coeffs.grid;
  const int n = grid.n_steps();
  const double dt = grid.dt();

  double int_r = 0.0;
  double int_q = 0.0;
  Eigen::MatrixXd proj(coeffs.dim(), n + 1);
  for (int i = 0; i <= n; ++i) proj.col(i) = project(cone, coeffs.theta.col(i));
  for (int i = 0; i < n; ++i) {
    int_r += coeffs.rate[i] * dt;
    int_q += proj.col(i).squaredNorm() * dt;
  }

  const double lambda = objective.mu1 * objective.x0 + objective.mu2;
  const double h0 = objective.x0 + lambda * std::exp(int_q - int_r);

  PrecommitSolution out;
  out.policy.c = -proj;
  Eigen::MatrixXd intercept(coeffs.dim(), n + 1);
  double forward_r = 0.0;  // int_0^{t_i} r
  for (int i = 0; i <= n; ++i) {
    intercept.col(i) = std::exp(forward_r) * h0 * proj.col(i);
    if (i < n) forward_r += coeffs.rate[i] * dt;
  }
  out.policy.intercept = intercept;

  const double growth = std::exp(int_q);
  out.V_pre = -0.5 * lambda * lambda * (growth - 1.0) -
              lambda * std::exp(int_r) * objective.x0;
  out.mean_T = objective.x0 * std::exp(int_r) + lambda * (growth - 1.0);
  out.var_T = lambda * lambda * (growth - 1.0);
  return out;
}

StrategyComparison compare_strategies(const DeterministicCoefficients& coeffs,
                                      const ConeSpec& cone, const Objective& objective,
                                      const LinearFeedbackPolicy* user_feedback) {
  if (objective.mu2 != 0.0)
    throw std::invalid_argument(
        "compare_strategies: the dynamic objective has gamma_t(x) = mu1 x; mu2 must be 0");

  StrategyComparison out;
  const EquilibriumSolution eq = solve_equilibrium(coeffs, cone, objective);
  out.equilibrium = PolicyEvaluation{eq.mean_T, eq.var_T, eq.J0};

  const PrecommitSolution pre = precommit_solution(coeffs, cone, objective);
  const double j_pre = pre.V_pre;  // equals J(0, x0; u_pre) since mu2 = 0
  out.precommit = PolicyEvaluation{pre.mean_T, pre.var_T, j_pre};

  double int_q = 0.0;
  for (int i = 0; i < coeffs.grid.n_steps(); ++i)
    int_q += project(cone, coeffs.theta.col(i)).squaredNorm() * coeffs.grid.dt();

  if (int_q > 0.0) {
    if (!strictly_greater(eq.J0, j_pre)) {
      out.ordering_holds = false;
      out.violations.push_back("expected J_eq > J_pre on an instance with investable premium");
    }
  } else if (!approximately_equal(eq.J0, j_pre)) {
    out.ordering_holds = false;
    out.violations.push_back("expected J_eq = J_pre when Proj_K(theta) vanishes");
  }

  if (user_feedback) {
    const PolicyEvaluation fbe =
        evaluate_linear_feedback(coeffs, *user_feedback, objective);
    out.user_feedback = fbe;
    if (int_q > 0.0 && !strictly_greater(fbe.J0, j_pre) &&
        !approximately_equal(fbe.J0, j_pre)) {
      out.ordering_holds = false;
      out.violations.push_back("expected J_fbe > J_pre for the supplied feedback");
    }
  }
  return out;
}

AdjointProcesses::AdjointProcesses(const DeterministicCoefficients& coeffs,
                                   const ConeSpec& cone, const Objective& objective,
                                   const LinearFeedbackPolicy* policy)
    : coeffs_(coeffs), mu1_(objective.mu1) {
  const TimeGrid& grid = coeffs_.grid;
  const int n = grid.n_steps();
  const double dt = grid.dt();

  rho_.resize(n + 1);
  rho_[n] = 1.0;
  for (int i = n - 1; i >= 0; --i) rho_[i] = rho_[i + 1] * std::exp(coeffs_.rate[i] * dt);

  if (policy == nullptr) {
    DeterministicEquilibrium engine(coeffs_, cone, mu1_);
    M_ = engine.M();
    c_ = engine.policy().c;
    log_growth_.resize(n + 1);
    log_growth_[0] = 0.0;
    for (int i = 0; i < n; ++i)
      log_growth_[i + 1] = log_growth_[i] + std::log(engine.mean_growth(i, i + 1));
  } else {
    if (policy->is_affine())
      throw std::invalid_argument("adjoint: policy must be pure linear feedback");
    c_ = policy->c;
    M_.resize(n + 1);
    M_[n] = 1.0;
    log_growth_.resize(n + 1);
    log_growth_[0] = 0.0;
    for (int i = n - 1; i >= 0; --i) {
      const double drive = 2.0 * coeffs_.rate[i] + coeffs_.theta.col(i).dot(c_.col(i));
      M_[i] = M_[i + 1] * std::exp(drive * dt);
    }
    for (int i = 0; i < n; ++i) {
      const double growth = coeffs_.rate[i] + coeffs_.theta.col(i).dot(c_.col(i));
      log_growth_[i + 1] = log_growth_[i] + growth * dt;
    }
  }
}

double AdjointProcesses::p(int s_node, int t_node, double x_s, double x_t) const {
  // E_t[M_s X_s] = M_s X_t exp(int_t^s (r + c' theta))
  const double cond_mean =
      M_[s_node] * x_t * std::exp(log_growth_[s_node] - log_growth_[t_node]);
  return M_[s_node] * x_s - cond_mean - rho_[s_node] * mu1_ * x_t;
}

Eigen::VectorXd AdjointProcesses::k(int s_node, double x_s) const {
  return M_[s_node] * c_.col(s_node) * x_s;
}

Eigen::VectorXd AdjointProcesses::lambda(int s_node, int t_node, double x_s,
                                         double x_t) const {
  return p(s_node, t_node, x_s, x_t) * coeffs_.theta.col(s_node) + k(s_node, x_s);
}

Eigen::VectorXd AdjointProcesses::lambda_tt(int t_node, double x_t) const {
  return x_t * (M_[t_node] * c_.col(t_node) - mu1_ * rho_[t_node] * coeffs_.theta.col(t_node));
}

}  // namespace eqmv
