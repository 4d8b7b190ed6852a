#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "eqmv/market.hpp"

namespace eqmv {

/// Feedback u_t = c_t X_t (+ g_t when an intercept is present), with c and g
/// step paths on the grid. Policies produced by the deterministic engine
/// carry exact per-cell integrals of the underlying smooth feedback so that
/// evaluation does not pick up step-sampling error.
struct LinearFeedbackPolicy {
  Eigen::MatrixXd c;                          // dim x n_nodes
  std::optional<Eigen::MatrixXd> intercept;   // dim x n_nodes

  struct ExactCellIntegrals {
    Eigen::VectorXd c_dot_theta;  // per cell: integral of c' theta
    Eigen::VectorXd c_squared;    // per cell: integral of |c|^2
    Eigen::MatrixXd c;            // dim x n_cells: integral of c
  };
  std::optional<ExactCellIntegrals> exact;

  bool is_affine() const { return intercept.has_value(); }
};

struct PolicyEvaluation {
  double mean_T = 0.0;
  double var_T = 0.0;
  double J0 = 0.0;
};

struct EquilibriumSolution {
  Eigen::VectorXd M;            // n_nodes, M_T = 1
  LinearFeedbackPolicy policy;  // c_s = mu1 rho_s Proj_K(theta_s) / M_s
  double mean_T = 0.0;
  double var_T = 0.0;
  double J0 = 0.0;
  Eigen::VectorXd int_c;        // integral of c over [0, T]
  double int_c_sq = 0.0;        // integral of |c|^2 over [0, T]
};

struct PrecommitSolution {
  LinearFeedbackPolicy policy;  // slope -Proj_K(theta_s), intercept path
  double V_pre = 0.0;
  double mean_T = 0.0;
  double var_T = 0.0;
};

struct StrategyComparison {
  PolicyEvaluation equilibrium;
  PolicyEvaluation precommit;
  std::optional<PolicyEvaluation> user_feedback;
  bool ordering_holds = true;
  std::vector<std::string> violations;
};

/// Exact deterministic-coefficient engine. All node values and the cell
/// integrals of the equilibrium feedback are evaluated in closed form, so
/// results do not depend on grid refinement beyond the coefficient
/// resolution itself.
class DeterministicEquilibrium {
 public:
  DeterministicEquilibrium(const DeterministicCoefficients& coeffs,
                           const ConeSpec& cone, double mu1);

  const DeterministicCoefficients& coeffs() const { return coeffs_; }
  const Eigen::VectorXd& M() const { return M_; }
  const Eigen::VectorXd& rho_nodes() const { return rho_; }
  const Eigen::MatrixXd& proj_theta() const { return proj_theta_; }
  double mu1() const { return mu1_; }

  LinearFeedbackPolicy policy() const;
  Eigen::VectorXd c_node(int i) const;

  /// Feedback value at an arbitrary time (exact within the coefficient cell).
  Eigen::VectorXd c_at(double t) const;
  double M_at(double t) const;

  PolicyEvaluation evaluate(const Objective& objective) const;

  /// exp(integral over [t_i, t_j] of (r + c' theta)), the conditional mean
  /// growth factor of the equilibrium wealth.
  double mean_growth(int node_from, int node_to) const;

  Eigen::VectorXd total_int_c() const;
  double total_int_c_sq() const;

 private:
  DeterministicCoefficients coeffs_;
  double mu1_;
  Eigen::VectorXd rho_;         // nodes
  Eigen::MatrixXd proj_theta_;  // dim x n_nodes
  Eigen::VectorXd q_;           // |Proj theta|^2 at nodes
  Eigen::VectorXd a_;           // 1 + mu1 * I at nodes
  Eigen::VectorXd M_;           // nodes
  Eigen::VectorXd cell_c_theta_;   // per-cell integral of c' theta
  Eigen::VectorXd cell_c_sq_;      // per-cell integral of |c|^2
  Eigen::MatrixXd cell_c_;         // dim x n_cells
};

/// M_s = e^{2 int r} (1 + mu1 int e^{-int r} |Proj_K theta|^2), at the nodes.
Eigen::VectorXd compute_M(const DeterministicCoefficients& coeffs, const ConeSpec& cone,
                          double mu1);

LinearFeedbackPolicy equilibrium_policy(const DeterministicCoefficients& coeffs,
                                        const ConeSpec& cone, double mu1);

EquilibriumSolution solve_equilibrium(const DeterministicCoefficients& coeffs,
                                      const ConeSpec& cone, const Objective& objective);

/// Terminal mean, variance and J(0, x0; u) for a pure linear feedback.
/// Uses the policy's exact cell integrals when present, otherwise the step
/// sums (exact for step policies).
PolicyEvaluation evaluate_linear_feedback(const DeterministicCoefficients& coeffs,
                                          const LinearFeedbackPolicy& policy,
                                          const Objective& objective);

PrecommitSolution precommit_solution(const DeterministicCoefficients& coeffs,
                                     const ConeSpec& cone, const Objective& objective);

StrategyComparison compare_strategies(const DeterministicCoefficients& coeffs,
                                      const ConeSpec& cone, const Objective& objective,
                                      const LinearFeedbackPolicy* user_feedback = nullptr);

/// Adjoint pair (p, k) in the representation
///   p(s;t) = M_s X_s - E_t[M_s X_s] - rho_s mu1 X_t,   k(s) = M_s c_s X_s,
/// for a given linear feedback (the equilibrium by default). For a step
/// policy c the scalar M solves the linear adjoint equation, i.e.
/// M_s = exp(int_s^T (2r + theta' c)).
class AdjointProcesses {
 public:
  AdjointProcesses(const DeterministicCoefficients& coeffs, const ConeSpec& cone,
                   const Objective& objective,
                   const LinearFeedbackPolicy* policy = nullptr);

  const Eigen::VectorXd& M() const { return M_; }

  double p(int s_node, int t_node, double x_s, double x_t) const;
  Eigen::VectorXd k(int s_node, double x_s) const;
  Eigen::VectorXd lambda(int s_node, int t_node, double x_s, double x_t) const;
  /// Lambda(t;t) = X_t (M_t c_t - mu1 rho_t theta_t).
  Eigen::VectorXd lambda_tt(int t_node, double x_t) const;

 private:
  DeterministicCoefficients coeffs_;
  double mu1_;
  Eigen::VectorXd rho_;
  Eigen::VectorXd M_;
  Eigen::MatrixXd c_;
  Eigen::VectorXd log_growth_;  // cumulative log mean-growth at nodes
};

}  // namespace eqmv
