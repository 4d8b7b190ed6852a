#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "eqmv/cone.hpp"
#include "eqmv/market.hpp"

namespace eqmv {

struct BsdeConfig {
  int n_paths = 10000;
  int n_steps = 50;
  int basis_degree = 3;
  double floor_c = 0.0;  // <= 0 selects the positivity_floor default
  std::uint64_t seed = 0;
  int threads = 1;
  double fixed_point_tol = 1e-10;
  int fixed_point_max_iter = 50;
  double ridge = 1e-10;
};

struct BsdeDiagnostics {
  double min_M = 0.0;
  double max_abs_U = 0.0;
  int floor_bind_count = 0;
  bool floor_binding = false;
  Eigen::VectorXd residual_mean;    // per step: mean of M_{i+1} - M_i + dt f - U'dW
  Eigen::VectorXd residual_se;
  Eigen::VectorXd regression_rmse;  // per step: continuation-fit RMSE
  Eigen::VectorXd min_M_node;       // per node
  Eigen::VectorXd max_abs_U_node;   // per node (terminal entry 0)
};

/// Per-node standardization of the regressor Y; a degenerate cross-section
/// (e.g. vol = 0, or the initial node) falls back to the constant basis.
struct BsdeNodeBasis {
  double mean = 0.0;
  double scale = 1.0;
  int degree = 0;
};

/// Discretized solution of the quadratic BSDE
///   dM = -[2 r M + (theta M + U)' Proj_K(M^{-1}(rho mu1 theta - U))] ds + U' dW,
///   M_T = 1,
/// as per-node polynomial fits in the standardized factor.
class BsdeSolution {
 public:
  BsdeSolution(TimeGrid grid, double floor, std::vector<BsdeNodeBasis> basis,
               Eigen::MatrixXd m_coef, std::vector<Eigen::MatrixXd> u_coef,
               BsdeDiagnostics diag)
      : grid_(grid), floor_(floor), basis_(std::move(basis)),
        m_coef_(std::move(m_coef)), u_coef_(std::move(u_coef)),
        diagnostics(std::move(diag)) {}

  const TimeGrid& grid() const { return grid_; }
  double floor() const { return floor_; }

  double M_at(int node, double y) const;
  Eigen::VectorXd U_at(int node, double y) const;

  const Eigen::MatrixXd& m_coef() const { return m_coef_; }
  const std::vector<Eigen::MatrixXd>& u_coef() const { return u_coef_; }
  const std::vector<BsdeNodeBasis>& basis() const { return basis_; }

  BsdeDiagnostics diagnostics;

 private:
  TimeGrid grid_;
  double floor_;
  std::vector<BsdeNodeBasis> basis_;
  Eigen::MatrixXd m_coef_;                // (degree+1) x n_nodes
  std::vector<Eigen::MatrixXd> u_coef_;   // per node: dim x (degree+1)
};

/// Analytic lower bound on M from the Q-expectation representation:
/// exp(-2 sup|r| T). Default truncation level of the solver.
double positivity_floor(const FactorThetaModel& model, double mu1);

/// Backward regression scheme: U from the martingale increment, M implicit
/// in the truncated driver via a per-path fixed point.
BsdeSolution solve_quadratic_bsde(const FactorThetaModel& model, const ConeSpec& cone,
                                  double mu1, const BsdeConfig& config);

/// Feedback map alpha(t, y) = Proj_K(M^{-1}(rho mu1 theta - U)) with M
/// clamped at the floor, so u = alpha(t, Y) X.
class StateFeedbackPolicy {
 public:
  StateFeedbackPolicy(const FactorThetaModel& model, const ConeSpec& cone, double mu1,
                      BsdeSolution solution);

  Eigen::VectorXd alpha(int node, double y, bool* clamped = nullptr) const;
  const BsdeSolution& solution() const { return solution_; }
  const FactorThetaModel& model() const { return model_; }

 private:
  FactorThetaModel model_;
  ConeSpec cone_;
  double mu1_;
  BsdeSolution solution_;
  Eigen::VectorXd rho_;  // nodes of the solution grid
};

StateFeedbackPolicy equilibrium_policy_random(BsdeSolution solution,
                                              const FactorThetaModel& model,
                                              const ConeSpec& cone, double mu1);

}  // namespace eqmv
