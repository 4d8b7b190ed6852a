#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "eqmv/cone.hpp"

namespace eqmv {

/// Uniform grid 0 = t_0 < ... < t_n = T. Coefficient and policy paths are
/// step functions: the value stored at node i applies on [t_i, t_{i+1});
/// the value at node n is the terminal point value.
class TimeGrid {
 public:
  TimeGrid(double horizon, int n_steps) : horizon_(horizon), n_steps_(n_steps) {
    if (!(horizon > 0.0)) throw std::invalid_argument("grid: horizon must be positive");
    if (n_steps < 1) throw std::invalid_argument("grid: need at least one step");
  }

  double horizon() const { return horizon_; }
  int n_steps() const { return n_steps_; }
  int n_nodes() const { return n_steps_ + 1; }
  double dt() const { return horizon_ / n_steps_; }
  double node(int i) const { return horizon_ * i / n_steps_; }

  /// Index of the cell containing time t (t == T maps to the last cell).
  int cell_index(double t) const {
    if (t < 0.0 || t > horizon_ * (1.0 + 1e-12))
      throw std::invalid_argument("grid: time outside [0, T]");
    const int i = static_cast<int>(t / dt());
    return std::min(i, n_steps_ - 1);
  }

  /// Node index for a time expected to sit on the grid (within 1e-9 * dt).
  int node_index(double t) const {
    const double x = t / dt();
    const int i = static_cast<int>(x + 0.5);
    if (i < 0 || i > n_steps_ || std::abs(x - i) > 1e-9)
      throw std::invalid_argument("grid: time is not a grid node");
    return i;
  }

  bool operator==(const TimeGrid& other) const = default;

 private:
  double horizon_;
  int n_steps_;
};

/// Deterministic piecewise-constant interest rate and risk premium, resolved
/// onto the grid nodes.
struct DeterministicCoefficients {
  TimeGrid grid;
  Eigen::VectorXd rate;   // n_nodes entries
  Eigen::MatrixXd theta;  // dim x n_nodes
  double rate_max = 1.0;
  double theta_max = 10.0;

  DeterministicCoefficients(TimeGrid g, Eigen::VectorXd r, Eigen::MatrixXd th,
                            double r_max = 1.0, double th_max = 10.0);

  int dim() const { return static_cast<int>(theta.rows()); }
};

/// exp(integral of r over [s, T]), exact for the piecewise-constant rate.
double rho(const DeterministicCoefficients& coeffs, double s);

/// integral over [s, T] of |Proj_K(theta_v)|^2 dv, exact.
double integral_proj_theta_sq(const DeterministicCoefficients& coeffs,
                              const ConeSpec& cone, double s);

/// Risk premium driven by a scalar OU factor
///   dY = kappa (mean_level - Y) dt + vol dB,  B = W[bm_index],
/// mapped through theta(t, y) = clip(theta_base + beta y) component-wise to
/// [-theta_max, theta_max]. vol = 0 reduces to a deterministic premium.
struct FactorThetaModel {
  TimeGrid grid;
  Eigen::VectorXd rate;  // n_nodes, deterministic as in the deterministic case
  double kappa = 0.0;
  double mean_level = 0.0;
  double vol = 0.0;
  double y0 = 0.0;
  int bm_index = 0;
  Eigen::VectorXd theta_base;
  Eigen::VectorXd beta;
  double rate_max = 1.0;
  double theta_max = 10.0;

  FactorThetaModel(TimeGrid g, Eigen::VectorXd r, double kappa_, double mean_level_,
                   double vol_, double y0_, int bm_index_, Eigen::VectorXd base,
                   Eigen::VectorXd loading, double r_max = 1.0, double th_max = 10.0);

  int dim() const { return static_cast<int>(theta_base.size()); }

  Eigen::VectorXd theta_at(double y) const {
    return (theta_base + beta * y).cwiseMax(-theta_max).cwiseMin(theta_max);
  }

  /// Deterministic Euler path of Y on the grid (the exact path when vol = 0).
  Eigen::VectorXd deterministic_factor_path() const;

  /// The vol = 0 limit as deterministic coefficients on the same grid.
  DeterministicCoefficients to_deterministic() const;
};

/// Mean-variance objective data: gamma_t(x) = mu1 x for the dynamic
/// problem; the precommitted problem uses gamma(x0) = mu1 x0 + mu2.
struct Objective {
  double mu1;
  double mu2;
  double x0;

  Objective(double mu1_, double mu2_, double x0_) : mu1(mu1_), mu2(mu2_), x0(x0_) {
    if (!(x0 > 0.0)) throw std::invalid_argument("objective: x0 must be positive");
    if (mu1 < 0.0) throw std::invalid_argument("objective: mu1 must be nonnegative");
  }
};

/// Sampled factor paths plus the Brownian increments that produced them, so
/// downstream consumers reuse the same randomness.
struct FactorPaths {
  int n_paths = 0;
  Eigen::MatrixXd y;                  // n_paths x n_nodes
  std::vector<Eigen::MatrixXd> dw;    // per Brownian coordinate: n_paths x n_steps
};

FactorPaths sample_factor_paths(const FactorThetaModel& model, int n_paths,
                                std::uint64_t seed, int threads = 1);

}  // namespace eqmv
