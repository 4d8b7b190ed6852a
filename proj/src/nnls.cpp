#include "eqmv/nnls.hpp"

#include <limits>
#include <vector>

namespace eqmv {

namespace {

// Least squares restricted to the passive columns, minimum-norm via SVD so
// duplicated generators do not blow up the coefficient vector.
Eigen::VectorXd solve_passive(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                              const std::vector<int>& passive) {
  Eigen::MatrixXd Ap(A.rows(), static_cast<Eigen::Index>(passive.size()));
  for (std::size_t j = 0; j < passive.size(); ++j) Ap.col(j) = A.col(passive[j]);
  return Ap.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(b);
}

}  // namespace

NnlsResult nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, double tol,
                int max_iter) {
  const int n = static_cast<int>(A.cols());
  if (A.rows() != b.size()) throw std::invalid_argument("nnls: dimension mismatch");
  if (max_iter < 0) max_iter = 100 * n;

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  std::vector<bool> in_passive(n, false);
  std::vector<int> passive;
  // Scale-aware slack on the dual feasibility test.
  const double grad_tol = tol * std::max(1.0, A.cwiseAbs().maxCoeff() * b.norm());

  int iter = 0;
  for (;;) {
    const Eigen::VectorXd w = A.transpose() * (b - A * x);
    int best = -1;
    double best_w = grad_tol;
    for (int j = 0; j < n; ++j) {
      if (!in_passive[j] && w[j] > best_w) {
        best_w = w[j];
        best = j;
      }
    }
    if (best < 0) {
      double kkt = 0.0;
      for (int j = 0; j < n; ++j)
        if (!in_passive[j]) kkt = std::max(kkt, w[j]);
      return NnlsResult{x, kkt, iter};
    }
    in_passive[best] = true;
    passive.push_back(best);

    for (;;) {
      if (++iter > max_iter) {
        const double kkt = (A.transpose() * (b - A * x)).maxCoeff();
        throw NnlsError("nnls: active-set iteration cap exceeded", kkt);
      }
      Eigen::VectorXd z = solve_passive(A, b, passive);
      double min_z = std::numeric_limits<double>::infinity();
      for (Eigen::Index k = 0; k < z.size(); ++k) min_z = std::min(min_z, z[k]);
      if (min_z > 0.0) {
        x.setZero();
        for (std::size_t k = 0; k < passive.size(); ++k) x[passive[k]] = z[k];
        break;
      }
      // Step toward z staying feasible, then drop the columns that hit zero.
      double alpha = 1.0;
      for (std::size_t k = 0; k < passive.size(); ++k) {
        if (z[k] <= 0.0) {
          const double xk = x[passive[k]];
          const double denom = xk - z[k];
          if (denom > 0.0) alpha = std::min(alpha, xk / denom);
        }
      }
      for (std::size_t k = 0; k < passive.size(); ++k) {
        const int j = passive[k];
        x[j] += alpha * (z[k] - x[j]);
      }
      std::vector<int> kept;
      for (std::size_t k = 0; k < passive.size(); ++k) {
        const int j = passive[k];
        if (z[k] <= 0.0 && x[j] <= 1e-14) {
          x[j] = 0.0;
          in_passive[j] = false;
        } else {
          kept.push_back(j);
        }
      }
      if (kept.size() == passive.size()) {
        // No column left despite a nonpositive coordinate; force the worst out.
        std::size_t drop = 0;
        double worst = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < passive.size(); ++k) {
          if (z[k] < worst) {
            worst = z[k];
            drop = k;
          }
        }
        const int j = passive[drop];
        x[j] = 0.0;
        in_passive[j] = false;
        kept.erase(kept.begin() + static_cast<std::ptrdiff_t>(drop));
      }
      passive = std::move(kept);
      if (passive.empty()) {
        x.setZero();
        break;
      }
    }
  }
}

}  // namespace eqmv
