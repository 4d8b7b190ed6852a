#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace eqmv {

/// Raised when the active-set iteration hits its cap before the KKT
/// conditions are met; carries the residual for diagnosis.
class NnlsError : public std::runtime_error {
 public:
  NnlsError(const std::string& what, double kkt_residual)
      : std::runtime_error(what), kkt_residual_(kkt_residual) {}
  double kkt_residual() const { return kkt_residual_; }

 private:
  double kkt_residual_;
};

struct NnlsResult {
  Eigen::VectorXd x;
  double kkt_residual = 0.0;
  int iterations = 0;
};

/// Lawson-Hanson active-set solve of min_{x >= 0} |A x - b|^2.
/// Columns of A may be linearly dependent. `tol` bounds the positive part of
/// the gradient on the inactive set at termination. `max_iter < 0` selects
/// the default cap of 100 * cols(A).
NnlsResult nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                double tol = 1e-12, int max_iter = -1);

}  // namespace eqmv
