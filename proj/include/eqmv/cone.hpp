#pragma once

#include <Eigen/Dense>
#include <stdexcept>

namespace eqmv {

enum class ConeKind { FullSpace, NonnegativeOrthant, Ray, FinitelyGenerated };

/// Closed convex cone in R^l. Generators of finitely generated cones are
/// stored normalized to unit norm (canonical form; the cone is unchanged).
class ConeSpec {
 public:
  static ConeSpec full_space(int dim);
  static ConeSpec nonnegative_orthant(int dim);
  static ConeSpec ray(const Eigen::VectorXd& direction);
  /// Generators are the columns of `generators`.
  static ConeSpec finitely_generated(const Eigen::MatrixXd& generators);

  ConeKind kind() const { return kind_; }
  int dim() const { return dim_; }
  const Eigen::VectorXd& direction() const { return direction_; }
  const Eigen::MatrixXd& generators() const { return generators_; }

 private:
  ConeSpec(ConeKind kind, int dim) : kind_(kind), dim_(dim) {}

  ConeKind kind_;
  int dim_;
  Eigen::VectorXd direction_;   // Ray
  Eigen::MatrixXd generators_;  // FinitelyGenerated, unit-norm columns
};

/// Euclidean projection onto the cone. Exact closed forms for the full
/// space, the orthant and rays; active-set NNLS for generated cones.
Eigen::VectorXd project(const ConeSpec& cone, const Eigen::VectorXd& a);

/// True iff |a - project(cone, a)| <= tol.
bool contains(const ConeSpec& cone, const Eigen::VectorXd& a, double tol);

/// a - project(cone, a); lies in the polar cone and is orthogonal to the
/// projection (Moreau decomposition).
Eigen::VectorXd polar_residual(const ConeSpec& cone, const Eigen::VectorXd& a);

}  // namespace eqmv
