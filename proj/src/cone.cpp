#include "eqmv/cone.hpp"

#include "eqmv/nnls.hpp"

namespace eqmv {

namespace {

void check_dim(const ConeSpec& cone, const Eigen::VectorXd& a) {
  if (a.size() != cone.dim())
    throw std::invalid_argument("cone: vector dimension " + std::to_string(a.size()) +
                                " does not match cone dimension " +
                                std::to_string(cone.dim()));
}

}  // namespace

ConeSpec ConeSpec::full_space(int dim) {
  if (dim < 1) throw std::invalid_argument("cone: dim must be >= 1");
  return ConeSpec(ConeKind::FullSpace, dim);
}

ConeSpec ConeSpec::nonnegative_orthant(int dim) {
  if (dim < 1) throw std::invalid_argument("cone: dim must be >= 1");
  return ConeSpec(ConeKind::NonnegativeOrthant, dim);
}

ConeSpec ConeSpec::ray(const Eigen::VectorXd& direction) {
  if (direction.size() < 1) throw std::invalid_argument("cone: dim must be >= 1");
  const double norm = direction.norm();
  if (!(norm > 0.0)) throw std::invalid_argument("cone: ray direction must be nonzero");
  ConeSpec spec(ConeKind::Ray, static_cast<int>(direction.size()));
  spec.direction_ = direction;
  return spec;
}

ConeSpec ConeSpec::finitely_generated(const Eigen::MatrixXd& generators) {
  if (generators.rows() < 1 || generators.cols() < 1)
    throw std::invalid_argument("cone: need at least one generator");
  ConeSpec spec(ConeKind::FinitelyGenerated, static_cast<int>(generators.rows()));
  spec.generators_ = generators;
  for (Eigen::Index j = 0; j < generators.cols(); ++j) {
    const double norm = spec.generators_.col(j).norm();
    if (!(norm > 0.0)) throw std::invalid_argument("cone: generator must be nonzero");
    spec.generators_.col(j) /= norm;
  }
  return spec;
}

Eigen::VectorXd project(const ConeSpec& cone, const Eigen::VectorXd& a) {
  check_dim(cone, a);
  switch (cone.kind()) {
    case ConeKind::FullSpace:
      return a;
    case ConeKind::NonnegativeOrthant:
      return a.cwiseMax(0.0);
    case ConeKind::Ray: {
      const Eigen::VectorXd& d = cone.direction();
      const double t = std::max(a.dot(d), 0.0) / d.squaredNorm();
      return t * d;
    }
    case ConeKind::FinitelyGenerated: {
      const NnlsResult result = nnls(cone.generators(), a);
      return cone.generators() * result.x;
    }
  }
  throw std::logic_error("cone: unknown kind");
}

bool contains(const ConeSpec& cone, const Eigen::VectorXd& a, double tol) {
  if (tol < 0.0) throw std::invalid_argument("cone: tolerance must be nonnegative");
  return (a - project(cone, a)).norm() <= tol;
}

Eigen::VectorXd polar_residual(const ConeSpec& cone, const Eigen::VectorXd& a) {
  return a - project(cone, a);
}

}  // namespace eqmv
