#include "mftma/manifold.hpp"

#include <Eigen/SVD>

#include <sstream>

namespace mftma {

void ManifoldSet::validate() const {
  if (manifolds.size() < 2) {
    throw ConfigError("ManifoldSet needs at least two manifolds, got " +
                      std::to_string(manifolds.size()));
  }
  if (class_ids.size() != manifolds.size()) {
    throw ConfigError("ManifoldSet class_ids/manifolds size mismatch");
  }
  if (ambient_dim < 1) {
    throw ConfigError("ManifoldSet ambient dimension must be >= 1");
  }
  for (std::size_t i = 0; i < manifolds.size(); ++i) {
    const Matrix& m = manifolds[i];
    if (m.rows() < 1) {
      throw ConfigError("manifold " + std::to_string(i) + " has no points");
    }
    if (m.cols() != ambient_dim) {
      std::ostringstream os;
      os << "manifold " << i << " has " << m.cols()
         << " columns, expected ambient dimension " << ambient_dim;
      throw ConfigError(os.str());
    }
    if (!m.allFinite()) {
      throw ConfigError("manifold " + std::to_string(i) +
                        " contains a non-finite value");
    }
  }
}

Matrix ManifoldSet::centers() const {
  Matrix c(size(), ambient_dim);
  for (Eigen::Index i = 0; i < size(); ++i) {
    c.row(i) = manifolds[static_cast<std::size_t>(i)].colwise().mean();
  }
  return c;
}

namespace {

// Orthonormal row basis of `rows`, keeping singular directions above the
// rank tolerance.
Matrix row_space_basis(const Matrix& rows, double tolerance) {
  Eigen::JacobiSVD<Matrix> svd(rows, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double cutoff =
      tolerance * std::max(1.0, sv.size() > 0 ? sv[0] : 0.0);
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv[i] > cutoff) ++rank;
  }
  return svd.matrixV().leftCols(rank).transpose();
}

}  // namespace

CenterProjectionResult project_to_center_nullspace(const ManifoldSet& set) {
  set.validate();
  constexpr double kRankTol = 1e-10;
  const Eigen::Index p = set.size();
  const Eigen::Index n = set.ambient_dim;

  CenterProjectionResult result;
  result.ambient_dim = n;

  const Matrix centers = set.centers();
  result.center_rank = row_space_basis(centers, kRankTol).rows();

  if (n <= p) {
    result.set = set;
    result.identity = true;
    result.note = "ambient dimension <= manifold count; projection skipped";
    return result;
  }

  result.set.class_ids = set.class_ids;
  result.set.ambient_dim = n;
  result.set.manifolds.resize(set.manifolds.size());
  for (Eigen::Index i = 0; i < p; ++i) {
    Matrix others(p - 1, n);
    Eigen::Index row = 0;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (j != i) others.row(row++) = centers.row(j);
    }
    const Matrix basis = row_space_basis(others, kRankTol);  // r x n
    const Matrix& points = set.manifolds[static_cast<std::size_t>(i)];
    if (basis.rows() == 0) {
      result.set.manifolds[static_cast<std::size_t>(i)] = points;
    } else {
      result.set.manifolds[static_cast<std::size_t>(i)] =
          points - (points * basis.transpose()) * basis;
    }
  }
  return result;
}

}  // namespace mftma
