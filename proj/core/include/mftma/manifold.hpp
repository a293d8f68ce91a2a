#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mftma/common.hpp"

namespace mftma {

/// A set of P labeled point-cloud manifolds in a common ambient feature
/// space. Manifold i is an M_i x N matrix whose rows are feature vectors.
struct ManifoldSet {
  std::vector<Matrix> manifolds;
  std::vector<std::uint32_t> class_ids;
  Eigen::Index ambient_dim = 0;

  Eigen::Index size() const {
    return static_cast<Eigen::Index>(manifolds.size());
  }

  /// Throws ConfigError if the set violates its invariants (P >= 2,
  /// M_i >= 1, consistent ambient dimension, finite entries).
  void validate() const;

  /// Row mean of each manifold, stacked as a P x N matrix.
  Matrix centers() const;
};

/// Result of the center null-space preprocessing. `identity` is set when the
/// operation was skipped (ambient dimension too small to remove anything).
struct CenterProjectionResult {
  ManifoldSet set;
  bool identity = false;
  Eigen::Index center_rank = 0;     // numerical rank of the full center matrix
  Eigen::Index ambient_dim = 0;     // unchanged coordinate count of the output
  std::string note;
};

/// Removes, from each manifold, the span of the other manifolds' centers
/// (hard projection; rank decided by singular values above 1e-10).
/// Identity (with a warning note) when ambient N <= P.
CenterProjectionResult project_to_center_nullspace(const ManifoldSet& set);

}  // namespace mftma
