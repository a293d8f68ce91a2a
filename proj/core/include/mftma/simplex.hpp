#pragma once

#include <vector>

#include "mftma/common.hpp"

namespace mftma {

enum class LpStatus { optimal, iteration_limit, unbounded };

struct LpResult {
  LpStatus status = LpStatus::iteration_limit;
  double objective = 0.0;
  Vector x;
  int iterations = 0;
};

/// Dense-tableau primal simplex for min c.x s.t. A x = b, x >= 0.
/// `basis` must name columns of A that form an identity with b >= 0
/// (the callers construct problems that way). Dantzig pricing with a
/// Bland fallback once degenerate pivots pile up.
LpResult simplex_solve(const Matrix& a, const Vector& b, const Vector& c,
                       std::vector<Eigen::Index> basis, int max_iterations);

}  // namespace mftma
