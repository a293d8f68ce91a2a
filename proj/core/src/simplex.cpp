#include "mftma/simplex.hpp"

#include <cmath>
#include <limits>

namespace mftma {

namespace {
constexpr double kPivotEps = 1e-9;
constexpr double kCostEps = 1e-9;
}  // namespace

LpResult simplex_solve(const Matrix& a, const Vector& b, const Vector& c,
                       std::vector<Eigen::Index> basis, int max_iterations) {
  const Eigen::Index m = a.rows();
  const Eigen::Index n = a.cols();

  Matrix tableau = a;
  Vector rhs = b;
  Vector reduced = c;
  double objective = 0.0;

  // Cost row in canonical form for the starting basis (identity columns).
  for (Eigen::Index r = 0; r < m; ++r) {
    const double cb = c[basis[static_cast<std::size_t>(r)]];
    if (cb != 0.0) {
      reduced -= cb * tableau.row(r).transpose();
      objective -= cb * rhs[r];
    }
  }

  LpResult result;
  int degenerate_streak = 0;
  bool bland = false;

  for (int iter = 0; iter < max_iterations; ++iter) {
    // Entering column.
    Eigen::Index enter = -1;
    if (bland) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (reduced[j] < -kCostEps) {
          enter = j;
          break;
        }
      }
    } else {
      double best = -kCostEps;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (reduced[j] < best) {
          best = reduced[j];
          enter = j;
        }
      }
    }
    if (enter < 0) {
      result.status = LpStatus::optimal;
      result.iterations = iter;
      break;
    }

    // Ratio test; ties go to the lowest basis index.
    Eigen::Index leave = -1;
    double best_ratio = std::numeric_limits<double>::infinity();
    for (Eigen::Index r = 0; r < m; ++r) {
      const double coeff = tableau(r, enter);
      if (coeff > kPivotEps) {
        const double ratio = rhs[r] / coeff;
        if (ratio < best_ratio - 1e-12 ||
            (ratio < best_ratio + 1e-12 && leave >= 0 &&
             basis[static_cast<std::size_t>(r)] <
                 basis[static_cast<std::size_t>(leave)])) {
          best_ratio = ratio;
          leave = r;
        }
      }
    }
    if (leave < 0) {
      result.status = LpStatus::unbounded;
      result.iterations = iter;
      break;
    }

    if (best_ratio < 1e-12) {
      if (++degenerate_streak > 40) bland = true;
    } else {
      degenerate_streak = 0;
    }

    // Pivot.
    const double pivot = tableau(leave, enter);
    tableau.row(leave) /= pivot;
    rhs[leave] /= pivot;
    for (Eigen::Index r = 0; r < m; ++r) {
      if (r == leave) continue;
      const double f = tableau(r, enter);
      if (f != 0.0) {
        tableau.row(r) -= f * tableau.row(leave);
        rhs[r] -= f * rhs[leave];
      }
    }
    const double cf = reduced[enter];
    if (cf != 0.0) {
      reduced -= cf * tableau.row(leave).transpose();
      objective -= cf * rhs[leave];
    }
    basis[static_cast<std::size_t>(leave)] = enter;
    result.iterations = iter + 1;
  }

  result.x = Vector::Zero(n);
  for (Eigen::Index r = 0; r < m; ++r) {
    result.x[basis[static_cast<std::size_t>(r)]] = rhs[r];
  }
  result.objective = -objective;
  return result;
}

}  // namespace mftma
