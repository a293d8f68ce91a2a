#include "mftma/nnls.hpp"

#include <Eigen/QR>

#include <limits>
#include <vector>

namespace mftma {

// Lawson-Hanson active set iteration. Columns move between the zero (active)
// set and the passive set; each passive-set least squares is solved afresh
// with a column-pivoted QR, which keeps degenerate point configurations from
// derailing the solve.
NnlsResult nnls(const Matrix& a, const Vector& target, double tolerance,
                int max_iterations) {
  const Eigen::Index m = a.cols();
  NnlsResult result;
  result.coefficients = Vector::Zero(m);

  if (max_iterations <= 0) {
    max_iterations = static_cast<int>(10 * std::max<Eigen::Index>(m, 3));
  }

  std::vector<bool> passive(static_cast<std::size_t>(m), false);
  Vector mu = Vector::Zero(m);
  Vector gradient = a.transpose() * (target - a * mu);

  auto solve_passive = [&](const std::vector<Eigen::Index>& idx) {
    Matrix ap(a.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) ap.col(k) = a.col(idx[k]);
    return ap.colPivHouseholderQr().solve(target).eval();
  };

  int iterations = 0;
  bool kkt_satisfied = false;
  while (iterations < max_iterations) {
    // Pick the most promising zero coefficient.
    Eigen::Index best = -1;
    double best_gradient = tolerance;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (!passive[static_cast<std::size_t>(i)] && gradient[i] > best_gradient) {
        best_gradient = gradient[i];
        best = i;
      }
    }
    if (best < 0) {
      kkt_satisfied = true;
      break;
    }
    passive[static_cast<std::size_t>(best)] = true;

    while (iterations < max_iterations) {
      ++iterations;
      std::vector<Eigen::Index> idx;
      for (Eigen::Index i = 0; i < m; ++i) {
        if (passive[static_cast<std::size_t>(i)]) idx.push_back(i);
      }
      const Vector z = solve_passive(idx);

      bool all_positive = true;
      for (Eigen::Index k = 0; k < z.size(); ++k) {
        if (z[k] <= tolerance) {
          all_positive = false;
          break;
        }
      }
      if (all_positive) {
        mu.setZero();
        for (std::size_t k = 0; k < idx.size(); ++k) mu[idx[k]] = z[k];
        break;
      }

      // Step toward z until the first passive coefficient hits zero.
      double step = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < idx.size(); ++k) {
        if (z[static_cast<Eigen::Index>(k)] <= tolerance) {
          const double current = mu[idx[k]];
          const double denom = current - z[static_cast<Eigen::Index>(k)];
          if (denom > 0) step = std::min(step, current / denom);
        }
      }
      if (!std::isfinite(step)) step = 0.0;
      for (std::size_t k = 0; k < idx.size(); ++k) {
        mu[idx[k]] += step * (z[static_cast<Eigen::Index>(k)] - mu[idx[k]]);
      }
      for (std::size_t k = 0; k < idx.size(); ++k) {
        if (mu[idx[k]] <= tolerance) {
          mu[idx[k]] = 0.0;
          passive[static_cast<std::size_t>(idx[k])] = false;
        }
      }
    }
    gradient = a.transpose() * (target - a * mu);
  }

  result.coefficients = mu;
  result.residual = a * mu - target;
  result.iterations = iterations;
  result.converged = kkt_satisfied || iterations < max_iterations;
  return result;
}

}  // namespace mftma
