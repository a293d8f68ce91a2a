#pragma once

#include <cstdint>
#include <vector>

#include "mftma/common.hpp"
#include "mftma/manifold.hpp"

namespace mftma {

enum class Separability { separable, inseparable, undecided };

struct SeparabilityResult {
  Separability status = Separability::undecided;
  double margin_proxy = 0.0;  // min of y * (w.x + b) at the LP solution
  double slack_sum = 0.0;
};

struct DichotomyTrial {
  std::vector<int> labels;  // +1 / -1 per manifold
  Eigen::Index n_features = 0;
  bool separable = false;
  double margin_proxy = 0.0;
};

struct EmpiricalCapacityResult {
  double alpha_empirical = 0.0;  // P / n_critical
  Eigen::Index n_critical = 0;
  double frac_separable_at_critical = 0.0;
  int trials_per_n = 0;
  std::uint64_t seed = 0;
  bool exhaustive = false;
  int undecided_trials = 0;
};

/// Whether a hyperplane (with bias) classifies every point of every manifold
/// by its manifold label. Decided by the unit-margin slack LP: separable iff
/// the optimal slack sum is zero within 1e-8.
SeparabilityResult is_separable(const ManifoldSet& set,
                                const std::vector<int>& labels);

/// Seeded Gaussian random projection to n_features dimensions, scaled by
/// 1 / sqrt(n_features). When n_features equals the ambient dimension and
/// `identity_at_full_dim` is set, the input is returned unchanged.
ManifoldSet random_project(const ManifoldSet& set, Eigen::Index n_features,
                           std::uint64_t seed, bool identity_at_full_dim = true);

/// Ground-truth capacity: bisects the projected feature count until the
/// fraction of separable random manifold dichotomies is close to 1/2.
/// Dichotomies are enumerated exhaustively when 2^P - 2 <= trials_per_n.
EmpiricalCapacityResult empirical_capacity(const ManifoldSet& set,
                                           int trials_per_n, std::uint64_t seed,
                                           int threads = 1);

}  // namespace mftma
