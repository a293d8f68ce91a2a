#include "mftma/empirical.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "mftma/simplex.hpp"

namespace mftma {

namespace {
constexpr double kSlackTol = 1e-8;

struct LabeledPoints {
  Matrix x;        // one row per point
  std::vector<int> y;
};

LabeledPoints flatten(const ManifoldSet& set, const std::vector<int>& labels) {
  Eigen::Index total = 0;
  for (const auto& m : set.manifolds) total += m.rows();
  LabeledPoints out;
  out.x.resize(total, set.ambient_dim);
  out.y.reserve(static_cast<std::size_t>(total));
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < set.manifolds.size(); ++i) {
    const Matrix& m = set.manifolds[i];
    out.x.middleRows(row, m.rows()) = m;
    row += m.rows();
    out.y.insert(out.y.end(), static_cast<std::size_t>(m.rows()), labels[i]);
  }
  return out;
}

}  // namespace

// Unit-margin slack LP:   min sum(xi)
//   s.t.  y_k (w . x_k + b) + xi_k - s_k = 1,   xi, s >= 0,   w, b free.
// Free variables are split into positive parts; the xi columns form the
// starting identity basis.
SeparabilityResult is_separable(const ManifoldSet& set,
                                const std::vector<int>& labels) {
  set.validate();
  if (labels.size() != set.manifolds.size()) {
    throw ConfigError("is_separable: one label per manifold required");
  }
  bool has_pos = false, has_neg = false;
  for (int y : labels) {
    if (y == 1) has_pos = true;
    else if (y == -1) has_neg = true;
    else throw ConfigError("is_separable: labels must be +1 or -1");
  }
  if (!has_pos || !has_neg) {
    throw ConfigError("is_separable: dichotomy must use both labels");
  }

  const LabeledPoints pts = flatten(set, labels);
  const Eigen::Index m = pts.x.rows();
  const Eigen::Index n = set.ambient_dim;

  // Columns: w+ (n), w- (n), b+ , b-, xi (m), s (m)
  const Eigen::Index wp = 0, wm = n, bp = 2 * n, bm = 2 * n + 1;
  const Eigen::Index xi = 2 * n + 2, sl = xi + m;
  const Eigen::Index cols = sl + m;

  Matrix a = Matrix::Zero(m, cols);
  for (Eigen::Index k = 0; k < m; ++k) {
    const double y = pts.y[static_cast<std::size_t>(k)];
    a.row(k).segment(wp, n) = y * pts.x.row(k);
    a.row(k).segment(wm, n) = -y * pts.x.row(k);
    a(k, bp) = y;
    a(k, bm) = -y;
    a(k, xi + k) = 1.0;
    a(k, sl + k) = -1.0;
  }
  const Vector rhs = Vector::Ones(m);
  Vector cost = Vector::Zero(cols);
  cost.segment(xi, m).setOnes();

  std::vector<Eigen::Index> basis(static_cast<std::size_t>(m));
  for (Eigen::Index k = 0; k < m; ++k) basis[static_cast<std::size_t>(k)] = xi + k;

  const int cap = static_cast<int>(60 * (m + n) + 2000);
  const LpResult lp = simplex_solve(a, rhs, cost, basis, cap);

  SeparabilityResult result;
  result.slack_sum = lp.objective;
  if (lp.status != LpStatus::optimal) {
    result.status = Separability::undecided;
    return result;
  }

  const Vector w = lp.x.segment(wp, n) - lp.x.segment(wm, n);
  const double b = lp.x[bp] - lp.x[bm];
  double min_margin = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < m; ++k) {
    const double y = pts.y[static_cast<std::size_t>(k)];
    min_margin = std::min(min_margin, y * (pts.x.row(k).dot(w) + b));
  }
  result.margin_proxy = min_margin;
  result.status = lp.objective <= kSlackTol ? Separability::separable
                                            : Separability::inseparable;
  return result;
}

ManifoldSet random_project(const ManifoldSet& set, Eigen::Index n_features,
                           std::uint64_t seed, bool identity_at_full_dim) {
  set.validate();
  if (n_features < 1 || n_features > set.ambient_dim) {
    throw ConfigError("random_project: n_features must be in [1, N]");
  }
  if (identity_at_full_dim && n_features == set.ambient_dim) return set;

  Rng rng = make_rng(derive_seed(seed, 0x70726f6aULL,
                                 static_cast<std::uint64_t>(n_features)));
  const Matrix projection =
      gaussian_matrix(set.ambient_dim, n_features, rng) /
      std::sqrt(static_cast<double>(n_features));

  ManifoldSet out;
  out.class_ids = set.class_ids;
  out.ambient_dim = n_features;
  out.manifolds.reserve(set.manifolds.size());
  for (const auto& m : set.manifolds) out.manifolds.push_back(m * projection);
  return out;
}

namespace {

std::vector<int> sample_dichotomy(Eigen::Index p, Rng& rng) {
  std::uniform_int_distribution<int> coin(0, 1);
  std::vector<int> labels(static_cast<std::size_t>(p));
  while (true) {
    bool pos = false, neg = false;
    for (auto& l : labels) {
      l = coin(rng) == 1 ? 1 : -1;
      (l == 1 ? pos : neg) = true;
    }
    if (pos && neg) return labels;
  }
}

struct FractionEstimate {
  double fraction = 0.0;
  int undecided = 0;
};

// Fraction of separable manifold dichotomies at a given projected dimension.
// Each trial draws its own projection and dichotomy from (seed, n, trial).
FractionEstimate separable_fraction(const ManifoldSet& set, Eigen::Index n,
                                    int trials, bool exhaustive,
                                    std::uint64_t seed, int threads) {
  const Eigen::Index p = set.size();
  const int total = exhaustive
                        ? static_cast<int>((1u << p) - 2)
                        : trials;

  std::vector<int> separable(static_cast<std::size_t>(total), 0);
  std::vector<int> undecided(static_cast<std::size_t>(total), 0);

  parallel_for(static_cast<std::size_t>(total), threads, [&](std::size_t t) {
    std::vector<int> labels;
    if (exhaustive) {
      // Masks 1 .. 2^P - 2 cover every dichotomy with both labels present.
      const unsigned mask = static_cast<unsigned>(t) + 1;
      labels.resize(static_cast<std::size_t>(p));
      for (Eigen::Index i = 0; i < p; ++i) {
        labels[static_cast<std::size_t>(i)] =
            (mask >> i) & 1u ? 1 : -1;
      }
    } else {
      Rng rng = make_rng(derive_seed(seed, static_cast<std::uint64_t>(n),
                                     static_cast<std::uint64_t>(t), 0xd1ULL));
      labels = sample_dichotomy(p, rng);
    }
    const ManifoldSet projected = random_project(
        set, n, derive_seed(seed, static_cast<std::uint64_t>(n),
                            static_cast<std::uint64_t>(t), 0x70ULL));
    const SeparabilityResult r = is_separable(projected, labels);
    if (r.status == Separability::separable) separable[t] = 1;
    if (r.status == Separability::undecided) undecided[t] = 1;
  });

  FractionEstimate est;
  int sep = 0, und = 0;
  for (int t = 0; t < total; ++t) {
    sep += separable[static_cast<std::size_t>(t)];
    und += undecided[static_cast<std::size_t>(t)];
  }
  est.fraction = static_cast<double>(sep) / total;
  est.undecided = und;
  return est;
}

}  // namespace

EmpiricalCapacityResult empirical_capacity(const ManifoldSet& set,
                                           int trials_per_n, std::uint64_t seed,
                                           int threads) {
  set.validate();
  if (trials_per_n < 10) {
    throw ConfigError("empirical_capacity: trials_per_n must be >= 10");
  }
  const Eigen::Index p = set.size();
  const Eigen::Index n_max = set.ambient_dim;
  const bool exhaustive =
      p < 30 && (1u << p) - 2 <= static_cast<unsigned>(trials_per_n);

  for (int attempt = 0; attempt < 2; ++attempt) {
    const int trials = trials_per_n * (attempt == 0 ? 1 : 4);
    std::map<Eigen::Index, FractionEstimate> cache;
    auto fraction_at = [&](Eigen::Index n) -> const FractionEstimate& {
      auto it = cache.find(n);
      if (it == cache.end()) {
        it = cache.emplace(n, separable_fraction(set, n, trials, exhaustive,
                                                 seed, threads))
                 .first;
      }
      return it->second;
    };

    Eigen::Index lo = 1, hi = n_max;
    const FractionEstimate& top = fraction_at(n_max);
    if (top.fraction < 0.4) {
      if (attempt == 0) continue;  // widen trials once and retry
      throw NumericalError(
          "empirical_capacity: separable fraction at full dimension is " +
          std::to_string(top.fraction) + "; capacity not bracketed");
    }

    Eigen::Index critical = n_max;
    bool by_fraction = false;
    if (fraction_at(1).fraction >= 0.5) {
      critical = 1;
    } else {
      while (hi - lo > 1) {
        const Eigen::Index mid = (lo + hi) / 2;
        const double f = fraction_at(mid).fraction;
        if (std::abs(f - 0.5) <= 0.1) {
          critical = mid;
          by_fraction = true;
          break;
        }
        (f < 0.5 ? lo : hi) = mid;
      }
      if (!by_fraction) {
        const double f_lo = fraction_at(lo).fraction;
        const double f_hi = fraction_at(hi).fraction;
        critical = std::abs(f_lo - 0.5) < std::abs(f_hi - 0.5) ? lo : hi;
      }
    }

    EmpiricalCapacityResult result;
    result.n_critical = critical;
    result.alpha_empirical = static_cast<double>(p) / critical;
    result.frac_separable_at_critical = fraction_at(critical).fraction;
    result.trials_per_n = trials;
    result.seed = seed;
    result.exhaustive = exhaustive;
    for (const auto& [n, est] : cache) result.undecided_trials += est.undecided;
    return result;
  }
  throw NumericalError("empirical_capacity: retries exhausted");
}

}  // namespace mftma
