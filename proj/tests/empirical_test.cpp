#include "mftma/empirical.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "mftma/synthdata.hpp"

using namespace mftma;

namespace {

ManifoldSet point_set(const Matrix& points) {
  ManifoldSet set;
  set.ambient_dim = points.cols();
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    set.manifolds.push_back(points.row(i));
    set.class_ids.push_back(static_cast<std::uint32_t>(i));
  }
  return set;
}

ManifoldSet sphere_pair(double radius, std::uint64_t seed) {
  SphereDatasetSpec spec;
  spec.n_classes = 2;
  spec.ambient_dim = 64;
  spec.sphere_dim = 8;
  spec.radius = radius;
  spec.samples_per_class = 150;
  spec.test_samples_per_class = 0;
  spec.seed = seed;
  const PermutedDataset data = generate_spheres(spec);

  ManifoldSet set;
  set.ambient_dim = spec.ambient_dim;
  Matrix a(spec.samples_per_class, spec.ambient_dim);
  Matrix b(spec.samples_per_class, spec.ambient_dim);
  Eigen::Index ia = 0, ib = 0;
  for (Eigen::Index i = 0; i < data.n_train(); ++i) {
    if (data.true_labels[static_cast<std::size_t>(i)] == 0) {
      a.row(ia++) = data.inputs.row(i);
    } else {
      b.row(ib++) = data.inputs.row(i);
    }
  }
  set.manifolds = {a, b};
  set.class_ids = {0, 1};
  return set;
}

// Cover-style exhaustive oracle: exact separable fraction per dimension from
// every dichotomy, smoothing over several projection draws.
Eigen::Index oracle_critical_dim(const ManifoldSet& set, Eigen::Index n_max,
                                 std::uint64_t seed) {
  const Eigen::Index p = set.size();
  Eigen::Index best_n = n_max;
  double best_gap = std::numeric_limits<double>::infinity();
  for (Eigen::Index n = 1; n <= n_max; ++n) {
    int separable = 0, total = 0;
    for (unsigned mask = 1; mask + 1 < (1u << p); ++mask) {
      std::vector<int> labels(static_cast<std::size_t>(p));
      for (Eigen::Index i = 0; i < p; ++i) {
        labels[static_cast<std::size_t>(i)] = (mask >> i) & 1u ? 1 : -1;
      }
      for (int rep = 0; rep < 9; ++rep) {
        const ManifoldSet proj = random_project(
            set, n, derive_seed(seed, n, mask, static_cast<std::uint64_t>(rep)));
        if (is_separable(proj, labels).status == Separability::separable) {
          ++separable;
        }
        ++total;
      }
    }
    const double gap = std::abs(static_cast<double>(separable) / total - 0.5);
    if (gap < best_gap) {
      best_gap = gap;
      best_n = n;
    }
  }
  return best_n;
}

}  // namespace

TEST_CASE("two labeled points are separable") {
  Matrix pts(2, 3);
  pts << 1.0, 0.0, 0.5,
        -1.0, 0.2, 0.0;
  const SeparabilityResult r = is_separable(point_set(pts), {1, -1});
  CHECK(r.status == Separability::separable);
  CHECK(r.margin_proxy >= 1.0 - 1e-6);
  CHECK(r.slack_sum <= 1e-8);
}

TEST_CASE("opposed spheres separate below unit radius and overlap above") {
  const ManifoldSet narrow = sphere_pair(0.5, 11);
  CHECK(is_separable(narrow, {1, -1}).status == Separability::separable);

  const ManifoldSet wide = sphere_pair(5.0, 12);
  CHECK(is_separable(wide, {1, -1}).status == Separability::inseparable);
}

TEST_CASE("random projection basics") {
  Rng rng = make_rng(21);
  ManifoldSet set;
  set.ambient_dim = 1024;
  set.manifolds = {gaussian_matrix(30, 1024, rng), gaussian_matrix(25, 1024, rng)};
  set.class_ids = {0, 1};

  SUBCASE("full dimension with the identity option is a no-op") {
    const ManifoldSet out = random_project(set, 1024, 5);
    CHECK((out.manifolds[0] - set.manifolds[0]).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("pairwise distances survive within 30 percent") {
    const ManifoldSet out = random_project(set, 200, 5, false);
    Rng pick = make_rng(99);
    std::uniform_int_distribution<int> row(0, 29);
    for (int k = 0; k < 100; ++k) {
      const int i = row(pick), j = row(pick);
      if (i == j) continue;
      const double before =
          (set.manifolds[0].row(i) - set.manifolds[0].row(j)).norm();
      const double after =
          (out.manifolds[0].row(i) - out.manifolds[0].row(j)).norm();
      CHECK(after / before > 0.7);
      CHECK(after / before < 1.3);
    }
  }
  SUBCASE("projection is reproducible") {
    const ManifoldSet a = random_project(set, 64, 7);
    const ManifoldSet b = random_project(set, 64, 7);
    CHECK((a.manifolds[1] - b.manifolds[1]).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("bisection agrees with the exhaustive oracle on a tiny instance") {
  Rng rng = make_rng(31);
  ManifoldSet set;
  const Eigen::Index n = 8;
  set.ambient_dim = n;
  for (int i = 0; i < 4; ++i) {
    set.manifolds.push_back(3.0 * gaussian_matrix(2, n, rng));
    set.class_ids.push_back(static_cast<std::uint32_t>(i));
  }
  const EmpiricalCapacityResult got = empirical_capacity(set, 100, 17, 2);
  CHECK(got.exhaustive);  // 2^4 - 2 = 14 dichotomies, enumerated
  const Eigen::Index oracle = oracle_critical_dim(set, n, 17);
  CHECK(std::abs(static_cast<long>(got.n_critical) - static_cast<long>(oracle)) <= 1);
}

TEST_CASE("single points in general position have capacity near 2") {
  Rng rng = make_rng(41);
  const Eigen::Index p = 20, n = 40;
  const ManifoldSet set = point_set(gaussian_matrix(p, n, rng));
  const EmpiricalCapacityResult r = empirical_capacity(set, 100, 3, 2);
  CHECK(r.alpha_empirical == doctest::Approx(2.0).epsilon(0.2));
  CHECK(r.frac_separable_at_critical >= 0.4);
  CHECK(r.frac_separable_at_critical <= 0.6);
}

TEST_CASE("separable fraction is statistically monotone in the feature count") {
  Rng rng = make_rng(51);
  ManifoldSet set;
  const Eigen::Index n = 48;
  set.ambient_dim = n;
  for (int i = 0; i < 8; ++i) {
    Matrix m = 0.8 * gaussian_matrix(4, n, rng);
    m.rowwise() += 2.0 * gaussian_vector(n, rng).transpose();
    set.manifolds.push_back(m);
    set.class_ids.push_back(static_cast<std::uint32_t>(i));
  }

  std::vector<double> fractions;
  for (Eigen::Index nf : {4, 12, 20, 28, 36, 44}) {
    int separable = 0;
    const int trials = 50;
    for (int t = 0; t < trials; ++t) {
      Rng trial_rng = make_rng(derive_seed(9, nf, t));
      std::uniform_int_distribution<int> coin(0, 1);
      std::vector<int> labels(8);
      bool pos = false, neg = false;
      do {
        pos = neg = false;
        for (auto& l : labels) {
          l = coin(trial_rng) ? 1 : -1;
          (l == 1 ? pos : neg) = true;
        }
      } while (!pos || !neg);
      const ManifoldSet proj =
          random_project(set, nf, derive_seed(9, nf, t, 0x77ULL));
      if (is_separable(proj, labels).status == Separability::separable) {
        ++separable;
      }
    }
    fractions.push_back(static_cast<double>(separable) / trials);
  }
  int inversions = 0;
  for (std::size_t i = 1; i < fractions.size(); ++i) {
    if (fractions[i] < fractions[i - 1] - 1e-12) ++inversions;
  }
  CHECK(inversions <= 1);
}

TEST_CASE("degenerate dichotomies are rejected") {
  Matrix pts(3, 4);
  Rng rng = make_rng(61);
  pts = gaussian_matrix(3, 4, rng);
  CHECK_THROWS_AS(is_separable(point_set(pts), {1, 1, 1}), ConfigError);
  CHECK_THROWS_AS(is_separable(point_set(pts), {1, -1}), ConfigError);
}
