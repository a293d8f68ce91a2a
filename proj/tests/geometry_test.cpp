#include "mftma/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "mftma/manifold.hpp"

using namespace mftma;

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

// Closed form of the ball capacity integral:
//   integral_{-inf}^{a} phi(t) (a - t)^2 dt = (1 + a^2) Phi(a) + a phi(a).
double alpha_ball_closed_form(double r, double d) {
  const double a = r * std::sqrt(d);
  const double inv = ((1.0 + a * a) * normal_cdf(a) + a * normal_pdf(a)) /
                     (r * r + 1.0);
  return 1.0 / inv;
}

// Trapezoid quadrature oracle over [-10, a], step 1e-4.
double alpha_ball_trapezoid(double r, double d) {
  const double a = r * std::sqrt(d);
  const double lo = -10.0;
  const double step = 1e-4;
  const auto n = static_cast<long>((a - lo) / step);
  auto f = [&](double t) { return normal_pdf(t) * (a - t) * (a - t); };
  double acc = 0.5 * (f(lo) + f(a));
  for (long i = 1; i < n; ++i) acc += f(lo + i * step);
  // partial last panel
  const double last = lo + n * step;
  if (a > last) acc += 0.5 * (f(last) + f(a)) * (a - last) / step;
  const double inv = acc * step / (r * r + 1.0);
  return 1.0 / inv;
}

SubspaceManifold make_manifold(const Matrix& subspace_coords, double center_coord) {
  SubspaceManifold m;
  const Eigen::Index d = subspace_coords.cols();
  m.coords.resize(subspace_coords.rows(), d + 1);
  m.coords.leftCols(d) = subspace_coords;
  m.coords.col(d).setConstant(center_coord);
  return m;
}

// Exhaustive KKT oracle for the cone projection: tries every support subset,
// keeps the candidate whose multipliers are nonnegative and whose residual
// satisfies the gradient condition against all points.
Vector brute_force_anchor(const Vector& t, const Matrix& coords) {
  const Eigen::Index m = coords.rows();
  double best_dist = std::numeric_limits<double>::infinity();
  Vector best = Vector::Zero(coords.cols());

  for (unsigned mask = 1; mask < (1u << m); ++mask) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (mask & (1u << i)) idx.push_back(i);
    }
    Matrix a(coords.cols(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      a.col(static_cast<Eigen::Index>(k)) = coords.row(idx[k]).transpose();
    }
    const Vector mu = a.colPivHouseholderQr().solve(t);
    if ((mu.array() < -1e-9).any()) continue;
    const Vector proj = a * mu;
    // gradient condition: s_i . (proj - t) >= 0 for every point
    if (((coords * (proj - t)).array() < -1e-7).any()) continue;
    const double dist = (proj - t).squaredNorm();
    if (dist < best_dist - 1e-12) {
      best_dist = dist;
      const double lambda = mu.sum();
      best = lambda > 0 ? Vector(proj / lambda) : proj;
    }
  }
  return best;
}

Matrix random_ball_cloud(Eigen::Index m, Eigen::Index d, double radius,
                         std::uint64_t seed) {
  Rng rng = make_rng(seed);
  Matrix pts(m, d);
  for (Eigen::Index i = 0; i < m; ++i) {
    Vector u = gaussian_vector(d, rng);
    pts.row(i) = (radius * u / u.norm()).transpose();
  }
  return pts;
}

ManifoldSet random_noise_set(Eigen::Index p, Eigen::Index m, Eigen::Index n,
                             std::uint64_t seed) {
  Rng rng = make_rng(seed);
  ManifoldSet set;
  set.ambient_dim = n;
  for (Eigen::Index i = 0; i < p; ++i) {
    set.manifolds.push_back(gaussian_matrix(m, n, rng));
    set.class_ids.push_back(static_cast<std::uint32_t>(i));
  }
  return set;
}

}  // namespace

TEST_CASE("alpha_ball at zero radius equals 2 for any dimension") {
  for (double d : {1.0, 5.0, 30.0}) {
    CHECK(alpha_ball(0.0, d) == doctest::Approx(2.0).epsilon(1e-4));
  }
}

TEST_CASE("alpha_ball matches the closed form and the trapezoid oracle") {
  const std::pair<double, double> cases[] = {{1.0, 1.0}, {5.0, 30.0}, {1000.0, 20.0}};
  for (auto [r, d] : cases) {
    const double mine = alpha_ball(r, d);
    CHECK(mine == doctest::Approx(alpha_ball_closed_form(r, d)).epsilon(1e-7));
    CHECK(std::abs(mine - alpha_ball_trapezoid(r, d)) < 1e-5);
  }
  // large-R limit approaches 1/D
  CHECK(alpha_ball(1000.0, 20.0) == doctest::Approx(1.0 / 20.0).epsilon(2e-2));
}

TEST_CASE("build_subspace handles degenerate and generic point sets") {
  SUBCASE("single point") {
    Matrix pts(1, 6);
    pts << 1, 2, 3, 0, 0, 1;
    const SubspaceManifold m = build_subspace(pts);
    CHECK(m.subspace_dim() == 0);
    CHECK(m.coords.rows() == 1);
    CHECK(m.coords.cols() == 1);
    CHECK(m.coords(0, 0) == doctest::Approx(pts.row(0).norm()));
  }
  SUBCASE("three collinear points in 10 dimensions") {
    Rng rng = make_rng(7);
    const Vector base = gaussian_vector(10, rng);
    const Vector dir = gaussian_vector(10, rng);
    Matrix pts(3, 10);
    pts.row(0) = (base - dir).transpose();
    pts.row(1) = base.transpose();
    pts.row(2) = (base + dir).transpose();
    CHECK(build_subspace(pts).subspace_dim() == 1);
  }
  SUBCASE("identical points collapse to the center coordinate") {
    Matrix pts(4, 5);
    for (int i = 0; i < 4; ++i) pts.row(i) << 1, 0, 2, 0, 0;
    const SubspaceManifold m = build_subspace(pts);
    CHECK(m.subspace_dim() == 0);
    CHECK(m.coords.cols() == 1);
  }
  SUBCASE("reconstruction and orthonormality") {
    Rng rng = make_rng(99);
    const Matrix pts = gaussian_matrix(20, 12, rng);
    const SubspaceManifold m = build_subspace(pts);
    const Matrix gram = m.basis * m.basis.transpose();
    CHECK((gram - Matrix::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() <
          1e-8);
    const Matrix rebuilt =
        (m.coords.leftCols(m.subspace_dim()) * m.basis).rowwise() +
        m.center.transpose();
    CHECK((rebuilt - pts).cwiseAbs().maxCoeff() / pts.cwiseAbs().maxCoeff() < 1e-8);
    const double c0 = m.center.norm();
    for (Eigen::Index i = 0; i < m.coords.rows(); ++i) {
      CHECK(m.coords(i, m.subspace_dim()) == doctest::Approx(c0));
    }
  }
}

TEST_CASE("anchor of a single-point manifold is that point") {
  const SubspaceManifold m = make_manifold(Matrix::Zero(1, 0), 0.7);

  Vector t_neg(1);
  t_neg << -1.3;
  const AnchorSample inactive = solve_anchor(t_neg, m);
  CHECK_FALSE(inactive.active);
  CHECK(inactive.slack == 0.0);

  Vector t_pos(1);
  t_pos << 0.9;
  const AnchorSample active = solve_anchor(t_pos, m);
  CHECK(active.active);
  CHECK(active.anchor(0) == doctest::Approx(0.7));
  CHECK(active.slack == doctest::Approx(0.9 * 0.7));
  CHECK(active.hull_weights(0) == doctest::Approx(1.0));
}

TEST_CASE("draws inside the feasible cone are inactive") {
  Rng rng = make_rng(3);
  const Matrix sub = gaussian_matrix(5, 3, rng);
  const SubspaceManifold m = make_manifold(sub, 1.0);
  // Any T with a strongly negative center component and tiny subspace part
  // satisfies coords . T <= 0 once the center term dominates.
  Vector t(4);
  t << 1e-3, -1e-3, 1e-3, -50.0;
  REQUIRE((m.coords * t).maxCoeff() <= 0.0);
  const AnchorSample s = solve_anchor(t, m);
  CHECK_FALSE(s.active);
  CHECK(s.slack == 0.0);
}

TEST_CASE("triangle anchors match the exhaustive hull search") {
  Matrix sub(3, 2);
  sub << 1.2, 0.1,
        -0.9, 0.8,
        -0.3, -1.1;
  const SubspaceManifold m = make_manifold(sub, 1.0);

  int active_count = 0;
  for (int rep = 0; rep < 200; ++rep) {
    Rng rng = make_rng(derive_seed(11, rep));
    const Vector t = gaussian_vector(3, rng);
    const AnchorSample got = solve_anchor(t, m);
    if (!got.active) {
      CHECK((m.coords * t).maxCoeff() <= 1e-12);
      continue;
    }
    ++active_count;
    const Vector expected = brute_force_anchor(t, m.coords);
    CHECK((got.anchor - expected).cwiseAbs().maxCoeff() < 1e-6);
    // hull validity
    CHECK(got.hull_weights.minCoeff() >= -1e-8);
    CHECK(got.hull_weights.sum() == doctest::Approx(1.0).epsilon(1e-8));
    const Vector recombined = m.coords.transpose() * got.hull_weights;
    CHECK((recombined - got.anchor).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(got.slack >= 0.0);
  }
  CHECK(active_count > 50);
}

TEST_CASE("capacity of point manifolds approaches 2") {
  const SubspaceManifold m = make_manifold(Matrix::Zero(1, 0), 1.0);
  const ManifoldCapacity cap = mft_capacity(m, 10000, 42, 0);
  CHECK(cap.alpha == doctest::Approx(2.0).epsilon(0.08));
}

TEST_CASE("capacity is deterministic given the seed") {
  Rng rng = make_rng(5);
  const SubspaceManifold m = make_manifold(gaussian_matrix(12, 4, rng), 1.0);
  const ManifoldCapacity a = mft_capacity(m, 300, 17, 3);
  const ManifoldCapacity b = mft_capacity(m, 300, 17, 3);
  CHECK(a.alpha_inverse == b.alpha_inverse);  // bit-for-bit
  REQUIRE(a.samples.size() == b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i].slack == b.samples[i].slack);
  }
}

TEST_CASE("a dense huge-radius cloud matches the ball capacity") {
  const Matrix cloud = random_ball_cloud(1000, 20, 1000.0, 21);
  const SubspaceManifold m = make_manifold(cloud, 1.0);
  const ManifoldCapacity cap = mft_capacity(m, 400, 13, 0);
  const double expected = alpha_ball(1000.0, 20.0);
  CHECK(std::abs(cap.alpha - expected) / expected < 0.10);
}

TEST_CASE("radius and dimension read off the anchor statistics") {
  SUBCASE("constant unit-norm anchors give radius 1") {
    std::vector<AnchorSample> samples;
    Rng rng = make_rng(8);
    for (int i = 0; i < 50; ++i) {
      AnchorSample s;
      s.active = true;
      Vector anchor(4);
      anchor << 1.0, 0.0, 0.0, 1.0;  // unit subspace part, center coord 1
      s.anchor = anchor;
      s.t_vec = gaussian_vector(4, rng);
      samples.push_back(s);
    }
    const RadiusDimension rd = manifold_radius_dimension(samples);
    CHECK(rd.radius == doctest::Approx(1.0));
    CHECK_FALSE(rd.degenerate);
  }
  SUBCASE("anchors aligned with the draw recover the subspace dimension") {
    std::vector<AnchorSample> samples;
    for (int i = 0; i < 5000; ++i) {
      Rng rng = make_rng(derive_seed(23, i));
      const Vector t = gaussian_vector(11, rng);
      AnchorSample s;
      s.active = true;
      s.t_vec = t;
      Vector anchor(11);
      anchor.head(10) = 1000.0 * t.head(10) / t.head(10).norm();
      anchor(10) = 1.0;
      s.anchor = anchor;
      samples.push_back(s);
    }
    const RadiusDimension rd = manifold_radius_dimension(samples);
    CHECK(rd.dimension == doctest::Approx(10.0).epsilon(0.03));
  }
  SUBCASE("no active samples is degenerate") {
    std::vector<AnchorSample> samples(3);
    const RadiusDimension rd = manifold_radius_dimension(samples);
    CHECK(rd.degenerate);
    CHECK(rd.radius == 0.0);
    CHECK(rd.dimension == 0.0);
  }
}

TEST_CASE("ball self-consistency: measured geometry predicts capacity") {
  for (auto [d, r, m_pts] : {std::tuple<int, double, int>{5, 0.7, 60},
                             {5, 2.0, 100},
                             {10, 1.0, 120}}) {
    const Matrix cloud =
        random_ball_cloud(m_pts, d, r, derive_seed(31, d, static_cast<int>(10 * r)));
    const SubspaceManifold man = make_manifold(cloud, 1.0);
    const ManifoldCapacity cap = mft_capacity(man, 500, 7, 0);
    const RadiusDimension rd = manifold_radius_dimension(cap.samples);
    const double predicted = alpha_ball(rd.radius, rd.dimension);
    CHECK(std::abs(cap.alpha - predicted) / cap.alpha < 0.15);
  }
}

TEST_CASE("Monte-Carlo error shrinks like n^-1/2") {
  Rng rng = make_rng(55);
  const Matrix cloud = random_ball_cloud(40, 5, 1.0, 77);
  const SubspaceManifold m = make_manifold(cloud, 1.0);

  const int reps = 40;
  std::vector<int> sizes = {100, 400, 1600};
  std::vector<double> log_se;
  for (int n : sizes) {
    double sum = 0.0, sum2 = 0.0;
    for (int r = 0; r < reps; ++r) {
      const double v =
          mft_capacity(m, n, derive_seed(1234, n, r), 0).alpha_inverse;
      sum += v;
      sum2 += v * v;
    }
    const double mean = sum / reps;
    const double var = sum2 / reps - mean * mean;
    log_se.push_back(0.5 * std::log(var));
  }
  // least-squares slope of log SE against log n
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const double x = std::log(static_cast<double>(sizes[i]));
    sx += x; sy += log_se[i]; sxx += x * x; sxy += x * log_se[i];
  }
  const double k = static_cast<double>(sizes.size());
  const double slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
  CHECK(slope == doctest::Approx(-0.5).epsilon(0.2));
}

TEST_CASE("center correlation conventions") {
  SUBCASE("orthogonal centers stay near zero") {
    Rng rng = make_rng(61);
    const Eigen::Index p = 50, n = 128;
    Eigen::HouseholderQR<Matrix> qr(gaussian_matrix(n, p, rng));
    const Matrix q = qr.householderQ() * Matrix::Identity(n, p);
    ManifoldSet set;
    set.ambient_dim = n;
    for (Eigen::Index i = 0; i < p; ++i) {
      Matrix m(1, n);
      m.row(0) = 2.0 * q.col(i).transpose();
      set.manifolds.push_back(m);
      set.class_ids.push_back(static_cast<std::uint32_t>(i));
    }
    CHECK(center_correlation(set).rho < 0.05);
  }
  SUBCASE("positively scaled copies of one direction correlate fully") {
    Rng rng = make_rng(62);
    const Vector u = gaussian_vector(32, rng);
    ManifoldSet set;
    set.ambient_dim = 32;
    for (double scale : {0.5, 1.0, 2.0, 3.5}) {
      Matrix m(1, 32);
      m.row(0) = scale * u.transpose();
      set.manifolds.push_back(m);
      set.class_ids.push_back(0);
    }
    CHECK(center_correlation(set).rho == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("center null-space projection") {
  SUBCASE("orthogonal centers with center-free spread are untouched") {
    Rng rng = make_rng(71);
    const Eigen::Index p = 5, n = 64, pts = 12;
    Eigen::HouseholderQR<Matrix> qr(gaussian_matrix(n, p, rng));
    const Matrix q = qr.householderQ() * Matrix::Identity(n, p);
    ManifoldSet set;
    set.ambient_dim = n;
    for (Eigen::Index i = 0; i < p; ++i) {
      Matrix dev = gaussian_matrix(pts, n, rng);
      dev -= (dev * q) * q.transpose();        // spread orthogonal to every center
      dev.rowwise() -= dev.colwise().mean();   // manifold mean exactly on center
      Matrix m = dev.rowwise() + (1.5 * q.col(i)).transpose();
      set.manifolds.push_back(m);
      set.class_ids.push_back(static_cast<std::uint32_t>(i));
    }
    const CenterProjectionResult out = project_to_center_nullspace(set);
    CHECK_FALSE(out.identity);
    for (Eigen::Index i = 0; i < p; ++i) {
      const auto u = static_cast<std::size_t>(i);
      CHECK((out.set.manifolds[u] - set.manifolds[u]).cwiseAbs().maxCoeff() < 1e-8);
    }
  }
  SUBCASE("a shared center direction is removed") {
    Rng rng = make_rng(72);
    const Eigen::Index n = 48, pts = 20;
    Vector u = gaussian_vector(n, rng);
    u /= u.norm();
    ManifoldSet set;
    set.ambient_dim = n;
    for (double scale : {1.5, -0.7}) {
      Matrix noise = gaussian_matrix(pts, n, rng);
      noise -= (noise * u) * u.transpose();          // keep spread off-axis
      noise.rowwise() -= noise.colwise().mean();     // exactly zero-mean spread
      set.manifolds.push_back(noise.rowwise() + (scale * u).transpose());
      set.class_ids.push_back(0);
    }
    const CenterProjectionResult out = project_to_center_nullspace(set);
    const Matrix centers = out.set.centers();
    CHECK(std::abs(centers.row(0).dot(u)) < 1e-8);
    CHECK(std::abs(centers.row(1).dot(u)) < 1e-8);
  }
  SUBCASE("projection is idempotent once centers are orthogonal") {
    Rng rng = make_rng(73);
    const Eigen::Index p = 5, n = 64, pts = 15;
    Eigen::HouseholderQR<Matrix> qr(gaussian_matrix(n, p, rng));
    const Matrix q = qr.householderQ() * Matrix::Identity(n, p);
    ManifoldSet set;
    set.ambient_dim = n;
    for (Eigen::Index i = 0; i < p; ++i) {
      Matrix dev = gaussian_matrix(pts, n, rng);  // random spread, any direction
      dev.rowwise() -= dev.colwise().mean();      // keep the centers exact
      set.manifolds.push_back(dev.rowwise() + (2.0 * q.col(i)).transpose());
      set.class_ids.push_back(static_cast<std::uint32_t>(i));
    }
    const CenterProjectionResult once = project_to_center_nullspace(set);
    const CenterProjectionResult twice = project_to_center_nullspace(once.set);
    for (std::size_t i = 0; i < set.manifolds.size(); ++i) {
      CHECK((twice.set.manifolds[i] - once.set.manifolds[i]).cwiseAbs().maxCoeff() <
            1e-8);
    }
  }
  SUBCASE("other centers' span is absent from every output manifold") {
    const ManifoldSet set = random_noise_set(6, 10, 40, 81);
    const Matrix centers = set.centers();
    const CenterProjectionResult out = project_to_center_nullspace(set);
    for (Eigen::Index i = 0; i < set.size(); ++i) {
      for (Eigen::Index j = 0; j < set.size(); ++j) {
        if (i == j) continue;
        const Vector dir = centers.row(j).transpose().normalized();
        CHECK((out.set.manifolds[static_cast<std::size_t>(i)] * dir)
                  .cwiseAbs()
                  .maxCoeff() < 1e-8);
      }
    }
  }
  SUBCASE("small ambient dimension skips the projection with a warning") {
    const ManifoldSet set = random_noise_set(6, 4, 5, 82);
    const CenterProjectionResult out = project_to_center_nullspace(set);
    CHECK(out.identity);
    CHECK_FALSE(out.note.empty());
  }
}

TEST_CASE("analyze: random noise sits at the 2/M lower bound") {
  const ManifoldSet set = random_noise_set(40, 20, 600, 90);
  AnalysisConfig cfg;
  cfg.n_gauss_samples = 150;
  cfg.seed = 4;
  cfg.threads = 2;
  const MgmReport report = analyze(set, cfg);
  const double bound = 2.0 / 20.0;
  CHECK(report.alpha_m > bound - 0.01);
  CHECK(report.alpha_m < bound * 1.6);
  CHECK(report.alpha_m < 2.01);
}

TEST_CASE("analyze: point manifolds reach alpha 2 and reports are reproducible") {
  ManifoldSet set;
  const Eigen::Index p = 24, n = 80;
  set.ambient_dim = n;
  Rng rng = make_rng(91);
  for (Eigen::Index i = 0; i < p; ++i) {
    set.manifolds.push_back(gaussian_matrix(1, n, rng));
    set.class_ids.push_back(static_cast<std::uint32_t>(i));
  }
  AnalysisConfig cfg;
  cfg.n_gauss_samples = 400;
  cfg.seed = 10;
  const MgmReport a = analyze(set, cfg);
  CHECK(a.alpha_m == doctest::Approx(2.0).epsilon(0.1));

  cfg.threads = 2;
  const MgmReport b = analyze(set, cfg);
  CHECK(a.alpha_m == b.alpha_m);  // identical under any worker count
  CHECK(a.r_m == b.r_m);
  CHECK(a.d_m == b.d_m);
}

TEST_CASE("analyze: capacity bounds hold across random sets") {
  for (std::uint64_t seed : {201, 202, 203}) {
    const Eigen::Index m = 8;
    const ManifoldSet set = random_noise_set(8, m, 50, seed);
    AnalysisConfig cfg;
    cfg.n_gauss_samples = 200;
    cfg.seed = seed;
    const MgmReport report = analyze(set, cfg);
    CHECK(report.alpha_m >= 2.0 / static_cast<double>(m) - 0.01);
    CHECK(report.alpha_m <= 2.0 + 0.01);
    for (double d : report.dimension_per_manifold) {
      CHECK(d > 0.0);
      CHECK(d <= static_cast<double>(m) + 1.0);
    }
    for (double r : report.radius_per_manifold) CHECK(r >= 0.0);
  }
}
