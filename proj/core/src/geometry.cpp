#include "mftma/geometry.hpp"

#include <Eigen/SVD>

#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "mftma/empirical.hpp"
#include "mftma/nnls.hpp"

namespace mftma {

namespace {
constexpr double kRankTol = 1e-10;
constexpr double kKktTol = 1e-8;
}  // namespace

SubspaceManifold build_subspace(const Matrix& points) {
  if (points.rows() < 1) throw ConfigError("build_subspace: empty point set");
  if (!points.allFinite()) {
    throw ConfigError("build_subspace: non-finite point coordinates");
  }

  SubspaceManifold out;
  out.center = points.colwise().mean().transpose();
  const Matrix centered = points.rowwise() - out.center.transpose();

  Eigen::JacobiSVD<Matrix> svd(centered, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double cutoff = kRankTol * std::max(1.0, sv.size() > 0 ? sv[0] : 0.0);
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv[i] > cutoff) ++rank;
  }

  out.basis = svd.matrixV().leftCols(rank).transpose();  // rank x N
  out.coords.resize(points.rows(), rank + 1);
  if (rank > 0) {
    out.coords.leftCols(rank) = centered * svd.matrixV().leftCols(rank);
  }
  out.coords.col(rank).setConstant(out.center.norm());
  return out;
}

AnchorSample solve_anchor(const Vector& t_vec, const SubspaceManifold& manifold) {
  if (!t_vec.allFinite()) throw ConfigError("solve_anchor: non-finite draw");
  const Matrix& coords = manifold.coords;
  if (t_vec.size() != coords.cols()) {
    throw ConfigError("solve_anchor: draw dimension mismatch");
  }

  AnchorSample sample;
  sample.t_vec = t_vec;
  sample.anchor = Vector::Zero(coords.cols());
  sample.hull_weights = Vector::Zero(coords.rows());

  // T already inside the feasible cone { V : coords . V <= 0 }: no support
  // needed, zero contribution.
  if ((coords * t_vec).maxCoeff() <= 0.0) return sample;

  // Moreau: the residual of projecting T onto the feasible cone is the
  // projection of T onto the conic hull of the points, an NNLS problem.
  const int cap = static_cast<int>(10 * std::max<Eigen::Index>(coords.rows(), 3));
  const NnlsResult fit = nnls(coords.transpose(), t_vec, kKktTol, cap);
  if (!fit.converged) {
    throw NumericalError("anchor projection did not converge within " +
                         std::to_string(cap) + " iterations");
  }

  const double weight_sum = fit.coefficients.sum();
  if (weight_sum <= kKktTol) return sample;  // grazing draw, no contribution

  sample.active = true;
  sample.hull_weights = fit.coefficients / weight_sum;
  sample.anchor = coords.transpose() * sample.hull_weights;
  sample.slack = std::max(0.0, t_vec.dot(sample.anchor));
  return sample;
}

ManifoldCapacity mft_capacity(const SubspaceManifold& manifold, int n_samples,
                              std::uint64_t seed, std::uint64_t manifold_index) {
  if (n_samples < 1) throw ConfigError("mft_capacity: n_samples must be >= 1");

  ManifoldCapacity out;
  out.samples.reserve(static_cast<std::size_t>(n_samples));
  const Eigen::Index dim = manifold.coords.cols();

  double contribution_sum = 0.0;
  for (int j = 0; j < n_samples; ++j) {
    Rng rng = make_rng(derive_seed(seed, manifold_index,
                                   static_cast<std::uint64_t>(j), 0x9eULL));
    const Vector t = gaussian_vector(dim, rng);
    AnchorSample sample;
    try {
      sample = solve_anchor(t, manifold);
    } catch (const NumericalError& e) {
      throw NumericalError("draw " + std::to_string(j) + ": " + e.what());
    }
    if (sample.active) {
      // [T . anchor]^2 / |anchor|^2, the scale-invariant per-draw term; equals
      // the squared distance from T to the feasible cone.
      const double norm2 = sample.anchor.squaredNorm();
      if (norm2 > 0.0) {
        contribution_sum += sample.slack * sample.slack / norm2;
      }
    }
    out.samples.push_back(std::move(sample));
  }

  out.alpha_inverse = contribution_sum / n_samples;
  out.alpha = out.alpha_inverse > 0.0
                  ? 1.0 / out.alpha_inverse
                  : std::numeric_limits<double>::infinity();
  return out;
}

RadiusDimension manifold_radius_dimension(const std::vector<AnchorSample>& samples) {
  RadiusDimension out;
  double r2_sum = 0.0;
  double proj_sum = 0.0;
  int active = 0;
  int oriented = 0;

  for (const auto& s : samples) {
    if (!s.active) continue;
    ++active;
    const Eigen::Index d = s.anchor.size() - 1;
    const Vector v = s.anchor.head(d);
    const double c0 = s.anchor[d];
    const double scale = c0 > 1e-12 ? c0 : 1.0;
    r2_sum += v.squaredNorm() / (scale * scale);

    const double vnorm = v.norm();
    if (vnorm > 1e-12) {
      const double proj = s.t_vec.head(d).dot(v) / vnorm;
      proj_sum += proj * proj;
      ++oriented;
    }
  }

  if (active == 0) {
    out.degenerate = true;
    return out;
  }
  out.radius = std::sqrt(r2_sum / active);
  // Anchors sitting exactly on the center have no subspace direction; when
  // every anchor is central the support structure is the center axis alone.
  out.dimension = oriented > 0 ? proj_sum / oriented : 1.0;
  return out;
}

double alpha_ball(double radius, double dimension) {
  if (radius < 0.0 || dimension < 0.0) {
    throw ConfigError("alpha_ball: radius and dimension must be nonnegative");
  }
  const double a = radius * std::sqrt(dimension);
  const double lo = -12.0;
  const double hi = std::min(a, 12.0);
  // Mass beyond |t| = 12 is ~1e-32 of the Gaussian; the polynomial factor
  // cannot resurrect it.
  double integral = 0.0;
  if (hi > lo) {
    const int panels = 20000;  // composite Simpson, error far below 1e-6
    const double h = (hi - lo) / panels;
    auto f = [&](double t) {
      const double diff = a - t;
      return std::exp(-0.5 * t * t) * diff * diff;
    };
    double acc = f(lo) + f(hi);
    for (int i = 1; i < panels; ++i) {
      acc += f(lo + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
    }
    integral = acc * h / 3.0 / std::sqrt(2.0 * std::numbers::pi);
  }
  const double alpha_inverse = integral / (radius * radius + 1.0);
  return alpha_inverse > 0.0 ? 1.0 / alpha_inverse
                             : std::numeric_limits<double>::infinity();
}

CenterCorrelation center_correlation(const ManifoldSet& set) {
  set.validate();
  const Matrix centers = set.centers();
  const Vector mean = centers.colwise().mean().transpose();
  const Matrix centered = centers.rowwise() - mean.transpose();

  CenterCorrelation out;
  double sum = 0.0;
  int pairs = 0;
  for (Eigen::Index i = 0; i < centered.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < centered.rows(); ++j) {
      const double ni = centered.row(i).norm();
      const double nj = centered.row(j).norm();
      if (ni <= 1e-12 || nj <= 1e-12) {
        ++out.skipped_pairs;
        continue;
      }
      sum += std::abs(centered.row(i).dot(centered.row(j))) / (ni * nj);
      ++pairs;
    }
  }
  out.rho = pairs > 0 ? sum / pairs : 0.0;
  return out;
}

MgmReport analyze(const ManifoldSet& set, const AnalysisConfig& config) {
  set.validate();

  MgmReport report;
  report.n_gauss_samples = config.n_gauss_samples;
  report.seed = config.seed;
  report.ambient_dim = set.ambient_dim;

  const CenterCorrelation rho = center_correlation(set);
  report.rho_center = rho.rho;
  report.skipped_center_pairs = rho.skipped_pairs;

  const ManifoldSet* working = &set;
  CenterProjectionResult projection;
  if (config.project_centers) {
    projection = project_to_center_nullspace(set);
    report.projection_applied = true;
    report.projection_was_identity = projection.identity;
    working = &projection.set;
  }

  const std::size_t p = working->manifolds.size();
  report.alpha_per_manifold.resize(p);
  report.radius_per_manifold.resize(p);
  report.dimension_per_manifold.resize(p);
  std::vector<double> alpha_inverse(p);

  std::atomic<bool> failed{false};
  std::vector<std::string> errors(p);
  parallel_for(p, config.threads, [&](std::size_t i) {
    try {
      const SubspaceManifold sub = build_subspace(working->manifolds[i]);
      const ManifoldCapacity cap = mft_capacity(
          sub, config.n_gauss_samples, config.seed, static_cast<std::uint64_t>(i));
      const RadiusDimension rd = manifold_radius_dimension(cap.samples);
      alpha_inverse[i] = cap.alpha_inverse;
      report.alpha_per_manifold[i] = cap.alpha;
      report.radius_per_manifold[i] = rd.radius;
      report.dimension_per_manifold[i] = rd.dimension;
    } catch (const std::exception& e) {
      errors[i] = e.what();
      failed = true;
    }
  });
  if (failed) {
    for (std::size_t i = 0; i < p; ++i) {
      if (!errors[i].empty()) {
        throw NumericalError("manifold " + std::to_string(i) + ": " + errors[i]);
      }
    }
  }

  double inv_mean = 0.0;
  double r_sum = 0.0;
  double d_sum = 0.0;
  for (std::size_t i = 0; i < p; ++i) {
    inv_mean += alpha_inverse[i];
    r_sum += report.radius_per_manifold[i];
    d_sum += report.dimension_per_manifold[i];
  }
  inv_mean /= static_cast<double>(p);
  report.alpha_m = inv_mean > 0.0 ? 1.0 / inv_mean
                                  : std::numeric_limits<double>::infinity();
  report.r_m = r_sum / static_cast<double>(p);
  report.d_m = d_sum / static_cast<double>(p);

  if (config.compute_empirical) {
    const EmpiricalCapacityResult emp = empirical_capacity(
        set, config.empirical_trials_per_n, derive_seed(config.seed, 0xe1ULL));
    report.alpha_empirical = emp.alpha_empirical;
  }
  return report;
}

}  // namespace mftma
