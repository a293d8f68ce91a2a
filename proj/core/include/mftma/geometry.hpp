#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mftma/common.hpp"
#include "mftma/manifold.hpp"

namespace mftma {

/// A manifold expressed in its own affine subspace. `basis` is an orthonormal
/// (D_sub x N) span of the centered points; `coords` is M x (D_sub + 1) where
/// the final column of every row equals the center norm. Reconstruction is
/// center + coords(:, 0:D_sub) * basis.
struct SubspaceManifold {
  Vector center;
  Matrix basis;
  Matrix coords;

  Eigen::Index subspace_dim() const { return basis.rows(); }
  Eigen::Index points() const { return coords.rows(); }
  double center_coordinate() const {
    return coords.rows() > 0 ? coords(0, coords.cols() - 1) : 0.0;
  }
};

/// One Gaussian draw and its anchor: the convex combination of manifold
/// points picked out by the margin QP. Inactive draws needed no support and
/// contribute zero to the capacity average.
struct AnchorSample {
  Vector t_vec;         // (D_sub + 1) standard Gaussian draw
  Vector anchor;        // (D_sub + 1) point in the hull of coords
  Vector hull_weights;  // M convex weights
  double slack = 0.0;   // [T . anchor]_+
  bool active = false;
};

struct ManifoldCapacity {
  double alpha_inverse = 0.0;  // Monte-Carlo mean of the per-draw contribution
  double alpha = 0.0;
  std::vector<AnchorSample> samples;
};

struct RadiusDimension {
  double radius = 0.0;
  double dimension = 0.0;
  bool degenerate = false;  // no active samples
};

struct AnalysisConfig {
  bool project_centers = true;
  int n_gauss_samples = 200;
  std::uint64_t seed = 0;
  int threads = 1;
  bool compute_empirical = false;
  int empirical_trials_per_n = 100;
};

/// The manifold geometry metrics for one ManifoldSet. Capacity aggregates
/// per-manifold values through the inverse mean; radius/dimension are
/// arithmetic means.
struct MgmReport {
  double alpha_m = 0.0;
  double r_m = 0.0;
  double d_m = 0.0;
  double rho_center = 0.0;
  std::optional<double> alpha_empirical;
  int n_gauss_samples = 0;
  std::uint64_t seed = 0;

  std::vector<double> alpha_per_manifold;
  std::vector<double> radius_per_manifold;
  std::vector<double> dimension_per_manifold;

  bool projection_applied = false;
  bool projection_was_identity = false;
  Eigen::Index ambient_dim = 0;
  int skipped_center_pairs = 0;
};

SubspaceManifold build_subspace(const Matrix& points);

/// Anchor point of one Gaussian draw: projects `t_vec` onto the cone
/// { V : coords_row . V <= 0 } and reads the anchor off the dual weights.
/// Throws NumericalError when the active-set solve exceeds its iteration cap.
AnchorSample solve_anchor(const Vector& t_vec, const SubspaceManifold& manifold);

/// Monte-Carlo estimate of the inverse capacity of one manifold. Draw j uses
/// a stream seeded by (seed, manifold_index, j), so any execution schedule
/// yields identical samples.
ManifoldCapacity mft_capacity(const SubspaceManifold& manifold, int n_samples,
                              std::uint64_t seed, std::uint64_t manifold_index = 0);

/// Radius and dimension from the active anchor statistics. Norms are taken in
/// the manifold subspace, relative to the center coordinate.
RadiusDimension manifold_radius_dimension(const std::vector<AnchorSample>& samples);

/// Capacity of a D-dimensional ball of (relative) radius R: Gaussian-measure
/// quadrature, absolute error <= 1e-6.
double alpha_ball(double radius, double dimension);

struct CenterCorrelation {
  double rho = 0.0;
  int skipped_pairs = 0;
};

/// Mean absolute cosine similarity between centers after subtracting the
/// global center mean. Zero-norm centers are skipped and counted.
CenterCorrelation center_correlation(const ManifoldSet& set);

/// Full pipeline: optional center null-space projection, per-manifold
/// subspace build and capacity/radius/dimension Monte-Carlo, plus the center
/// correlation of the input set.
MgmReport analyze(const ManifoldSet& set, const AnalysisConfig& config);

}  // namespace mftma
