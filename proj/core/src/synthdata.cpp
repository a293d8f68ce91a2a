#include "mftma/synthdata.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace mftma {

void SphereDatasetSpec::validate() const {
  if (n_classes < 2 || n_classes % 2 != 0) {
    throw ConfigError("sphere dataset: n_classes must be even and >= 2");
  }
  if (sphere_dim + 1 > ambient_dim) {
    throw ConfigError("sphere dataset: need sphere_dim + 1 <= ambient_dim");
  }
  if (static_cast<Eigen::Index>(n_classes) / 2 > ambient_dim) {
    throw ConfigError(
        "sphere dataset: n_classes/2 orthogonal directions do not fit in the "
        "ambient dimension");
  }
  if (radius < 0.0) throw ConfigError("sphere dataset: radius must be >= 0");
  if (samples_per_class < 1 || test_samples_per_class < 0) {
    throw ConfigError("sphere dataset: invalid sample counts");
  }
}

std::string subset_name(ExampleSubset s) {
  switch (s) {
    case ExampleSubset::unpermuted: return "unpermuted";
    case ExampleSubset::permuted: return "permuted";
    case ExampleSubset::restored: return "restored";
    case ExampleSubset::test: return "test";
  }
  return "?";
}

namespace {

// Orthonormal columns via Householder QR of a square Gaussian draw.
Matrix random_orthonormal_columns(Eigen::Index dim, Eigen::Index count, Rng& rng) {
  const Matrix g = gaussian_matrix(dim, count, rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(dim, count);
  return q;
}

// Uniform point on the unit sphere spanned by the columns of `basis`.
Vector sphere_point(const Matrix& basis, Rng& rng) {
  Vector u = gaussian_vector(basis.cols(), rng);
  const double norm = u.norm();
  if (norm <= 0.0) return sphere_point(basis, rng);
  return basis * (u / norm);
}

}  // namespace

PermutedDataset generate_spheres(const SphereDatasetSpec& spec) {
  spec.validate();
  const Eigen::Index p = spec.n_classes;
  const Eigen::Index d = spec.ambient_dim;

  PermutedDataset data;
  data.spec = spec;
  data.n_classes = spec.n_classes;
  data.epsilon = 0.0;

  Rng center_rng = make_rng(derive_seed(spec.seed, 0xce17e25ULL));
  const Matrix directions = random_orthonormal_columns(d, p / 2, center_rng);

  // Per-class sphere subspace: the center axis plus sphere_dim - 1 random
  // orthonormal directions drawn from the axis's complement.
  std::vector<Matrix> class_basis(static_cast<std::size_t>(p));
  std::vector<Vector> class_center(static_cast<std::size_t>(p));
  for (Eigen::Index c = 0; c < p; ++c) {
    const Vector axis = directions.col(c / 2) * (c % 2 == 0 ? 1.0 : -1.0);
    Rng rng = make_rng(derive_seed(spec.seed, 0xba515ULL,
                                   static_cast<std::uint64_t>(c)));
    Matrix basis(d, spec.sphere_dim);
    basis.col(0) = axis;
    Eigen::Index filled = 1;
    while (filled < spec.sphere_dim) {
      Vector candidate = gaussian_vector(d, rng);
      // Gram-Schmidt against what we have so far.
      candidate -= basis.leftCols(filled) *
                   (basis.leftCols(filled).transpose() * candidate);
      const double norm = candidate.norm();
      if (norm > 1e-8) {
        basis.col(filled++) = candidate / norm;
      }
    }
    class_basis[static_cast<std::size_t>(c)] = std::move(basis);
    class_center[static_cast<std::size_t>(c)] = axis;
  }

  const Eigen::Index n_train = p * spec.samples_per_class;
  const Eigen::Index n_test = p * spec.test_samples_per_class;
  data.inputs.resize(n_train, d);
  data.test_inputs.resize(n_test, d);
  data.true_labels.resize(static_cast<std::size_t>(n_train));
  data.train_labels.resize(static_cast<std::size_t>(n_train));
  data.permuted_mask.assign(static_cast<std::size_t>(n_train), 0);
  data.test_labels.resize(static_cast<std::size_t>(n_test));

  Eigen::Index train_row = 0, test_row = 0;
  for (Eigen::Index c = 0; c < p; ++c) {
    Rng rng = make_rng(derive_seed(spec.seed, 0x5a3b1eULL,
                                   static_cast<std::uint64_t>(c)));
    const Matrix& basis = class_basis[static_cast<std::size_t>(c)];
    const Vector& center = class_center[static_cast<std::size_t>(c)];
    for (Eigen::Index k = 0; k < spec.samples_per_class; ++k) {
      data.inputs.row(train_row) =
          (center + spec.radius * sphere_point(basis, rng)).transpose();
      data.true_labels[static_cast<std::size_t>(train_row)] =
          static_cast<std::uint32_t>(c);
      data.train_labels[static_cast<std::size_t>(train_row)] =
          static_cast<std::uint32_t>(c);
      ++train_row;
    }
    for (Eigen::Index k = 0; k < spec.test_samples_per_class; ++k) {
      data.test_inputs.row(test_row) =
          (center + spec.radius * sphere_point(basis, rng)).transpose();
      data.test_labels[static_cast<std::size_t>(test_row)] =
          static_cast<std::uint32_t>(c);
      ++test_row;
    }
  }
  return data;
}

PermutedDataset permute_labels(const PermutedDataset& data, double epsilon,
                               std::uint64_t seed) {
  if (epsilon < 0.0 || epsilon > 1.0) {
    throw ConfigError("permute_labels: epsilon must be in [0, 1]");
  }
  PermutedDataset out = data;
  out.epsilon = epsilon;
  out.train_labels = data.true_labels;
  std::fill(out.permuted_mask.begin(), out.permuted_mask.end(), 0);

  const Eigen::Index n = data.n_train();
  const auto count = static_cast<Eigen::Index>(std::llround(epsilon * n));
  if (count == 0) return out;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(derive_seed(seed, 0x9e2a7bULL));
  std::shuffle(order.begin(), order.end(), rng);

  std::uniform_int_distribution<std::uint32_t> label(0, data.n_classes - 1);
  for (Eigen::Index k = 0; k < count; ++k) {
    const auto idx = static_cast<std::size_t>(order[static_cast<std::size_t>(k)]);
    out.permuted_mask[idx] = 1;
    out.train_labels[idx] = label(rng);  // identity draws stay permuted
  }
  return out;
}

ManifoldSet subset_manifolds(const PermutedDataset& data,
                             const Matrix& activations, ExampleSubset subset,
                             Eigen::Index p_sel, Eigen::Index m_sel,
                             std::uint64_t seed) {
  const bool is_test = subset == ExampleSubset::test;
  const Eigen::Index aligned_rows = is_test ? data.n_test() : data.n_train();
  if (activations.rows() != aligned_rows) {
    std::ostringstream os;
    os << "subset_manifolds: activations have " << activations.rows()
       << " rows, expected " << aligned_rows << " for subset "
       << subset_name(subset);
    throw ConfigError(os.str());
  }
  if (p_sel < 1 || p_sel > static_cast<Eigen::Index>(data.n_classes)) {
    throw ConfigError("subset_manifolds: p_sel out of range");
  }
  if (m_sel < 1) throw ConfigError("subset_manifolds: m_sel must be >= 1");

  // Rows eligible for this subset, keyed by its grouping label.
  std::vector<std::vector<Eigen::Index>> by_class(data.n_classes);
  for (Eigen::Index i = 0; i < aligned_rows; ++i) {
    const auto u = static_cast<std::size_t>(i);
    std::uint32_t group = 0;
    bool eligible = false;
    switch (subset) {
      case ExampleSubset::unpermuted:
        eligible = data.permuted_mask[u] == 0;
        group = data.train_labels[u];
        break;
      case ExampleSubset::permuted:
        eligible = data.permuted_mask[u] != 0;
        group = data.train_labels[u];
        break;
      case ExampleSubset::restored:
        eligible = data.permuted_mask[u] != 0;
        group = data.true_labels[u];
        break;
      case ExampleSubset::test:
        eligible = true;
        group = data.test_labels[u];
        break;
    }
    if (eligible) by_class[group].push_back(i);
  }

  bool any_eligible = false;
  for (const auto& rows : by_class) {
    if (!rows.empty()) any_eligible = true;
  }
  if (!any_eligible) {
    throw ConfigError("subset_manifolds: subset " + subset_name(subset) +
                      " is empty (no eligible examples)");
  }

  // Deterministic class choice: seeded shuffle of the class ids.
  std::vector<std::uint32_t> classes(data.n_classes);
  std::iota(classes.begin(), classes.end(), 0);
  if (p_sel < static_cast<Eigen::Index>(data.n_classes)) {
    Rng rng = make_rng(derive_seed(seed, 0xc1a55e5ULL));
    std::shuffle(classes.begin(), classes.end(), rng);
    classes.resize(static_cast<std::size_t>(p_sel));
    std::sort(classes.begin(), classes.end());
  }

  std::vector<std::uint32_t> deficient;
  for (std::uint32_t c : classes) {
    if (static_cast<Eigen::Index>(by_class[c].size()) < m_sel) {
      deficient.push_back(c);
    }
  }
  if (!deficient.empty()) {
    std::ostringstream os;
    os << "subset_manifolds: subset " << subset_name(subset)
       << " lacks " << m_sel << " examples for classes";
    for (std::uint32_t c : deficient) os << ' ' << c;
    throw ConfigError(os.str());
  }

  ManifoldSet set;
  set.ambient_dim = activations.cols();
  for (std::uint32_t c : classes) {
    auto rows = by_class[c];
    Rng rng = make_rng(derive_seed(seed, 0x5e1ec7ULL, c,
                                   static_cast<std::uint64_t>(subset)));
    std::shuffle(rows.begin(), rows.end(), rng);
    Matrix manifold(m_sel, activations.cols());
    for (Eigen::Index k = 0; k < m_sel; ++k) {
      manifold.row(k) = activations.row(rows[static_cast<std::size_t>(k)]);
    }
    set.manifolds.push_back(std::move(manifold));
    set.class_ids.push_back(c);
  }
  return set;
}

}  // namespace mftma
