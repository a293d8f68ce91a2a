#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mftma/common.hpp"
#include "mftma/manifold.hpp"

namespace mftma {

/// Sphere-manifold dataset: P/2 orthonormal center directions, classes 2k and
/// 2k+1 centered at +e_k and -e_k, each example center + r * u with u uniform
/// on the unit sphere of a d-dimensional subspace that contains the center
/// axis. Opposed classes are linearly separable exactly when r < 1.
struct SphereDatasetSpec {
  std::uint32_t n_classes = 50;      // P, must be even
  Eigen::Index ambient_dim = 512;    // D
  Eigen::Index sphere_dim = 20;      // d
  double radius = 5.0;               // r
  Eigen::Index samples_per_class = 200;       // training examples per class
  Eigen::Index test_samples_per_class = 20;   // held-out examples per class
  std::uint64_t seed = 0;

  void validate() const;
};

enum class ExampleSubset { unpermuted, permuted, restored, test };

std::string subset_name(ExampleSubset s);

struct PermutedDataset {
  Matrix inputs;  // n_train x D
  std::vector<std::uint32_t> true_labels;
  std::vector<std::uint32_t> train_labels;
  std::vector<std::uint8_t> permuted_mask;
  double epsilon = 0.0;

  Matrix test_inputs;  // n_test x D
  std::vector<std::uint32_t> test_labels;

  std::uint32_t n_classes = 0;
  SphereDatasetSpec spec;  // provenance; zeroed for ingested datasets

  Eigen::Index n_train() const { return inputs.rows(); }
  Eigen::Index n_test() const { return test_inputs.rows(); }
};

PermutedDataset generate_spheres(const SphereDatasetSpec& spec);

/// Marks exactly round(epsilon * n_train) examples (uniform without
/// replacement) and assigns each a uniform random label over all classes;
/// the drawn label may coincide with the true one. True labels untouched.
PermutedDataset permute_labels(const PermutedDataset& data, double epsilon,
                               std::uint64_t seed);

/// Groups activation rows into manifolds for one analysis subset.
/// `activations` must be row-aligned with the train split (or the test split
/// for ExampleSubset::test). Samples m_sel rows per class for p_sel classes;
/// throws ConfigError when a selected class cannot fill m_sel rows.
ManifoldSet subset_manifolds(const PermutedDataset& data,
                             const Matrix& activations, ExampleSubset subset,
                             Eigen::Index p_sel, Eigen::Index m_sel,
                             std::uint64_t seed);

}  // namespace mftma
