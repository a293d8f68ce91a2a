#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mftma/common.hpp"
#include "mftma/net.hpp"
#include "mftma/synthdata.hpp"

namespace mftma {

// The cross-entropy loss splits into a piece coupled to the training labels
// and the partition-function piece that is independent of them; the same
// split applies to the gradient, layer by layer, through the class-uniform
// mean g_bar of the per-class weight sensitivities. Centering by g_bar makes
// the label-dependent part vanish for uniform label distributions and the
// label-independent part vanish for uniform model outputs, while their sum
// stays exactly the total gradient for any centering constant.

struct DecomposedLoss {
  double label_dependent = 0.0;   // -< sum_c P_L(c|x) N_c(x) >
  double label_independent = 0.0;  // < log Z >
  double total() const { return label_dependent + label_independent; }
};

DecomposedLoss decompose_loss(const FeedforwardModel& model,
                              const Matrix& inputs, const Matrix& label_dist);

/// Class-uniform mean sensitivity g_bar per weight layer, averaged over the
/// given inputs. Used as the centering constant for the decomposition.
std::vector<Matrix> uniform_mean_gradients(const FeedforwardModel& model,
                                           const Matrix& inputs);

struct GradParts {
  std::vector<Matrix> label_dependent;   // one matrix per weight layer
  std::vector<Matrix> label_independent;
};

/// Both gradient parts for every weight layer in one pass. `g_bar` defaults
/// to the class-uniform mean over the same batch.
GradParts grad_parts_all_layers(const FeedforwardModel& model,
                                const Matrix& inputs, const Matrix& label_dist,
                                const std::vector<Matrix>* g_bar = nullptr);

/// Single-layer views; `layer` is 1-based, so layer == n_layers() is the
/// output layer.
struct LayerGradParts {
  Matrix label_dependent;
  Matrix label_independent;
};

LayerGradParts grad_parts_layer(const FeedforwardModel& model,
                                const Matrix& inputs, const Matrix& label_dist,
                                int layer,
                                const std::vector<Matrix>* g_bar = nullptr);

LayerGradParts grad_parts_final_layer(const FeedforwardModel& model,
                                      const Matrix& inputs,
                                      const Matrix& label_dist,
                                      const std::vector<Matrix>* g_bar = nullptr);

struct GradNormRow {
  int epoch = 0;
  int layer = 0;  // 1-based weight layer
  std::string subset;
  double dep_norm = 0.0;
  double ind_norm = 0.0;
  double total_norm = 0.0;
  double log_dep_over_ind = 0.0;
  bool ratio_flagged = false;  // a norm underflowed 1e-300
};

struct GradRatioRow {
  int epoch = 0;
  int layer = 0;
  double log_dep_unperm_over_perm = 0.0;
  double log_ind_unperm_over_perm = 0.0;
  bool flagged = false;
};

struct GradDecompReport {
  std::vector<GradNormRow> rows;     // per (epoch, layer, subset)
  std::vector<GradRatioRow> ratios;  // per (epoch, layer)
  std::vector<int> missing_epochs;
  std::string centering = "full training set";
};

/// Gradient parts on the full unpermuted and permuted subsets (and combined),
/// per layer, at every requested checkpoint epoch. Missing epochs are listed
/// and skipped. The centering mean g_bar is taken over the full training set.
GradDecompReport subset_grad_report(const CheckpointStore& store,
                                    const PermutedDataset& data,
                                    const std::vector<int>& epochs,
                                    Eigen::Index eval_batch = 2048);

}  // namespace mftma
