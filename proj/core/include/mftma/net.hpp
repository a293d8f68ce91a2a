#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <vector>

#include "mftma/common.hpp"
#include "mftma/synthdata.hpp"

namespace mftma {

/// Width-configurable feedforward net: rectifier on hidden layers, identity
/// on the output, biases off by default.
struct NetSpec {
  std::vector<Eigen::Index> layer_widths;  // input, hidden..., output
  double init_gain = 1.0;
  bool with_bias = false;
  std::uint64_t seed = 0;

  static NetSpec dense_default();  // 1024 in, five 1024 hidden, 100 out

  void validate() const;
  std::uint64_t hash() const;
  Eigen::Index n_weight_layers() const {
    return static_cast<Eigen::Index>(layer_widths.size()) - 1;
  }
};

struct FeedforwardModel {
  std::vector<Matrix> weights;  // W^l maps activations l -> preactivations l+1
  std::vector<Vector> biases;   // empty when biases are disabled
  int epoch = 0;
  std::uint64_t spec_hash = 0;

  Eigen::Index input_dim() const { return weights.front().cols(); }
  Eigen::Index output_dim() const { return weights.back().rows(); }
  Eigen::Index n_layers() const {
    return static_cast<Eigen::Index>(weights.size());
  }
};

struct ForwardPass {
  // activations[0] is the input; activations[l] for hidden l is the
  // post-rectifier output; activations[L] holds the logits.
  std::vector<Matrix> activations;
  Matrix probabilities;  // stabilized softmax rows

  const Matrix& logits() const { return activations.back(); }
};

FeedforwardModel init_model(const NetSpec& spec);
ForwardPass forward(const FeedforwardModel& model, const Matrix& inputs);

Matrix one_hot(const std::vector<std::uint32_t>& labels, Eigen::Index n_classes);

double cross_entropy(const Matrix& probabilities, const Matrix& label_dist);

struct LossGrad {
  double loss = 0.0;
  std::vector<Matrix> weight_grads;
  std::vector<Vector> bias_grads;
};

/// Exact analytic gradient of the batch-mean cross entropy.
LossGrad loss_and_grad(const FeedforwardModel& model, const Matrix& inputs,
                       const Matrix& label_dist);

struct TrainConfig {
  enum class Optimizer { adam, gradient_descent };
  Optimizer optimizer = Optimizer::adam;
  double learning_rate = 1e-4;
  Eigen::Index batch_size = 1024;
  int max_epochs = 1000;
  double target_train_accuracy = 0.99;
  int checkpoint_stride = 1;
  std::vector<int> extra_checkpoint_epochs;
  std::uint64_t seed = 0;
  Eigen::Index eval_batch = 4096;
};

enum class StopReason { target_accuracy, epoch_cap, diverged };

struct TraceRow {
  int epoch = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::optional<double> unpermuted_accuracy;
  std::optional<double> permuted_accuracy;
  std::optional<double> restored_accuracy;
};

struct TrainingTrace {
  std::vector<TraceRow> rows;
  int best_epoch = 0;
  double best_test_accuracy = 0.0;
  int final_epoch = 0;
  StopReason stop = StopReason::epoch_cap;
};

/// Per-epoch weight snapshots, in memory or backed by a directory of MPC1
/// files. Snapshots are immutable; storing an epoch twice is an error.
class CheckpointStore {
 public:
  CheckpointStore() = default;
  explicit CheckpointStore(std::filesystem::path dir, std::uint64_t spec_hash);

  void put(const FeedforwardModel& model);
  bool has(int epoch) const;
  FeedforwardModel get(int epoch) const;
  std::vector<int> epochs() const;
  std::uint64_t spec_hash() const { return spec_hash_; }

 private:
  std::filesystem::path dir_;  // empty: purely in-memory
  std::uint64_t spec_hash_ = 0;
  std::map<int, FeedforwardModel> memory_;
  std::map<int, std::filesystem::path> files_;
};

/// Runs the optimizer with per-epoch accuracy tracking and checkpointing.
/// Epoch 0 (the initial model) is always evaluated and snapshotted.
TrainingTrace train(FeedforwardModel& model, const PermutedDataset& data,
                    const TrainConfig& cfg, CheckpointStore* store);

struct SubsetAccuracy {
  double train = 0.0;
  double test = 0.0;
  std::optional<double> unpermuted;
  std::optional<double> permuted;
  std::optional<double> restored;
};

/// Unpermuted/permuted subsets score against the training labels; restored
/// and test against the true labels. Empty subsets come back unset.
SubsetAccuracy accuracy_by_subset(const FeedforwardModel& model,
                                  const PermutedDataset& data,
                                  Eigen::Index eval_batch = 4096);

}  // namespace mftma
