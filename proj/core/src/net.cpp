#include "mftma/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "mftma/io.hpp"

namespace mftma {

NetSpec NetSpec::dense_default() {
  NetSpec spec;
  spec.layer_widths = {1024, 1024, 1024, 1024, 1024, 1024, 100};
  return spec;
}

void NetSpec::validate() const {
  if (layer_widths.size() < 2) {
    throw ConfigError("NetSpec needs at least an input and an output layer");
  }
  for (Eigen::Index w : layer_widths) {
    if (w < 1) throw ConfigError("NetSpec widths must be >= 1");
  }
  if (init_gain < 0.0) throw ConfigError("NetSpec init_gain must be >= 0");
}

std::uint64_t NetSpec::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t v) {
    h ^= v;
    h *= 0x100000001b3ULL;
  };
  for (Eigen::Index w : layer_widths) mix(static_cast<std::uint64_t>(w));
  std::uint64_t gain_bits;
  static_assert(sizeof(gain_bits) == sizeof(init_gain));
  std::memcpy(&gain_bits, &init_gain, sizeof(gain_bits));
  mix(gain_bits);
  mix(with_bias ? 1 : 0);
  mix(seed);
  return h;
}

FeedforwardModel init_model(const NetSpec& spec) {
  spec.validate();
  FeedforwardModel model;
  model.spec_hash = spec.hash();
  model.epoch = 0;
  const Eigen::Index layers = spec.n_weight_layers();
  model.weights.reserve(static_cast<std::size_t>(layers));
  for (Eigen::Index l = 0; l < layers; ++l) {
    const Eigen::Index fan_in = spec.layer_widths[static_cast<std::size_t>(l)];
    const Eigen::Index fan_out =
        spec.layer_widths[static_cast<std::size_t>(l) + 1];
    const double stddev =
        spec.init_gain * std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
    Rng rng = make_rng(derive_seed(spec.seed, 0x1417ULL,
                                   static_cast<std::uint64_t>(l)));
    model.weights.push_back(stddev * gaussian_matrix(fan_out, fan_in, rng));
    if (spec.with_bias) {
      model.biases.push_back(Vector::Zero(fan_out));
    }
  }
  return model;
}

namespace {

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    p.row(i) = (logits.row(i).array() - m).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

void check_finite(const Matrix& m, Eigen::Index layer) {
  if (!m.allFinite()) {
    throw NumericalError("non-finite activation at layer " +
                         std::to_string(layer));
  }
}

}  // namespace

ForwardPass forward(const FeedforwardModel& model, const Matrix& inputs) {
  if (inputs.cols() != model.input_dim()) {
    std::ostringstream os;
    os << "forward: input width " << inputs.cols() << " does not match model ("
       << model.input_dim() << ")";
    throw ConfigError(os.str());
  }
  ForwardPass pass;
  const Eigen::Index layers = model.n_layers();
  pass.activations.reserve(static_cast<std::size_t>(layers) + 1);
  pass.activations.push_back(inputs);
  for (Eigen::Index l = 0; l < layers; ++l) {
    Matrix z = pass.activations.back() *
               model.weights[static_cast<std::size_t>(l)].transpose();
    if (!model.biases.empty()) {
      z.rowwise() += model.biases[static_cast<std::size_t>(l)].transpose();
    }
    if (l + 1 < layers) z = z.cwiseMax(0.0);
    check_finite(z, l + 1);
    pass.activations.push_back(std::move(z));
  }
  pass.probabilities = softmax_rows(pass.activations.back());
  return pass;
}

Matrix one_hot(const std::vector<std::uint32_t>& labels, Eigen::Index n_classes) {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= static_cast<std::uint32_t>(n_classes)) {
      throw ConfigError("one_hot: label out of range");
    }
    out(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return out;
}

double cross_entropy(const Matrix& probabilities, const Matrix& label_dist) {
  if (probabilities.rows() != label_dist.rows() ||
      probabilities.cols() != label_dist.cols()) {
    throw ConfigError("cross_entropy: shape mismatch");
  }
  // Guard against log(0) for confident wrong predictions.
  const double floor = 1e-300;
  double total = 0.0;
  for (Eigen::Index i = 0; i < probabilities.rows(); ++i) {
    for (Eigen::Index c = 0; c < probabilities.cols(); ++c) {
      const double pl = label_dist(i, c);
      if (pl != 0.0) {
        total -= pl * std::log(std::max(probabilities(i, c), floor));
      }
    }
  }
  return total / probabilities.rows();
}

LossGrad loss_and_grad(const FeedforwardModel& model, const Matrix& inputs,
                       const Matrix& label_dist) {
  if (inputs.rows() == 0) throw ConfigError("loss_and_grad: empty batch");
  const ForwardPass pass = forward(model, inputs);
  const Eigen::Index batch = inputs.rows();
  const Eigen::Index layers = model.n_layers();

  LossGrad out;
  out.loss = cross_entropy(pass.probabilities, label_dist);
  out.weight_grads.resize(static_cast<std::size_t>(layers));
  if (!model.biases.empty()) {
    out.bias_grads.resize(static_cast<std::size_t>(layers));
  }

  Matrix delta = (pass.probabilities - label_dist) / static_cast<double>(batch);
  for (Eigen::Index l = layers - 1; l >= 0; --l) {
    const Matrix& phi = pass.activations[static_cast<std::size_t>(l)];
    out.weight_grads[static_cast<std::size_t>(l)] = delta.transpose() * phi;
    if (!model.biases.empty()) {
      out.bias_grads[static_cast<std::size_t>(l)] =
          delta.colwise().sum().transpose();
    }
    if (l > 0) {
      delta = (delta * model.weights[static_cast<std::size_t>(l)])
                  .cwiseProduct((phi.array() > 0.0).cast<double>().matrix());
    }
  }
  return out;
}

CheckpointStore::CheckpointStore(std::filesystem::path dir,
                                 std::uint64_t spec_hash)
    : dir_(std::move(dir)), spec_hash_(spec_hash) {
  std::filesystem::create_directories(dir_);
  for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("epoch_", 0) == 0 && entry.path().extension() == ".mpc") {
      const int epoch = std::stoi(name.substr(6));
      files_[epoch] = entry.path();
    }
  }
}

void CheckpointStore::put(const FeedforwardModel& model) {
  if (has(model.epoch)) {
    throw IoError("checkpoint for epoch " + std::to_string(model.epoch) +
                  " already exists; snapshots are immutable");
  }
  if (spec_hash_ == 0) spec_hash_ = model.spec_hash;
  if (model.spec_hash != spec_hash_) {
    throw IoError("checkpoint spec hash mismatch");
  }
  if (dir_.empty()) {
    memory_[model.epoch] = model;
  } else {
    char name[32];
    std::snprintf(name, sizeof(name), "epoch_%06d.mpc", model.epoch);
    const std::filesystem::path path = dir_ / name;
    write_model_snapshot(path, model);
    files_[model.epoch] = path;
  }
}

bool CheckpointStore::has(int epoch) const {
  return memory_.count(epoch) > 0 || files_.count(epoch) > 0;
}

FeedforwardModel CheckpointStore::get(int epoch) const {
  if (auto it = memory_.find(epoch); it != memory_.end()) return it->second;
  if (auto it = files_.find(epoch); it != files_.end()) {
    FeedforwardModel model = read_model_snapshot(it->second);
    if (model.spec_hash != spec_hash_) {
      throw IoError("checkpoint spec hash mismatch for epoch " +
                    std::to_string(epoch));
    }
    return model;
  }
  throw IoError("no checkpoint for epoch " + std::to_string(epoch));
}

std::vector<int> CheckpointStore::epochs() const {
  std::vector<int> out;
  for (const auto& [e, _] : memory_) out.push_back(e);
  for (const auto& [e, _] : files_) out.push_back(e);
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

struct AdamState {
  std::vector<Matrix> m, v;
  long t = 0;
};

void adam_step(FeedforwardModel& model, const LossGrad& grad, AdamState& state,
               double lr) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  if (state.m.empty()) {
    for (const auto& w : model.weights) {
      state.m.push_back(Matrix::Zero(w.rows(), w.cols()));
      state.v.push_back(Matrix::Zero(w.rows(), w.cols()));
    }
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    const Matrix& g = grad.weight_grads[l];
    state.m[l] = b1 * state.m[l] + (1.0 - b1) * g;
    state.v[l] = b2 * state.v[l] + (1.0 - b2) * g.cwiseProduct(g);
    model.weights[l] -=
        (lr / c1) * state.m[l].cwiseQuotient(
                        ((state.v[l] / c2).cwiseSqrt().array() + eps).matrix());
  }
}

double subset_accuracy(const std::vector<Eigen::Index>& predictions,
                       const std::vector<std::uint32_t>& labels) {
  if (predictions.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] == static_cast<Eigen::Index>(labels[i])) ++correct;
  }
  return static_cast<double>(correct) / predictions.size();
}

std::vector<Eigen::Index> predict(const FeedforwardModel& model,
                                  const Matrix& inputs, Eigen::Index eval_batch) {
  std::vector<Eigen::Index> out(static_cast<std::size_t>(inputs.rows()));
  for (Eigen::Index start = 0; start < inputs.rows(); start += eval_batch) {
    const Eigen::Index count = std::min(eval_batch, inputs.rows() - start);
    const ForwardPass pass = forward(model, inputs.middleRows(start, count));
    for (Eigen::Index i = 0; i < count; ++i) {
      Eigen::Index arg = 0;
      pass.logits().row(i).maxCoeff(&arg);
      out[static_cast<std::size_t>(start + i)] = arg;
    }
  }
  return out;
}

}  // namespace

SubsetAccuracy accuracy_by_subset(const FeedforwardModel& model,
                                  const PermutedDataset& data,
                                  Eigen::Index eval_batch) {
  SubsetAccuracy acc;
  const std::vector<Eigen::Index> train_pred =
      predict(model, data.inputs, eval_batch);

  std::size_t correct_train = 0;
  std::size_t n_u = 0, c_u = 0, n_p = 0, c_p = 0, c_r = 0;
  for (std::size_t i = 0; i < train_pred.size(); ++i) {
    const bool hit_train =
        train_pred[i] == static_cast<Eigen::Index>(data.train_labels[i]);
    const bool hit_true =
        train_pred[i] == static_cast<Eigen::Index>(data.true_labels[i]);
    correct_train += hit_train;
    if (data.permuted_mask[i]) {
      ++n_p;
      c_p += hit_train;
      c_r += hit_true;
    } else {
      ++n_u;
      c_u += hit_train;
    }
  }
  if (!train_pred.empty()) {
    acc.train = static_cast<double>(correct_train) / train_pred.size();
  }
  if (n_u > 0) acc.unpermuted = static_cast<double>(c_u) / n_u;
  if (n_p > 0) {
    acc.permuted = static_cast<double>(c_p) / n_p;
    acc.restored = static_cast<double>(c_r) / n_p;
  }
  if (data.n_test() > 0) {
    const std::vector<Eigen::Index> test_pred =
        predict(model, data.test_inputs, eval_batch);
    acc.test = subset_accuracy(test_pred, data.test_labels);
  }
  return acc;
}

TrainingTrace train(FeedforwardModel& model, const PermutedDataset& data,
                    const TrainConfig& cfg, CheckpointStore* store) {
  if (cfg.learning_rate <= 0.0) {
    throw ConfigError("train: learning rate must be positive");
  }
  if (data.inputs.cols() != model.input_dim()) {
    throw ConfigError("train: dataset width does not match model input");
  }
  const Eigen::Index n = data.n_train();
  const Matrix labels_one_hot =
      one_hot(data.train_labels, model.output_dim());

  TrainingTrace trace;
  AdamState adam;

  auto should_snapshot = [&](int epoch) {
    if (cfg.checkpoint_stride > 0 && epoch % cfg.checkpoint_stride == 0) {
      return true;
    }
    return std::find(cfg.extra_checkpoint_epochs.begin(),
                     cfg.extra_checkpoint_epochs.end(),
                     epoch) != cfg.extra_checkpoint_epochs.end();
  };

  auto evaluate = [&](int epoch, double loss) {
    const SubsetAccuracy acc = accuracy_by_subset(model, data, cfg.eval_batch);
    TraceRow row;
    row.epoch = epoch;
    row.loss = loss;
    row.train_accuracy = acc.train;
    row.test_accuracy = acc.test;
    row.unpermuted_accuracy = acc.unpermuted;
    row.permuted_accuracy = acc.permuted;
    row.restored_accuracy = acc.restored;
    trace.rows.push_back(row);
    if (acc.test > trace.best_test_accuracy) {
      trace.best_test_accuracy = acc.test;
      trace.best_epoch = epoch;
    }
    return acc;
  };

  // Epoch 0: the freshly initialized model.
  {
    double init_loss = 0.0;
    for (Eigen::Index start = 0; start < n; start += cfg.eval_batch) {
      const Eigen::Index count = std::min(cfg.eval_batch, n - start);
      const ForwardPass pass = forward(model, data.inputs.middleRows(start, count));
      init_loss += count * cross_entropy(pass.probabilities,
                                         labels_one_hot.middleRows(start, count));
    }
    evaluate(0, init_loss / n);
    if (store && !store->has(0)) store->put(model);
  }

  FeedforwardModel best_model = model;  // rolling snapshot for the best epoch

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  const bool full_batch =
      cfg.optimizer == TrainConfig::Optimizer::gradient_descent;
  const Eigen::Index batch_size = full_batch ? n : cfg.batch_size;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    if (!full_batch) {
      Rng rng = make_rng(derive_seed(cfg.seed, 0x50efULL,
                                     static_cast<std::uint64_t>(epoch)));
      std::shuffle(order.begin(), order.end(), rng);
    }

    double epoch_loss = 0.0;
    int batches = 0;
    for (Eigen::Index start = 0; start < n; start += batch_size) {
      const Eigen::Index count = std::min(batch_size, n - start);
      Matrix batch(count, data.inputs.cols());
      Matrix batch_labels(count, labels_one_hot.cols());
      for (Eigen::Index i = 0; i < count; ++i) {
        batch.row(i) = data.inputs.row(order[static_cast<std::size_t>(start + i)]);
        batch_labels.row(i) =
            labels_one_hot.row(order[static_cast<std::size_t>(start + i)]);
      }
      const LossGrad grad = loss_and_grad(model, batch, batch_labels);
      if (!std::isfinite(grad.loss) || grad.loss > 1e3) {
        throw NumericalError("training diverged at epoch " +
                             std::to_string(epoch) + " (loss " +
                             std::to_string(grad.loss) + ")");
      }
      epoch_loss += grad.loss;
      ++batches;
      if (full_batch) {
        for (std::size_t l = 0; l < model.weights.size(); ++l) {
          model.weights[l] -= cfg.learning_rate * grad.weight_grads[l];
        }
      } else {
        adam_step(model, grad, adam, cfg.learning_rate);
      }
    }
    model.epoch = epoch;

    const SubsetAccuracy acc = evaluate(epoch, epoch_loss / batches);
    if (trace.best_epoch == epoch) best_model = model;
    if (store && should_snapshot(epoch) && !store->has(epoch)) {
      store->put(model);
    }
    trace.final_epoch = epoch;
    if (acc.train > cfg.target_train_accuracy) {
      trace.stop = StopReason::target_accuracy;
      break;
    }
    trace.stop = StopReason::epoch_cap;
  }

  // The final and best epochs always end up in the store.
  if (store && !store->has(model.epoch)) store->put(model);
  if (store && !store->has(best_model.epoch)) store->put(best_model);
  return trace;
}

}  // namespace mftma
