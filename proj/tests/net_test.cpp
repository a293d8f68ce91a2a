#include "mftma/net.hpp"

#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "mftma/io.hpp"

using namespace mftma;

namespace {

NetSpec tiny_spec(std::uint64_t seed = 1) {
  NetSpec spec;
  spec.layer_widths = {12, 16, 10, 7};
  spec.seed = seed;
  return spec;
}

PermutedDataset tiny_dataset(std::uint64_t seed, double epsilon) {
  SphereDatasetSpec spec;
  spec.n_classes = 10;
  spec.ambient_dim = 24;
  spec.sphere_dim = 4;
  spec.radius = 2.0;
  spec.samples_per_class = 50;
  spec.test_samples_per_class = 8;
  spec.seed = seed;
  PermutedDataset data = generate_spheres(spec);
  if (epsilon > 0.0) data = permute_labels(data, epsilon, seed + 1);
  return data;
}

}  // namespace

TEST_CASE("zero gain gives uniform outputs and log P loss") {
  NetSpec spec;
  spec.layer_widths = {30, 40, 100};
  spec.init_gain = 0.0;
  const FeedforwardModel model = init_model(spec);

  Rng rng = make_rng(2);
  const Matrix inputs = gaussian_matrix(16, 30, rng);
  const ForwardPass pass = forward(model, inputs);
  CHECK((pass.probabilities.array() - 0.01).abs().maxCoeff() < 1e-15);

  std::vector<std::uint32_t> labels(16);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i] = static_cast<std::uint32_t>(i % 100);
  }
  const LossGrad lg = loss_and_grad(model, inputs, one_hot(labels, 100));
  CHECK(lg.loss == doctest::Approx(std::log(100.0)).epsilon(1e-12));
}

TEST_CASE("initialization statistics match the variance rule") {
  NetSpec spec;
  spec.layer_widths = {1000, 1000, 50};
  spec.seed = 5;
  const FeedforwardModel model = init_model(spec);
  const Matrix& w = model.weights[0];  // 1e6 entries
  const double mean = w.mean();
  const double sd = std::sqrt((w.array() - mean).square().mean());
  const double target = std::sqrt(2.0 / (1000.0 + 1000.0));
  CHECK(std::abs(sd - target) / target < 0.05);

  const FeedforwardModel again = init_model(spec);
  CHECK((again.weights[0] - model.weights[0]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("softmax rows are normalized and shift invariant") {
  const FeedforwardModel model = init_model(tiny_spec());
  Rng rng = make_rng(3);
  const Matrix inputs = gaussian_matrix(9, 12, rng);
  const ForwardPass pass = forward(model, inputs);
  for (Eigen::Index i = 0; i < 9; ++i) {
    CHECK(std::abs(pass.probabilities.row(i).sum() - 1.0) < 1e-12);
  }

  // Shifting every logit by a constant must leave the softmax unchanged.
  const Matrix& logits = pass.logits();
  Matrix shifted_logits = logits;
  shifted_logits.array() += 7.5;
  FeedforwardModel id;  // 1-layer identity net to re-run softmax
  id.weights.push_back(Matrix::Identity(7, 7));
  const ForwardPass a = forward(id, logits);
  const ForwardPass b = forward(id, shifted_logits);
  CHECK((a.probabilities - b.probabilities).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("analytic gradients match central finite differences") {
  const NetSpec spec = tiny_spec(11);
  FeedforwardModel model = init_model(spec);
  Rng rng = make_rng(7);
  const Matrix inputs = gaussian_matrix(20, 12, rng);
  std::vector<std::uint32_t> labels(20);
  for (std::size_t i = 0; i < 20; ++i) labels[i] = static_cast<std::uint32_t>(i % 7);
  const Matrix label_dist = one_hot(labels, 7);

  const LossGrad analytic = loss_and_grad(model, inputs, label_dist);
  const double step = 1e-5;
  Rng coord_rng = make_rng(8);
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    std::uniform_int_distribution<Eigen::Index> pick_row(0, model.weights[l].rows() - 1);
    std::uniform_int_distribution<Eigen::Index> pick_col(0, model.weights[l].cols() - 1);
    for (int k = 0; k < 20; ++k) {
      const Eigen::Index r = pick_row(coord_rng);
      const Eigen::Index c = pick_col(coord_rng);
      const double saved = model.weights[l](r, c);
      model.weights[l](r, c) = saved + step;
      const double up = loss_and_grad(model, inputs, label_dist).loss;
      model.weights[l](r, c) = saved - step;
      const double down = loss_and_grad(model, inputs, label_dist).loss;
      model.weights[l](r, c) = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double exact = analytic.weight_grads[l](r, c);
      const double scale = std::max({std::abs(numeric), std::abs(exact), 1e-8});
      CHECK(std::abs(numeric - exact) / scale < 1e-4);
    }
  }
}

TEST_CASE("matched label and model distributions zero the final-layer gradient") {
  const FeedforwardModel model = init_model(tiny_spec(13));
  Rng rng = make_rng(9);
  const Matrix inputs = gaussian_matrix(12, 12, rng);
  const ForwardPass pass = forward(model, inputs);
  const LossGrad lg = loss_and_grad(model, inputs, pass.probabilities);
  CHECK(lg.weight_grads.back().cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("full-batch descent with a tiny step never increases the loss") {
  PermutedDataset data = tiny_dataset(21, 0.0);
  // Shrink to a fixed small batch for speed.
  data.inputs = data.inputs.topRows(100).eval();
  data.true_labels.resize(100);
  data.train_labels.resize(100);
  data.permuted_mask.resize(100);
  data.test_inputs = data.test_inputs.topRows(10).eval();
  data.test_labels.resize(10);

  NetSpec spec;
  spec.layer_widths = {24, 32, 10};
  spec.seed = 3;
  FeedforwardModel model = init_model(spec);

  TrainConfig cfg;
  cfg.optimizer = TrainConfig::Optimizer::gradient_descent;
  cfg.learning_rate = 1e-3;
  cfg.max_epochs = 50;
  cfg.checkpoint_stride = 0;
  cfg.target_train_accuracy = 1.1;  // never early-stop
  const TrainingTrace trace = train(model, data, cfg, nullptr);
  for (std::size_t i = 2; i < trace.rows.size(); ++i) {
    CHECK(trace.rows[i].loss <= trace.rows[i - 1].loss + 1e-9);
  }
}

TEST_CASE("an overparameterized net memorizes a small clean dataset") {
  const PermutedDataset data = tiny_dataset(31, 0.0);
  NetSpec spec;
  spec.layer_widths = {24, 128, 128, 10};
  spec.seed = 4;
  FeedforwardModel model = init_model(spec);

  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.batch_size = 128;
  cfg.max_epochs = 200;
  cfg.checkpoint_stride = 0;
  cfg.seed = 6;
  const TrainingTrace trace = train(model, data, cfg, nullptr);
  CHECK(trace.stop == StopReason::target_accuracy);
  CHECK(trace.rows.back().train_accuracy > 0.99);
}

TEST_CASE("training traces are deterministic") {
  const PermutedDataset data = tiny_dataset(41, 0.3);
  NetSpec spec;
  spec.layer_widths = {24, 48, 10};
  spec.seed = 7;
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.batch_size = 64;
  cfg.max_epochs = 12;
  cfg.checkpoint_stride = 0;
  cfg.seed = 9;

  FeedforwardModel a = init_model(spec);
  FeedforwardModel b = init_model(spec);
  const TrainingTrace ta = train(a, data, cfg, nullptr);
  const TrainingTrace tb = train(b, data, cfg, nullptr);
  REQUIRE(ta.rows.size() == tb.rows.size());
  for (std::size_t i = 0; i < ta.rows.size(); ++i) {
    CHECK(ta.rows[i].loss == tb.rows[i].loss);
    CHECK(ta.rows[i].train_accuracy == tb.rows[i].train_accuracy);
    CHECK(ta.rows[i].test_accuracy == tb.rows[i].test_accuracy);
  }
  for (std::size_t l = 0; l < a.weights.size(); ++l) {
    CHECK((a.weights[l] - b.weights[l]).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("subset accuracies start at chance") {
  const PermutedDataset data = tiny_dataset(51, 0.5);
  NetSpec spec;
  spec.layer_widths = {24, 32, 10};
  spec.seed = 17;
  const FeedforwardModel fresh = init_model(spec);
  const SubsetAccuracy acc = accuracy_by_subset(fresh, data);
  // Predictions of a random net are correlated within a class, so the
  // effective sample count is closer to the class count than the example
  // count; the band is wider than a per-example binomial would suggest.
  CHECK(std::abs(acc.train - 0.1) < 0.08);
  REQUIRE(acc.permuted.has_value());
  REQUIRE(acc.restored.has_value());
  CHECK(std::abs(*acc.permuted - 0.1) < 0.12);
  CHECK(std::abs(*acc.restored - 0.1) < 0.12);
}

TEST_CASE("checkpoints round-trip bitwise through MPC1") {
  const FeedforwardModel model = init_model(tiny_spec(61));
  const auto dir = std::filesystem::temp_directory_path() / "mftma_net_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "snap.mpc";
  write_model_snapshot(path, model);
  const FeedforwardModel loaded = read_model_snapshot(path);
  CHECK(loaded.spec_hash == model.spec_hash);
  CHECK(loaded.epoch == model.epoch);
  REQUIRE(loaded.weights.size() == model.weights.size());
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    CHECK((loaded.weights[l] - model.weights[l]).cwiseAbs().maxCoeff() == 0.0);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint store guards epochs and spec hashes") {
  FeedforwardModel model = init_model(tiny_spec(71));
  CheckpointStore store;
  store.put(model);
  CHECK(store.has(0));
  CHECK_THROWS_AS(store.put(model), IoError);  // immutable
  model.epoch = 3;
  store.put(model);
  CHECK(store.epochs() == std::vector<int>{0, 3});
  const FeedforwardModel back = store.get(3);
  CHECK((back.weights[0] - model.weights[0]).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(store.get(7), IoError);
}

TEST_CASE("training snapshots land in a disk-backed store") {
  const PermutedDataset data = tiny_dataset(81, 0.2);
  NetSpec spec;
  spec.layer_widths = {24, 16, 10};
  spec.seed = 2;
  FeedforwardModel model = init_model(spec);
  const auto dir = std::filesystem::temp_directory_path() / "mftma_store_test";
  std::filesystem::remove_all(dir);
  CheckpointStore store(dir, spec.hash());

  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.batch_size = 100;
  cfg.max_epochs = 4;
  cfg.checkpoint_stride = 2;
  const TrainingTrace trace = train(model, data, cfg, &store);
  CHECK(store.has(0));
  CHECK(store.has(2));
  CHECK(store.has(4));
  CHECK(store.has(trace.best_epoch));
  const FeedforwardModel final_model = store.get(4);
  CHECK((final_model.weights[0] - model.weights[0]).cwiseAbs().maxCoeff() == 0.0);
  std::filesystem::remove_all(dir);
}
