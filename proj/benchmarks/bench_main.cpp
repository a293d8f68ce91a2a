#include <benchmark/benchmark.h>

#include "mftma/empirical.hpp"
#include "mftma/geometry.hpp"
#include "mftma/net.hpp"
#include "mftma/synthdata.hpp"

using namespace mftma;

namespace {

SubspaceManifold ball_manifold(int m, int d, double radius) {
  Rng rng = make_rng(7);
  Matrix pts(m, d);
  for (int i = 0; i < m; ++i) {
    Vector u = gaussian_vector(d, rng);
    pts.row(i) = (radius * u / u.norm()).transpose();
  }
  SubspaceManifold man;
  man.coords.resize(m, d + 1);
  man.coords.leftCols(d) = pts;
  man.coords.col(d).setConstant(1.0);
  return man;
}

void bm_anchor_solve(benchmark::State& state) {
  const SubspaceManifold man =
      ball_manifold(static_cast<int>(state.range(0)), 20, 1.0);
  int i = 0;
  for (auto _ : state) {
    Rng rng = make_rng(derive_seed(3, i++));
    const Vector t = gaussian_vector(21, rng);
    benchmark::DoNotOptimize(solve_anchor(t, man));
  }
}
BENCHMARK(bm_anchor_solve)->Arg(50)->Arg(200);

void bm_manifold_capacity(benchmark::State& state) {
  const SubspaceManifold man = ball_manifold(50, 20, 1.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(mft_capacity(man, 200, 11, 0));
  }
}
BENCHMARK(bm_manifold_capacity);

void bm_separability(benchmark::State& state) {
  SphereDatasetSpec spec;
  spec.n_classes = 2;
  spec.ambient_dim = 64;
  spec.sphere_dim = 8;
  spec.radius = 0.8;
  spec.samples_per_class = 80;
  spec.test_samples_per_class = 0;
  spec.seed = 5;
  const PermutedDataset data = generate_spheres(spec);
  ManifoldSet set;
  set.ambient_dim = spec.ambient_dim;
  const Eigen::Index half = data.n_train() / 2;
  set.manifolds = {data.inputs.topRows(half), data.inputs.bottomRows(half)};
  set.class_ids = {0, 1};
  for (auto _ : state) {
    benchmark::DoNotOptimize(is_separable(set, {1, -1}));
  }
}
BENCHMARK(bm_separability);

void bm_forward_backward(benchmark::State& state) {
  NetSpec spec;
  spec.layer_widths = {512, 512, 512, 512, 512, 512, 50};
  spec.seed = 2;
  const FeedforwardModel model = init_model(spec);
  Rng rng = make_rng(4);
  const Matrix batch = gaussian_matrix(256, 512, rng);
  std::vector<std::uint32_t> labels(256);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i] = static_cast<std::uint32_t>(i % 50);
  }
  const Matrix p_l = one_hot(labels, 50);
  for (auto _ : state) {
    benchmark::DoNotOptimize(loss_and_grad(model, batch, p_l));
  }
}
BENCHMARK(bm_forward_backward);

}  // namespace

BENCHMARK_MAIN();
