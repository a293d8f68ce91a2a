#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mftma/geometry.hpp"
#include "mftma/graddecomp.hpp"
#include "mftma/net.hpp"
#include "mftma/synthdata.hpp"

namespace mftma {

struct AnalysisSchedule {
  std::vector<int> layers;  // 1-based post-activation layers; empty = all
  Eigen::Index p_sel = 0;   // 0 = every class
  Eigen::Index m_sel = 50;
  int n_gauss_samples = 200;
  int n_intermediate_epochs = 8;  // log-spaced between 0 and the final epoch
  bool project_centers = true;
  bool compute_empirical = false;
  std::vector<ExampleSubset> subsets = {
      ExampleSubset::unpermuted, ExampleSubset::permuted,
      ExampleSubset::restored, ExampleSubset::test};
};

struct ExperimentConfig {
  SphereDatasetSpec dataset;
  double epsilon = 0.5;
  std::optional<std::filesystem::path> dataset_path;  // load instead of generate
  NetSpec net;
  TrainConfig train;
  AnalysisSchedule analysis;
  std::filesystem::path out_dir;
  std::uint64_t seed = 0;
  int threads = 1;
  bool force = false;

  /// Desk-scale run: P=50 classes in 512 dimensions, radius-5 spheres on
  /// 20-dimensional subspaces, 200 train + 20 test examples per class,
  /// half the labels permuted, and a five-hidden-layer 512-wide net.
  static ExperimentConfig desk_default();

  void apply_seed();  // re-derives component seeds from `seed`
};

ExperimentConfig parse_experiment_config(const std::string& json_text);
std::string experiment_config_json(const ExperimentConfig& cfg);
std::uint64_t experiment_config_hash(const ExperimentConfig& cfg);

struct MgmRecord {
  int epoch = 0;
  int layer = 0;  // 1-based
  std::string subset;
  MgmReport report;
  bool skipped = false;  // empty subset at this configuration
  std::string note;
};

struct ExperimentResult {
  TrainingTrace trace;
  std::vector<MgmRecord> mgm;
  GradDecompReport grads;
  std::vector<int> analysis_epochs;
  std::filesystem::path run_dir;
};

/// End to end: dataset, training with snapshots, per-(epoch, layer, subset)
/// geometry reports, gradient reports, CSV/JSON outputs and a manifest.
/// Refuses to reuse a run directory without `force`; failures leave a FAILED
/// marker naming the stage next to any partial outputs.
ExperimentResult run_memorization_experiment(const ExperimentConfig& cfg);

/// Model equal to `final_model` except layer `layer` (1-based) taken from the
/// epoch snapshot.
FeedforwardModel rewind_layer(const FeedforwardModel& final_model,
                              const CheckpointStore& store, int layer,
                              int epoch);

struct RewindCell {
  int layer = 0;
  int epoch = 0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  bool failed = false;
  std::string error;
};

struct RewindResult {
  std::vector<RewindCell> cells;
  double baseline_final_train = 0.0;
  double baseline_final_test = 0.0;
  double baseline_best_test = 0.0;
  int best_epoch = 0;
  int final_epoch = 0;
};

RewindResult rewind_sweep(const CheckpointStore& store,
                          const PermutedDataset& data,
                          const FeedforwardModel& final_model,
                          const std::vector<int>& layers,
                          const std::vector<int>& epochs,
                          int best_epoch);

struct WidthSweepRow {
  double factor = 1.0;
  Eigen::Index hidden_width = 0;
  long long param_count = 0;
  int best_epoch = 0;
  int final_epoch = 0;
  double best_test_accuracy = 0.0;
  double final_test_accuracy = 0.0;
  MgmReport best_mgm;   // test manifolds at the last hidden layer
  MgmReport final_mgm;
  bool failed = false;
  std::string error;
};

struct WidthSweepResult {
  std::vector<WidthSweepRow> rows;
};

/// Trains one model per hidden-width factor and measures accuracy plus the
/// test-manifold geometry at the best and final epochs. Failures are
/// recorded per width and the sweep continues.
WidthSweepResult width_sweep(const ExperimentConfig& base,
                             const std::vector<double>& factors);

/// Reads an MFP1 dump (or its CSV fallback, by extension).
ManifoldSet ingest_activation_dump(const std::filesystem::path& path);

/// Post-activation matrix of one layer (1-based), aligned with the input
/// rows, computed in chunks to bound memory.
Matrix layer_activations(const FeedforwardModel& model, const Matrix& inputs,
                         int layer, Eigen::Index chunk = 2048);

/// Renders the report bundle as deterministic SVG charts under
/// `dir`/plots. Returns the produced file names; empty series are skipped
/// with a notice entry instead of a chart.
std::vector<std::string> emit_plots(const ExperimentResult& result,
                                    const std::filesystem::path& dir);

std::vector<std::string> emit_width_sweep_plots(
    const WidthSweepResult& sweep, const std::filesystem::path& dir);

std::vector<std::string> emit_rewind_plots(const RewindResult& result,
                                           const std::filesystem::path& dir);

// Report writers shared by the library and the CLI.
void write_trace_csv(const std::filesystem::path& path, const TrainingTrace& t);
void write_mgm_csv(const std::filesystem::path& path,
                   const std::vector<MgmRecord>& records);
void write_grad_csv(const std::filesystem::path& path,
                    const GradDecompReport& report);
void write_grad_ratio_csv(const std::filesystem::path& path,
                          const GradDecompReport& report);
void write_rewind_csv(const std::filesystem::path& path, const RewindResult& r);
void write_width_csv(const std::filesystem::path& path,
                     const WidthSweepResult& r);

std::string trace_json(const TrainingTrace& t);
std::string mgm_json(const std::vector<MgmRecord>& records);
std::string grad_json(const GradDecompReport& report);
std::string rewind_json(const RewindResult& r);
std::string width_json(const WidthSweepResult& r);

}  // namespace mftma
