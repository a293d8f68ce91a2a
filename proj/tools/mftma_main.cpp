// Command line front end: synthetic dataset generation, training with
// checkpoints, manifold geometry reports, gradient decomposition reports,
// layer rewinding, width sweeps, standalone capacity runs, and plotting.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure,
// 4 I/O error.

#include <Eigen/Core>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "mftma/empirical.hpp"
#include "mftma/experiments.hpp"
#include "mftma/geometry.hpp"
#include "mftma/io.hpp"
#include "mftma/net.hpp"
#include "mftma/synthdata.hpp"
#include "mftma/svg.hpp"

namespace fs = std::filesystem;
using namespace mftma;

namespace {

struct GlobalArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::string out;
  bool force = false;
};

void add_global_options(CLI::App* cmd, GlobalArgs& args) {
  cmd->add_option("--config", args.config_path, "experiment config (JSON)");
  cmd->add_option("--seed", args.seed, "master seed override");
  cmd->add_option("--threads", args.threads, "worker thread count")
      ->default_val(1);
  cmd->add_option("--out", args.out, "output file or directory");
  cmd->add_flag("--force", args.force, "allow writing into an existing run");
}

ExperimentConfig load_config(const GlobalArgs& args) {
  ExperimentConfig cfg = ExperimentConfig::desk_default();
  if (!args.config_path.empty()) {
    std::ifstream in(args.config_path);
    if (!in) throw IoError("cannot open config " + args.config_path);
    std::stringstream ss;
    ss << in.rdbuf();
    cfg = parse_experiment_config(ss.str());
  }
  if (args.seed) {
    cfg.seed = *args.seed;
    cfg.apply_seed();
  }
  cfg.threads = args.threads;
  if (!args.out.empty()) cfg.out_dir = args.out;
  cfg.force = args.force;
  return cfg;
}

ExperimentConfig load_run_config(const fs::path& run_dir) {
  const fs::path manifest = run_dir / "manifest.json";
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open " + manifest.string());
  nlohmann::json j;
  in >> j;
  ExperimentConfig cfg = parse_experiment_config(j["config"].dump());
  cfg.out_dir = run_dir;
  return cfg;
}

PermutedDataset dataset_for(const ExperimentConfig& cfg) {
  PermutedDataset data = cfg.dataset_path ? read_dataset(*cfg.dataset_path)
                                          : generate_spheres(cfg.dataset);
  if (cfg.epsilon > 0.0 && data.epsilon == 0.0) {
    data = permute_labels(data, cfg.epsilon, derive_seed(cfg.seed, 0x9e2ULL));
  }
  return data;
}

std::vector<int> analysis_epochs_from(const fs::path& run_dir) {
  std::ifstream in(run_dir / "trace.json");
  if (!in) throw IoError("no trace.json in " + run_dir.string() +
                         "; run `mftma train` first");
  nlohmann::json j;
  in >> j;
  const int best = j["best_epoch"].get<int>();
  const int final_epoch = j["final_epoch"].get<int>();
  std::vector<int> epochs = {0, best, final_epoch};
  return epochs;
}

int run_gen_data(const GlobalArgs& args, bool with_csv) {
  ExperimentConfig cfg = load_config(args);
  const fs::path out =
      args.out.empty() ? fs::path("dataset.mpd") : fs::path(args.out);
  if (fs::exists(out) && !cfg.force) {
    throw IoError(out.string() + " exists; pass --force to overwrite");
  }
  PermutedDataset data = generate_spheres(cfg.dataset);
  if (cfg.epsilon > 0.0) {
    data = permute_labels(data, cfg.epsilon, derive_seed(cfg.seed, 0x9e2ULL));
  }
  write_dataset(out, data);
  if (with_csv) {
    fs::path csv = out;
    csv.replace_extension(".csv");
    write_dataset_csv(csv, data);
  }
  std::cout << "wrote " << out.string() << " (" << data.n_train()
            << " train / " << data.n_test() << " test examples, epsilon "
            << data.epsilon << ")\n";
  return 0;
}

int run_experiment_cmd(const GlobalArgs& args) {
  ExperimentConfig cfg = load_config(args);
  if (cfg.out_dir.empty()) throw ConfigError("train: --out directory required");
  Eigen::setNbThreads(cfg.threads);
  const ExperimentResult result = run_memorization_experiment(cfg);
  std::cout << "run " << result.run_dir.string() << ": best epoch "
            << result.trace.best_epoch << " (test accuracy "
            << result.trace.best_test_accuracy << "), final epoch "
            << result.trace.final_epoch << '\n';
  return 0;
}

int run_analyze(const GlobalArgs& args) {
  if (args.out.empty()) throw ConfigError("analyze: --out run directory required");
  const fs::path run_dir = args.out;
  ExperimentConfig cfg = load_run_config(run_dir);
  cfg.threads = args.threads;
  Eigen::setNbThreads(cfg.threads);

  const PermutedDataset data = dataset_for(cfg);
  CheckpointStore store(run_dir / "checkpoints", cfg.net.hash());

  std::vector<int> layers = cfg.analysis.layers;
  if (layers.empty()) {
    for (int l = 1; l <= static_cast<int>(cfg.net.layer_widths.size()) - 1; ++l) {
      layers.push_back(l);
    }
  }
  const Eigen::Index p_sel = cfg.analysis.p_sel > 0
                                 ? cfg.analysis.p_sel
                                 : static_cast<Eigen::Index>(data.n_classes);
  AnalysisConfig acfg;
  acfg.project_centers = cfg.analysis.project_centers;
  acfg.n_gauss_samples = cfg.analysis.n_gauss_samples;
  acfg.seed = derive_seed(cfg.seed, 0x369ULL);
  acfg.threads = cfg.threads;
  acfg.compute_empirical = cfg.analysis.compute_empirical;
  const std::uint64_t membership_seed = derive_seed(cfg.seed, 0x5eedULL);

  std::vector<MgmRecord> records;
  for (int epoch : analysis_epochs_from(run_dir)) {
    if (!store.has(epoch)) continue;
    const FeedforwardModel snapshot = store.get(epoch);
    for (int layer : layers) {
      Matrix train_acts;
      Matrix test_acts;
      for (ExampleSubset subset : cfg.analysis.subsets) {
        MgmRecord record;
        record.epoch = epoch;
        record.layer = layer;
        record.subset = subset_name(subset);
        try {
          const Matrix* acts = nullptr;
          if (subset == ExampleSubset::test) {
            if (test_acts.rows() == 0) {
              test_acts = layer_activations(snapshot, data.test_inputs, layer);
            }
            acts = &test_acts;
          } else {
            if (train_acts.rows() == 0) {
              train_acts = layer_activations(snapshot, data.inputs, layer);
            }
            acts = &train_acts;
          }
          const ManifoldSet set = subset_manifolds(
              data, *acts, subset, p_sel, cfg.analysis.m_sel, membership_seed);
          record.report = analyze(set, acfg);
        } catch (const ConfigError& e) {
          record.skipped = true;
          record.note = e.what();
        }
        records.push_back(std::move(record));
      }
    }
  }
  write_mgm_csv(run_dir / "mgm.csv", records);
  std::ofstream(run_dir / "mgm.json") << mgm_json(records);
  std::cout << "wrote " << (run_dir / "mgm.csv").string() << " ("
            << records.size() << " records)\n";
  return 0;
}

int run_grad_report(const GlobalArgs& args, std::vector<int> epochs) {
  if (args.out.empty()) {
    throw ConfigError("grad-report: --out run directory required");
  }
  const fs::path run_dir = args.out;
  ExperimentConfig cfg = load_run_config(run_dir);
  Eigen::setNbThreads(args.threads);
  const PermutedDataset data = dataset_for(cfg);
  CheckpointStore store(run_dir / "checkpoints", cfg.net.hash());
  if (epochs.empty()) epochs = analysis_epochs_from(run_dir);

  const GradDecompReport report = subset_grad_report(store, data, epochs);
  write_grad_csv(run_dir / "grad.csv", report);
  write_grad_ratio_csv(run_dir / "grad_ratios.csv", report);
  std::ofstream(run_dir / "grad.json") << grad_json(report);
  std::cout << "wrote " << (run_dir / "grad.csv").string() << '\n';
  if (!report.missing_epochs.empty()) {
    std::cout << "missing checkpoint epochs:";
    for (int e : report.missing_epochs) std::cout << ' ' << e;
    std::cout << '\n';
  }
  return 0;
}

int run_rewind(const GlobalArgs& args, std::vector<int> layers,
               std::vector<int> epochs) {
  if (args.out.empty()) {
    throw ConfigError("rewind-sweep: --out run directory required");
  }
  const fs::path run_dir = args.out;
  ExperimentConfig cfg = load_run_config(run_dir);
  Eigen::setNbThreads(args.threads);
  const PermutedDataset data = dataset_for(cfg);
  CheckpointStore store(run_dir / "checkpoints", cfg.net.hash());

  std::ifstream trace_in(run_dir / "trace.json");
  if (!trace_in) throw IoError("no trace.json in " + run_dir.string());
  nlohmann::json trace;
  trace_in >> trace;
  const int best_epoch = trace["best_epoch"].get<int>();
  const int final_epoch = trace["final_epoch"].get<int>();

  const FeedforwardModel final_model = store.get(final_epoch);
  if (layers.empty()) {
    for (int l = 1; l <= static_cast<int>(final_model.n_layers()); ++l) {
      layers.push_back(l);
    }
  }
  if (epochs.empty()) {
    epochs = store.epochs();
  }

  const RewindResult result =
      rewind_sweep(store, data, final_model, layers, epochs, best_epoch);
  write_rewind_csv(run_dir / "rewind.csv", result);
  std::ofstream(run_dir / "rewind.json") << rewind_json(result);
  emit_rewind_plots(result, run_dir / "plots");
  std::cout << "wrote " << (run_dir / "rewind.csv").string() << " ("
            << result.cells.size() << " cells)\n";
  return 0;
}

int run_width_sweep(const GlobalArgs& args, std::vector<double> factors) {
  ExperimentConfig cfg = load_config(args);
  if (cfg.out_dir.empty()) {
    throw ConfigError("width-sweep: --out directory required");
  }
  Eigen::setNbThreads(cfg.threads);
  if (factors.empty()) {
    factors = {1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0 / 2, 1.0, 2.0};
  }
  fs::create_directories(cfg.out_dir);
  const WidthSweepResult result = width_sweep(cfg, factors);
  write_width_csv(cfg.out_dir / "width.csv", result);
  std::ofstream(cfg.out_dir / "width.json") << width_json(result);
  emit_width_sweep_plots(result, cfg.out_dir / "plots");
  std::cout << "wrote " << (cfg.out_dir / "width.csv").string() << " ("
            << result.rows.size() << " widths)\n";
  return 0;
}

int run_capacity(const GlobalArgs& args, const std::string& input,
                 bool empirical, bool no_projection, int samples) {
  Eigen::setNbThreads(args.threads);
  const ManifoldSet set = ingest_activation_dump(input);
  AnalysisConfig acfg;
  acfg.project_centers = !no_projection;
  acfg.n_gauss_samples = samples;
  acfg.seed = args.seed.value_or(0);
  acfg.threads = args.threads;
  acfg.compute_empirical = empirical;
  const MgmReport report = analyze(set, acfg);

  nlohmann::json j = {{"alpha", report.alpha_m},
                      {"radius", report.r_m},
                      {"dimension", report.d_m},
                      {"rho_center", report.rho_center},
                      {"n_gauss_samples", report.n_gauss_samples},
                      {"seed", report.seed},
                      {"manifolds", set.size()},
                      {"ambient_dim", set.ambient_dim},
                      {"projection_applied", report.projection_applied}};
  if (report.alpha_empirical) j["alpha_empirical"] = *report.alpha_empirical;
  const std::string text = j.dump(2);
  std::cout << text << '\n';
  if (!args.out.empty()) {
    std::ofstream out(args.out);
    if (!out) throw IoError("cannot open " + args.out);
    out << text << '\n';
  }
  return 0;
}

int run_plot(const GlobalArgs& args) {
  if (args.out.empty()) throw ConfigError("plot: --out run directory required");
  const fs::path run_dir = args.out;
  ExperimentResult result;
  result.run_dir = run_dir;

  {
    std::ifstream in(run_dir / "trace.json");
    if (!in) throw IoError("no trace.json in " + run_dir.string());
    nlohmann::json j;
    in >> j;
    result.trace.best_epoch = j["best_epoch"].get<int>();
    result.trace.best_test_accuracy = j["best_test_accuracy"].get<double>();
    result.trace.final_epoch = j["final_epoch"].get<int>();
    for (const auto& row : j["rows"]) {
      TraceRow r;
      r.epoch = row["epoch"].get<int>();
      r.loss = row["loss"].get<double>();
      r.train_accuracy = row["train_accuracy"].get<double>();
      r.test_accuracy = row["test_accuracy"].get<double>();
      if (row.contains("unpermuted_accuracy")) {
        r.unpermuted_accuracy = row["unpermuted_accuracy"].get<double>();
      }
      if (row.contains("permuted_accuracy")) {
        r.permuted_accuracy = row["permuted_accuracy"].get<double>();
      }
      if (row.contains("restored_accuracy")) {
        r.restored_accuracy = row["restored_accuracy"].get<double>();
      }
      result.trace.rows.push_back(r);
    }
  }
  if (fs::exists(run_dir / "mgm.json")) {
    std::ifstream in(run_dir / "mgm.json");
    nlohmann::json j;
    in >> j;
    for (const auto& item : j) {
      MgmRecord r;
      r.epoch = item["epoch"].get<int>();
      r.layer = item["layer"].get<int>();
      r.subset = item["subset"].get<std::string>();
      r.skipped = item["skipped"].get<bool>();
      if (!r.skipped) {
        r.report.alpha_m = item["alpha"].get<double>();
        r.report.r_m = item["radius"].get<double>();
        r.report.d_m = item["dimension"].get<double>();
        r.report.rho_center = item["rho_center"].get<double>();
      }
      result.mgm.push_back(r);
    }
  }
  if (fs::exists(run_dir / "grad.json")) {
    std::ifstream in(run_dir / "grad.json");
    nlohmann::json j;
    in >> j;
    for (const auto& item : j["rows"]) {
      GradNormRow r;
      r.epoch = item["epoch"].get<int>();
      r.layer = item["layer"].get<int>();
      r.subset = item["subset"].get<std::string>();
      r.dep_norm = item["dep_norm"].get<double>();
      r.ind_norm = item["ind_norm"].get<double>();
      r.total_norm = item["total_norm"].get<double>();
      r.log_dep_over_ind = item["log_dep_over_ind"].get<double>();
      result.grads.rows.push_back(r);
    }
    for (const auto& item : j["ratios"]) {
      GradRatioRow r;
      r.epoch = item["epoch"].get<int>();
      r.layer = item["layer"].get<int>();
      r.log_dep_unperm_over_perm =
          item["log_dep_unperm_over_perm"].get<double>();
      r.log_ind_unperm_over_perm =
          item["log_ind_unperm_over_perm"].get<double>();
      result.grads.ratios.push_back(r);
    }
  }

  const auto produced = emit_plots(result, run_dir);
  std::cout << "wrote " << produced.size() << " charts under "
            << (run_dir / "plots").string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"manifold capacity probe and label-noise memorization lab"};
  app.require_subcommand(1);

  GlobalArgs gen_args, train_args, analyze_args, grad_args, rewind_args,
      width_args, capacity_args, plot_args;

  auto* gen = app.add_subcommand("gen-data", "generate a sphere dataset");
  add_global_options(gen, gen_args);
  bool gen_csv = false;
  gen->add_flag("--csv", gen_csv, "also export a CSV copy");

  auto* train_cmd = app.add_subcommand(
      "train", "train, snapshot, and report on a dataset");
  add_global_options(train_cmd, train_args);

  auto* analyze_cmd = app.add_subcommand(
      "analyze", "manifold geometry reports over a finished run");
  add_global_options(analyze_cmd, analyze_args);

  auto* grad_cmd = app.add_subcommand(
      "grad-report", "gradient decomposition report over a finished run");
  add_global_options(grad_cmd, grad_args);
  std::vector<int> grad_epochs;
  grad_cmd->add_option("--epochs", grad_epochs, "checkpoint epochs to analyze");

  auto* rewind_cmd = app.add_subcommand(
      "rewind-sweep", "single-layer rewinding grid over a finished run");
  add_global_options(rewind_cmd, rewind_args);
  std::vector<int> rewind_layers, rewind_epochs;
  rewind_cmd->add_option("--layers", rewind_layers, "1-based layers to rewind");
  rewind_cmd->add_option("--epochs", rewind_epochs, "rewind epochs");

  auto* width_cmd = app.add_subcommand(
      "width-sweep", "train across hidden-width factors");
  add_global_options(width_cmd, width_args);
  std::vector<double> width_factors;
  width_cmd->add_option("--factors", width_factors, "width factors");

  auto* capacity_cmd = app.add_subcommand(
      "capacity", "manifold geometry metrics for an activation dump");
  add_global_options(capacity_cmd, capacity_args);
  std::string capacity_input;
  bool capacity_empirical = false, capacity_no_projection = false;
  int capacity_samples = 200;
  capacity_cmd->add_option("--input", capacity_input, "MFP1 or CSV dump")
      ->required();
  capacity_cmd->add_flag("--empirical", capacity_empirical,
                         "also run the bisection capacity");
  capacity_cmd->add_flag("--no-projection", capacity_no_projection,
                         "skip the center null-space projection");
  capacity_cmd->add_option("--samples", capacity_samples,
                           "Gaussian draws per manifold");

  auto* plot_cmd = app.add_subcommand("plot", "render charts for a run");
  add_global_options(plot_cmd, plot_args);

  try {
    app.parse(argc, argv);
    if (*gen) return run_gen_data(gen_args, gen_csv);
    if (*train_cmd) return run_experiment_cmd(train_args);
    if (*analyze_cmd) return run_analyze(analyze_args);
    if (*grad_cmd) return run_grad_report(grad_args, grad_epochs);
    if (*rewind_cmd) return run_rewind(rewind_args, rewind_layers, rewind_epochs);
    if (*width_cmd) return run_width_sweep(width_args, width_factors);
    if (*capacity_cmd) {
      return run_capacity(capacity_args, capacity_input, capacity_empirical,
                          capacity_no_projection, capacity_samples);
    }
    if (*plot_cmd) return run_plot(plot_args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 2;
}
