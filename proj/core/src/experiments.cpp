#include "mftma/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mftma/io.hpp"
#include "mftma/svg.hpp"

namespace mftma {

using nlohmann::json;

ExperimentConfig ExperimentConfig::desk_default() {
  ExperimentConfig cfg;
  cfg.dataset.n_classes = 50;
  cfg.dataset.ambient_dim = 512;
  cfg.dataset.sphere_dim = 20;
  cfg.dataset.radius = 5.0;
  cfg.dataset.samples_per_class = 200;
  // Analysis draws 50 examples per class, so the held-out split carries 50
  // per class as well.
  cfg.dataset.test_samples_per_class = 50;
  cfg.epsilon = 0.5;
  cfg.net.layer_widths = {512, 512, 512, 512, 512, 512, 50};
  cfg.train.learning_rate = 1e-4;
  cfg.train.batch_size = 1024;
  cfg.train.max_epochs = 1000;
  cfg.train.checkpoint_stride = 1;
  cfg.analysis.m_sel = 50;
  cfg.analysis.n_gauss_samples = 200;
  cfg.out_dir = "runs/default";
  cfg.apply_seed();
  return cfg;
}

void ExperimentConfig::apply_seed() {
  dataset.seed = derive_seed(seed, 0xda7aULL);
  net.seed = derive_seed(seed, 0x9e7ULL);
  train.seed = derive_seed(seed, 0x7211ULL);
}

namespace {

TrainConfig::Optimizer optimizer_from_string(const std::string& name) {
  if (name == "adam") return TrainConfig::Optimizer::adam;
  if (name == "gd" || name == "gradient_descent") {
    return TrainConfig::Optimizer::gradient_descent;
  }
  throw ConfigError("unknown optimizer: " + name);
}

std::string optimizer_name(TrainConfig::Optimizer opt) {
  return opt == TrainConfig::Optimizer::adam ? "adam" : "gradient_descent";
}

ExampleSubset subset_from_string(const std::string& name) {
  if (name == "unpermuted") return ExampleSubset::unpermuted;
  if (name == "permuted") return ExampleSubset::permuted;
  if (name == "restored") return ExampleSubset::restored;
  if (name == "test") return ExampleSubset::test;
  throw ConfigError("unknown subset: " + name);
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  ExperimentConfig cfg = ExperimentConfig::desk_default();
  try {
    if (j.contains("dataset")) {
      const auto& d = j["dataset"];
      cfg.dataset.n_classes = d.value("classes", cfg.dataset.n_classes);
      cfg.dataset.ambient_dim = d.value("ambient_dim", cfg.dataset.ambient_dim);
      cfg.dataset.sphere_dim = d.value("sphere_dim", cfg.dataset.sphere_dim);
      cfg.dataset.radius = d.value("radius", cfg.dataset.radius);
      cfg.dataset.samples_per_class =
          d.value("train_per_class", cfg.dataset.samples_per_class);
      cfg.dataset.test_samples_per_class =
          d.value("test_per_class", cfg.dataset.test_samples_per_class);
      cfg.dataset.seed = d.value("seed", cfg.dataset.seed);
    }
    cfg.epsilon = j.value("epsilon", cfg.epsilon);
    if (j.contains("dataset_path")) {
      cfg.dataset_path = std::filesystem::path(j["dataset_path"].get<std::string>());
    }
    if (j.contains("net")) {
      const auto& n = j["net"];
      if (n.contains("widths")) {
        cfg.net.layer_widths.clear();
        for (const auto& w : n["widths"]) {
          cfg.net.layer_widths.push_back(w.get<Eigen::Index>());
        }
      }
      cfg.net.init_gain = n.value("gain", cfg.net.init_gain);
      cfg.net.with_bias = n.value("bias", cfg.net.with_bias);
      cfg.net.seed = n.value("seed", cfg.net.seed);
    }
    if (j.contains("train")) {
      const auto& t = j["train"];
      if (t.contains("optimizer")) {
        cfg.train.optimizer =
            optimizer_from_string(t["optimizer"].get<std::string>());
      }
      cfg.train.learning_rate = t.value("learning_rate", cfg.train.learning_rate);
      cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
      cfg.train.max_epochs = t.value("max_epochs", cfg.train.max_epochs);
      cfg.train.target_train_accuracy =
          t.value("target_train_accuracy", cfg.train.target_train_accuracy);
      cfg.train.checkpoint_stride =
          t.value("checkpoint_stride", cfg.train.checkpoint_stride);
      cfg.train.seed = t.value("seed", cfg.train.seed);
    }
    if (j.contains("analysis")) {
      const auto& a = j["analysis"];
      if (a.contains("layers")) {
        cfg.analysis.layers.clear();
        for (const auto& l : a["layers"]) {
          cfg.analysis.layers.push_back(l.get<int>());
        }
      }
      cfg.analysis.p_sel = a.value("p_sel", cfg.analysis.p_sel);
      cfg.analysis.m_sel = a.value("m_sel", cfg.analysis.m_sel);
      cfg.analysis.n_gauss_samples =
          a.value("gauss_samples", cfg.analysis.n_gauss_samples);
      cfg.analysis.n_intermediate_epochs =
          a.value("intermediate_epochs", cfg.analysis.n_intermediate_epochs);
      cfg.analysis.project_centers =
          a.value("project_centers", cfg.analysis.project_centers);
      cfg.analysis.compute_empirical =
          a.value("compute_empirical", cfg.analysis.compute_empirical);
      if (a.contains("subsets")) {
        cfg.analysis.subsets.clear();
        for (const auto& s : a["subsets"]) {
          cfg.analysis.subsets.push_back(
              subset_from_string(s.get<std::string>()));
        }
      }
    }
    if (j.contains("out_dir")) {
      cfg.out_dir = std::filesystem::path(j["out_dir"].get<std::string>());
    }
    if (j.contains("seed")) {
      cfg.seed = j["seed"].get<std::uint64_t>();
      cfg.apply_seed();
    }
    cfg.threads = j.value("threads", cfg.threads);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field error: ") + e.what());
  }
  return cfg;
}

std::string experiment_config_json(const ExperimentConfig& cfg) {
  json j;
  j["dataset"] = {{"classes", cfg.dataset.n_classes},
                  {"ambient_dim", cfg.dataset.ambient_dim},
                  {"sphere_dim", cfg.dataset.sphere_dim},
                  {"radius", cfg.dataset.radius},
                  {"train_per_class", cfg.dataset.samples_per_class},
                  {"test_per_class", cfg.dataset.test_samples_per_class},
                  {"seed", cfg.dataset.seed}};
  j["epsilon"] = cfg.epsilon;
  if (cfg.dataset_path) j["dataset_path"] = cfg.dataset_path->string();
  j["net"] = {{"widths", cfg.net.layer_widths},
              {"gain", cfg.net.init_gain},
              {"bias", cfg.net.with_bias},
              {"seed", cfg.net.seed}};
  j["train"] = {{"optimizer", optimizer_name(cfg.train.optimizer)},
                {"learning_rate", cfg.train.learning_rate},
                {"batch_size", cfg.train.batch_size},
                {"max_epochs", cfg.train.max_epochs},
                {"target_train_accuracy", cfg.train.target_train_accuracy},
                {"checkpoint_stride", cfg.train.checkpoint_stride},
                {"seed", cfg.train.seed}};
  std::vector<std::string> subset_names;
  for (ExampleSubset s : cfg.analysis.subsets) subset_names.push_back(subset_name(s));
  j["analysis"] = {{"layers", cfg.analysis.layers},
                   {"p_sel", cfg.analysis.p_sel},
                   {"m_sel", cfg.analysis.m_sel},
                   {"gauss_samples", cfg.analysis.n_gauss_samples},
                   {"intermediate_epochs", cfg.analysis.n_intermediate_epochs},
                   {"project_centers", cfg.analysis.project_centers},
                   {"compute_empirical", cfg.analysis.compute_empirical},
                   {"subsets", subset_names}};
  j["out_dir"] = cfg.out_dir.string();
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  return j.dump(2);
}

std::uint64_t experiment_config_hash(const ExperimentConfig& cfg) {
  const std::string text = experiment_config_json(cfg);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

Matrix layer_activations(const FeedforwardModel& model, const Matrix& inputs,
                         int layer, Eigen::Index chunk) {
  if (layer < 1 || layer > model.n_layers()) {
    throw ConfigError("layer_activations: layer index out of range");
  }
  const Eigen::Index width =
      model.weights[static_cast<std::size_t>(layer - 1)].rows();
  Matrix out(inputs.rows(), width);
  for (Eigen::Index start = 0; start < inputs.rows(); start += chunk) {
    const Eigen::Index count = std::min(chunk, inputs.rows() - start);
    const ForwardPass pass = forward(model, inputs.middleRows(start, count));
    out.middleRows(start, count) =
        pass.activations[static_cast<std::size_t>(layer)];
  }
  return out;
}

namespace {

std::vector<int> pick_analysis_epochs(const CheckpointStore& store,
                                      const TrainingTrace& trace,
                                      int n_intermediate) {
  const std::vector<int> available = store.epochs();
  std::set<int> chosen = {0, trace.best_epoch, trace.final_epoch};
  const int final_epoch = std::max(trace.final_epoch, 1);
  for (int k = 1; k <= n_intermediate; ++k) {
    const double target = std::pow(
        static_cast<double>(final_epoch),
        static_cast<double>(k) / (n_intermediate + 1.0));
    // snap to the nearest stored epoch
    int best = available.front();
    for (int e : available) {
      if (std::abs(e - target) < std::abs(best - target)) best = e;
    }
    chosen.insert(best);
  }
  std::vector<int> out;
  for (int e : chosen) {
    if (store.has(e)) out.push_back(e);
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string csv_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

bool is_empty_subset_error(const ConfigError& e) {
  const std::string what = e.what();
  return what.find("empty") != std::string::npos ||
         what.find("lacks") != std::string::npos;
}

}  // namespace

ExperimentResult run_memorization_experiment(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  const fs::path dir = cfg.out_dir;
  if (fs::exists(dir / "manifest.json") && !cfg.force) {
    throw IoError("run directory " + dir.string() +
                  " already holds a manifest; pass force to reuse it");
  }
  fs::create_directories(dir);
  fs::create_directories(dir / "checkpoints");
  fs::remove(dir / "FAILED");

  ExperimentResult result;
  result.run_dir = dir;
  std::string stage = "manifest";
  try {
    json manifest;
    manifest["config"] = json::parse(experiment_config_json(cfg));
    char hash_text[32];
    std::snprintf(hash_text, sizeof(hash_text), "%016llx",
                  static_cast<unsigned long long>(experiment_config_hash(cfg)));
    manifest["config_hash"] = hash_text;
    manifest["versions"] = {{"artifact", "0.1.0"},
                            {"dataset_format", "MPD1"},
                            {"checkpoint_format", "MPC1"},
                            {"dump_format", "MFP1"}};
    write_text(dir / "manifest.json", manifest.dump(2));

    stage = "dataset";
    PermutedDataset data =
        cfg.dataset_path ? read_dataset(*cfg.dataset_path)
                         : generate_spheres(cfg.dataset);
    if (cfg.epsilon > 0.0 && data.epsilon == 0.0) {
      data = permute_labels(data, cfg.epsilon, derive_seed(cfg.seed, 0x9e2ULL));
    }

    stage = "train";
    cfg.net.validate();
    FeedforwardModel model = init_model(cfg.net);
    CheckpointStore store(dir / "checkpoints", cfg.net.hash());
    result.trace = train(model, data, cfg.train, &store);
    write_trace_csv(dir / "trace.csv", result.trace);
    write_text(dir / "trace.json", trace_json(result.trace));

    stage = "analysis";
    result.analysis_epochs =
        pick_analysis_epochs(store, result.trace,
                             cfg.analysis.n_intermediate_epochs);
    std::vector<int> layers = cfg.analysis.layers;
    if (layers.empty()) {
      for (int l = 1; l <= static_cast<int>(model.n_layers()); ++l) {
        layers.push_back(l);
      }
    }
    const Eigen::Index p_sel = cfg.analysis.p_sel > 0
                                   ? cfg.analysis.p_sel
                                   : static_cast<Eigen::Index>(data.n_classes);
    const std::uint64_t membership_seed = derive_seed(cfg.seed, 0x5eedULL);

    AnalysisConfig acfg;
    acfg.project_centers = cfg.analysis.project_centers;
    acfg.n_gauss_samples = cfg.analysis.n_gauss_samples;
    acfg.seed = derive_seed(cfg.seed, 0x369ULL);
    acfg.threads = cfg.threads;
    acfg.compute_empirical = cfg.analysis.compute_empirical;

    for (int epoch : result.analysis_epochs) {
      const FeedforwardModel snapshot = store.get(epoch);
      for (int layer : layers) {
        const Matrix train_acts =
            layer_activations(snapshot, data.inputs, layer);
        Matrix test_acts;
        for (ExampleSubset subset : cfg.analysis.subsets) {
          MgmRecord record;
          record.epoch = epoch;
          record.layer = layer;
          record.subset = subset_name(subset);
          try {
            const Matrix& acts = [&]() -> const Matrix& {
              if (subset == ExampleSubset::test) {
                if (test_acts.rows() == 0) {
                  test_acts =
                      layer_activations(snapshot, data.test_inputs, layer);
                }
                return test_acts;
              }
              return train_acts;
            }();
            const ManifoldSet set = subset_manifolds(
                data, acts, subset, p_sel, cfg.analysis.m_sel, membership_seed);
            record.report = analyze(set, acfg);
          } catch (const ConfigError& e) {
            if (!is_empty_subset_error(e)) throw;
            record.skipped = true;
            record.note = e.what();
          }
          result.mgm.push_back(std::move(record));
        }
      }
    }
    write_mgm_csv(dir / "mgm.csv", result.mgm);
    write_text(dir / "mgm.json", mgm_json(result.mgm));

    stage = "gradients";
    result.grads = subset_grad_report(store, data, result.analysis_epochs);
    write_grad_csv(dir / "grad.csv", result.grads);
    write_grad_ratio_csv(dir / "grad_ratios.csv", result.grads);
    write_text(dir / "grad.json", grad_json(result.grads));

    stage = "plots";
    emit_plots(result, dir);
  } catch (const std::exception& e) {
    write_text(dir / "FAILED", "stage: " + stage + "\nerror: " + e.what() + "\n");
    throw;
  }
  return result;
}

FeedforwardModel rewind_layer(const FeedforwardModel& final_model,
                              const CheckpointStore& store, int layer,
                              int epoch) {
  if (layer < 1 || layer > final_model.n_layers()) {
    throw ConfigError("rewind_layer: layer index out of range");
  }
  if (!store.has(epoch)) {
    throw IoError("rewind_layer: no snapshot for epoch " + std::to_string(epoch));
  }
  const FeedforwardModel snapshot = store.get(epoch);
  FeedforwardModel out = final_model;
  out.weights[static_cast<std::size_t>(layer - 1)] =
      snapshot.weights[static_cast<std::size_t>(layer - 1)];
  if (!out.biases.empty() && !snapshot.biases.empty()) {
    out.biases[static_cast<std::size_t>(layer - 1)] =
        snapshot.biases[static_cast<std::size_t>(layer - 1)];
  }
  return out;
}

RewindResult rewind_sweep(const CheckpointStore& store,
                          const PermutedDataset& data,
                          const FeedforwardModel& final_model,
                          const std::vector<int>& layers,
                          const std::vector<int>& epochs,
                          int best_epoch) {
  RewindResult result;
  result.best_epoch = best_epoch;
  result.final_epoch = final_model.epoch;

  const SubsetAccuracy baseline = accuracy_by_subset(final_model, data);
  result.baseline_final_train = baseline.train;
  result.baseline_final_test = baseline.test;
  if (store.has(best_epoch)) {
    result.baseline_best_test =
        accuracy_by_subset(store.get(best_epoch), data).test;
  }

  for (int epoch : epochs) {
    for (int layer : layers) {
      RewindCell cell;
      cell.layer = layer;
      cell.epoch = epoch;
      try {
        const FeedforwardModel rewound =
            rewind_layer(final_model, store, layer, epoch);
        const SubsetAccuracy acc = accuracy_by_subset(rewound, data);
        cell.train_accuracy = acc.train;
        cell.test_accuracy = acc.test;
      } catch (const std::exception& e) {
        cell.failed = true;
        cell.error = e.what();
      }
      result.cells.push_back(std::move(cell));
    }
  }
  return result;
}

WidthSweepResult width_sweep(const ExperimentConfig& base,
                             const std::vector<double>& factors) {
  if (factors.size() < 3) {
    throw ConfigError("width_sweep: need at least 3 width factors");
  }
  WidthSweepResult result;

  PermutedDataset data = base.dataset_path ? read_dataset(*base.dataset_path)
                                           : generate_spheres(base.dataset);
  if (base.epsilon > 0.0 && data.epsilon == 0.0) {
    data = permute_labels(data, base.epsilon, derive_seed(base.seed, 0x9e2ULL));
  }

  for (double factor : factors) {
    WidthSweepRow row;
    row.factor = factor;
    try {
      NetSpec spec = base.net;
      for (std::size_t l = 1; l + 1 < spec.layer_widths.size(); ++l) {
        spec.layer_widths[l] = std::max<Eigen::Index>(
            1, static_cast<Eigen::Index>(std::llround(
                   static_cast<double>(base.net.layer_widths[l]) * factor)));
      }
      row.hidden_width = spec.layer_widths.size() > 2 ? spec.layer_widths[1] : 0;

      FeedforwardModel model = init_model(spec);
      for (const auto& w : model.weights) row.param_count += w.size();

      TrainConfig tcfg = base.train;
      tcfg.checkpoint_stride = 0;  // keep only best and final snapshots
      CheckpointStore store;       // in-memory
      const TrainingTrace trace = train(model, data, tcfg, &store);
      row.best_epoch = trace.best_epoch;
      row.final_epoch = trace.final_epoch;
      row.best_test_accuracy = trace.best_test_accuracy;
      row.final_test_accuracy = trace.rows.back().test_accuracy;

      // Test-manifold geometry at the last hidden layer.
      const int feature_layer = static_cast<int>(model.n_layers()) - 1;
      AnalysisConfig acfg;
      acfg.project_centers = base.analysis.project_centers;
      acfg.n_gauss_samples = base.analysis.n_gauss_samples;
      acfg.seed = derive_seed(base.seed, 0x1deULL);
      acfg.threads = base.threads;
      const std::uint64_t membership_seed = derive_seed(base.seed, 0x5eedULL);
      const Eigen::Index p_sel =
          base.analysis.p_sel > 0 ? base.analysis.p_sel
                                  : static_cast<Eigen::Index>(data.n_classes);

      for (const bool final_epoch : {false, true}) {
        const int epoch = final_epoch ? trace.final_epoch : trace.best_epoch;
        const FeedforwardModel snapshot = store.get(epoch);
        const Matrix acts =
            layer_activations(snapshot, data.test_inputs, feature_layer);
        const ManifoldSet set =
            subset_manifolds(data, acts, ExampleSubset::test, p_sel,
                             base.analysis.m_sel, membership_seed);
        (final_epoch ? row.final_mgm : row.best_mgm) = analyze(set, acfg);
      }
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
    }
    result.rows.push_back(std::move(row));
  }
  return result;
}

ManifoldSet ingest_activation_dump(const std::filesystem::path& path) {
  if (path.extension() == ".csv") return read_activation_dump_csv(path);
  return read_activation_dump(path);
}

// ---------------------------------------------------------------------------
// report writers

void write_trace_csv(const std::filesystem::path& path, const TrainingTrace& t) {
  std::ostringstream os;
  os << "epoch,loss,train_accuracy,test_accuracy,unpermuted_accuracy,"
        "permuted_accuracy,restored_accuracy\n";
  auto opt = [](const std::optional<double>& v) {
    return v ? csv_number(*v) : std::string();
  };
  for (const auto& row : t.rows) {
    os << row.epoch << ',' << csv_number(row.loss) << ','
       << csv_number(row.train_accuracy) << ',' << csv_number(row.test_accuracy)
       << ',' << opt(row.unpermuted_accuracy) << ','
       << opt(row.permuted_accuracy) << ',' << opt(row.restored_accuracy)
       << '\n';
  }
  write_text(path, os.str());
}

void write_mgm_csv(const std::filesystem::path& path,
                   const std::vector<MgmRecord>& records) {
  std::ostringstream os;
  os << "epoch,layer,subset,alpha,radius,dimension,rho_center,"
        "alpha_empirical,n_gauss_samples,skipped\n";
  for (const auto& r : records) {
    os << r.epoch << ',' << r.layer << ',' << r.subset << ',';
    if (r.skipped) {
      os << ",,,,,," << 1 << '\n';
      continue;
    }
    os << csv_number(r.report.alpha_m) << ',' << csv_number(r.report.r_m) << ','
       << csv_number(r.report.d_m) << ',' << csv_number(r.report.rho_center)
       << ',';
    if (r.report.alpha_empirical) os << csv_number(*r.report.alpha_empirical);
    os << ',' << r.report.n_gauss_samples << ",0\n";
  }
  write_text(path, os.str());
}

void write_grad_csv(const std::filesystem::path& path,
                    const GradDecompReport& report) {
  std::ostringstream os;
  os << "epoch,layer,subset,dep_norm,ind_norm,total_norm,log_dep_over_ind,"
        "flagged\n";
  for (const auto& r : report.rows) {
    os << r.epoch << ',' << r.layer << ',' << r.subset << ','
       << csv_number(r.dep_norm) << ',' << csv_number(r.ind_norm) << ','
       << csv_number(r.total_norm) << ',' << csv_number(r.log_dep_over_ind)
       << ',' << (r.ratio_flagged ? 1 : 0) << '\n';
  }
  write_text(path, os.str());
}

void write_grad_ratio_csv(const std::filesystem::path& path,
                          const GradDecompReport& report) {
  std::ostringstream os;
  os << "epoch,layer,log_dep_unperm_over_perm,log_ind_unperm_over_perm,"
        "flagged\n";
  for (const auto& r : report.ratios) {
    os << r.epoch << ',' << r.layer << ','
       << csv_number(r.log_dep_unperm_over_perm) << ','
       << csv_number(r.log_ind_unperm_over_perm) << ','
       << (r.flagged ? 1 : 0) << '\n';
  }
  write_text(path, os.str());
}

void write_rewind_csv(const std::filesystem::path& path, const RewindResult& r) {
  std::ostringstream os;
  os << "layer,epoch,train_accuracy,test_accuracy,failed\n";
  for (const auto& c : r.cells) {
    os << c.layer << ',' << c.epoch << ',' << csv_number(c.train_accuracy)
       << ',' << csv_number(c.test_accuracy) << ',' << (c.failed ? 1 : 0)
       << '\n';
  }
  write_text(path, os.str());
}

void write_width_csv(const std::filesystem::path& path,
                     const WidthSweepResult& r) {
  std::ostringstream os;
  os << "factor,hidden_width,param_count,best_epoch,final_epoch,"
        "best_test_accuracy,final_test_accuracy,"
        "alpha_best,radius_best,dimension_best,rho_best,"
        "alpha_final,radius_final,dimension_final,rho_final,failed\n";
  for (const auto& row : r.rows) {
    os << csv_number(row.factor) << ',' << row.hidden_width << ','
       << row.param_count << ',' << row.best_epoch << ',' << row.final_epoch
       << ',' << csv_number(row.best_test_accuracy) << ','
       << csv_number(row.final_test_accuracy) << ','
       << csv_number(row.best_mgm.alpha_m) << ','
       << csv_number(row.best_mgm.r_m) << ',' << csv_number(row.best_mgm.d_m)
       << ',' << csv_number(row.best_mgm.rho_center) << ','
       << csv_number(row.final_mgm.alpha_m) << ','
       << csv_number(row.final_mgm.r_m) << ',' << csv_number(row.final_mgm.d_m)
       << ',' << csv_number(row.final_mgm.rho_center) << ','
       << (row.failed ? 1 : 0) << '\n';
  }
  write_text(path, os.str());
}

namespace {

json trace_row_json(const TraceRow& row) {
  json j = {{"epoch", row.epoch},
            {"loss", row.loss},
            {"train_accuracy", row.train_accuracy},
            {"test_accuracy", row.test_accuracy}};
  if (row.unpermuted_accuracy) j["unpermuted_accuracy"] = *row.unpermuted_accuracy;
  if (row.permuted_accuracy) j["permuted_accuracy"] = *row.permuted_accuracy;
  if (row.restored_accuracy) j["restored_accuracy"] = *row.restored_accuracy;
  return j;
}

}  // namespace

std::string trace_json(const TrainingTrace& t) {
  json j;
  j["best_epoch"] = t.best_epoch;
  j["best_test_accuracy"] = t.best_test_accuracy;
  j["final_epoch"] = t.final_epoch;
  j["stop"] = t.stop == StopReason::target_accuracy ? "target_accuracy"
              : t.stop == StopReason::epoch_cap     ? "epoch_cap"
                                                    : "diverged";
  j["rows"] = json::array();
  for (const auto& row : t.rows) j["rows"].push_back(trace_row_json(row));
  return j.dump(2);
}

std::string mgm_json(const std::vector<MgmRecord>& records) {
  json j = json::array();
  for (const auto& r : records) {
    json item = {{"epoch", r.epoch},
                 {"layer", r.layer},
                 {"subset", r.subset},
                 {"skipped", r.skipped}};
    if (r.skipped) {
      item["note"] = r.note;
    } else {
      item["alpha"] = r.report.alpha_m;
      item["radius"] = r.report.r_m;
      item["dimension"] = r.report.d_m;
      item["rho_center"] = r.report.rho_center;
      if (r.report.alpha_empirical) {
        item["alpha_empirical"] = *r.report.alpha_empirical;
      }
      item["n_gauss_samples"] = r.report.n_gauss_samples;
      item["seed"] = r.report.seed;
      item["projection_applied"] = r.report.projection_applied;
    }
    j.push_back(item);
  }
  return j.dump(2);
}

std::string grad_json(const GradDecompReport& report) {
  json j;
  j["centering"] = report.centering;
  j["missing_epochs"] = report.missing_epochs;
  j["rows"] = json::array();
  for (const auto& r : report.rows) {
    j["rows"].push_back({{"epoch", r.epoch},
                         {"layer", r.layer},
                         {"subset", r.subset},
                         {"dep_norm", r.dep_norm},
                         {"ind_norm", r.ind_norm},
                         {"total_norm", r.total_norm},
                         {"log_dep_over_ind", r.log_dep_over_ind},
                         {"flagged", r.ratio_flagged}});
  }
  j["ratios"] = json::array();
  for (const auto& r : report.ratios) {
    j["ratios"].push_back(
        {{"epoch", r.epoch},
         {"layer", r.layer},
         {"log_dep_unperm_over_perm", r.log_dep_unperm_over_perm},
         {"log_ind_unperm_over_perm", r.log_ind_unperm_over_perm},
         {"flagged", r.flagged}});
  }
  return j.dump(2);
}

std::string rewind_json(const RewindResult& r) {
  json j;
  j["baseline_final_train"] = r.baseline_final_train;
  j["baseline_final_test"] = r.baseline_final_test;
  j["baseline_best_test"] = r.baseline_best_test;
  j["best_epoch"] = r.best_epoch;
  j["final_epoch"] = r.final_epoch;
  j["cells"] = json::array();
  for (const auto& c : r.cells) {
    j["cells"].push_back({{"layer", c.layer},
                          {"epoch", c.epoch},
                          {"train_accuracy", c.train_accuracy},
                          {"test_accuracy", c.test_accuracy},
                          {"failed", c.failed},
                          {"error", c.error}});
  }
  return j.dump(2);
}

std::string width_json(const WidthSweepResult& r) {
  json j = json::array();
  for (const auto& row : r.rows) {
    json item = {{"factor", row.factor},
                 {"hidden_width", row.hidden_width},
                 {"param_count", row.param_count},
                 {"best_epoch", row.best_epoch},
                 {"final_epoch", row.final_epoch},
                 {"best_test_accuracy", row.best_test_accuracy},
                 {"final_test_accuracy", row.final_test_accuracy},
                 {"failed", row.failed}};
    if (!row.failed) {
      item["best"] = {{"alpha", row.best_mgm.alpha_m},
                      {"radius", row.best_mgm.r_m},
                      {"dimension", row.best_mgm.d_m},
                      {"rho_center", row.best_mgm.rho_center}};
      item["final"] = {{"alpha", row.final_mgm.alpha_m},
                       {"radius", row.final_mgm.r_m},
                       {"dimension", row.final_mgm.d_m},
                       {"rho_center", row.final_mgm.rho_center}};
    } else {
      item["error"] = row.error;
    }
    j.push_back(item);
  }
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// plots

namespace {

const char* kSubsetOrder[] = {"unpermuted", "permuted", "restored", "test"};

svg::Series subset_series(const std::string& name) {
  svg::Series s;
  s.name = name;
  s.color = svg::subset_color(name);
  return s;
}

}  // namespace

std::vector<std::string> emit_plots(const ExperimentResult& result,
                                    const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const fs::path plots = dir / "plots";
  fs::create_directories(plots);
  std::vector<std::string> produced;

  // accuracy curves
  {
    svg::Series train{"train", {}, {}, "#111111"};
    svg::Series test = subset_series("test");
    svg::Series unperm = subset_series("unpermuted");
    svg::Series perm = subset_series("permuted");
    svg::Series restored = subset_series("restored");
    for (const auto& row : result.trace.rows) {
      const double e = row.epoch;
      train.x.push_back(e);
      train.y.push_back(row.train_accuracy);
      test.x.push_back(e);
      test.y.push_back(row.test_accuracy);
      if (row.unpermuted_accuracy) {
        unperm.x.push_back(e);
        unperm.y.push_back(*row.unpermuted_accuracy);
      }
      if (row.permuted_accuracy) {
        perm.x.push_back(e);
        perm.y.push_back(*row.permuted_accuracy);
      }
      if (row.restored_accuracy) {
        restored.x.push_back(e);
        restored.y.push_back(*row.restored_accuracy);
      }
    }
    svg::ChartOptions opt;
    opt.title = "Accuracy by subset";
    opt.x_label = "epoch";
    opt.y_label = "accuracy";
    svg::write_line_chart(plots / "accuracy_vs_epoch.svg",
                          {train, unperm, perm, restored, test}, opt);
    produced.push_back("accuracy_vs_epoch.svg");
  }

  // MGM versus layer at the best and final epochs; MGM versus epoch at the
  // last analyzed layer.
  const struct {
    const char* key;
    double MgmReport::*field;
  } metrics[] = {{"alpha", &MgmReport::alpha_m},
                 {"radius", &MgmReport::r_m},
                 {"dimension", &MgmReport::d_m},
                 {"rho_center", &MgmReport::rho_center}};

  int last_layer = 0;
  for (const auto& r : result.mgm) last_layer = std::max(last_layer, r.layer);

  for (const auto& tagged : {std::pair<const char*, int>{
           "best", result.trace.best_epoch},
           {"final", result.trace.final_epoch}}) {
    for (const auto& metric : metrics) {
      std::vector<svg::Series> series;
      for (const char* subset : kSubsetOrder) {
        svg::Series s = subset_series(subset);
        for (const auto& r : result.mgm) {
          if (r.skipped || r.epoch != tagged.second || r.subset != subset) {
            continue;
          }
          s.x.push_back(r.layer);
          s.y.push_back(r.report.*metric.field);
        }
        series.push_back(std::move(s));
      }
      svg::ChartOptions opt;
      opt.title = std::string(metric.key) + " by layer (" + tagged.first +
                  " epoch " + std::to_string(tagged.second) + ")";
      opt.x_label = "layer";
      opt.y_label = metric.key;
      const std::string name =
          std::string("mgm_") + metric.key + "_" + tagged.first + ".svg";
      svg::write_line_chart(plots / name, series, opt);
      produced.push_back(name);
    }
  }

  for (const auto& metric : metrics) {
    std::vector<svg::Series> series;
    for (const char* subset : kSubsetOrder) {
      svg::Series s = subset_series(subset);
      for (const auto& r : result.mgm) {
        if (r.skipped || r.layer != last_layer || r.subset != subset) continue;
        s.x.push_back(r.epoch);
        s.y.push_back(r.report.*metric.field);
      }
      series.push_back(std::move(s));
    }
    svg::ChartOptions opt;
    opt.title = std::string(metric.key) + " over epochs (layer " +
                std::to_string(last_layer) + ")";
    opt.x_label = "epoch";
    opt.y_label = metric.key;
    const std::string name = std::string("mgm_") + metric.key + "_vs_epoch.svg";
    svg::write_line_chart(plots / name, series, opt);
    produced.push_back(name);
  }

  // gradient ratio grids
  if (!result.grads.rows.empty()) {
    std::vector<int> epochs, layers;
    for (const auto& r : result.grads.rows) {
      if (std::find(epochs.begin(), epochs.end(), r.epoch) == epochs.end()) {
        epochs.push_back(r.epoch);
      }
      if (std::find(layers.begin(), layers.end(), r.layer) == layers.end()) {
        layers.push_back(r.layer);
      }
    }
    std::sort(epochs.begin(), epochs.end());
    std::sort(layers.begin(), layers.end());
    auto col_labels = [&]() {
      std::vector<std::string> cols;
      for (int e : epochs) cols.push_back(std::to_string(e));
      return cols;
    }();
    std::vector<std::string> row_labels;
    for (int l : layers) row_labels.push_back("layer " + std::to_string(l));

    for (const std::string subset : {"unpermuted", "permuted"}) {
      std::vector<std::vector<double>> grid(
          layers.size(), std::vector<double>(epochs.size(), 0.0));
      for (const auto& r : result.grads.rows) {
        if (r.subset != subset) continue;
        const auto li = std::find(layers.begin(), layers.end(), r.layer) -
                        layers.begin();
        const auto ei = std::find(epochs.begin(), epochs.end(), r.epoch) -
                        epochs.begin();
        grid[static_cast<std::size_t>(li)][static_cast<std::size_t>(ei)] =
            r.log_dep_over_ind;
      }
      svg::ChartOptions opt;
      opt.title = "log |dep| / |ind| (" + subset + ")";
      const std::string name = "grad_log_dep_ind_" + subset + ".svg";
      svg::write_grid_chart(plots / name, row_labels, col_labels, grid, opt);
      produced.push_back(name);
    }

    if (!result.grads.ratios.empty()) {
      std::vector<std::vector<double>> dep_grid(
          layers.size(), std::vector<double>(epochs.size(), 0.0));
      std::vector<std::vector<double>> ind_grid = dep_grid;
      for (const auto& r : result.grads.ratios) {
        const auto li = std::find(layers.begin(), layers.end(), r.layer) -
                        layers.begin();
        const auto ei = std::find(epochs.begin(), epochs.end(), r.epoch) -
                        epochs.begin();
        dep_grid[static_cast<std::size_t>(li)][static_cast<std::size_t>(ei)] =
            r.log_dep_unperm_over_perm;
        ind_grid[static_cast<std::size_t>(li)][static_cast<std::size_t>(ei)] =
            r.log_ind_unperm_over_perm;
      }
      svg::ChartOptions opt;
      opt.title = "log |dep unpermuted| / |dep permuted|";
      svg::write_grid_chart(plots / "grad_log_dep_unperm_perm.svg", row_labels,
                            col_labels, dep_grid, opt);
      produced.push_back("grad_log_dep_unperm_perm.svg");
      opt.title = "log |ind unpermuted| / |ind permuted|";
      svg::write_grid_chart(plots / "grad_log_ind_unperm_perm.svg", row_labels,
                            col_labels, ind_grid, opt);
      produced.push_back("grad_log_ind_unperm_perm.svg");
    }
  }
  return produced;
}

std::vector<std::string> emit_width_sweep_plots(
    const WidthSweepResult& sweep, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<std::string> produced;

  auto series_pair = [&](auto getter, const std::string& label) {
    svg::Series best{label + " (best)", {}, {}, "#1f77b4"};
    svg::Series final_series{label + " (final)", {}, {}, "#ff7f0e"};
    for (const auto& row : sweep.rows) {
      if (row.failed) continue;
      best.x.push_back(static_cast<double>(row.param_count));
      final_series.x.push_back(static_cast<double>(row.param_count));
      best.y.push_back(getter(row, false));
      final_series.y.push_back(getter(row, true));
    }
    return std::vector<svg::Series>{best, final_series};
  };

  struct MetricDef {
    const char* key;
    double (*get)(const WidthSweepRow&, bool);
  };
  const MetricDef defs[] = {
      {"accuracy",
       [](const WidthSweepRow& r, bool f) {
         return f ? r.final_test_accuracy : r.best_test_accuracy;
       }},
      {"alpha",
       [](const WidthSweepRow& r, bool f) {
         return f ? r.final_mgm.alpha_m : r.best_mgm.alpha_m;
       }},
      {"radius",
       [](const WidthSweepRow& r, bool f) {
         return f ? r.final_mgm.r_m : r.best_mgm.r_m;
       }},
      {"dimension",
       [](const WidthSweepRow& r, bool f) {
         return f ? r.final_mgm.d_m : r.best_mgm.d_m;
       }},
      {"rho_center",
       [](const WidthSweepRow& r, bool f) {
         return f ? r.final_mgm.rho_center : r.best_mgm.rho_center;
       }},
  };
  for (const auto& def : defs) {
    svg::ChartOptions opt;
    opt.title = std::string("width sweep: ") + def.key;
    opt.x_label = "parameter count";
    opt.y_label = def.key;
    const std::string name = std::string("width_") + def.key + ".svg";
    svg::write_line_chart(dir / name, series_pair(def.get, def.key), opt);
    produced.push_back(name);
  }
  return produced;
}

std::vector<std::string> emit_rewind_plots(const RewindResult& result,
                                           const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<std::string> produced;

  std::vector<int> layers;
  for (const auto& c : result.cells) {
    if (std::find(layers.begin(), layers.end(), c.layer) == layers.end()) {
      layers.push_back(c.layer);
    }
  }
  std::sort(layers.begin(), layers.end());

  for (const bool test_panel : {false, true}) {
    std::vector<svg::Series> series;
    int color = 0;
    for (int layer : layers) {
      svg::Series s;
      s.name = "layer " + std::to_string(layer);
      for (const auto& c : result.cells) {
        if (c.layer != layer || c.failed) continue;
        s.x.push_back(c.epoch);
        s.y.push_back(test_panel ? c.test_accuracy : c.train_accuracy);
      }
      series.push_back(std::move(s));
      ++color;
    }
    svg::Series baseline{"best early stop", {}, {}, "#555555"};
    if (!result.cells.empty()) {
      baseline.x = {static_cast<double>(result.cells.front().epoch),
                    static_cast<double>(result.final_epoch)};
      const double level =
          test_panel ? result.baseline_best_test : result.baseline_final_train;
      baseline.y = {level, level};
    }
    series.push_back(baseline);

    svg::ChartOptions opt;
    opt.title = test_panel ? "Rewound test accuracy" : "Rewound train accuracy";
    opt.x_label = "rewind epoch";
    opt.y_label = "accuracy";
    const std::string name =
        test_panel ? "rewind_test_accuracy.svg" : "rewind_train_accuracy.svg";
    svg::write_line_chart(dir / name, series, opt);
    produced.push_back(name);
  }
  return produced;
}

}  // namespace mftma
