#include "mftma/graddecomp.hpp"

#include <algorithm>
#include <cmath>

namespace mftma {

namespace {

double log_sum_exp_row(const Matrix& logits, Eigen::Index row) {
  const double m = logits.row(row).maxCoeff();
  return m + std::log((logits.row(row).array() - m).exp().sum());
}

// Backpropagates class-weight rows Q (batch x P) through the logit Jacobian
// and accumulates sum_i delta_q^l(x_i)^T phi^{l-1}(x_i) for every layer.
// Dividing by the batch size afterwards yields < sum_c q_c g^l_c >.
std::vector<Matrix> weighted_gradient_sums(const FeedforwardModel& model,
                                           const ForwardPass& pass,
                                           const Matrix& q) {
  const Eigen::Index layers = model.n_layers();
  std::vector<Matrix> sums(static_cast<std::size_t>(layers));
  Matrix delta = q;
  for (Eigen::Index l = layers - 1; l >= 0; --l) {
    const Matrix& phi = pass.activations[static_cast<std::size_t>(l)];
    sums[static_cast<std::size_t>(l)] = delta.transpose() * phi;
    if (l > 0) {
      delta = (delta * model.weights[static_cast<std::size_t>(l)])
                  .cwiseProduct((phi.array() > 0.0).cast<double>().matrix());
    }
  }
  return sums;
}

}  // namespace

DecomposedLoss decompose_loss(const FeedforwardModel& model,
                              const Matrix& inputs, const Matrix& label_dist) {
  const ForwardPass pass = forward(model, inputs);
  const Matrix& logits = pass.logits();
  if (label_dist.rows() != logits.rows() || label_dist.cols() != logits.cols()) {
    throw ConfigError("decompose_loss: label distribution shape mismatch");
  }
  DecomposedLoss out;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    out.label_dependent -= label_dist.row(i).dot(logits.row(i));
    out.label_independent += log_sum_exp_row(logits, i);
  }
  out.label_dependent /= logits.rows();
  out.label_independent /= logits.rows();
  return out;
}

std::vector<Matrix> uniform_mean_gradients(const FeedforwardModel& model,
                                           const Matrix& inputs) {
  const ForwardPass pass = forward(model, inputs);
  const Matrix q = Matrix::Constant(inputs.rows(), model.output_dim(),
                                    1.0 / static_cast<double>(model.output_dim()));
  std::vector<Matrix> sums = weighted_gradient_sums(model, pass, q);
  for (auto& s : sums) s /= static_cast<double>(inputs.rows());
  return sums;
}

GradParts grad_parts_all_layers(const FeedforwardModel& model,
                                const Matrix& inputs, const Matrix& label_dist,
                                const std::vector<Matrix>* g_bar) {
  if (inputs.rows() == 0) throw ConfigError("grad_parts: empty batch");
  const ForwardPass pass = forward(model, inputs);
  if (label_dist.rows() != inputs.rows() ||
      label_dist.cols() != model.output_dim()) {
    throw ConfigError("grad_parts: label distribution shape mismatch");
  }
  const double batch = static_cast<double>(inputs.rows());

  std::vector<Matrix> g_label = weighted_gradient_sums(model, pass, label_dist);
  std::vector<Matrix> g_model =
      weighted_gradient_sums(model, pass, pass.probabilities);

  std::vector<Matrix> centering;
  if (g_bar == nullptr) {
    const Matrix q = Matrix::Constant(inputs.rows(), model.output_dim(),
                                      1.0 / static_cast<double>(model.output_dim()));
    centering = weighted_gradient_sums(model, pass, q);
    for (auto& s : centering) s /= batch;
    g_bar = &centering;
  }

  GradParts parts;
  const std::size_t layers = static_cast<std::size_t>(model.n_layers());
  parts.label_dependent.resize(layers);
  parts.label_independent.resize(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    parts.label_dependent[l] = -(g_label[l] / batch - (*g_bar)[l]);
    parts.label_independent[l] = g_model[l] / batch - (*g_bar)[l];
  }
  return parts;
}

LayerGradParts grad_parts_layer(const FeedforwardModel& model,
                                const Matrix& inputs, const Matrix& label_dist,
                                int layer, const std::vector<Matrix>* g_bar) {
  if (layer < 1 || layer > model.n_layers()) {
    throw ConfigError("grad_parts_layer: layer index out of range");
  }
  GradParts all = grad_parts_all_layers(model, inputs, label_dist, g_bar);
  LayerGradParts out;
  out.label_dependent = std::move(all.label_dependent[static_cast<std::size_t>(layer - 1)]);
  out.label_independent =
      std::move(all.label_independent[static_cast<std::size_t>(layer - 1)]);
  return out;
}

LayerGradParts grad_parts_final_layer(const FeedforwardModel& model,
                                      const Matrix& inputs,
                                      const Matrix& label_dist,
                                      const std::vector<Matrix>* g_bar) {
  return grad_parts_layer(model, inputs, label_dist,
                          static_cast<int>(model.n_layers()), g_bar);
}

namespace {

struct SubsetSums {
  std::vector<Matrix> label, modeled;
  Eigen::Index count = 0;
};

void add_rows(std::vector<Matrix>& into, const std::vector<Matrix>& from) {
  if (into.empty()) {
    into = from;
  } else {
    for (std::size_t l = 0; l < into.size(); ++l) into[l] += from[l];
  }
}

double safe_log_ratio(double a, double b, bool* flagged) {
  if (a <= 1e-300 || b <= 1e-300) {
    *flagged = true;
    return 0.0;
  }
  return std::log(a / b);
}

}  // namespace

GradDecompReport subset_grad_report(const CheckpointStore& store,
                                    const PermutedDataset& data,
                                    const std::vector<int>& epochs,
                                    Eigen::Index eval_batch) {
  GradDecompReport report;
  const Eigen::Index n = data.n_train();
  if (n == 0) throw ConfigError("subset_grad_report: empty dataset");

  for (int epoch : epochs) {
    if (!store.has(epoch)) {
      report.missing_epochs.push_back(epoch);
      continue;
    }
    const FeedforwardModel model = store.get(epoch);
    const Eigen::Index p = model.output_dim();
    const std::size_t layers = static_cast<std::size_t>(model.n_layers());

    SubsetSums unperm, perm;
    std::vector<Matrix> uniform_sum;
    for (Eigen::Index start = 0; start < n; start += eval_batch) {
      const Eigen::Index count = std::min(eval_batch, n - start);
      const Matrix batch = data.inputs.middleRows(start, count);
      const ForwardPass pass = forward(model, batch);

      Matrix p_label = Matrix::Zero(count, p);
      std::vector<Eigen::Index> rows_u, rows_p;
      for (Eigen::Index i = 0; i < count; ++i) {
        const auto idx = static_cast<std::size_t>(start + i);
        p_label(i, data.train_labels[idx]) = 1.0;
        (data.permuted_mask[idx] ? rows_p : rows_u).push_back(i);
      }

      const Matrix q_uniform =
          Matrix::Constant(count, p, 1.0 / static_cast<double>(p));
      add_rows(uniform_sum, weighted_gradient_sums(model, pass, q_uniform));

      auto accumulate = [&](const std::vector<Eigen::Index>& rows,
                            SubsetSums& sums) {
        if (rows.empty()) return;
        Matrix sub(static_cast<Eigen::Index>(rows.size()), batch.cols());
        Matrix sub_label(static_cast<Eigen::Index>(rows.size()), p);
        Matrix sub_model(static_cast<Eigen::Index>(rows.size()), p);
        for (std::size_t k = 0; k < rows.size(); ++k) {
          sub.row(static_cast<Eigen::Index>(k)) = batch.row(rows[k]);
          sub_label.row(static_cast<Eigen::Index>(k)) = p_label.row(rows[k]);
          sub_model.row(static_cast<Eigen::Index>(k)) =
              pass.probabilities.row(rows[k]);
        }
        // Reuse the forward pass restricted to the subset rows.
        ForwardPass sub_pass;
        sub_pass.activations.reserve(pass.activations.size());
        for (const auto& act : pass.activations) {
          Matrix s(static_cast<Eigen::Index>(rows.size()), act.cols());
          for (std::size_t k = 0; k < rows.size(); ++k) {
            s.row(static_cast<Eigen::Index>(k)) = act.row(rows[k]);
          }
          sub_pass.activations.push_back(std::move(s));
        }
        add_rows(sums.label, weighted_gradient_sums(model, sub_pass, sub_label));
        add_rows(sums.modeled, weighted_gradient_sums(model, sub_pass, sub_model));
        sums.count += static_cast<Eigen::Index>(rows.size());
      };
      accumulate(rows_u, unperm);
      accumulate(rows_p, perm);
    }

    std::vector<Matrix> g_bar = uniform_sum;
    for (auto& g : g_bar) g /= static_cast<double>(n);

    struct NamedSubset {
      std::string name;
      const SubsetSums* sums;
    };
    SubsetSums all;
    all.count = n;
    all.label.resize(layers);
    all.modeled.resize(layers);
    for (std::size_t l = 0; l < layers; ++l) {
      Matrix lab, mod;
      if (!unperm.label.empty() && !perm.label.empty()) {
        lab = unperm.label[l] + perm.label[l];
        mod = unperm.modeled[l] + perm.modeled[l];
      } else if (!unperm.label.empty()) {
        lab = unperm.label[l];
        mod = unperm.modeled[l];
      } else {
        lab = perm.label[l];
        mod = perm.modeled[l];
      }
      all.label[l] = lab;
      all.modeled[l] = mod;
    }

    std::vector<NamedSubset> subsets;
    subsets.push_back({"all", &all});
    if (unperm.count > 0) subsets.push_back({"unpermuted", &unperm});
    if (perm.count > 0) subsets.push_back({"permuted", &perm});

    std::vector<double> dep_norm_u(layers, 0.0), dep_norm_p(layers, 0.0);
    std::vector<double> ind_norm_u(layers, 0.0), ind_norm_p(layers, 0.0);

    for (const auto& subset : subsets) {
      for (std::size_t l = 0; l < layers; ++l) {
        const double count = static_cast<double>(subset.sums->count);
        const Matrix dep = -(subset.sums->label[l] / count - g_bar[l]);
        const Matrix ind = subset.sums->modeled[l] / count - g_bar[l];
        GradNormRow row;
        row.epoch = epoch;
        row.layer = static_cast<int>(l) + 1;
        row.subset = subset.name;
        row.dep_norm = dep.norm();
        row.ind_norm = ind.norm();
        row.total_norm = (dep + ind).norm();
        row.log_dep_over_ind =
            safe_log_ratio(row.dep_norm, row.ind_norm, &row.ratio_flagged);
        report.rows.push_back(row);
        if (subset.name == "unpermuted") {
          dep_norm_u[l] = row.dep_norm;
          ind_norm_u[l] = row.ind_norm;
        } else if (subset.name == "permuted") {
          dep_norm_p[l] = row.dep_norm;
          ind_norm_p[l] = row.ind_norm;
        }
      }
    }

    if (unperm.count > 0 && perm.count > 0) {
      for (std::size_t l = 0; l < layers; ++l) {
        GradRatioRow row;
        row.epoch = epoch;
        row.layer = static_cast<int>(l) + 1;
        row.log_dep_unperm_over_perm =
            safe_log_ratio(dep_norm_u[l], dep_norm_p[l], &row.flagged);
        row.log_ind_unperm_over_perm =
            safe_log_ratio(ind_norm_u[l], ind_norm_p[l], &row.flagged);
        report.ratios.push_back(row);
      }
    }
  }
  return report;
}

}  // namespace mftma
