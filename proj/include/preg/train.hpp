#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "preg/analysis.hpp"
#include "preg/data.hpp"
#include "preg/graph.hpp"
#include "preg/matrix.hpp"
#include "preg/nn.hpp"
#include "preg/reg.hpp"
#include "preg/rng.hpp"

namespace preg {

struct SplitSpec {
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> val_idx;
  std::vector<std::size_t> test_idx;
};

struct TrainConfig {
  ModelKind model = ModelKind::gcn;
  RegSpec reg;
  double lr = 0.01;
  double weight_decay = 5e-4;
  std::size_t max_epochs = 2000;
  std::size_t patience = 200;
  std::uint64_t seed = 0;
  std::size_t hidden = 0;  // 0 → per-model default (gcn 64, mlp 16)
  double dropout_p = 0.5;
  NormMode model_norm = NormMode::symmetric;
  NormMode preg_norm = NormMode::row;
  std::optional<SplitSpec> split;  // explicit split wins over the recipe below
  std::size_t train_per_class = 20;
  std::size_t val_per_class = 30;
  // Explicit unmask set (testing hook; bypasses the ratio draw when set).
  std::optional<std::vector<std::size_t>> unmask_override;
};

struct LossPoint {
  std::size_t epoch = 0;
  double cls = 0.0;
  double reg_term = 0.0;  // serialized as "preg": the term added to the loss
};

struct Metrics {
  double mu = 0.0;
  PhiVariant phi = PhiVariant::cross_entropy;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double test_acc = 0.0;
  double omega = 0.0;
  std::size_t stopped_epoch = 0;
  std::vector<LossPoint> loss_curve;
};

inline DenseMatrix one_hot(const std::vector<std::size_t>& labels, std::size_t num_classes) {
  DenseMatrix y(labels.size(), num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] < num_classes, "one_hot: label out of range");
    y(i, labels[i]) = 1.0;
  }
  return y;
}

struct CompositeParts {
  double value = 0.0;
  double cls = 0.0;
  double reg_term = 0.0;
  DenseMatrix dZ;
};

// Eq-style composite objective: mean cross entropy over the training rows plus
// the configured regularizer. Annealing rescales μ by epoch; thresholding
// hinges the P-reg value. Gradients of both terms are summed into dZ.
// preg_op/preg_op_t/unmask_set are consulted only for reg kind preg.
inline CompositeParts composite_loss(const DenseMatrix& Z, const std::vector<std::size_t>& labels,
                                     const SplitSpec& split, const RegSpec& reg, const Graph& g,
                                     const SparseOperator* preg_op,
                                     const SparseOperator* preg_op_t,
                                     const std::vector<std::size_t>& unmask_set,
                                     std::size_t epoch = 1) {
  require(!split.train_idx.empty(), "composite_loss: empty training set");
  const std::size_t C = Z.cols;
  const DenseMatrix P = softmax_rows(Z);
  const double inv_m = 1.0 / static_cast<double>(split.train_idx.size());

  CompositeParts out;
  out.dZ = DenseMatrix(Z.rows, Z.cols);
  const bool smoothed = reg.kind == RegKind::label_smoothing;
  for (std::size_t i : split.train_idx) {
    require(i < Z.rows && labels[i] < C, "composite_loss: bad train index or label");
    const double off = smoothed ? reg.ls_alpha / static_cast<double>(C) : 0.0;
    for (std::size_t j = 0; j < C; ++j) {
      const double t = (j == labels[i] ? (smoothed ? 1.0 - reg.ls_alpha : 1.0) : 0.0) + off;
      out.cls -= t * clamped_log(P(i, j)) * inv_m;
      out.dZ(i, j) = (P(i, j) - t) * inv_m;
    }
  }

  switch (reg.kind) {
    case RegKind::none:
    case RegKind::label_smoothing:
      break;
    case RegKind::preg: {
      if (unmask_set.empty()) break;
      require(preg_op != nullptr && preg_op_t != nullptr,
              "composite_loss: preg requires the propagation operator");
      const RegResult rr = preg_loss(g, *preg_op, *preg_op_t, Z, reg.phi, unmask_set);
      const double mu_eff = reg.anneal ? anneal_mu(reg.mu, epoch) : reg.mu;
      if (mu_eff == 0.0) break;
      if (reg.threshold) {
        const HingeResult h = threshold_hinge(rr.value, *reg.threshold);
        out.reg_term = mu_eff * h.value;
        if (h.grad_factor != 0.0) add_scaled(out.dZ, rr.dZ, mu_eff);
      } else {
        out.reg_term = mu_eff * rr.value;
        add_scaled(out.dZ, rr.dZ, mu_eff);
      }
      break;
    }
    case RegKind::laplacian: {
      if (reg.mu == 0.0) break;
      const RegResult rr = laplacian_reg(g, Z);
      out.reg_term = reg.mu * rr.value;
      add_scaled(out.dZ, rr.dZ, reg.mu);
      break;
    }
    case RegKind::confidence_penalty: {
      if (reg.cp_beta == 0.0) break;
      const RegResult rr = confidence_penalty(P, split.train_idx);
      out.reg_term = reg.cp_beta * rr.value;
      add_scaled(out.dZ, rr.dZ, reg.cp_beta);
      break;
    }
  }
  out.value = out.cls + out.reg_term;
  return out;
}

struct AdamState {
  DenseMatrix m;
  DenseMatrix v;
};

// Standard Adam with bias correction; L2 weight decay is coupled (added to the
// raw gradient before the moment updates).
inline void adam_step(DenseMatrix& param, const DenseMatrix& grad, AdamState& state,
                      std::size_t t, double lr, double beta1, double beta2, double eps,
                      double weight_decay) {
  require(t >= 1, "adam_step: step count starts at 1");
  require(param.same_shape(grad), "adam_step: param/grad shape mismatch");
  if (state.m.data.empty()) {
    state.m = DenseMatrix(param.rows, param.cols);
    state.v = DenseMatrix(param.rows, param.cols);
  }
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.data.size(); ++i) {
    const double g = grad.data[i] + weight_decay * param.data[i];
    state.m.data[i] = beta1 * state.m.data[i] + (1.0 - beta1) * g;
    state.v.data[i] = beta2 * state.v.data[i] + (1.0 - beta2) * g * g;
    const double mhat = state.m.data[i] / bc1;
    const double vhat = state.v.data[i] / bc2;
    param.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

// Per-class uniform sampling: per_class_train to train, per_class_val to val,
// the remainder to test. Index lists come back sorted.
inline SplitSpec random_split(const std::vector<std::size_t>& labels,
                              std::size_t per_class_train, std::size_t per_class_val,
                              Rng& rng) {
  require(per_class_train >= 1 && per_class_val >= 1,
          "random_split: per-class counts must be positive");
  std::size_t num_classes = 0;
  for (std::size_t y : labels) num_classes = std::max(num_classes, y + 1);
  std::vector<std::vector<std::size_t>> members(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);

  SplitSpec split;
  for (std::size_t k = 0; k < num_classes; ++k) {
    if (members[k].size() < per_class_train + per_class_val)
      throw std::runtime_error("random_split: class " + std::to_string(k) + " has only " +
                               std::to_string(members[k].size()) + " nodes");
    rng.shuffle(members[k]);
    for (std::size_t i = 0; i < members[k].size(); ++i) {
      if (i < per_class_train)
        split.train_idx.push_back(members[k][i]);
      else if (i < per_class_train + per_class_val)
        split.val_idx.push_back(members[k][i]);
      else
        split.test_idx.push_back(members[k][i]);
    }
  }
  std::sort(split.train_idx.begin(), split.train_idx.end());
  std::sort(split.val_idx.begin(), split.val_idx.end());
  std::sort(split.test_idx.begin(), split.test_idx.end());
  return split;
}

// Fraction of idx whose argmax row matches the label; argmax ties break toward
// the lowest class index.
inline double evaluate_accuracy(const DenseMatrix& Z, const std::vector<std::size_t>& labels,
                                const std::vector<std::size_t>& idx) {
  require(!idx.empty(), "evaluate_accuracy: empty index set");
  std::size_t correct = 0;
  for (std::size_t i : idx) {
    require(i < Z.rows, "evaluate_accuracy: index out of range");
    std::size_t arg = 0;
    for (std::size_t j = 1; j < Z.cols; ++j)
      if (Z(i, j) > Z(i, arg)) arg = j;
    if (arg == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(idx.size());
}

namespace detail {

inline void validate_split(const SplitSpec& split, const std::vector<std::size_t>& labels,
                           std::size_t num_classes) {
  std::vector<char> seen(labels.size(), 0);
  for (const auto* part : {&split.train_idx, &split.val_idx, &split.test_idx})
    for (std::size_t i : *part) {
      require(i < labels.size(), "split: node index out of range");
      require(!seen[i], "split: index sets overlap");
      seen[i] = 1;
    }
  std::vector<char> covered(num_classes, 0);
  for (std::size_t i : split.train_idx) covered[labels[i]] = 1;
  for (std::size_t k = 0; k < num_classes; ++k)
    require(covered[k], "split: class " + std::to_string(k) + " missing from train");
}

}  // namespace detail

// Full-batch Adam training with early stopping on validation accuracy and
// restore-best-parameters semantics. Deterministic for a fixed seed.
inline std::pair<ModelParams, Metrics> train(const TrainConfig& cfg, const Dataset& data) {
  require(cfg.lr > 0.0, "train: lr must be positive");
  require(cfg.patience >= 1, "train: patience must be >= 1");
  require(cfg.max_epochs >= cfg.patience, "train: max_epochs must be >= patience");
  const Graph& g = data.graph;
  const std::size_t C = data.num_classes;

  SplitSpec split;
  if (cfg.split) {
    split = *cfg.split;
  } else {
    Rng split_rng(derive_seed(cfg.seed, Stream::split));
    split = random_split(data.labels, cfg.train_per_class, cfg.val_per_class, split_rng);
  }
  detail::validate_split(split, data.labels, C);

  const SparseOperator model_op = normalize_adjacency(g, cfg.model_norm);
  const SparseOperator model_op_t = transpose(model_op);

  const bool uses_preg = cfg.reg.kind == RegKind::preg;
  SparseOperator preg_op, preg_op_t;
  std::vector<std::size_t> unmask;
  if (uses_preg) {
    require(cfg.reg.mu >= 0.0, "train: mu must be nonnegative");
    require(cfg.reg.unmask_ratio >= 0.0 && cfg.reg.unmask_ratio <= 1.0,
            "train: unmask ratio must be in [0,1]");
    preg_op = normalize_adjacency(g, cfg.preg_norm);
    preg_op_t = transpose(preg_op);
    if (cfg.unmask_override) {
      unmask = *cfg.unmask_override;
    } else {
      const auto eligible = eligible_nodes(g);
      const std::size_t k =
          std::min(static_cast<std::size_t>(
                       std::llround(cfg.reg.unmask_ratio * static_cast<double>(g.num_nodes))),
                   eligible.size());
      if (k > 0) {
        Rng unmask_rng(derive_seed(cfg.seed, Stream::unmask));
        unmask = unmask_rng.sample_without_replacement(eligible, k);
      }
    }
  }

  Rng init_rng(derive_seed(cfg.seed, Stream::init));
  const std::size_t hidden = cfg.hidden ? cfg.hidden : default_hidden(cfg.model);
  ModelParams params = init_params(cfg.model, data.features.cols, hidden, C, init_rng);
  AdamState st0, st1;
  Rng dropout_rng(derive_seed(cfg.seed, Stream::dropout));

  Metrics metrics;
  metrics.mu = cfg.reg.mu;
  metrics.phi = cfg.reg.phi;
  ModelParams best = params;
  double best_val = -1.0;
  std::size_t best_epoch = 0;

  auto eval_logits = [&](const ModelParams& p) {
    return model_forward(p, data.features, model_op, 0.0, false, dropout_rng).first;
  };

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    auto [Z, cache] =
        model_forward(params, data.features, model_op, cfg.dropout_p, true, dropout_rng);
    const CompositeParts parts =
        composite_loss(Z, data.labels, split, cfg.reg, g, &preg_op, &preg_op_t, unmask, epoch);
    if (!std::isfinite(parts.value))
      throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch));
    const ParamGrads grads = model_backward(params, cache, data.features, model_op_t, parts.dZ);
    adam_step(params.W0, grads.dW0, st0, epoch, cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay);
    adam_step(params.W1, grads.dW1, st1, epoch, cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay);
    metrics.loss_curve.push_back({epoch, parts.cls, parts.reg_term});

    const double val_acc = evaluate_accuracy(eval_logits(params), data.labels, split.val_idx);
    if (val_acc > best_val) {
      best_val = val_acc;
      best = params;
      best_epoch = epoch;
    }
    metrics.stopped_epoch = epoch;
    if (epoch - best_epoch >= cfg.patience) break;
  }

  const DenseMatrix Zfinal = eval_logits(best);
  metrics.train_acc = evaluate_accuracy(Zfinal, data.labels, split.train_idx);
  metrics.val_acc = evaluate_accuracy(Zfinal, data.labels, split.val_idx);
  metrics.test_acc = evaluate_accuracy(Zfinal, data.labels, split.test_idx);
  metrics.omega = intra_class_distance(Zfinal, data.labels);
  return {std::move(best), std::move(metrics)};
}

// One training run per μ; the winner has the best validation accuracy, with
// ties broken toward the smaller μ.
inline std::pair<double, std::vector<Metrics>> grid_search_mu(const TrainConfig& base,
                                                              std::vector<double> values,
                                                              const Dataset& data) {
  require(!values.empty(), "grid_search_mu: empty grid");
  std::sort(values.begin(), values.end());
  std::vector<Metrics> all;
  double best_mu = values.front();
  double best_val = -1.0;
  for (double mu : values) {
    TrainConfig cfg = base;
    cfg.reg.mu = mu;
    Metrics m = train(cfg, data).second;
    if (m.val_acc > best_val) {
      best_val = m.val_acc;
      best_mu = mu;
    }
    all.push_back(std::move(m));
  }
  return {best_mu, std::move(all)};
}

inline std::vector<double> default_mu_grid() {  // {0.05·k : k = 1..20}
  std::vector<double> grid;
  for (int k = 1; k <= 20; ++k) grid.push_back(0.05 * k);
  return grid;
}

}  // namespace preg
