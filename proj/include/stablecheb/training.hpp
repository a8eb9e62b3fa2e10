#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "stablecheb/datasets.hpp"
#include "stablecheb/model.hpp"

namespace stablecheb {

enum class LossKind { MSE, CrossEntropy, BinaryCrossEntropy };
enum class OptimizerKind { Adam, AdamW };

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 100;
  int batch_size = 32;
  OptimizerKind optimizer = OptimizerKind::AdamW;
  double weight_decay = 1e-6;
  LossKind loss = LossKind::MSE;
  std::uint64_t seed = 0;
  double grad_clip = 0.0;  // 0 = off
  double lambda_max = kLambdaMaxBound;

  void validate() const {
    if (learning_rate <= 0.0)
      throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
    if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be >= 0");
    if (batch_size < 1)
      throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Losses

struct LossResult {
  double loss = 0.0;
  Matrix d_pred;
};

inline LossResult loss_and_grad(const Matrix& pred, const Matrix& target,
                                LossKind kind) {
  LossResult res;
  switch (kind) {
    case LossKind::MSE: {
      if (pred.rows() != target.rows() || pred.cols() != target.cols())
        throw std::invalid_argument("loss_and_grad: shape mismatch");
      const double count = double(pred.size());
      Matrix diff = pred - target;
      res.loss = diff.array().square().sum() / count;
      res.d_pred = (2.0 / count) * diff;
      break;
    }
    case LossKind::CrossEntropy: {
      if (target.cols() != 1 || target.rows() != pred.rows())
        throw std::invalid_argument("loss_and_grad: CE target must be a class column");
      const int rows = static_cast<int>(pred.rows());
      const int classes = static_cast<int>(pred.cols());
      res.d_pred = Matrix(rows, classes);
      res.loss = 0.0;
      for (int i = 0; i < rows; ++i) {
        const int cls = static_cast<int>(target(i, 0));
        if (cls < 0 || cls >= classes)
          throw std::invalid_argument("loss_and_grad: class index out of range");
        const double m = pred.row(i).maxCoeff();
        Eigen::RowVectorXd e = (pred.row(i).array() - m).exp();
        const double z = e.sum();
        res.loss += -(pred(i, cls) - m - std::log(z));
        res.d_pred.row(i) = e / z;
        res.d_pred(i, cls) -= 1.0;
      }
      res.loss /= rows;
      res.d_pred /= double(rows);
      break;
    }
    case LossKind::BinaryCrossEntropy: {
      if (pred.rows() != target.rows() || pred.cols() != target.cols())
        throw std::invalid_argument("loss_and_grad: shape mismatch");
      const double count = double(pred.size());
      res.d_pred = Matrix(pred.rows(), pred.cols());
      res.loss = 0.0;
      for (int i = 0; i < pred.rows(); ++i)
        for (int j = 0; j < pred.cols(); ++j) {
          const double x = pred(i, j), y = target(i, j);
          // stable log(1 + exp(x)) - x*y on logits
          const double softplus = x > 0 ? x + std::log1p(std::exp(-x))
                                        : std::log1p(std::exp(x));
          res.loss += softplus - x * y;
          res.d_pred(i, j) = 1.0 / (1.0 + std::exp(-x)) - y;
        }
      res.loss /= count;
      res.d_pred /= count;
      break;
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Optimizer

class AdamOptimizer {
 public:
  // Standard adaptive-moment update with bias correction. AdamW applies
  // decoupled weight decay to weight matrices only, never biases.
  void step(ModelSpec& model, const GradientBundle& grads,
            const TrainConfig& cfg) {
    std::vector<Matrix*> params;
    std::vector<bool> decay;
    for_each_param(model, [&](Matrix& P, const std::string&, bool is_weight) {
      params.push_back(&P);
      decay.push_back(is_weight);
    });
    std::vector<const Matrix*> gs;
    for_each_grad(grads, [&](const Matrix& G) { gs.push_back(&G); });
    if (params.size() != gs.size())
      throw std::invalid_argument("adam_step: gradient/parameter mismatch");

    bool finite = true;
    double sq = 0.0;
    for (const Matrix* G : gs) {
      if (!G->allFinite()) finite = false;
      sq += G->array().square().sum();
    }
    if (!finite || !std::isfinite(sq)) {
      ++skipped_steps;
      return;
    }
    const double scale =
        (cfg.grad_clip > 0.0 && std::sqrt(sq) > cfg.grad_clip)
            ? cfg.grad_clip / std::sqrt(sq)
            : 1.0;

    if (m_.empty()) {
      for (const Matrix* G : gs) {
        m_.push_back(Matrix::Zero(G->rows(), G->cols()));
        v_.push_back(Matrix::Zero(G->rows(), G->cols()));
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1, t_);
    const double bc2 = 1.0 - std::pow(beta2, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      Matrix grad = *gs[i] * scale;
      m_[i] = beta1 * m_[i] + (1.0 - beta1) * grad;
      v_[i] = beta2 * v_[i] + (1.0 - beta2) * grad.cwiseProduct(grad);
      if (cfg.optimizer == OptimizerKind::AdamW && decay[i])
        *params[i] -= (cfg.learning_rate * cfg.weight_decay) * (*params[i]);
      *params[i] -= (cfg.learning_rate *
                     ((m_[i] / bc1).array() / ((v_[i] / bc2).array().sqrt() + eps)))
                        .matrix();
    }
  }

  int skipped_steps = 0;
  static constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

 private:
  int t_ = 0;
  std::vector<Matrix> m_, v_;
};

// ---------------------------------------------------------------------------
// Batching: disjoint-union block-diagonal graphs

struct Batch {
  SparseGraph graph;
  Matrix features;
  Matrix targets;             // rows: masked nodes (node-level) or graphs
  std::vector<int> loss_rows; // pred rows the loss applies to (node-level)
  std::vector<int> node_graph;
  bool graph_level = false;
};

inline Batch make_batch(const std::vector<const TaskInstance*>& insts) {
  if (insts.empty()) throw std::invalid_argument("make_batch: empty batch");
  Batch b;
  std::vector<const SparseGraph*> graphs;
  for (auto* i : insts) graphs.push_back(&i->graph);
  b.graph = disjoint_union(graphs, &b.node_graph);
  b.graph_level = insts[0]->targets.rows() == 1 && insts[0]->mask.empty() &&
                  insts[0]->targets.rows() != insts[0]->graph.num_nodes;
  const int feat_dim = static_cast<int>(insts[0]->features.cols());
  b.features = Matrix(b.graph.num_nodes, feat_dim);
  int offset = 0;
  std::vector<Matrix> target_blocks;
  for (auto* inst : insts) {
    b.features.middleRows(offset, inst->graph.num_nodes) = inst->features;
    if (b.graph_level) {
      target_blocks.push_back(inst->targets);
    } else if (!inst->mask.empty()) {
      Matrix t(inst->mask.size(), inst->targets.cols());
      for (std::size_t i = 0; i < inst->mask.size(); ++i) {
        t.row(i) = inst->targets.row(inst->mask[i]);
        b.loss_rows.push_back(offset + inst->mask[i]);
      }
      target_blocks.push_back(std::move(t));
    } else {
      target_blocks.push_back(inst->targets);
      for (int v = 0; v < inst->graph.num_nodes; ++v)
        b.loss_rows.push_back(offset + v);
    }
    offset += inst->graph.num_nodes;
  }
  int trows = 0;
  for (auto& t : target_blocks) trows += static_cast<int>(t.rows());
  b.targets = Matrix(trows, target_blocks[0].cols());
  int r = 0;
  for (auto& t : target_blocks) {
    b.targets.middleRows(r, t.rows()) = t;
    r += static_cast<int>(t.rows());
  }
  return b;
}

// ---------------------------------------------------------------------------
// Evaluation and the training loop

struct EvalResult {
  double loss = 0.0;
  double metric = 0.0;  // accuracy for CE, MSE otherwise
};

struct BatchPass {
  double loss = 0.0;
  double metric_num = 0.0;  // correct count or squared-error sum
  double metric_den = 0.0;
  GradientBundle grads;
};

inline BatchPass run_batch(const ModelSpec& model, const Batch& batch,
                           const TrainConfig& cfg, bool want_grads) {
  ScaledLaplacianOp op(batch.graph, cfg.lambda_max);
  ModelCache cache;
  Matrix pred = model_forward(model, op, batch.features, &cache, batch.node_graph);
  Matrix pred_sel;
  if (batch.graph_level) {
    pred_sel = pred;
  } else {
    pred_sel = Matrix(batch.loss_rows.size(), pred.cols());
    for (std::size_t i = 0; i < batch.loss_rows.size(); ++i)
      pred_sel.row(i) = pred.row(batch.loss_rows[i]);
  }
  LossResult lr = loss_and_grad(pred_sel, batch.targets, cfg.loss);
  BatchPass pass;
  pass.loss = lr.loss;
  if (cfg.loss == LossKind::CrossEntropy) {
    for (int i = 0; i < pred_sel.rows(); ++i) {
      int argmax = 0;
      pred_sel.row(i).maxCoeff(&argmax);
      if (argmax == static_cast<int>(batch.targets(i, 0))) pass.metric_num += 1.0;
    }
    pass.metric_den = double(pred_sel.rows());
  } else {
    pass.metric_num = (pred_sel - batch.targets).array().square().sum();
    pass.metric_den = double(pred_sel.size());
  }
  if (want_grads) {
    Matrix G;
    if (batch.graph_level) {
      G = lr.d_pred;
    } else {
      G = Matrix::Zero(pred.rows(), pred.cols());
      for (std::size_t i = 0; i < batch.loss_rows.size(); ++i)
        G.row(batch.loss_rows[i]) = lr.d_pred.row(i);
    }
    pass.grads = model_backward(model, op, cache, G);
  }
  return pass;
}

inline EvalResult evaluate(const ModelSpec& model,
                           const std::vector<TaskInstance>& insts,
                           const TrainConfig& cfg) {
  EvalResult res;
  double loss_sum = 0.0, num = 0.0, den = 0.0;
  int batches = 0;
  for (std::size_t i = 0; i < insts.size(); i += cfg.batch_size) {
    std::vector<const TaskInstance*> chunk;
    for (std::size_t j = i; j < insts.size() && j < i + cfg.batch_size; ++j)
      chunk.push_back(&insts[j]);
    BatchPass pass = run_batch(model, make_batch(chunk), cfg, false);
    loss_sum += pass.loss * chunk.size();
    num += pass.metric_num;
    den += pass.metric_den;
    ++batches;
  }
  res.loss = insts.empty() ? 0.0 : loss_sum / double(insts.size());
  res.metric = den > 0 ? num / den : 0.0;
  return res;
}

struct EpochRecord {
  int epoch;
  std::string split;
  double loss;
  double metric;
  double seconds;
};

struct TrainResult {
  ModelSpec model;  // best-validation checkpoint
  std::vector<EpochRecord> history;
  EvalResult test;
  bool diverged = false;
};

inline TrainResult train_model(const ModelSpec& init,
                               const DatasetSplit& dataset,
                               const TrainConfig& cfg) {
  cfg.validate();
  TrainResult result;
  result.model = init;
  ModelSpec model = init;
  AdamOptimizer opt;
  Rng shuffle_rng(cfg.seed ^ 0x5e71'5e71'5e71'5e71ULL);
  double best_val = std::numeric_limits<double>::infinity();
  bool have_best = false;
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  };
  std::vector<int> order(dataset.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[i], order[shuffle_rng.below(i + 1)]);
    double train_loss = 0.0, train_num = 0.0, train_den = 0.0;
    for (std::size_t i = 0; i < order.size(); i += cfg.batch_size) {
      std::vector<const TaskInstance*> chunk;
      for (std::size_t j = i; j < order.size() && j < i + cfg.batch_size; ++j)
        chunk.push_back(&dataset.train[order[j]]);
      BatchPass pass;
      try {
        pass = run_batch(model, make_batch(chunk), cfg, true);
      } catch (const std::runtime_error&) {
        result.diverged = true;  // non-finite forward; keep history
        break;
      }
      if (!std::isfinite(pass.loss)) {
        result.diverged = true;
        break;
      }
      train_loss += pass.loss * chunk.size();
      train_num += pass.metric_num;
      train_den += pass.metric_den;
      opt.step(model, pass.grads, cfg);
    }
    if (result.diverged) break;
    const double n_train = double(dataset.train.size());
    result.history.push_back({epoch, "train", train_loss / n_train,
                              train_den > 0 ? train_num / train_den : 0.0,
                              elapsed()});
    if (!dataset.val.empty()) {
      EvalResult val = evaluate(model, dataset.val, cfg);
      result.history.push_back({epoch, "val", val.loss, val.metric, elapsed()});
      const double score =
          cfg.loss == LossKind::CrossEntropy ? -val.metric : val.loss;
      if (score < best_val) {
        best_val = score;
        result.model = model;
        have_best = true;
      }
    }
  }
  if (!have_best) result.model = model;
  if (!dataset.test.empty()) {
    result.test = evaluate(result.model, dataset.test, cfg);
    if (cfg.epochs > 0)
      result.history.push_back({cfg.epochs, "test", result.test.loss,
                                result.test.metric, elapsed()});
  }
  return result;
}

// ---------------------------------------------------------------------------
// Finite-difference oracle

// Central differences over every parameter; returns the max relative error
// against the analytic gradient. Independent of the backward-pass code path.
inline double finite_difference_check(ModelSpec model, const SparseGraph& graph,
                                      const Matrix& X, const Matrix& target,
                                      LossKind kind, double h = 1e-5,
                                      const std::vector<int>& loss_rows = {},
                                      const std::vector<int>& node_graph = {},
                                      double lambda_max = kLambdaMaxBound) {
  ScaledLaplacianOp op(graph, lambda_max);
  auto scalar_loss = [&](const ModelSpec& m) {
    Matrix pred = model_forward(m, op, X, nullptr, node_graph);
    Matrix sel;
    if (loss_rows.empty()) {
      sel = pred;
    } else {
      sel = Matrix(loss_rows.size(), pred.cols());
      for (std::size_t i = 0; i < loss_rows.size(); ++i)
        sel.row(i) = pred.row(loss_rows[i]);
    }
    return loss_and_grad(sel, target, kind).loss;
  };

  ModelCache cache;
  Matrix pred = model_forward(model, op, X, &cache, node_graph);
  Matrix sel;
  if (loss_rows.empty()) {
    sel = pred;
  } else {
    sel = Matrix(loss_rows.size(), pred.cols());
    for (std::size_t i = 0; i < loss_rows.size(); ++i)
      sel.row(i) = pred.row(loss_rows[i]);
  }
  LossResult lr = loss_and_grad(sel, target, kind);
  Matrix G;
  if (loss_rows.empty()) {
    G = lr.d_pred;
  } else {
    G = Matrix::Zero(pred.rows(), pred.cols());
    for (std::size_t i = 0; i < loss_rows.size(); ++i)
      G.row(loss_rows[i]) = lr.d_pred.row(i);
  }
  GradientBundle grads = model_backward(model, op, cache, G);

  std::vector<Matrix> analytic;
  for_each_grad(grads, [&](auto& Gm) { analytic.push_back(Matrix(Gm)); });

  double max_rel = 0.0;
  std::size_t pidx = 0;
  for_each_param(model, [&](auto& P, const std::string&, bool) {
    for (int i = 0; i < P.rows(); ++i)
      for (int j = 0; j < P.cols(); ++j) {
        const double orig = P(i, j);
        P(i, j) = orig + h;
        const double up = scalar_loss(model);
        P(i, j) = orig - h;
        const double down = scalar_loss(model);
        P(i, j) = orig;
        const double numeric = (up - down) / (2.0 * h);
        const double rel = std::abs(analytic[pidx](i, j) - numeric) /
                           std::max(1e-8, std::abs(numeric));
        max_rel = std::max(max_rel, rel);
      }
    ++pidx;
  });
  return max_rel;
}

}  // namespace stablecheb
