#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "stablecheb/layers.hpp"
#include "stablecheb/rng.hpp"

namespace stablecheb {

enum class Readout { NodeLevel, GraphMean };

struct AffineParams {
  Matrix W;
  Matrix b;  // 1 x d_out
};

// Encoder -> Chebyshev layer stack -> readout -> decoder MLP.
// Chebyshev layers carry no biases; the affine heads do.
struct ModelSpec {
  AffineParams encoder;
  Activation encoder_activation = Activation::Identity;
  std::vector<ChebLayerParams> layers;
  Readout readout = Readout::NodeLevel;
  std::vector<AffineParams> decoder;  // activation between layers, last linear
  Activation decoder_activation = Activation::ReLU;

  int input_dim() const { return static_cast<int>(encoder.W.rows()); }
  int output_dim() const {
    return decoder.empty() ? (layers.empty() ? static_cast<int>(encoder.W.cols())
                                             : layers.back().d_out())
                           : static_cast<int>(decoder.back().W.cols());
  }
};

struct ModelConfig {
  int input_dim = 1;
  int hidden_dim = 16;
  int output_dim = 1;
  int num_layers = 1;
  int order = 3;  // K
  LayerMode mode = LayerMode::Stable;
  double epsilon = 0.3;
  double gamma = 0.0;
  Activation activation = Activation::ReLU;
  Activation head_activation = Activation::ReLU;
  int mlp_layers = 2;  // decoder depth
  Readout readout = Readout::NodeLevel;
};

inline Matrix glorot_uniform(int rows, int cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / double(rows + cols));
  Matrix W(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) W(i, j) = rng.uniform(-limit, limit);
  return W;
}

inline Matrix gaussian_matrix(int rows, int cols, double stddev, Rng& rng) {
  Matrix W(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) W(i, j) = rng.normal(0.0, stddev);
  return W;
}

inline ModelSpec build_model(const ModelConfig& cfg, Rng& rng) {
  ModelSpec m;
  m.encoder.W = glorot_uniform(cfg.input_dim, cfg.hidden_dim, rng);
  m.encoder.b = Matrix::Zero(1, cfg.hidden_dim);
  m.encoder_activation = cfg.head_activation;
  for (int l = 0; l < cfg.num_layers; ++l) {
    ChebLayerParams layer;
    layer.mode = cfg.mode;
    layer.epsilon = cfg.epsilon;
    layer.gamma = cfg.gamma;
    layer.activation = cfg.activation;
    for (int k = 0; k <= cfg.order; ++k)
      layer.weights.push_back(glorot_uniform(cfg.hidden_dim, cfg.hidden_dim, rng));
    m.layers.push_back(std::move(layer));
  }
  m.readout = cfg.readout;
  m.decoder_activation = cfg.head_activation;
  int din = cfg.hidden_dim;
  for (int l = 0; l < cfg.mlp_layers; ++l) {
    const int dout = (l + 1 == cfg.mlp_layers) ? cfg.output_dim : cfg.hidden_dim;
    AffineParams a;
    a.W = glorot_uniform(din, dout, rng);
    a.b = Matrix::Zero(1, dout);
    m.decoder.push_back(std::move(a));
    din = dout;
  }
  return m;
}

struct ModelCache {
  Matrix input;
  Matrix encoder_pre;  // X_raw W + b
  std::vector<LayerCache> layers;
  std::vector<Matrix> layer_inputs;       // input to each cheb layer
  Matrix pooled_input;                    // layer-stack output fed to readout
  std::vector<int> node_graph;            // readout segments (GraphMean)
  int num_graphs = 1;
  std::vector<Matrix> decoder_inputs;     // input to each decoder affine
  std::vector<Matrix> decoder_pre;        // pre-activations
};

// node_graph maps each node row to its graph id for block-diagonal batches;
// empty means a single graph.
inline Matrix model_forward(const ModelSpec& model, const ScaledLaplacianOp& op,
                            const Matrix& X_raw, ModelCache* cache = nullptr,
                            const std::vector<int>& node_graph = {}) {
  if (X_raw.cols() != model.input_dim())
    throw std::invalid_argument("model_forward: raw feature dim " +
                                std::to_string(X_raw.cols()) + " != encoder dim " +
                                std::to_string(model.input_dim()));
  ModelCache local;
  ModelCache& c = cache ? *cache : local;
  c.input = X_raw;
  c.encoder_pre = (X_raw * model.encoder.W).rowwise() + model.encoder.b.row(0);
  Matrix X = activate(c.encoder_pre, model.encoder_activation);

  c.layers.resize(model.layers.size());
  c.layer_inputs.clear();
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    c.layer_inputs.push_back(X);
    try {
      X = cheb_layer_forward(op, X, model.layers[l], &c.layers[l]);
    } catch (const std::exception& e) {
      throw std::runtime_error("layer " + std::to_string(l) + ": " + e.what());
    }
  }

  c.pooled_input = X;
  if (model.readout == Readout::GraphMean) {
    if (node_graph.empty()) {
      c.num_graphs = 1;
      c.node_graph.assign(X.rows(), 0);
    } else {
      c.node_graph = node_graph;
      c.num_graphs = 1 + *std::max_element(node_graph.begin(), node_graph.end());
    }
    Matrix pooled = Matrix::Zero(c.num_graphs, X.cols());
    std::vector<int> counts(c.num_graphs, 0);
    for (int v = 0; v < X.rows(); ++v) {
      pooled.row(c.node_graph[v]) += X.row(v);
      ++counts[c.node_graph[v]];
    }
    for (int g = 0; g < c.num_graphs; ++g) pooled.row(g) /= double(counts[g]);
    X = pooled;
  } else {
    c.num_graphs = 1;
    c.node_graph.clear();
  }

  c.decoder_inputs.clear();
  c.decoder_pre.clear();
  for (std::size_t l = 0; l < model.decoder.size(); ++l) {
    c.decoder_inputs.push_back(X);
    Matrix pre = (X * model.decoder[l].W).rowwise() + model.decoder[l].b.row(0);
    c.decoder_pre.push_back(pre);
    X = (l + 1 == model.decoder.size())
            ? pre
            : activate(pre, model.decoder_activation);
  }
  return X;
}

struct GradientBundle {
  AffineParams d_encoder;
  std::vector<std::vector<Matrix>> d_layers;
  std::vector<AffineParams> d_decoder;
  Matrix d_input;
};

inline GradientBundle model_backward(const ModelSpec& model,
                                     const ScaledLaplacianOp& op,
                                     const ModelCache& cache, Matrix G) {
  GradientBundle grads;
  grads.d_decoder.resize(model.decoder.size());
  for (int l = static_cast<int>(model.decoder.size()) - 1; l >= 0; --l) {
    if (std::size_t(l) + 1 != model.decoder.size())
      G = G.cwiseProduct(activate_grad(cache.decoder_pre[l], model.decoder_activation));
    grads.d_decoder[l].W = cache.decoder_inputs[l].transpose() * G;
    grads.d_decoder[l].b = G.colwise().sum();
    G = G * model.decoder[l].W.transpose();
  }

  if (model.readout == Readout::GraphMean) {
    std::vector<int> counts(cache.num_graphs, 0);
    for (int v : cache.node_graph) ++counts[v];
    Matrix spread(cache.pooled_input.rows(), G.cols());
    for (int v = 0; v < spread.rows(); ++v)
      spread.row(v) = G.row(cache.node_graph[v]) / double(counts[cache.node_graph[v]]);
    G = std::move(spread);
  }

  grads.d_layers.resize(model.layers.size());
  for (int l = static_cast<int>(model.layers.size()) - 1; l >= 0; --l) {
    LayerGrads lg = backward_cheb_layer(op, model.layers[l], cache.layers[l], G);
    grads.d_layers[l] = std::move(lg.d_weights);
    G = std::move(lg.d_input);
  }

  G = G.cwiseProduct(activate_grad(cache.encoder_pre, model.encoder_activation));
  grads.d_encoder.W = cache.input.transpose() * G;
  grads.d_encoder.b = G.colwise().sum();
  grads.d_input = G * model.encoder.W.transpose();
  return grads;
}

// Flat parameter traversal used by the optimizer, checkpointing and the
// finite-difference oracle. Order is stable: encoder, layers, decoder.
template <typename ModelT, typename Fn>
void for_each_param(ModelT& model, Fn&& fn) {
  fn(model.encoder.W, "encoder.W", true);
  fn(model.encoder.b, "encoder.b", false);
  for (std::size_t l = 0; l < model.layers.size(); ++l)
    for (std::size_t k = 0; k < model.layers[l].weights.size(); ++k)
      fn(model.layers[l].weights[k],
         "layer" + std::to_string(l) + ".W" + std::to_string(k), true);
  for (std::size_t l = 0; l < model.decoder.size(); ++l) {
    fn(model.decoder[l].W, "decoder" + std::to_string(l) + ".W", true);
    fn(model.decoder[l].b, "decoder" + std::to_string(l) + ".b", false);
  }
}

template <typename BundleT, typename Fn>
void for_each_grad(BundleT& grads, Fn&& fn) {
  fn(grads.d_encoder.W);
  fn(grads.d_encoder.b);
  for (auto& layer : grads.d_layers)
    for (auto& W : layer) fn(W);
  for (auto& a : grads.d_decoder) {
    fn(a.W);
    fn(a.b);
  }
}

}  // namespace stablecheb
