#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "stablecheb/graph.hpp"

namespace stablecheb {

enum class Activation { Identity, Tanh, ReLU };
enum class LayerMode { Vanilla, Stable };

inline Matrix activate(const Matrix& A, Activation act) {
  switch (act) {
    case Activation::Identity: return A;
    case Activation::Tanh: return A.array().tanh().matrix();
    case Activation::ReLU: return A.cwiseMax(0.0);
  }
  throw std::logic_error("unknown activation");
}

// sigma'(A), evaluated at the pre-activation.
inline Matrix activate_grad(const Matrix& A, Activation act) {
  switch (act) {
    case Activation::Identity: return Matrix::Ones(A.rows(), A.cols());
    case Activation::Tanh: {
      Matrix t = A.array().tanh().matrix();
      return (1.0 - t.array().square()).matrix();
    }
    case Activation::ReLU:
      return (A.array() > 0.0).cast<double>().matrix();
  }
  throw std::logic_error("unknown activation");
}

// One Chebyshev convolution layer: K+1 weight matrices W_k of shape
// d_in x d_out. Stable mode requires d_in == d_out.
struct ChebLayerParams {
  std::vector<Matrix> weights;
  LayerMode mode = LayerMode::Vanilla;
  double epsilon = 0.1;  // Stable only
  double gamma = 0.0;    // Stable only
  Activation activation = Activation::Identity;

  int order() const { return static_cast<int>(weights.size()) - 1; }
  int d_in() const { return static_cast<int>(weights.at(0).rows()); }
  int d_out() const { return static_cast<int>(weights.at(0).cols()); }
};

// W^ = W - W^T - gamma I. With gamma = 0 the result is exactly
// antisymmetric: W^ + W^T = 0 bitwise.
inline Matrix effective_weights(const Matrix& W, double gamma) {
  if (W.rows() != W.cols())
    throw std::invalid_argument("effective_weights: W must be square");
  Matrix out = W - W.transpose().eval();
  if (gamma != 0.0)
    out.diagonal().array() -= gamma;
  return out;
}

// Forward cache reused by the backward pass.
struct LayerCache {
  std::vector<Matrix> basis;  // B_k = T_k(L~) X
  Matrix pre_activation;      // aggregate before sigma
};

inline void check_finite(const Matrix& M, const std::string& where) {
  if (!M.allFinite())
    throw std::runtime_error("non-finite values in " + where);
}

// Y = sigma( sum_k T_k(L~) X W_k )
inline Matrix cheb_conv_forward(const ScaledLaplacianOp& op, const Matrix& X,
                                const ChebLayerParams& params,
                                LayerCache* cache = nullptr) {
  if (params.mode != LayerMode::Vanilla)
    throw std::invalid_argument("cheb_conv_forward: layer is not Vanilla mode");
  if (X.cols() != params.d_in())
    throw std::invalid_argument("cheb_conv_forward: feature dim " +
                                std::to_string(X.cols()) + " != d_in " +
                                std::to_string(params.d_in()));
  std::vector<Matrix> basis = cheb_basis(op, X, params.order());
  Matrix agg = Matrix::Zero(X.rows(), params.d_out());
  for (int k = 0; k <= params.order(); ++k) agg.noalias() += basis[k] * params.weights[k];
  Matrix Y = activate(agg, params.activation);
  check_finite(Y, "cheb_conv_forward output");
  if (cache) {
    cache->basis = std::move(basis);
    cache->pre_activation = std::move(agg);
  }
  return Y;
}

// Forward Euler step with antisymmetrized weights:
// Y = X + eps * sigma( sum_k T_k(L~) X (W_k - W_k^T - gamma I) ).
// Identity activation recovers the plain Euler update exactly.
inline Matrix stable_cheb_forward(const ScaledLaplacianOp& op, const Matrix& X,
                                  const ChebLayerParams& params,
                                  LayerCache* cache = nullptr) {
  if (params.mode != LayerMode::Stable)
    throw std::invalid_argument("stable_cheb_forward: layer is not Stable mode");
  if (params.d_in() != params.d_out())
    throw std::invalid_argument("stable_cheb_forward: layer must be square");
  if (X.cols() != params.d_in())
    throw std::invalid_argument("stable_cheb_forward: feature dim mismatch");
  if (params.epsilon <= 0.0)
    throw std::invalid_argument("stable_cheb_forward: epsilon must be > 0");
  std::vector<Matrix> basis = cheb_basis(op, X, params.order());
  Matrix agg = Matrix::Zero(X.rows(), params.d_out());
  for (int k = 0; k <= params.order(); ++k)
    agg.noalias() += basis[k] * effective_weights(params.weights[k], params.gamma);
  Matrix Y = X + params.epsilon * activate(agg, params.activation);
  check_finite(Y, "stable_cheb_forward output");
  if (cache) {
    cache->basis = std::move(basis);
    cache->pre_activation = std::move(agg);
  }
  return Y;
}

inline Matrix cheb_layer_forward(const ScaledLaplacianOp& op, const Matrix& X,
                                 const ChebLayerParams& params,
                                 LayerCache* cache = nullptr) {
  return params.mode == LayerMode::Vanilla
             ? cheb_conv_forward(op, X, params, cache)
             : stable_cheb_forward(op, X, params, cache);
}

// Gradients of one layer given the upstream gradient G. Uses the cached
// basis B_k and the symmetry of T_k(L~).
struct LayerGrads {
  Matrix d_input;
  std::vector<Matrix> d_weights;
};

inline LayerGrads backward_cheb_layer(const ScaledLaplacianOp& op,
                                      const ChebLayerParams& params,
                                      const LayerCache& cache,
                                      const Matrix& G) {
  if (cache.basis.empty())
    throw std::invalid_argument("backward_cheb_layer: missing forward cache");
  const int K = params.order();
  LayerGrads grads;
  grads.d_weights.resize(K + 1);
  Matrix H = G.cwiseProduct(activate_grad(cache.pre_activation, params.activation));
  if (params.mode == LayerMode::Stable) H *= params.epsilon;
  // d_input = sum_k T_k(L~) H Wk'^T; T_k H computed by one shared recurrence.
  std::vector<Matrix> hbasis = cheb_basis(op, H, K);
  if (params.mode == LayerMode::Vanilla) {
    grads.d_input = Matrix::Zero(G.rows(), params.d_in());
    for (int k = 0; k <= K; ++k) {
      grads.d_weights[k].noalias() = cache.basis[k].transpose() * H;
      grads.d_input.noalias() += hbasis[k] * params.weights[k].transpose();
    }
  } else {
    grads.d_input = G;
    for (int k = 0; k <= K; ++k) {
      const Matrix What = effective_weights(params.weights[k], params.gamma);
      Matrix D = cache.basis[k].transpose() * H;
      // chain rule through W - W^T - gamma I; the gamma term drops out
      grads.d_weights[k] = D - D.transpose().eval();
      grads.d_input.noalias() += hbasis[k] * What.transpose();
    }
  }
  for (int k = 0; k <= K; ++k)
    check_finite(grads.d_weights[k], "layer weight gradient");
  check_finite(grads.d_input, "layer input gradient");
  return grads;
}

}  // namespace stablecheb
