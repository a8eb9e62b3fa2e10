#include <catch2/catch_amalgamated.hpp>

#include "stablecheb/model.hpp"
#include "test_helpers.hpp"

using namespace stablecheb;
using namespace stablecheb::testing;

namespace {

ChebLayerParams vanilla_layer(std::vector<Matrix> weights,
                              Activation act = Activation::Identity) {
  ChebLayerParams p;
  p.mode = LayerMode::Vanilla;
  p.activation = act;
  p.weights = std::move(weights);
  return p;
}

ChebLayerParams stable_layer(std::vector<Matrix> weights, double eps,
                             double gamma, Activation act = Activation::Identity) {
  ChebLayerParams p;
  p.mode = LayerMode::Stable;
  p.epsilon = eps;
  p.gamma = gamma;
  p.activation = act;
  p.weights = std::move(weights);
  return p;
}

}  // namespace

TEST_CASE("effective_weights") {
  Matrix W(2, 2);
  W << 1, 2, 3, 4;
  Matrix What = effective_weights(W, 0.1);
  CHECK(What(0, 0) == Catch::Approx(-0.1));
  CHECK(What(0, 1) == Catch::Approx(-1.0));
  CHECK(What(1, 0) == Catch::Approx(1.0));
  CHECK(What(1, 1) == Catch::Approx(-0.1));

  Matrix S(2, 2);
  S << 2, 5, 5, -1;
  CHECK(effective_weights(S, 0.0).isZero(0.0));

  CHECK_THROWS_AS(effective_weights(Matrix::Zero(2, 3), 0.0),
                  std::invalid_argument);
}

TEST_CASE("effective_weights antisymmetry is exact") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix W = random_matrix(5, 5, rng);
    Matrix What = effective_weights(W, 0.0);
    CHECK((What + What.transpose()).isZero(0.0));  // bitwise
  }
}

TEST_CASE("cheb_conv_forward identity filter") {
  SparseGraph g = cycle_graph(6);
  ScaledLaplacianOp op(g, 2.0);
  Rng rng(1);
  Matrix X = random_matrix(6, 3, rng);
  auto p = vanilla_layer({Matrix::Identity(3, 3)});
  CHECK((cheb_conv_forward(op, X, p) - X).isZero(0.0));
}

TEST_CASE("cheb_conv_forward first-order filter on 2-node path") {
  SparseGraph g = build_graph({{0, 1}}, 2);
  ScaledLaplacianOp op(g, 2.0);
  Matrix X(2, 1);
  X << 1, 0;
  auto p = vanilla_layer({Matrix::Zero(1, 1), Matrix::Ones(1, 1)});
  Matrix Y = cheb_conv_forward(op, X, p);
  CHECK(Y(0, 0) == Catch::Approx(0.0).margin(1e-15));
  CHECK(Y(1, 0) == Catch::Approx(-1.0));
}

TEST_CASE("cheb_conv_forward matches dense spectral filtering") {
  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 3 + int(rng.below(8));
    SparseGraph g = random_connected_graph(n, 0.3, rng);
    ScaledLaplacianOp op(g, 2.0);
    const int K = 1 + int(rng.below(4));
    Matrix X = random_matrix(n, 3, rng);
    std::vector<Matrix> weights;
    for (int k = 0; k <= K; ++k) weights.push_back(random_matrix(3, 2, rng));
    auto p = vanilla_layer(weights);
    Matrix Y = cheb_conv_forward(op, X, p);
    auto oracle = spectral_cheb_oracle(g, X, K, 2.0);
    Matrix expected = Matrix::Zero(n, 2);
    for (int k = 0; k <= K; ++k) expected += oracle[k] * weights[k];
    CHECK((Y - expected).norm() / std::max(1.0, expected.norm()) < 1e-9);
  }
}

TEST_CASE("cheb_conv_forward dimension mismatch") {
  SparseGraph g = cycle_graph(4);
  ScaledLaplacianOp op(g, 2.0);
  auto p = vanilla_layer({Matrix::Identity(3, 3)});
  CHECK_THROWS_AS(cheb_conv_forward(op, Matrix::Zero(4, 2), p),
                  std::invalid_argument);
}

TEST_CASE("stable_cheb_forward zero increment") {
  SparseGraph g = cycle_graph(5);
  ScaledLaplacianOp op(g, 2.0);
  Rng rng(3);
  Matrix X = random_matrix(5, 2, rng);
  for (auto act : {Activation::Identity, Activation::Tanh, Activation::ReLU}) {
    auto p = stable_layer({Matrix::Zero(2, 2), Matrix::Zero(2, 2)}, 0.5, 0.0, act);
    CHECK((stable_cheb_forward(op, X, p) - X).isZero(0.0));
  }
}

TEST_CASE("stable_cheb_forward single-node closed forms") {
  SparseGraph g = build_graph({{0, 1}}, 2);  // isolate node by n=1 trick below
  // single node: build a 1-node graph (no edges allowed -> isolated node)
  SparseGraph one;
  one.num_nodes = 1;
  one.row_ptr = {0, 0};
  one.degree = {0};
  ScaledLaplacianOp op(one, 2.0);
  (void)g;

  SECTION("K=0 antisymmetric weight: Y = X (I + eps a)") {
    Matrix a(2, 2);
    a << 0, 1, -1, 0;
    // W with W - W^T = a
    Matrix W(2, 2);
    W << 0, 0.5, -0.5, 0;
    const double eps = 0.3;
    auto p = stable_layer({W}, eps, 0.0);
    Matrix X(1, 2);
    X << 2.0, -1.0;
    Matrix Y = stable_cheb_forward(op, X, p);
    Matrix expected = X * (Matrix::Identity(2, 2) + eps * a);
    CHECK((Y - expected).norm() < 1e-14);
  }

  SECTION("gamma only: scalar recurrence on the single-node graph") {
    // isolated node: L row = identity, so lambda~ = 0 at lambda_max = 2 and
    // Y = X (1 - eps * gamma * sum_k T_k(0))
    const double eps = 0.2, gamma = 0.4;
    for (int K : {2, 3, 4}) {
      std::vector<Matrix> weights(K + 1, Matrix::Zero(1, 1));
      auto p = stable_layer(weights, eps, gamma);
      Matrix X(1, 1);
      X << 3.0;
      Matrix Y = stable_cheb_forward(op, X, p);
      double t0 = 1.0, t1 = 0.0, tsum = t0;  // T_k at lambda~ = 0
      for (int k = 1; k <= K; ++k) {
        tsum += t1;
        const double t2 = 2.0 * 0.0 * t1 - t0;
        t0 = t1;
        t1 = t2;
      }
      CHECK(Y(0, 0) == Catch::Approx(3.0 * (1.0 - eps * gamma * tsum)));
    }
  }
}

TEST_CASE("stable_cheb_forward config errors") {
  SparseGraph g = cycle_graph(4);
  ScaledLaplacianOp op(g, 2.0);
  auto p = stable_layer({Matrix::Zero(2, 2)}, -0.1, 0.0);
  CHECK_THROWS_AS(stable_cheb_forward(op, Matrix::Zero(4, 2), p),
                  std::invalid_argument);
  ChebLayerParams rect;
  rect.mode = LayerMode::Stable;
  rect.weights = {Matrix::Zero(2, 3)};
  CHECK_THROWS_AS(stable_cheb_forward(op, Matrix::Zero(4, 2), rect),
                  std::invalid_argument);
}

TEST_CASE("vanilla/stable consistency with pre-antisymmetrized weights") {
  Rng rng(23);
  const int n = 6, d = 3, K = 2;
  SparseGraph g = random_connected_graph(n, 0.4, rng);
  ScaledLaplacianOp op(g, 2.0);
  Matrix X = random_matrix(n, d, rng);
  std::vector<Matrix> raw, eff;
  for (int k = 0; k <= K; ++k) {
    raw.push_back(random_matrix(d, d, rng));
    eff.push_back(effective_weights(raw.back(), 0.0));
  }
  auto stable = stable_layer(raw, 1.0, 0.0);
  auto vanilla = vanilla_layer(eff);
  Matrix ys = stable_cheb_forward(op, X, stable);
  Matrix yv = cheb_conv_forward(op, X, vanilla);
  CHECK(((ys - X) - yv).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("K=1 tied coefficients degenerate to a GCN-like filter") {
  // With lambda_max = 2: L~ = -D^{-1/2} A D^{-1/2}, so
  // W_0 = Theta, W_1 = -Theta gives Y = (I + D^{-1/2} A D^{-1/2}) X Theta.
  Rng rng(29);
  for (int trial = 0; trial < 5; ++trial) {
    const int n = 4 + int(rng.below(6));
    SparseGraph g = random_connected_graph(n, 0.4, rng);
    ScaledLaplacianOp op(g, 2.0);
    Matrix X = random_matrix(n, 3, rng);
    Matrix theta = random_matrix(3, 3, rng);
    auto p = vanilla_layer({theta, -theta});
    Matrix Y = cheb_conv_forward(op, X, p);
    Matrix An = Matrix::Identity(n, n) - dense_normalized_laplacian(g);
    Matrix expected = (Matrix::Identity(n, n) + An) * X * theta;
    CHECK((Y - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("model_forward degenerate stacks") {
  SECTION("no layers, graph mean readout") {
    SparseGraph g = cycle_graph(4);
    ScaledLaplacianOp op(g, 2.0);
    ModelSpec m;
    m.encoder.W = Matrix::Identity(2, 2);
    m.encoder.b = Matrix::Zero(1, 2);
    m.encoder_activation = Activation::Identity;
    m.readout = Readout::GraphMean;
    Rng rng(2);
    Matrix X = random_matrix(4, 2, rng);
    Matrix Y = model_forward(m, op, X);
    CHECK((Y - X.colwise().mean().eval()).norm() < 1e-14);
  }
  SECTION("one vanilla K=0 identity layer is a pass-through activation") {
    SparseGraph g = cycle_graph(4);
    ScaledLaplacianOp op(g, 2.0);
    ModelSpec m;
    m.encoder.W = Matrix::Identity(2, 2);
    m.encoder.b = Matrix::Zero(1, 2);
    m.encoder_activation = Activation::Identity;
    ChebLayerParams p;
    p.mode = LayerMode::Vanilla;
    p.activation = Activation::Tanh;
    p.weights = {Matrix::Identity(2, 2)};
    m.layers.push_back(p);
    Rng rng(2);
    Matrix X = random_matrix(4, 2, rng);
    Matrix Y = model_forward(m, op, X);
    CHECK((Y - activate(X, Activation::Tanh)).norm() < 1e-14);
  }
}

TEST_CASE("model_forward determinism") {
  Rng build_rng(99);
  ModelConfig cfg;
  cfg.input_dim = 3;
  cfg.hidden_dim = 8;
  cfg.output_dim = 2;
  cfg.num_layers = 2;
  cfg.order = 3;
  ModelSpec m = build_model(cfg, build_rng);
  Rng rng(5);
  SparseGraph g = random_connected_graph(10, 0.3, rng);
  ScaledLaplacianOp op(g, 2.0);
  Matrix X = random_matrix(10, 3, rng);
  Matrix Y1 = model_forward(m, op, X);
  Matrix Y2 = model_forward(m, op, X);
  CHECK((Y1 - Y2).isZero(0.0));  // bitwise

  Rng build_rng2(99);
  ModelSpec m2 = build_model(cfg, build_rng2);
  Matrix Y3 = model_forward(m2, op, X);
  CHECK((Y1 - Y3).isZero(0.0));
}
