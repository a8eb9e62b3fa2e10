// Acceptance gate: one pass/fail line per criterion, nonzero exit on failure.
// Heavy training criteria parallelize independent seeds across threads.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "stablecheb/serialize.hpp"
#include "stablecheb/stability.hpp"
#include "stablecheb/training.hpp"
#include "test_helpers.hpp"

using namespace stablecheb;
using namespace stablecheb::testing;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double now_seconds() {
  using clock = std::chrono::steady_clock;
  static const auto t0 = clock::now();
  return std::chrono::duration<double>(clock::now() - t0).count();
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", x);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. Chebyshev recurrence vs dense spectral filtering

Outcome criterion_spectral_oracle() {
  Rng rng(101);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + int(rng.below(19));  // n <= 20
    SparseGraph g = random_connected_graph(n, 0.3, rng);
    const int K = 1 + int(rng.below(6));
    Matrix X = random_matrix(n, 3, rng);
    ScaledLaplacianOp op(g, 2.0);
    auto recur = cheb_basis(op, X, K);
    auto oracle = spectral_cheb_oracle(g, X, K, 2.0);
    for (int k = 0; k <= K; ++k) {
      const double rel = (recur[k] - oracle[k]).norm() /
                         std::max(1.0, oracle[k].norm());
      worst = std::max(worst, rel);
    }
  }
  return {worst < 1e-9, "max relative error " + fmt(worst) + " over 100 graphs"};
}

// ---------------------------------------------------------------------------
// 2. Analytic vs central finite-difference gradients, 18 combos x 20 models

Outcome criterion_gradients() {
  struct Combo {
    LayerMode mode;
    Activation act;
    LossKind loss;
  };
  std::vector<Combo> combos;
  for (LayerMode m : {LayerMode::Vanilla, LayerMode::Stable})
    for (Activation a : {Activation::Identity, Activation::Tanh, Activation::ReLU})
      for (LossKind l : {LossKind::MSE, LossKind::CrossEntropy,
                         LossKind::BinaryCrossEntropy})
        combos.push_back({m, a, l});

  std::vector<double> combo_err(combos.size(), 0.0);
  auto run_combo = [&](std::size_t ci) {
    const Combo& c = combos[ci];
    Rng rng(7000 + std::uint64_t(ci));
    double max_err = 0.0;
    for (int t = 0; t < 20; ++t) {
      const int n = 4 + int(rng.below(3)), d = 3;
      SparseGraph g = random_connected_graph(n, 0.4, rng);
      ModelConfig mc;
      mc.input_dim = d;
      mc.hidden_dim = 4;
      mc.output_dim = c.loss == LossKind::CrossEntropy ? 3 : 2;
      mc.num_layers = 2;
      mc.order = 2;
      mc.mode = c.mode;
      mc.epsilon = 0.3;
      mc.gamma = 0.1;
      mc.activation = c.act;
      mc.head_activation = Activation::Tanh;
      Rng mrng(rng.next());
      ModelSpec model = build_model(mc, mrng);
      Matrix X = random_matrix(n, d, mrng);
      Matrix target;
      if (c.loss == LossKind::CrossEntropy) {
        target = Matrix(n, 1);
        for (int i = 0; i < n; ++i) target(i, 0) = double(mrng.below(3));
      } else if (c.loss == LossKind::BinaryCrossEntropy) {
        target = Matrix(n, 2);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < 2; ++j) target(i, j) = double(mrng.below(2));
      } else {
        target = random_matrix(n, 2, mrng);
      }
      max_err = std::max(max_err,
                         finite_difference_check(model, g, X, target, c.loss));
    }
    combo_err[ci] = max_err;
  };
  std::vector<std::thread> pool;
  for (std::size_t ci = 0; ci < combos.size(); ++ci)
    pool.emplace_back(run_combo, ci);
  for (auto& t : pool) t.join();
  const double worst = *std::max_element(combo_err.begin(), combo_err.end());
  return {worst < 1e-5,
          "max relative error " + fmt(worst) + " over 18 combos x 20 models"};
}

// ---------------------------------------------------------------------------
// 3. Purely imaginary ODE spectrum at gamma = 0

Outcome criterion_imaginary_spectrum() {
  Rng rng(47);
  double worst_ratio = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 3 + int(rng.below(10));  // n <= 12
    const int d = 2 + int(rng.below(5));   // d <= 6
    const int K = 1 + int(rng.below(5));   // K <= 5
    SparseGraph g = random_connected_graph(n, 0.3, rng);
    ChebLayerParams p = random_stable_layer(d, K, 0.6, rng, 0.3, 0.0);
    Matrix A = build_ode_jacobian(g, p);
    SpectrumReport rep = eig_spectrum(A);
    const double rho = std::max(1e-12, spectral_radius(A));
    worst_ratio = std::max(worst_ratio, rep.max_abs_real_part / rho);
  }
  return {worst_ratio <= 1e-8,
          "max |Re| / spectral radius = " + fmt(worst_ratio) + " over 50 configs"};
}

// ---------------------------------------------------------------------------
// 4. ||J||_2 - 1 scales as eps^2: fitted log-log slope 2.0 +- 0.05

Outcome criterion_norm_slope() {
  SparseGraph g = cycle_graph(8);
  NormScanResult res = jacobian_norm_scan(
      g, 4, 3, 0.15, {0.4, 0.2, 0.1, 0.05, 0.025}, 20);
  const double err = std::abs(res.fitted_slope - 2.0);
  return {err <= 0.05, "fitted slope " + fmt(res.fitted_slope) + " (20 seeds)"};
}

// ---------------------------------------------------------------------------
// 5. Squared-singular-value moments vs theory, 3 standard errors

Outcome criterion_moments() {
  const std::vector<double> lambdas{0.25, 0.5, 1.0};
  std::vector<MomentReport> reports(3);
  std::vector<std::thread> pool;
  for (int K : {1, 2, 3})
    pool.emplace_back([&, K] {
      reports[K - 1] = mp_moment_experiment(lambdas, K, 1.0, 256, 200, 11);
    });
  for (auto& t : pool) t.join();
  double worst_z = 0.0;
  for (const auto& rep : reports)
    for (const auto& r : rep.records) {
      if (r.se_mean > 0)
        worst_z = std::max(worst_z,
                           std::abs(r.empirical_mean - r.theory_mean) / r.se_mean);
      if (r.se_var > 0)
        worst_z = std::max(worst_z,
                           std::abs(r.empirical_var - r.theory_var) / r.se_var);
    }
  return {worst_z <= 3.0,
          "max |z| = " + fmt(worst_z) + " (d=256, 200 trials, K in {1,2,3})"};
}

// ---------------------------------------------------------------------------
// 6. Vanilla-layer spectral norm strictly increasing in K

Outcome criterion_monotone_instability() {
  SparseGraph g = cycle_graph(10);
  const int d = 6, seeds = 100;
  const double sigma = 0.5 / std::sqrt(double(d));
  std::vector<double> means(9, 0.0);
  std::vector<std::thread> pool;
  for (int K = 1; K <= 8; ++K)
    pool.emplace_back([&, K] {
      double sum = 0.0;
      for (int s = 0; s < seeds; ++s) {
        Rng rng = Rng::derive(9001, std::uint64_t(K) * 1000 + s);
        ChebLayerParams p = random_vanilla_layer(d, K, sigma, rng);
        sum += spectral_norm(build_layer_jacobian(g, p));
      }
      means[K] = sum / seeds;
    });
  for (auto& t : pool) t.join();
  bool increasing = true;
  std::ostringstream detail;
  for (int K = 1; K <= 8; ++K) {
    if (K > 1 && means[K] <= means[K - 1]) increasing = false;
    detail << (K > 1 ? " " : "") << fmt(means[K]);
  }
  return {increasing, "mean norms K=1..8: " + detail.str()};
}

// ---------------------------------------------------------------------------
// 7. Ring transfer: Stable with K >= ring/2 solves, first-order model cannot

struct TrainedRun {
  EvalResult test;
  bool diverged = false;
};

TrainedRun run_training(const DatasetSplit& data, const ModelConfig& mc,
                        const TrainConfig& tc, std::uint64_t seed) {
  ModelConfig cfg = mc;
  TrainConfig t = tc;
  t.seed = seed;
  Rng rng(seed);
  ModelSpec model = build_model(cfg, rng);
  TrainResult res = train_model(model, data, t);
  return {res.test, res.diverged};
}

Outcome criterion_ring_transfer() {
  const int num_classes = 5;
  TrainConfig tc;
  tc.learning_rate = 0.003;
  tc.epochs = 120;
  tc.batch_size = 32;
  tc.optimizer = OptimizerKind::AdamW;
  tc.weight_decay = 1e-6;
  tc.loss = LossKind::CrossEntropy;

  auto make_cfg = [&](int K) {
    ModelConfig mc;
    mc.input_dim = num_classes;
    mc.hidden_dim = 32;
    mc.output_dim = num_classes;
    mc.num_layers = 1;
    mc.order = K;
    mc.mode = LayerMode::Stable;
    mc.epsilon = 0.3;
    mc.gamma = 0.0;
    mc.activation = Activation::ReLU;
    mc.head_activation = Activation::ReLU;
    mc.mlp_layers = 2;
    return mc;
  };

  double acc10 = 0.0, acc20 = 0.0, acc_k1 = 0.0;
  bool div10 = false, div20 = false;
  std::vector<std::thread> pool;
  pool.emplace_back([&] {
    DatasetSplit data = gen_ring_transfer(10, num_classes, 550, 21);
    TrainedRun r = run_training(data, make_cfg(5), tc, 100);
    acc10 = r.test.metric;
    div10 = r.diverged;
  });
  pool.emplace_back([&] {
    DatasetSplit data = gen_ring_transfer(20, num_classes, 550, 22);
    TrainedRun r = run_training(data, make_cfg(10), tc, 100);
    acc20 = r.test.metric;
    div20 = r.diverged;
  });
  pool.emplace_back([&] {
    // first-order control: K=1, receptive field 1 hop, source 10 hops away
    DatasetSplit data = gen_ring_transfer(20, num_classes, 550, 22);
    TrainedRun r = run_training(data, make_cfg(1), tc, 100);
    acc_k1 = r.test.metric;
  });
  for (auto& t : pool) t.join();

  const double chance = 1.0 / num_classes;
  const bool pass = acc10 >= 0.95 && acc20 >= 0.95 && !div10 && !div20 &&
                    acc_k1 < 2.0 * chance;
  return {pass, "accuracy ring10/K5 = " + fmt(acc10) + ", ring20/K10 = " +
                    fmt(acc20) + ", ring20/K1 control = " + fmt(acc_k1) +
                    " (chance " + fmt(chance) + ")"};
}

// ---------------------------------------------------------------------------
// 8. Barbell over-squashing: both modes solve N=50; only Stable solves N=70

Outcome criterion_barbell() {
  // Gates: N=50 both modes MSE <= 0.10; N=70 stable <= 0.15 while vanilla
  // > 0.8 in >= 2 of 3 seeds.
  //
  // Expected to FAIL, and documented as such: with anonymous scalar features
  // the non-attachment nodes of a complete bell are exchangeable under graph
  // automorphisms, so a permutation-equivariant model's output at a bell-A
  // node is necessarily invariant to shuffling bell-B's non-attachment
  // features. The mirror pairing is therefore unidentifiable and the best
  // reachable MSE is ~ 1 - O(1/bell) for either mode, independent of
  // capacity, depth, or optimization. The runs below are the best-effort
  // empirical record of that ceiling (training plateaus there by ~epoch 40).
  TrainConfig tc;
  tc.learning_rate = 0.003;
  tc.epochs = 80;
  tc.batch_size = 32;
  tc.optimizer = OptimizerKind::AdamW;
  tc.weight_decay = 1e-6;
  tc.loss = LossKind::MSE;

  auto make_cfg = [&](LayerMode mode) {
    ModelConfig mc;
    mc.input_dim = 1;
    mc.hidden_dim = 64;
    mc.output_dim = 1;
    mc.num_layers = 2;
    mc.order = 10;
    mc.mode = mode;
    mc.epsilon = 0.3;
    mc.gamma = 0.0;
    mc.activation = Activation::ReLU;
    mc.head_activation = Activation::ReLU;
    mc.mlp_layers = 2;
    return mc;
  };

  DatasetSplit d50 = gen_barbell(50, 2, 550, 31);
  DatasetSplit d70 = gen_barbell(70, 2, 550, 33);

  const double s50 = run_training(d50, make_cfg(LayerMode::Stable), tc, 200).test.metric;
  const double v50 = run_training(d50, make_cfg(LayerMode::Vanilla), tc, 200).test.metric;
  double s70_best = 1e300;
  int v70_over = 0;
  std::ostringstream seeds70;
  for (int s = 0; s < 3; ++s) {
    const double sv = run_training(d70, make_cfg(LayerMode::Stable), tc, 210 + s).test.metric;
    const double vv = run_training(d70, make_cfg(LayerMode::Vanilla), tc, 210 + s).test.metric;
    s70_best = std::min(s70_best, sv);
    if (vv > 0.8) ++v70_over;
    seeds70 << (s ? " " : "") << fmt(sv) << "/" << fmt(vv);
  }
  const bool pass = s50 <= 0.10 && v50 <= 0.10 && s70_best <= 0.15 && v70_over >= 2;
  return {pass,
          "N=50 stable/vanilla MSE = " + fmt(s50) + "/" + fmt(v50) +
              "; N=70 per-seed stable/vanilla = " + seeds70.str() +
              " — mirror pairing is unidentifiable to equivariant models "
              "(non-attachment bell nodes are automorphic), so the <= 0.10 "
              "and <= 0.15 gates are unreachable by construction"};
}

// ---------------------------------------------------------------------------
// 9. Graph-property ordering: Stable beats vanilla on eccentricity and sssp

Outcome criterion_graph_property() {
  // Reduced scale: 1024 train graphs; gate is the stable-vs-vanilla ordering
  // of mean log10(test MSE) over 4 weight seeds, not absolute values.
  TrainConfig tc;
  tc.learning_rate = 0.003;
  tc.epochs = 120;
  tc.batch_size = 32;
  tc.optimizer = OptimizerKind::AdamW;
  tc.weight_decay = 1e-6;
  tc.loss = LossKind::MSE;

  auto make_cfg = [&](int input_dim, LayerMode mode) {
    ModelConfig mc;
    mc.input_dim = input_dim;
    mc.hidden_dim = 30;
    mc.output_dim = 1;
    mc.num_layers = 5;
    mc.order = 10;
    mc.mode = mode;
    mc.epsilon = 0.3;
    mc.gamma = 0.0;
    mc.activation = Activation::ReLU;
    mc.head_activation = Activation::ReLU;
    mc.mlp_layers = 2;
    return mc;
  };

  std::ostringstream detail;
  bool pass = true;
  const struct { TaskKind task; const char* name; std::uint64_t seed; } tasks[] = {
      {TaskKind::Eccentricity, "eccentricity", 41},
      {TaskKind::SSSP, "sssp", 43},
  };
  for (const auto& t : tasks) {
    DatasetSplit data = gen_graph_property(t.task, 1024, 128, 256, t.seed);
    const int input_dim = static_cast<int>(data.train.front().features.cols());
    double stable_sum = 0.0, vanilla_sum = 0.0;
    for (int s = 0; s < 4; ++s) {
      stable_sum += std::log10(
          run_training(data, make_cfg(input_dim, LayerMode::Stable), tc, 300 + s).test.metric);
      vanilla_sum += std::log10(
          run_training(data, make_cfg(input_dim, LayerMode::Vanilla), tc, 300 + s).test.metric);
    }
    const double stable_mean = stable_sum / 4.0, vanilla_mean = vanilla_sum / 4.0;
    if (!(stable_mean < vanilla_mean)) pass = false;
    detail << (t.task == TaskKind::SSSP ? "; " : "") << t.name
           << " mean log10(MSE) stable = " << fmt(stable_mean)
           << ", vanilla = " << fmt(vanilla_mean);
  }
  return {pass, detail.str()};
}

// ---------------------------------------------------------------------------
// 10. Locality: sensitivity exactly zero past K hops, nonzero at K hops

Outcome criterion_locality() {
  SparseGraph g = path_graph(10);
  ApspResult apsp = oracle_apsp(g);
  Rng rng(77);
  for (int K = 1; K <= 5; ++K) {
    ChebLayerParams p = random_vanilla_layer(3, K, 0.5, rng);
    Matrix S = sensitivity_matrix({p}, g);
    bool seen_at_k = false;
    for (int v = 0; v < g.num_nodes; ++v)
      for (int u = 0; u < g.num_nodes; ++u) {
        if (apsp.dist[v][u] > K && S(v, u) != 0.0)
          return {false, "nonzero sensitivity past K=" + std::to_string(K) +
                             " hops"};
        if (apsp.dist[v][u] == K && S(v, u) != 0.0) seen_at_k = true;
      }
    if (!seen_at_k)
      return {false, "no nonzero sensitivity at distance K=" + std::to_string(K)};
  }
  return {true, "exact zeros past K hops, nonzero at K hops, K = 1..5"};
}

}  // namespace

int main(int argc, char** argv) {
  struct Entry {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Entry> entries = {
      {1, "spectral-oracle equivalence", criterion_spectral_oracle},
      {2, "gradient exactness", criterion_gradients},
      {3, "purely imaginary spectrum (gamma=0)", criterion_imaginary_spectrum},
      {4, "norm excess scales as eps^2", criterion_norm_slope},
      {5, "squared-singular-value moments", criterion_moments},
      {6, "monotone instability in K", criterion_monotone_instability},
      {7, "ring transfer", criterion_ring_transfer},
      {8, "barbell over-squashing", criterion_barbell},
      {9, "graph-property ordering", criterion_graph_property},
      {10, "single-layer locality", criterion_locality},
  };

  int only = 0;
  if (argc > 1) only = std::atoi(argv[1]);

  int failures = 0;
  for (const auto& e : entries) {
    if (only != 0 && e.id != only) continue;
    const double t0 = now_seconds();
    Outcome out;
    try {
      out = e.run();
    } catch (const std::exception& ex) {
      out = {false, std::string("exception: ") + ex.what()};
    }
    const double dt = now_seconds() - t0;
    std::printf("[%s] criterion %2d: %s — %s (%.1f s)\n",
                out.pass ? "PASS" : "FAIL", e.id, e.name, out.detail.c_str(),
                dt);
    std::fflush(stdout);
    if (!out.pass) ++failures;
  }
  if (failures) std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
