// Reproduction driver: dataset generation, training runs, and stability
// experiments from JSON config files.
//
// Exit codes: 0 success, 1 validation error, 2 runtime/numeric failure.
// Errors are emitted as one-line JSON records on stderr.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "stablecheb/serialize.hpp"
#include "stablecheb/stability.hpp"
#include "stablecheb/svg.hpp"

namespace fs = std::filesystem;
using namespace stablecheb;

namespace {

constexpr const char* kToolVersion = "stablecheb-cli-1";

struct GlobalOpts {
  std::string config_path;
  std::string out_dir;     // overrides config "out"
  std::uint64_t seed = 0;  // overrides config "seed"
  bool seed_set = false;
  bool force = false;
  int threads = 1;
};

// ---------------------------------------------------------------------------
// Config plumbing

[[noreturn]] void validation_error(const std::string& msg) {
  throw std::invalid_argument(msg);
}

void check_keys(const Json& j, const std::set<std::string>& allowed,
                const std::string& where) {
  if (!j.is_object()) validation_error(where + " must be an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key))
      validation_error("unknown config key: " + where + "." + key);
}

const Json& require(const Json& j, const std::string& key,
                    const std::string& where) {
  if (!j.contains(key))
    validation_error("missing config key: " + where + "." + key);
  return j.at(key);
}

Json load_config(const GlobalOpts& opts) {
  std::ifstream in(opts.config_path);
  if (!in) validation_error("cannot open config file: " + opts.config_path);
  Json cfg;
  try {
    cfg = Json::parse(in);
  } catch (const Json::parse_error& e) {
    validation_error(std::string("config is not valid JSON: ") + e.what());
  }
  if (!cfg.is_object()) validation_error("config root must be an object");
  return cfg;
}

fs::path resolve_out_dir(const Json& cfg, const GlobalOpts& opts) {
  std::string out = opts.out_dir;
  if (out.empty() && cfg.contains("out")) out = cfg.at("out").get<std::string>();
  if (out.empty()) validation_error("no output directory: pass --out or set \"out\"");
  fs::path dir(out);
  if (fs::exists(dir) && !fs::is_empty(dir) && !opts.force)
    validation_error("output directory " + dir.string() +
                     " is not empty; pass --force to overwrite");
  fs::create_directories(dir);
  return dir;
}

std::uint64_t resolve_seed(const Json& cfg, const GlobalOpts& opts) {
  if (opts.seed_set) return opts.seed;  // flag beats file
  if (cfg.contains("seed")) return cfg.at("seed").get<std::uint64_t>();
  return 0;
}

// Every run directory gets a manifest sufficient to reproduce it.
void write_run_manifest(const fs::path& dir, const std::string& command,
                        const Json& cfg, std::uint64_t seed) {
  Json m;
  m["command"] = command;
  m["config"] = cfg;
  m["seed"] = seed;
  m["tool_version"] = kToolVersion;
  m["generator_version"] = kGeneratorVersion;
  std::ofstream out(dir / "run_manifest.json");
  out << m.dump(2) << "\n";
}

void write_json(const fs::path& path, const Json& j) {
  std::ofstream out(path);
  out << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Shared config fragments

SparseGraph graph_from_config(const Json& g, std::uint64_t seed) {
  check_keys(g, {"kind", "n", "p"}, "graph");
  const std::string kind = require(g, "kind", "graph").get<std::string>();
  const int n = require(g, "n", "graph").get<int>();
  if (n < 1) validation_error("graph.n must be >= 1");
  EdgeList edges;
  if (kind == "cycle") {
    for (int v = 0; v < n; ++v) edges.push_back({v, (v + 1) % n});
  } else if (kind == "path") {
    for (int v = 0; v + 1 < n; ++v) edges.push_back({v, v + 1});
  } else if (kind == "complete") {
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) edges.push_back({i, j});
  } else if (kind == "random") {
    // spanning tree + Bernoulli extras; always connected
    const double p = g.value("p", 0.3);
    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    for (int v = 1; v < n; ++v)
      edges.push_back({v, static_cast<int>(rng.below(v))});
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (rng.uniform() < p) edges.push_back({i, j});
  } else {
    validation_error("graph.kind must be cycle, path, complete or random, got " +
                     kind);
  }
  return build_graph(edges, n);
}

LayerMode mode_from_name(const std::string& s, const std::string& where) {
  if (s == "stable") return LayerMode::Stable;
  if (s == "vanilla") return LayerMode::Vanilla;
  validation_error(where + " must be \"stable\" or \"vanilla\", got " + s);
}

LossKind loss_from_name(const std::string& s) {
  if (s == "mse") return LossKind::MSE;
  if (s == "cross_entropy") return LossKind::CrossEntropy;
  if (s == "bce") return LossKind::BinaryCrossEntropy;
  validation_error("training.loss must be mse, cross_entropy or bce, got " + s);
}

Json spectrum_to_json(const SpectrumReport& rep) {
  Json eigs = Json::array();
  for (const auto& [re, im] : rep.eigenvalues) eigs.push_back({re, im});
  return Json{{"eigenvalues", eigs},
              {"singular_values", rep.singular_values},
              {"spectral_norm", rep.spectral_norm},
              {"max_abs_real_part", rep.max_abs_real_part},
              {"matrix_dim", rep.matrix_dim},
              {"converged", rep.converged}};
}

Json histogram(const std::vector<double>& xs, int bins = 40) {
  double lo = xs.empty() ? 0.0 : xs[0], hi = lo;
  for (double x : xs) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  if (hi - lo < 1e-300) hi = lo + 1.0;
  std::vector<int> counts(bins, 0);
  for (double x : xs) {
    int b = static_cast<int>((x - lo) / (hi - lo) * bins);
    counts[std::min(bins - 1, std::max(0, b))]++;
  }
  return Json{{"min", lo}, {"max", hi}, {"bins", bins}, {"counts", counts}};
}

// ---------------------------------------------------------------------------
// generate

int cmd_generate(const Json& cfg, const GlobalOpts& opts) {
  check_keys(cfg, {"dataset", "seed", "out"}, "config");
  const Json& ds = require(cfg, "dataset", "config");
  const std::string task_str =
      require(ds, "task", "dataset").get<std::string>();
  TaskKind task;
  try {
    task = task_from_name(task_str);
  } catch (const std::invalid_argument&) {
    validation_error("dataset.task: unknown task name \"" + task_str + "\"");
  }
  const std::uint64_t seed = resolve_seed(cfg, opts);
  const fs::path dir = resolve_out_dir(cfg, opts);

  DatasetSplit split;
  switch (task) {
    case TaskKind::RingTransfer:
      check_keys(ds, {"task", "ring_size", "num_classes", "count"}, "dataset");
      split = gen_ring_transfer(require(ds, "ring_size", "dataset").get<int>(),
                                require(ds, "num_classes", "dataset").get<int>(),
                                require(ds, "count", "dataset").get<int>(), seed);
      break;
    case TaskKind::Barbell:
      check_keys(ds, {"task", "total_nodes", "bridge_length", "count"}, "dataset");
      split = gen_barbell(require(ds, "total_nodes", "dataset").get<int>(),
                          require(ds, "bridge_length", "dataset").get<int>(),
                          require(ds, "count", "dataset").get<int>(), seed);
      break;
    default:
      check_keys(ds, {"task", "count_train", "count_val", "count_test", "n_lo",
                      "n_hi"},
                 "dataset");
      split = gen_graph_property(
          task, require(ds, "count_train", "dataset").get<int>(),
          require(ds, "count_val", "dataset").get<int>(),
          require(ds, "count_test", "dataset").get<int>(), seed,
          ds.value("n_lo", 25), ds.value("n_hi", 35));
      break;
  }
  split.seed = seed;
  write_dataset(dir, split, ds);
  write_run_manifest(dir, "generate", cfg, seed);
  Json summary{{"train", split.train.size()},
               {"val", split.val.size()},
               {"test", split.test.size()},
               {"dir", dir.string()}};
  std::cout << summary.dump() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct RepeatOutcome {
  std::uint64_t seed = 0;
  double test_loss = 0.0;
  double test_metric = 0.0;
  bool diverged = false;
};

int cmd_train(const Json& cfg, const GlobalOpts& opts) {
  check_keys(cfg, {"dataset_dir", "model", "training", "repeats", "seed", "out"},
             "config");
  const std::string ds_dir = require(cfg, "dataset_dir", "config").get<std::string>();
  if (!fs::exists(fs::path(ds_dir) / "manifest.json"))
    validation_error("dataset_dir " + ds_dir + " has no manifest.json");
  DatasetSplit dataset = read_dataset(ds_dir);
  if (dataset.train.empty()) validation_error("dataset has no training instances");

  const Json& mj = require(cfg, "model", "config");
  check_keys(mj, {"input_dim", "hidden_dim", "output_dim", "num_layers", "order",
                  "mode", "epsilon", "gamma", "activation", "head_activation",
                  "mlp_layers", "readout"},
             "model");
  const Json& tj = require(cfg, "training", "config");
  check_keys(tj, {"learning_rate", "epochs", "batch_size", "optimizer",
                  "weight_decay", "loss", "grad_clip", "lambda_max"},
             "training");

  TrainConfig tc;
  tc.learning_rate = require(tj, "learning_rate", "training").get<double>();
  tc.epochs = require(tj, "epochs", "training").get<int>();
  tc.batch_size = tj.value("batch_size", 32);
  const std::string opt_name = tj.value("optimizer", std::string("adamw"));
  if (opt_name == "adam")
    tc.optimizer = OptimizerKind::Adam;
  else if (opt_name == "adamw")
    tc.optimizer = OptimizerKind::AdamW;
  else
    validation_error("training.optimizer must be adam or adamw, got " + opt_name);
  tc.weight_decay = tj.value("weight_decay", 0.0);
  tc.loss = loss_from_name(require(tj, "loss", "training").get<std::string>());
  tc.grad_clip = tj.value("grad_clip", 0.0);
  tc.lambda_max = tj.value("lambda_max", kLambdaMaxBound);
  tc.validate();

  const TaskInstance& probe = dataset.train.front();
  ModelConfig mc;
  mc.input_dim = static_cast<int>(probe.features.cols());
  if (mj.contains("input_dim") &&
      mj.at("input_dim").get<int>() != mc.input_dim)
    validation_error("model.input_dim " +
                     std::to_string(mj.at("input_dim").get<int>()) +
                     " does not match dataset feature dim " +
                     std::to_string(mc.input_dim));
  if (tc.loss == LossKind::CrossEntropy) {
    int classes = 0;
    for (const auto& inst : dataset.train)
      classes = std::max(classes, 1 + static_cast<int>(inst.targets.maxCoeff()));
    mc.output_dim = mj.value("output_dim", classes);
    if (mc.output_dim < classes)
      validation_error("model.output_dim " + std::to_string(mc.output_dim) +
                       " smaller than observed class count " +
                       std::to_string(classes));
  } else {
    mc.output_dim = mj.value("output_dim", static_cast<int>(probe.targets.cols()));
    if (mc.output_dim != probe.targets.cols())
      validation_error("model.output_dim does not match dataset target dim " +
                       std::to_string(probe.targets.cols()));
  }
  mc.hidden_dim = require(mj, "hidden_dim", "model").get<int>();
  mc.num_layers = require(mj, "num_layers", "model").get<int>();
  mc.order = require(mj, "order", "model").get<int>();
  mc.mode = mode_from_name(require(mj, "mode", "model").get<std::string>(),
                           "model.mode");
  mc.epsilon = mj.value("epsilon", 0.3);
  mc.gamma = mj.value("gamma", 0.0);
  mc.activation = activation_from_name(
      require(mj, "activation", "model").get<std::string>());
  mc.head_activation =
      activation_from_name(mj.value("head_activation", std::string("relu")));
  mc.mlp_layers = mj.value("mlp_layers", 2);
  const bool graph_level = probe.targets.rows() == 1 && probe.mask.empty() &&
                           probe.graph.num_nodes != 1;
  const std::string readout_name =
      mj.value("readout", graph_level ? std::string("graph_mean")
                                      : std::string("node_level"));
  if (readout_name == "graph_mean")
    mc.readout = Readout::GraphMean;
  else if (readout_name == "node_level")
    mc.readout = Readout::NodeLevel;
  else
    validation_error("model.readout must be graph_mean or node_level");

  const int repeats = cfg.value("repeats", 1);
  if (repeats < 1) validation_error("repeats must be >= 1");
  const std::uint64_t seed = resolve_seed(cfg, opts);
  const fs::path dir = resolve_out_dir(cfg, opts);
  write_run_manifest(dir, "train", cfg, seed);

  std::vector<RepeatOutcome> outcomes(repeats);
  std::vector<TrainResult> results(repeats);
  auto run_repeat = [&](int r) {
    const std::uint64_t rseed = seed + static_cast<std::uint64_t>(r);
    Rng init_rng(rseed);
    ModelSpec model = build_model(mc, init_rng);
    TrainConfig rtc = tc;
    rtc.seed = rseed;
    results[r] = train_model(model, dataset, rtc);
    outcomes[r] = {rseed, results[r].test.loss, results[r].test.metric,
                   results[r].diverged};
  };
  // repeats are independent runs; cross-run parallelism only
  const int workers = std::max(1, std::min(opts.threads, repeats));
  if (workers == 1) {
    for (int r = 0; r < repeats; ++r) run_repeat(r);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (int r = w; r < repeats; r += workers) run_repeat(r);
      });
    for (auto& t : pool) t.join();
  }

  Json rows = Json::array();
  double mean = 0.0, m2 = 0.0;
  for (int r = 0; r < repeats; ++r) {
    char stem[32];
    std::snprintf(stem, sizeof(stem), "repeat_%02d", r);
    write_metrics_csv(dir / (std::string(stem) + "_metrics.csv"),
                      results[r].history);
    save_checkpoint(dir / (std::string(stem) + "_model.json"), results[r].model,
                    mc, outcomes[r].seed);
    rows.push_back({{"seed", outcomes[r].seed},
                    {"test_loss", outcomes[r].test_loss},
                    {"test_metric", outcomes[r].test_metric},
                    {"diverged", outcomes[r].diverged}});
    const double delta = outcomes[r].test_metric - mean;
    mean += delta / double(r + 1);
    m2 += delta * (outcomes[r].test_metric - mean);
  }
  const double stddev = repeats > 1 ? std::sqrt(m2 / double(repeats)) : 0.0;
  Json summary;
  summary["repeats"] = rows;
  summary["metric_kind"] =
      tc.loss == LossKind::CrossEntropy ? "accuracy" : "mse";
  summary["aggregate"] = {{"mean", mean}, {"stddev", stddev}};
  if (tc.loss != LossKind::CrossEntropy && mean > 0.0)
    summary["aggregate"]["log10_mse"] = std::log10(mean);
  write_json(dir / "summary.json", summary);
  std::cout << summary.dump() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// spectrum

int cmd_spectrum(const Json& cfg, const GlobalOpts& opts) {
  check_keys(cfg, {"graph", "d", "modes", "orders", "sigma", "epsilon", "gamma",
                   "seed", "out"},
             "config");
  const std::uint64_t seed = resolve_seed(cfg, opts);
  SparseGraph g = graph_from_config(require(cfg, "graph", "config"), seed);
  const int d = require(cfg, "d", "config").get<int>();
  const double sigma = cfg.value("sigma", 0.5);
  const double epsilon = cfg.value("epsilon", 0.3);
  const double gamma = cfg.value("gamma", 0.0);
  std::vector<std::string> modes =
      cfg.value("modes", std::vector<std::string>{"stable", "vanilla"});
  std::vector<int> orders = cfg.value("orders", std::vector<int>{1, 2, 3, 4});
  const fs::path dir = resolve_out_dir(cfg, opts);
  write_run_manifest(dir, "spectrum", cfg, seed);

  for (const std::string& mode : modes) {
    for (int K : orders) {
      Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(K));
      ChebLayerParams p;
      if (mode == "identity") {
        p.mode = LayerMode::Vanilla;
        p.weights = {Matrix::Identity(d, d)};
      } else if (mode_from_name(mode, "modes[]") == LayerMode::Stable) {
        p = random_stable_layer(d, K, sigma, rng, epsilon, gamma);
      } else {
        p = random_vanilla_layer(d, K, sigma, rng);
      }
      Matrix J = build_layer_jacobian(g, p);
      SpectrumReport rep = eig_spectrum(J);
      std::vector<double> res, ims;
      for (const auto& [re, im] : rep.eigenvalues) {
        res.push_back(re);
        ims.push_back(im);
      }
      Json out = spectrum_to_json(rep);
      out["metadata"] = {{"mode", mode},       {"K", K},
                         {"epsilon", epsilon}, {"gamma", gamma},
                         {"sigma", sigma},     {"seed", seed},
                         {"n", g.num_nodes},   {"d", d}};
      out["real_histogram"] = histogram(res);
      out["imag_histogram"] = histogram(ims);
      char stem[64];
      std::snprintf(stem, sizeof(stem), "spectrum_%s_K%02d", mode.c_str(), K);
      write_json(dir / (std::string(stem) + ".json"), out);
      write_svg((dir / (std::string(stem) + ".svg")).string(),
                eigenvalue_scatter_svg(rep.eigenvalues,
                                       std::string(stem)));
    }
  }
  std::cout << Json{{"dir", dir.string()},
                    {"plots", modes.size() * orders.size()}}
                   .dump()
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// sensitivity

int cmd_sensitivity(const Json& cfg, const GlobalOpts& opts) {
  check_keys(cfg, {"graph", "d", "order", "num_layers", "mode", "epsilon",
                   "gamma", "sigma", "seed", "out"},
             "config");
  const std::uint64_t seed = resolve_seed(cfg, opts);
  SparseGraph g = graph_from_config(require(cfg, "graph", "config"), seed);
  const int d = require(cfg, "d", "config").get<int>();
  const int K = require(cfg, "order", "config").get<int>();
  const int L = cfg.value("num_layers", 1);
  const double sigma = cfg.value("sigma", 0.5);
  const LayerMode mode = mode_from_name(
      cfg.value("mode", std::string("stable")), "mode");
  Rng rng(seed);
  std::vector<ChebLayerParams> layers;
  for (int l = 0; l < L; ++l)
    layers.push_back(mode == LayerMode::Stable
                         ? random_stable_layer(d, K, sigma, rng,
                                               cfg.value("epsilon", 0.3),
                                               cfg.value("gamma", 0.0))
                         : random_vanilla_layer(d, K, sigma, rng));
  Matrix S = sensitivity_matrix(layers, g);

  ApspResult apsp = oracle_apsp(g);
  std::vector<double> dist_sum(static_cast<std::size_t>(apsp.diameter) + 1, 0.0);
  std::vector<int> dist_count(dist_sum.size(), 0);
  for (int v = 0; v < g.num_nodes; ++v)
    for (int u = 0; u < g.num_nodes; ++u) {
      dist_sum[apsp.dist[v][u]] += S(v, u);
      dist_count[apsp.dist[v][u]]++;
    }
  Json by_distance = Json::array();
  for (std::size_t r = 0; r < dist_sum.size(); ++r)
    by_distance.push_back({{"distance", r},
                           {"mean_sensitivity", dist_sum[r] / dist_count[r]}});

  const fs::path dir = resolve_out_dir(cfg, opts);
  write_run_manifest(dir, "sensitivity", cfg, seed);
  Json out;
  out["matrix"] = matrix_to_json(S);
  out["by_distance"] = by_distance;
  out["metadata"] = {
      {"convention", "entry (v,u) = frobenius norm of the d_out x d_in block"},
      {"mode", mode == LayerMode::Stable ? "stable" : "vanilla"},
      {"K", K},
      {"num_layers", L},
      {"n", g.num_nodes},
      {"d", d},
      {"seed", seed}};
  write_json(dir / "sensitivity.json", out);
  std::cout << out["by_distance"].dump() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// gradcheck

int cmd_gradcheck(const Json& cfg, const GlobalOpts& opts) {
  check_keys(cfg, {"trials", "n", "d", "order", "tolerance", "seed", "out"},
             "config");
  const int trials = cfg.value("trials", 5);
  const int n = cfg.value("n", 6);
  const int d = cfg.value("d", 4);
  const int K = cfg.value("order", 3);
  const double tol = cfg.value("tolerance", 1e-5);
  const std::uint64_t seed = resolve_seed(cfg, opts);
  const fs::path dir = resolve_out_dir(cfg, opts);
  write_run_manifest(dir, "gradcheck", cfg, seed);

  Json rows = Json::array();
  double worst = 0.0;
  Rng rng(seed ^ 0xfeedULL);
  for (LayerMode mode : {LayerMode::Vanilla, LayerMode::Stable})
    for (Activation act :
         {Activation::Identity, Activation::Tanh, Activation::ReLU})
      for (LossKind loss : {LossKind::MSE, LossKind::CrossEntropy,
                            LossKind::BinaryCrossEntropy}) {
        double max_err = 0.0;
        for (int t = 0; t < trials; ++t) {
          SparseGraph g = graph_from_config(
              Json{{"kind", "random"}, {"n", n}, {"p", 0.4}}, rng.next());
          ModelConfig mc;
          mc.input_dim = d;
          mc.hidden_dim = d;
          mc.output_dim = loss == LossKind::CrossEntropy ? 3 : 2;
          mc.num_layers = 2;
          mc.order = K;
          mc.mode = mode;
          mc.epsilon = 0.3;
          mc.gamma = 0.1;
          mc.activation = act;
          mc.head_activation = Activation::Tanh;
          Rng mrng(rng.next());
          ModelSpec model = build_model(mc, mrng);
          Matrix X(n, d);
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) X(i, j) = mrng.normal();
          Matrix target;
          if (loss == LossKind::CrossEntropy) {
            target = Matrix(n, 1);
            for (int i = 0; i < n; ++i)
              target(i, 0) = double(mrng.below(3));
          } else if (loss == LossKind::BinaryCrossEntropy) {
            target = Matrix(n, 2);
            for (int i = 0; i < n; ++i)
              for (int j = 0; j < 2; ++j) target(i, j) = double(mrng.below(2));
          } else {
            target = Matrix(n, 2);
            for (int i = 0; i < n; ++i)
              for (int j = 0; j < 2; ++j) target(i, j) = mrng.normal();
          }
          max_err = std::max(
              max_err, finite_difference_check(model, g, X, target, loss));
        }
        worst = std::max(worst, max_err);
        rows.push_back(
            {{"mode", mode == LayerMode::Stable ? "stable" : "vanilla"},
             {"activation", act == Activation::Identity   ? "identity"
                            : act == Activation::Tanh     ? "tanh"
                                                          : "relu"},
             {"loss", loss == LossKind::MSE            ? "mse"
                      : loss == LossKind::CrossEntropy ? "cross_entropy"
                                                       : "bce"},
             {"max_rel_error", max_err}});
      }
  Json out{{"rows", rows}, {"max_rel_error", worst}, {"tolerance", tol},
           {"pass", worst < tol}};
  write_json(dir / "gradcheck.json", out);
  std::cout << out.dump() << "\n";
  if (worst >= tol) throw std::runtime_error("gradcheck exceeded tolerance");
  return 0;
}

// ---------------------------------------------------------------------------
// mp-check

int cmd_mp_check(const Json& cfg, const GlobalOpts& opts) {
  check_keys(cfg, {"lambdas", "orders", "sigma", "d", "trials", "seed", "out"},
             "config");
  const std::vector<double> lambdas =
      cfg.value("lambdas", std::vector<double>{0.25, 0.5, 1.0});
  const std::vector<int> orders = cfg.value("orders", std::vector<int>{1, 2, 3});
  const double sigma = cfg.value("sigma", 1.0);
  const int d = cfg.value("d", 256);
  const int trials = cfg.value("trials", 200);
  const std::uint64_t seed = resolve_seed(cfg, opts);
  const fs::path dir = resolve_out_dir(cfg, opts);
  write_run_manifest(dir, "mp-check", cfg, seed);

  Json reports = Json::array();
  bool pass = true;
  for (int K : orders) {
    MomentReport rep = mp_moment_experiment(lambdas, K, sigma, d, trials,
                                            seed == 0 ? 11 : seed);
    Json records = Json::array();
    for (const auto& r : rep.records) {
      const double z_mean =
          r.se_mean > 0 ? (r.empirical_mean - r.theory_mean) / r.se_mean : 0.0;
      const double z_var =
          r.se_var > 0 ? (r.empirical_var - r.theory_var) / r.se_var : 0.0;
      if (std::abs(z_mean) > 3.0 || std::abs(z_var) > 3.0) pass = false;
      records.push_back({{"lambda", r.lambda},
                         {"empirical_mean", r.empirical_mean},
                         {"empirical_var", r.empirical_var},
                         {"theory_mean", r.theory_mean},
                         {"theory_var", r.theory_var},
                         {"z_mean", z_mean},
                         {"z_var", z_var},
                         {"trials", r.trials}});
    }
    reports.push_back({{"K", K},
                       {"sigma", rep.sigma},
                       {"d", rep.d},
                       {"scaling", rep.scaling},
                       {"records", records}});
  }
  Json out{{"reports", reports}, {"pass", pass}};
  write_json(dir / "mp_check.json", out);
  std::cout << out.dump() << "\n";
  if (!pass)
    throw std::runtime_error("moment check outside 3 standard errors");
  return 0;
}

// ---------------------------------------------------------------------------
// norm-scan

int cmd_norm_scan(const Json& cfg, const GlobalOpts& opts) {
  check_keys(cfg, {"graph", "d", "order", "sigma", "epsilons", "seeds",
                   "vanilla_depth", "seed", "out"},
             "config");
  const std::uint64_t seed = resolve_seed(cfg, opts);
  SparseGraph g = graph_from_config(require(cfg, "graph", "config"), seed);
  const int d = cfg.value("d", 4);
  const int K = cfg.value("order", 3);
  const double sigma = cfg.value("sigma", 0.15);
  const std::vector<double> epsilons =
      cfg.value("epsilons", std::vector<double>{0.4, 0.2, 0.1, 0.05, 0.025});
  const int seeds = cfg.value("seeds", 20);
  const int depth = cfg.value("vanilla_depth", 8);
  const fs::path dir = resolve_out_dir(cfg, opts);
  write_run_manifest(dir, "norm-scan", cfg, seed);

  NormScanResult res = jacobian_norm_scan(g, d, K, sigma, epsilons, seeds,
                                          depth, seed == 0 ? 7 : seed);
  Json rows = Json::array();
  for (const auto& row : res.rows)
    rows.push_back({{"epsilon", row.epsilon},
                    {"mean_norm", row.mean_norm},
                    {"mean_excess", row.mean_excess}});
  Json out{{"rows", rows},
           {"fitted_slope", res.fitted_slope},
           {"vanilla_depth_norms", res.vanilla_depth_norms},
           {"vanilla_log_slope", res.vanilla_log_slope},
           {"metadata", {{"n", g.num_nodes}, {"d", d}, {"K", K},
                         {"sigma", sigma}, {"seeds", seeds}, {"seed", seed}}}};
  write_json(dir / "norm_scan.json", out);
  std::cout << out.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral graph network engine: reproduction driver"};
  app.require_subcommand(1);
  GlobalOpts opts;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config_path, "JSON config file")
        ->required();
    sub->add_option("--out", opts.out_dir, "output directory (overrides config)");
    sub->add_option("--seed", opts.seed, "seed (overrides config)")
        ->each([&](const std::string&) { opts.seed_set = true; });
    sub->add_flag("--force", opts.force, "allow writing into a non-empty dir");
    sub->add_option("--threads", opts.threads,
                    "worker threads for independent runs");
  };
  for (const char* name : {"generate", "train", "spectrum", "sensitivity",
                           "gradcheck", "mp-check", "norm-scan"})
    add_common(app.add_subcommand(name));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << Json{{"error", {{"kind", "validation"},
                                 {"message", e.what()}}}}.dump()
              << "\n";
    return 1;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    Json cfg = load_config(opts);
    if (cmd == "generate") return cmd_generate(cfg, opts);
    if (cmd == "train") return cmd_train(cfg, opts);
    if (cmd == "spectrum") return cmd_spectrum(cfg, opts);
    if (cmd == "sensitivity") return cmd_sensitivity(cfg, opts);
    if (cmd == "gradcheck") return cmd_gradcheck(cfg, opts);
    if (cmd == "mp-check") return cmd_mp_check(cfg, opts);
    if (cmd == "norm-scan") return cmd_norm_scan(cfg, opts);
    std::cerr << Json{{"error", {{"kind", "validation"},
                                 {"message", "unknown subcommand"}}}}.dump()
              << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << Json{{"error", {{"kind", "validation"},
                                 {"message", e.what()}}}}.dump()
              << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << Json{{"error", {{"kind", "runtime"},
                                 {"message", e.what()}}}}.dump()
              << "\n";
    return 2;
  }
}
