#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "stablecheb/serialize.hpp"
#include "test_helpers.hpp"

using namespace stablecheb;
using namespace stablecheb::testing;

namespace {

std::filesystem::path temp_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() /
             ("stablecheb_test_" + tag + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

bool same_graph(const SparseGraph& a, const SparseGraph& b) {
  return a.num_nodes == b.num_nodes && a.row_ptr == b.row_ptr &&
         a.col_idx == b.col_idx;
}

}  // namespace

TEST_CASE("graph record round-trips bitwise") {
  Rng rng(71);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + int(rng.below(10));
    TaskInstance inst;
    inst.kind = TaskKind::Eccentricity;
    inst.graph = random_connected_graph(n, 0.4, rng);
    inst.features = random_matrix(n, 1 + int(rng.below(3)), rng);
    inst.targets = random_matrix(n, 1, rng);
    if (rng.below(2)) inst.mask = {0, n - 1};
    TaskInstance back = parse_graph_record(graph_record(inst), inst.kind);
    CHECK(same_graph(inst.graph, back.graph));
    CHECK((inst.features - back.features).isZero(0.0));  // %.17g is lossless
    CHECK((inst.targets - back.targets).isZero(0.0));
    CHECK(inst.mask == back.mask);
  }
}

TEST_CASE("graph record handles graph-level targets") {
  TaskInstance inst;
  inst.kind = TaskKind::Diameter;
  inst.graph = cycle_graph(5);
  inst.features = Matrix::Ones(5, 1);
  inst.targets = Matrix::Constant(1, 1, 2.0);
  TaskInstance back = parse_graph_record(graph_record(inst), inst.kind);
  CHECK(back.targets.rows() == 1);
  CHECK(back.targets.cols() == 1);
  CHECK(back.targets(0, 0) == 2.0);
}

TEST_CASE("dataset directory round-trip") {
  auto dir = temp_dir("dataset");
  DatasetSplit split = gen_barbell(12, 2, 11, 9);
  Json config{{"task", "barbell"}, {"total_nodes", 12}, {"bridge_length", 2}};
  write_dataset(dir, split, config);

  CHECK(std::filesystem::exists(dir / "manifest.json"));
  std::size_t train_files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir / "train"))
    train_files += e.path().extension() == ".json";
  CHECK(train_files == split.train.size());

  DatasetSplit back = read_dataset(dir);
  CHECK(back.seed == split.seed);
  CHECK(back.version == kGeneratorVersion);
  REQUIRE(back.train.size() == split.train.size());
  REQUIRE(back.val.size() == split.val.size());
  REQUIRE(back.test.size() == split.test.size());
  for (std::size_t i = 0; i < split.train.size(); ++i) {
    CHECK(same_graph(split.train[i].graph, back.train[i].graph));
    CHECK((split.train[i].features - back.train[i].features).isZero(0.0));
    CHECK((split.train[i].targets - back.train[i].targets).isZero(0.0));
    CHECK(split.train[i].mask == back.train[i].mask);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("read_dataset without manifest throws") {
  auto dir = temp_dir("nomanifest");
  CHECK_THROWS_AS(read_dataset(dir), std::runtime_error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint round-trip reproduces the forward pass bitwise") {
  auto dir = temp_dir("ckpt");
  ModelConfig cfg;
  cfg.input_dim = 3;
  cfg.hidden_dim = 6;
  cfg.output_dim = 2;
  cfg.num_layers = 2;
  cfg.order = 3;
  cfg.mode = LayerMode::Stable;
  cfg.epsilon = 0.3;
  cfg.gamma = 0.1;
  cfg.activation = Activation::Tanh;
  cfg.mlp_layers = 2;
  Rng build_rng(123);
  ModelSpec model = build_model(cfg, build_rng);
  // perturb so the checkpoint differs from a fresh build at the same seed
  for_each_param(model, [&](Matrix& P, const std::string&, bool) {
    P.array() += 0.01;
  });
  save_checkpoint(dir / "model.json", model, cfg, 123);
  Checkpoint ckpt = load_checkpoint(dir / "model.json");

  CHECK(ckpt.seed == 123);
  CHECK(ckpt.config.hidden_dim == 6);
  CHECK(ckpt.config.mode == LayerMode::Stable);
  CHECK(ckpt.config.epsilon == 0.3);

  Rng rng(5);
  SparseGraph g = random_connected_graph(8, 0.4, rng);
  ScaledLaplacianOp op(g, 2.0);
  Matrix X = random_matrix(8, 3, rng);
  CHECK((model_forward(model, op, X) - model_forward(ckpt.model, op, X))
            .isZero(0.0));
  std::filesystem::remove_all(dir);
}

TEST_CASE("model config json round-trip") {
  ModelConfig cfg;
  cfg.input_dim = 2;
  cfg.hidden_dim = 4;
  cfg.output_dim = 3;
  cfg.num_layers = 1;
  cfg.order = 5;
  cfg.mode = LayerMode::Vanilla;
  cfg.activation = Activation::ReLU;
  cfg.head_activation = Activation::Identity;
  cfg.mlp_layers = 1;
  cfg.readout = Readout::GraphMean;
  ModelConfig back = model_config_from_json(model_config_to_json(cfg));
  CHECK(back.order == 5);
  CHECK(back.mode == LayerMode::Vanilla);
  CHECK(back.activation == Activation::ReLU);
  CHECK(back.head_activation == Activation::Identity);
  CHECK(back.readout == Readout::GraphMean);

  Json bad = model_config_to_json(cfg);
  bad["mode"] = "mystery";
  CHECK_THROWS_AS(model_config_from_json(bad), std::invalid_argument);
  CHECK_THROWS_AS(activation_from_name("softsign"), std::invalid_argument);
}

TEST_CASE("metrics csv format") {
  auto dir = temp_dir("metrics");
  std::vector<EpochRecord> history = {
      {0, "train", 0.5, 0.25, 0.01}, {0, "val", 0.6, 0.5, 0.002}};
  write_metrics_csv(dir / "metrics.csv", history);
  std::ifstream in(dir / "metrics.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "epoch,split,loss,metric,seconds");
  std::getline(in, line);
  CHECK(line.rfind("0,train,0.5", 0) == 0);
  std::getline(in, line);
  CHECK(line.rfind("0,val,", 0) == 0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("fmt_double is lossless for doubles") {
  Rng rng(77);
  for (int i = 0; i < 1000; ++i) {
    const double x = (rng.uniform() - 0.5) * std::pow(10.0, double(rng.below(20)) - 10.0);
    CHECK(std::stod(fmt_double(x)) == x);
  }
}
