#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "stablecheb/datasets.hpp"
#include "stablecheb/model.hpp"
#include "stablecheb/training.hpp"

namespace stablecheb {

using Json = nlohmann::json;

// All floats serialized with 17 significant digits.
inline std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

// ---------------------------------------------------------------------------
// Graph records: newline-delimited JSON, one graph per record.
// {"n": int, "edges": [[u,v],...], "features": [[...]], "targets": [...],
//  "mask": [...]}

inline std::string graph_record(const TaskInstance& inst) {
  std::ostringstream out;
  out << "{\"n\": " << inst.graph.num_nodes << ", \"edges\": [";
  bool first = true;
  const SparseGraph& g = inst.graph;
  for (int v = 0; v < g.num_nodes; ++v)
    for (int e = g.row_ptr[v]; e < g.row_ptr[v + 1]; ++e) {
      const int u = g.col_idx[e];
      if (u <= v) continue;  // each undirected edge once
      if (!first) out << ", ";
      out << "[" << v << ", " << u << "]";
      first = false;
    }
  out << "], \"features\": [";
  for (int v = 0; v < inst.features.rows(); ++v) {
    if (v) out << ", ";
    out << "[";
    for (int j = 0; j < inst.features.cols(); ++j) {
      if (j) out << ", ";
      out << fmt_double(inst.features(v, j));
    }
    out << "]";
  }
  out << "], \"targets\": [";
  for (int i = 0; i < inst.targets.rows(); ++i)
    for (int j = 0; j < inst.targets.cols(); ++j) {
      if (i || j) out << ", ";
      out << fmt_double(inst.targets(i, j));
    }
  out << "], \"mask\": [";
  for (std::size_t i = 0; i < inst.mask.size(); ++i) {
    if (i) out << ", ";
    out << inst.mask[i];
  }
  out << "]}";
  return out.str();
}

inline TaskInstance parse_graph_record(const std::string& line, TaskKind kind) {
  Json j = Json::parse(line);
  TaskInstance inst;
  inst.kind = kind;
  const int n = j.at("n").get<int>();
  EdgeList edges;
  for (const auto& e : j.at("edges"))
    edges.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
  inst.graph = build_graph(edges, n);
  const auto& feats = j.at("features");
  const int d = feats.empty() ? 0 : static_cast<int>(feats.at(0).size());
  inst.features = Matrix(n, d);
  for (int v = 0; v < n; ++v)
    for (int c = 0; c < d; ++c) inst.features(v, c) = feats.at(v).at(c).get<double>();
  const auto& targets = j.at("targets");
  const int tn = static_cast<int>(targets.size());
  // node-level targets have a multiple of n entries; otherwise graph-level
  const int trows = (tn >= n && tn % n == 0) ? n : 1;
  inst.targets = Matrix(trows, tn / trows);
  for (int i = 0; i < tn; ++i)
    inst.targets(i / (tn / trows), i % (tn / trows)) = targets.at(i).get<double>();
  for (const auto& m : j.at("mask")) inst.mask.push_back(m.get<int>());
  return inst;
}

inline void write_split_dir(const std::filesystem::path& dir,
                            const std::vector<TaskInstance>& insts) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < insts.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "graph_%05zu.json", i);
    std::ofstream out(dir / name);
    out << graph_record(insts[i]) << "\n";
  }
}

inline std::vector<TaskInstance> read_split_dir(const std::filesystem::path& dir,
                                                TaskKind kind) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<TaskInstance> insts;
  for (const auto& f : files) {
    std::ifstream in(f);
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) insts.push_back(parse_graph_record(line, kind));
  }
  return insts;
}

inline void write_dataset(const std::filesystem::path& dir,
                          const DatasetSplit& split, const Json& config) {
  write_split_dir(dir / "train", split.train);
  write_split_dir(dir / "val", split.val);
  write_split_dir(dir / "test", split.test);
  Json manifest;
  manifest["config"] = config;
  manifest["seed"] = split.seed;
  manifest["generator_version"] = split.version;
  manifest["normalization"] = {{"mean", split.target_stats.mean},
                               {"stddev", split.target_stats.stddev}};
  manifest["counts"] = {{"train", split.train.size()},
                        {"val", split.val.size()},
                        {"test", split.test.size()}};
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << "\n";
}

inline DatasetSplit read_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw std::runtime_error("read_dataset: missing manifest in " + dir.string());
  Json manifest = Json::parse(in);
  TaskKind kind = task_from_name(manifest.at("config").at("task").get<std::string>());
  DatasetSplit split;
  split.seed = manifest.at("seed").get<std::uint64_t>();
  split.version = manifest.at("generator_version").get<std::string>();
  split.target_stats.mean = manifest.at("normalization").at("mean").get<double>();
  split.target_stats.stddev = manifest.at("normalization").at("stddev").get<double>();
  split.train = read_split_dir(dir / "train", kind);
  split.val = read_split_dir(dir / "val", kind);
  split.test = read_split_dir(dir / "test", kind);
  return split;
}

// ---------------------------------------------------------------------------
// Model checkpoints: config echo + named parameter matrices + seed.

inline Json matrix_to_json(const Matrix& M) {
  Json data = Json::array();
  for (int i = 0; i < M.rows(); ++i)
    for (int j = 0; j < M.cols(); ++j) data.push_back(M(i, j));
  return Json{{"rows", M.rows()}, {"cols", M.cols()}, {"data", data}};
}

inline Matrix matrix_from_json(const Json& j) {
  Matrix M(j.at("rows").get<int>(), j.at("cols").get<int>());
  const auto& data = j.at("data");
  for (int i = 0; i < M.rows(); ++i)
    for (int c = 0; c < M.cols(); ++c)
      M(i, c) = data.at(i * M.cols() + c).get<double>();
  return M;
}

inline Json model_config_to_json(const ModelConfig& cfg) {
  return Json{{"input_dim", cfg.input_dim},
              {"hidden_dim", cfg.hidden_dim},
              {"output_dim", cfg.output_dim},
              {"num_layers", cfg.num_layers},
              {"order", cfg.order},
              {"mode", cfg.mode == LayerMode::Stable ? "stable" : "vanilla"},
              {"epsilon", cfg.epsilon},
              {"gamma", cfg.gamma},
              {"activation", cfg.activation == Activation::Tanh     ? "tanh"
                             : cfg.activation == Activation::ReLU   ? "relu"
                                                                    : "identity"},
              {"head_activation",
               cfg.head_activation == Activation::Tanh   ? "tanh"
               : cfg.head_activation == Activation::ReLU ? "relu"
                                                         : "identity"},
              {"mlp_layers", cfg.mlp_layers},
              {"readout", cfg.readout == Readout::GraphMean ? "graph_mean"
                                                            : "node_level"}};
}

inline Activation activation_from_name(const std::string& s) {
  if (s == "identity") return Activation::Identity;
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::ReLU;
  throw std::invalid_argument("unknown activation: " + s);
}

inline ModelConfig model_config_from_json(const Json& j) {
  ModelConfig cfg;
  cfg.input_dim = j.at("input_dim").get<int>();
  cfg.hidden_dim = j.at("hidden_dim").get<int>();
  cfg.output_dim = j.at("output_dim").get<int>();
  cfg.num_layers = j.at("num_layers").get<int>();
  cfg.order = j.at("order").get<int>();
  const std::string mode = j.at("mode").get<std::string>();
  if (mode == "stable")
    cfg.mode = LayerMode::Stable;
  else if (mode == "vanilla")
    cfg.mode = LayerMode::Vanilla;
  else
    throw std::invalid_argument("unknown mode: " + mode);
  cfg.epsilon = j.at("epsilon").get<double>();
  cfg.gamma = j.at("gamma").get<double>();
  cfg.activation = activation_from_name(j.at("activation").get<std::string>());
  cfg.head_activation =
      activation_from_name(j.value("head_activation", std::string("relu")));
  cfg.mlp_layers = j.at("mlp_layers").get<int>();
  const std::string readout = j.at("readout").get<std::string>();
  if (readout == "graph_mean")
    cfg.readout = Readout::GraphMean;
  else if (readout == "node_level")
    cfg.readout = Readout::NodeLevel;
  else
    throw std::invalid_argument("unknown readout: " + readout);
  return cfg;
}

inline void save_checkpoint(const std::filesystem::path& path,
                            const ModelSpec& model, const ModelConfig& cfg,
                            std::uint64_t seed) {
  Json j;
  j["config"] = model_config_to_json(cfg);
  j["seed"] = seed;
  Json weights;
  for_each_param(const_cast<ModelSpec&>(model),
                 [&](Matrix& P, const std::string& name, bool) {
                   weights[name] = matrix_to_json(P);
                 });
  j["weights"] = weights;
  std::ofstream out(path);
  out << j.dump(2) << "\n";
}

struct Checkpoint {
  ModelSpec model;
  ModelConfig config;
  std::uint64_t seed = 0;
};

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
  Json j = Json::parse(in);
  Checkpoint ckpt;
  ckpt.config = model_config_from_json(j.at("config"));
  ckpt.seed = j.at("seed").get<std::uint64_t>();
  Rng rng(ckpt.seed);
  ckpt.model = build_model(ckpt.config, rng);
  for_each_param(ckpt.model, [&](Matrix& P, const std::string& name, bool) {
    P = matrix_from_json(j.at("weights").at(name));
  });
  return ckpt;
}

// ---------------------------------------------------------------------------
// Metrics CSV: epoch,split,loss,metric,seconds

inline void write_metrics_csv(const std::filesystem::path& path,
                              const std::vector<EpochRecord>& history) {
  std::ofstream out(path);
  out << "epoch,split,loss,metric,seconds\n";
  for (const auto& r : history)
    out << r.epoch << "," << r.split << "," << fmt_double(r.loss) << ","
        << fmt_double(r.metric) << "," << fmt_double(r.seconds) << "\n";
}

}  // namespace stablecheb
