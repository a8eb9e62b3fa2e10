#pragma once

#include <algorithm>
#include <cstdint>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include "stablecheb/graph.hpp"
#include "stablecheb/rng.hpp"

namespace stablecheb {

constexpr const char* kGeneratorVersion = "stablecheb-datagen-1";

enum class TaskKind { RingTransfer, Barbell, Diameter, SSSP, Eccentricity };

inline std::string task_name(TaskKind k) {
  switch (k) {
    case TaskKind::RingTransfer: return "ring_transfer";
    case TaskKind::Barbell: return "barbell";
    case TaskKind::Diameter: return "diameter";
    case TaskKind::SSSP: return "sssp";
    case TaskKind::Eccentricity: return "eccentricity";
  }
  throw std::logic_error("unknown task");
}

inline TaskKind task_from_name(const std::string& s) {
  if (s == "ring_transfer") return TaskKind::RingTransfer;
  if (s == "barbell") return TaskKind::Barbell;
  if (s == "diameter") return TaskKind::Diameter;
  if (s == "sssp") return TaskKind::SSSP;
  if (s == "eccentricity") return TaskKind::Eccentricity;
  throw std::invalid_argument("unknown task name: " + s);
}

struct TaskInstance {
  SparseGraph graph;
  Matrix features;
  Matrix targets;            // classification: one column of class indices
  std::vector<int> mask;     // node rows where the loss applies; empty = all
  TaskKind kind = TaskKind::Diameter;
};

struct NormStats {
  double mean = 0.0;
  double stddev = 1.0;
};

struct DatasetSplit {
  std::vector<TaskInstance> train, val, test;
  std::uint64_t seed = 0;
  std::string version = kGeneratorVersion;
  NormStats target_stats;  // identity unless targets were z-scored
};

// ---------------------------------------------------------------------------
// Distance oracles

struct ApspResult {
  std::vector<std::vector<int>> dist;  // n x n
  std::vector<int> eccentricity;
  int diameter = 0;
};

// BFS from every node; the graph must be connected.
inline ApspResult oracle_apsp(const SparseGraph& g) {
  const int n = g.num_nodes;
  ApspResult res;
  res.dist.assign(n, std::vector<int>(n, -1));
  res.eccentricity.assign(n, 0);
  for (int s = 0; s < n; ++s) {
    auto& d = res.dist[s];
    d[s] = 0;
    std::queue<int> q;
    q.push(s);
    while (!q.empty()) {
      int v = q.front();
      q.pop();
      for (int e = g.row_ptr[v]; e < g.row_ptr[v + 1]; ++e) {
        int u = g.col_idx[e];
        if (d[u] < 0) {
          d[u] = d[v] + 1;
          q.push(u);
        }
      }
    }
    for (int u = 0; u < n; ++u) {
      if (d[u] < 0)
        throw std::runtime_error("oracle_apsp: graph disconnected, node " +
                                 std::to_string(u) + " unreachable from " +
                                 std::to_string(s));
      res.eccentricity[s] = std::max(res.eccentricity[s], d[u]);
    }
    res.diameter = std::max(res.diameter, res.eccentricity[s]);
  }
  return res;
}

inline bool is_connected(const SparseGraph& g) {
  if (g.num_nodes == 0) return false;
  std::vector<int> seen(g.num_nodes, 0);
  std::queue<int> q;
  q.push(0);
  seen[0] = 1;
  int count = 1;
  while (!q.empty()) {
    int v = q.front();
    q.pop();
    for (int e = g.row_ptr[v]; e < g.row_ptr[v + 1]; ++e)
      if (!seen[g.col_idx[e]]) {
        seen[g.col_idx[e]] = 1;
        ++count;
        q.push(g.col_idx[e]);
      }
  }
  return count == g.num_nodes;
}

// ---------------------------------------------------------------------------
// Ring transfer

// Cycle of ring_size nodes; the source (index ring_size/2, diametrically
// opposite node 0) carries a one-hot class, all other nodes the uniform
// vector. Task: classify node 0 with the source's class.
inline TaskInstance make_ring_instance(int ring_size, int num_classes,
                                       int label) {
  EdgeList edges;
  for (int i = 0; i < ring_size; ++i) edges.push_back({i, (i + 1) % ring_size});
  TaskInstance inst;
  inst.kind = TaskKind::RingTransfer;
  inst.graph = build_graph(edges, ring_size);
  inst.features = Matrix::Constant(ring_size, num_classes, 1.0 / num_classes);
  inst.features.row(ring_size / 2).setZero();
  inst.features(ring_size / 2, label) = 1.0;
  inst.targets = Matrix::Constant(1, 1, double(label));
  inst.mask = {0};
  return inst;
}

// count instances split 8:1:2 (train:val:test); classes balanced.
inline DatasetSplit gen_ring_transfer(int ring_size, int num_classes, int count,
                                      std::uint64_t seed) {
  if (ring_size < 4 || ring_size % 2 != 0)
    throw std::invalid_argument("gen_ring_transfer: ring_size must be even and >= 4");
  if (num_classes < 2)
    throw std::invalid_argument("gen_ring_transfer: need >= 2 classes");
  DatasetSplit split;
  split.seed = seed;
  std::vector<int> labels(count);
  for (int i = 0; i < count; ++i) labels[i] = i % num_classes;
  Rng rng(seed);
  for (int i = count - 1; i > 0; --i)
    std::swap(labels[i], labels[rng.below(i + 1)]);
  const int n_train = count * 8 / 11, n_val = count / 11;
  for (int i = 0; i < count; ++i) {
    TaskInstance inst = make_ring_instance(ring_size, num_classes, labels[i]);
    if (i < n_train)
      split.train.push_back(std::move(inst));
    else if (i < n_train + n_val)
      split.val.push_back(std::move(inst));
    else
      split.test.push_back(std::move(inst));
  }
  return split;
}

// ---------------------------------------------------------------------------
// Barbell

// Two complete graphs of equal size joined by a path of bridge_length nodes.
// Bell nodes get i.i.d. standard-normal scalar features; bridge nodes get 0
// and are excluded from the loss. Each bell node's target is the feature of
// its mirror node in the opposite bell (pairing by position: i <-> off + i),
// so every scalar must cross the bridge. A constant predictor scores MSE ~ 1.
//
// Caveat, deliberate: the non-attachment nodes of a complete bell are
// exchangeable under graph automorphisms, so the index pairing is invisible
// to any permutation-equivariant model — its output at a bell-A node must be
// invariant to shuffling bell-B's non-attachment features, which caps the
// achievable MSE near 1 - O(1/bell) regardless of capacity or training.
inline SparseGraph make_barbell_graph(int total_nodes, int bridge_length,
                                      int* bell_size_out = nullptr) {
  if (bridge_length < 1)
    throw std::invalid_argument("make_barbell_graph: bridge must have >= 1 node");
  if ((total_nodes - bridge_length) % 2 != 0)
    throw std::invalid_argument("make_barbell_graph: bells must be equal size");
  const int bell = (total_nodes - bridge_length) / 2;
  if (bell < 3)
    throw std::invalid_argument("make_barbell_graph: bells need >= 3 nodes");
  EdgeList edges;
  // bell A: [0, bell), bridge: [bell, bell+bridge_length), bell B: rest
  for (int i = 0; i < bell; ++i)
    for (int j = i + 1; j < bell; ++j) {
      edges.push_back({i, j});
      edges.push_back({bell + bridge_length + i, bell + bridge_length + j});
    }
  for (int i = 0; i < bridge_length - 1; ++i)
    edges.push_back({bell + i, bell + i + 1});
  edges.push_back({0, bell});
  edges.push_back({bell + bridge_length - 1, bell + bridge_length});
  if (bell_size_out) *bell_size_out = bell;
  return build_graph(edges, total_nodes);
}

inline DatasetSplit gen_barbell(int total_nodes, int bridge_length, int count,
                                std::uint64_t seed) {
  int bell = 0;
  SparseGraph graph = make_barbell_graph(total_nodes, bridge_length, &bell);
  DatasetSplit split;
  split.seed = seed;
  const int n_train = count * 8 / 11, n_val = count / 11;
  for (int i = 0; i < count; ++i) {
    Rng rng = Rng::derive(seed, i);
    TaskInstance inst;
    inst.kind = TaskKind::Barbell;
    inst.graph = graph;
    inst.features = Matrix::Zero(total_nodes, 1);
    inst.targets = Matrix::Zero(total_nodes, 1);
    const int off = bell + bridge_length;
    for (int v = 0; v < bell; ++v) {
      inst.features(v, 0) = rng.normal();
      inst.features(off + v, 0) = rng.normal();
    }
    for (int v = 0; v < bell; ++v) {
      inst.targets(v, 0) = inst.features(off + v, 0);
      inst.targets(off + v, 0) = inst.features(v, 0);
      inst.mask.push_back(v);
      inst.mask.push_back(off + v);
    }
    std::sort(inst.mask.begin(), inst.mask.end());
    if (i < n_train)
      split.train.push_back(std::move(inst));
    else if (i < n_train + n_val)
      split.val.push_back(std::move(inst));
    else
      split.test.push_back(std::move(inst));
  }
  return split;
}

// ---------------------------------------------------------------------------
// Graph property prediction

// Frozen family list; frozen parameters are part of the generator version.
inline SparseGraph sample_property_graph(Rng& rng, int n_lo, int n_hi) {
  for (int attempt = 0; attempt < 64; ++attempt) {
    const int family = static_cast<int>(rng.below(8));
    const int n = n_lo + static_cast<int>(rng.below(n_hi - n_lo + 1));
    EdgeList edges;
    int nodes = n;
    switch (family) {
      case 0: {  // Erdos-Renyi, p in {0.2, 0.5}
        const double p = rng.below(2) == 0 ? 0.2 : 0.5;
        for (int i = 0; i < n; ++i)
          for (int j = i + 1; j < n; ++j)
            if (rng.uniform() < p) edges.push_back({i, j});
        break;
      }
      case 1: {  // Barabasi-Albert, m in {1, 2}
        const int m = 1 + static_cast<int>(rng.below(2));
        std::vector<int> ends;  // endpoint multiset for preferential attachment
        for (int i = 0; i < m + 1; ++i)
          for (int j = i + 1; j < m + 1; ++j) {
            edges.push_back({i, j});
            ends.push_back(i);
            ends.push_back(j);
          }
        for (int v = m + 1; v < n; ++v) {
          std::vector<int> targets;
          while (static_cast<int>(targets.size()) < m) {
            int t = ends[rng.below(ends.size())];
            if (std::find(targets.begin(), targets.end(), t) == targets.end())
              targets.push_back(t);
          }
          for (int t : targets) {
            edges.push_back({v, t});
            ends.push_back(v);
            ends.push_back(t);
          }
        }
        break;
      }
      case 2: {  // caterpillar: random spine + leaves
        const int spine = 3 + static_cast<int>(rng.below(std::max(1, n / 2)));
        for (int i = 0; i + 1 < spine && i + 1 < n; ++i) edges.push_back({i, i + 1});
        for (int v = spine; v < n; ++v)
          edges.push_back({v, static_cast<int>(rng.below(std::min(spine, n)))});
        break;
      }
      case 3:  // star
        for (int v = 1; v < n; ++v) edges.push_back({0, v});
        break;
      case 4:  // path
        for (int v = 0; v + 1 < n; ++v) edges.push_back({v, v + 1});
        break;
      case 5:  // cycle
        for (int v = 0; v < n; ++v) edges.push_back({v, (v + 1) % n});
        break;
      case 6: {  // 2D grid, rows x cols closest to n
        const int rows = 4 + static_cast<int>(rng.below(4));  // 4..7
        const int cols = std::max(2, n / rows);
        nodes = rows * cols;
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < cols; ++c) {
            if (c + 1 < cols) edges.push_back({r * cols + c, r * cols + c + 1});
            if (r + 1 < rows) edges.push_back({r * cols + c, (r + 1) * cols + c});
          }
        break;
      }
      case 7: {  // ladder 2 x m
        const int m = n / 2;
        nodes = 2 * m;
        for (int i = 0; i + 1 < m; ++i) {
          edges.push_back({i, i + 1});
          edges.push_back({m + i, m + i + 1});
        }
        for (int i = 0; i < m; ++i) edges.push_back({i, m + i});
        break;
      }
    }
    SparseGraph g = build_graph(edges, nodes);
    if (is_connected(g)) return g;
  }
  throw std::runtime_error("sample_property_graph: no connected sample in 64 tries");
}

// Scalar uniform [0,1] node features; SSSP adds a source indicator channel.
// Raw (un-normalized) targets; z-scoring happens at split assembly.
inline TaskInstance make_property_instance(TaskKind task, Rng& rng, int n_lo,
                                           int n_hi) {
  TaskInstance inst;
  inst.kind = task;
  inst.graph = sample_property_graph(rng, n_lo, n_hi);
  const int n = inst.graph.num_nodes;
  const int feat_dim = task == TaskKind::SSSP ? 2 : 1;
  inst.features = Matrix::Zero(n, feat_dim);
  for (int v = 0; v < n; ++v) inst.features(v, 0) = rng.uniform();
  ApspResult apsp = oracle_apsp(inst.graph);
  switch (task) {
    case TaskKind::Diameter:
      inst.targets = Matrix::Constant(1, 1, double(apsp.diameter));
      break;
    case TaskKind::Eccentricity:
      inst.targets = Matrix(n, 1);
      for (int v = 0; v < n; ++v) inst.targets(v, 0) = double(apsp.eccentricity[v]);
      break;
    case TaskKind::SSSP: {
      const int source = static_cast<int>(rng.below(n));
      inst.features(source, 1) = 1.0;
      inst.targets = Matrix(n, 1);
      for (int v = 0; v < n; ++v) inst.targets(v, 0) = double(apsp.dist[source][v]);
      break;
    }
    default:
      throw std::invalid_argument("make_property_instance: not a property task");
  }
  return inst;
}

// z-score with training-split statistics; log10(MSE) on normalized targets.
inline NormStats normalize_targets(DatasetSplit& split) {
  double sum = 0.0, sumsq = 0.0;
  long count = 0;
  for (const auto& inst : split.train) {
    sum += inst.targets.sum();
    sumsq += inst.targets.array().square().sum();
    count += inst.targets.size();
  }
  NormStats stats;
  stats.mean = sum / double(count);
  const double var = sumsq / double(count) - stats.mean * stats.mean;
  stats.stddev = var > 1e-12 ? std::sqrt(var) : 1.0;
  for (auto* part : {&split.train, &split.val, &split.test})
    for (auto& inst : *part)
      inst.targets = ((inst.targets.array() - stats.mean) / stats.stddev).matrix();
  split.target_stats = stats;
  return stats;
}

inline DatasetSplit gen_graph_property(TaskKind task, int count_train,
                                       int count_val, int count_test,
                                       std::uint64_t seed, int n_lo = 25,
                                       int n_hi = 35) {
  if (task != TaskKind::Diameter && task != TaskKind::SSSP &&
      task != TaskKind::Eccentricity)
    throw std::invalid_argument("gen_graph_property: task must be a property task");
  DatasetSplit split;
  split.seed = seed;
  const int total = count_train + count_val + count_test;
  for (int i = 0; i < total; ++i) {
    Rng rng = Rng::derive(seed, i);
    TaskInstance inst = make_property_instance(task, rng, n_lo, n_hi);
    if (i < count_train)
      split.train.push_back(std::move(inst));
    else if (i < count_train + count_val)
      split.val.push_back(std::move(inst));
    else
      split.test.push_back(std::move(inst));
  }
  normalize_targets(split);
  return split;
}

}  // namespace stablecheb
