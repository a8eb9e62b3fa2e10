#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace stablecheb {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using EdgeList = std::vector<std::pair<int, int>>;

// Undirected simple graph in CSR form. Symmetric, no self-loops, no
// duplicate edges; degree[v] == length of v's neighbor list.
struct SparseGraph {
  int num_nodes = 0;
  std::vector<int> row_ptr;  // size num_nodes + 1
  std::vector<int> col_idx;  // neighbor lists, sorted per node
  std::vector<int> degree;

  int num_edges() const { return static_cast<int>(col_idx.size()) / 2; }

  bool has_edge(int u, int v) const {
    return std::binary_search(col_idx.begin() + row_ptr[u],
                              col_idx.begin() + row_ptr[u + 1], v);
  }
};

inline SparseGraph build_graph(const EdgeList& edges, int num_nodes) {
  if (num_nodes <= 0)
    throw std::invalid_argument("build_graph: num_nodes must be positive");
  std::vector<std::set<int>> adj(num_nodes);
  for (const auto& [u, v] : edges) {
    if (u < 0 || u >= num_nodes || v < 0 || v >= num_nodes)
      throw std::invalid_argument("build_graph: edge index out of range: (" +
                                  std::to_string(u) + "," + std::to_string(v) +
                                  ")");
    if (u == v) continue;  // drop self-loops
    adj[u].insert(v);
    adj[v].insert(u);
  }
  SparseGraph g;
  g.num_nodes = num_nodes;
  g.row_ptr.resize(num_nodes + 1, 0);
  g.degree.resize(num_nodes);
  for (int v = 0; v < num_nodes; ++v) {
    g.degree[v] = static_cast<int>(adj[v].size());
    g.row_ptr[v + 1] = g.row_ptr[v] + g.degree[v];
  }
  g.col_idx.reserve(g.row_ptr[num_nodes]);
  for (int v = 0; v < num_nodes; ++v)
    g.col_idx.insert(g.col_idx.end(), adj[v].begin(), adj[v].end());
  return g;
}

// Disjoint union; node indices of graph i are offset by the sum of the
// preceding sizes. Used for block-diagonal batching.
inline SparseGraph disjoint_union(const std::vector<const SparseGraph*>& parts,
                                  std::vector<int>* node_graph = nullptr) {
  SparseGraph g;
  g.row_ptr.push_back(0);
  int offset = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const SparseGraph& p = *parts[i];
    for (int v = 0; v < p.num_nodes; ++v) {
      for (int e = p.row_ptr[v]; e < p.row_ptr[v + 1]; ++e)
        g.col_idx.push_back(p.col_idx[e] + offset);
      g.row_ptr.push_back(static_cast<int>(g.col_idx.size()));
      g.degree.push_back(p.degree[v]);
      if (node_graph) node_graph->push_back(static_cast<int>(i));
    }
    offset += p.num_nodes;
  }
  g.num_nodes = offset;
  return g;
}

// The scaled Laplacian L~ = (2/lambda_max) L - I with
// L = I - D^{-1/2} A D^{-1/2}. Isolated nodes take a zero normalized
// adjacency row, i.e. an identity Laplacian row.
class ScaledLaplacianOp {
 public:
  ScaledLaplacianOp(const SparseGraph& graph, double lambda_max)
      : graph_(&graph), lambda_max_(lambda_max) {
    if (lambda_max <= 0.0)
      throw std::invalid_argument("ScaledLaplacianOp: lambda_max must be > 0");
    inv_sqrt_deg_.resize(graph.num_nodes);
    for (int v = 0; v < graph.num_nodes; ++v)
      inv_sqrt_deg_[v] =
          graph.degree[v] > 0 ? 1.0 / std::sqrt(double(graph.degree[v])) : 0.0;
  }

  const SparseGraph& graph() const { return *graph_; }
  double lambda_max() const { return lambda_max_; }

  // Y = L~ X in one sparse pass, O(|E| d).
  Matrix apply(const Matrix& X) const {
    const SparseGraph& g = *graph_;
    if (X.rows() != g.num_nodes)
      throw std::invalid_argument("scaled_laplacian_apply: X has " +
                                  std::to_string(X.rows()) + " rows, graph has " +
                                  std::to_string(g.num_nodes) + " nodes");
    const double scale = 2.0 / lambda_max_;
    Matrix Y(X.rows(), X.cols());
    // column-outer loop: contiguous access on column-major storage
    for (int c = 0; c < X.cols(); ++c) {
      const double* x = X.col(c).data();
      double* y = Y.col(c).data();
      for (int v = 0; v < g.num_nodes; ++v) {
        double acc = 0.0;
        for (int e = g.row_ptr[v]; e < g.row_ptr[v + 1]; ++e) {
          const int u = g.col_idx[e];
          acc += inv_sqrt_deg_[u] * x[u];
        }
        // L row: X_v - d_v^{-1/2} sum_u d_u^{-1/2} X_u
        y[v] = scale * (x[v] - inv_sqrt_deg_[v] * acc) - x[v];
      }
    }
    return Y;
  }

  // Dense n x n matrix of L~ (small-graph oracle paths and Jacobians).
  Matrix dense() const {
    const SparseGraph& g = *graph_;
    Matrix L = Matrix::Identity(g.num_nodes, g.num_nodes);
    for (int v = 0; v < g.num_nodes; ++v)
      for (int e = g.row_ptr[v]; e < g.row_ptr[v + 1]; ++e) {
        const int u = g.col_idx[e];
        L(v, u) -= inv_sqrt_deg_[v] * inv_sqrt_deg_[u];
      }
    return (2.0 / lambda_max_) * L - Matrix::Identity(g.num_nodes, g.num_nodes);
  }

 private:
  const SparseGraph* graph_;
  double lambda_max_;
  std::vector<double> inv_sqrt_deg_;
};

inline Matrix scaled_laplacian_apply(const ScaledLaplacianOp& op,
                                     const Matrix& X) {
  return op.apply(X);
}

struct LambdaMaxEstimate {
  double value = 0.0;
  bool converged = false;
  int iterations = 0;
};

// lambda_max(L) <= 2 always holds for the symmetric normalized Laplacian.
constexpr double kLambdaMaxBound = 2.0;

// Power iteration on L from a fixed deterministic start vector.
inline LambdaMaxEstimate estimate_lambda_max(const SparseGraph& graph,
                                             int max_iters = 200,
                                             double tol = 1e-10) {
  if (graph.num_nodes < 1)
    throw std::invalid_argument("estimate_lambda_max: empty graph");
  const int n = graph.num_nodes;
  // L = (L~ + I) with lambda_max = 2, i.e. apply(X) + X gives L X.
  ScaledLaplacianOp op(graph, 2.0);
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = 1.0 + std::sin(double(i + 1));
  v.normalize();
  LambdaMaxEstimate est;
  double prev = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    Matrix Lv = op.apply(v) + v;  // L v
    double rayleigh = v.dot(Lv.col(0));
    double norm = Lv.col(0).norm();
    est.value = rayleigh;
    est.iterations = it + 1;
    if (norm < 1e-300) {  // edgeless graph: L = I, lambda_max = 1... but v stays
      est.value = 0.0;
      break;
    }
    v = Lv.col(0) / norm;
    if (it > 0 && std::abs(rayleigh - prev) < tol * std::max(1.0, std::abs(rayleigh))) {
      est.converged = true;
      break;
    }
    prev = rayleigh;
  }
  return est;
}

// [T_0(L~)X, ..., T_K(L~)X] via the three-term recurrence,
// T_k = 2 L~ T_{k-1} - T_{k-2}. One sparse apply per order.
inline std::vector<Matrix> cheb_basis(const ScaledLaplacianOp& op,
                                      const Matrix& X, int K) {
  if (K < 0) throw std::invalid_argument("cheb_basis: K must be >= 0");
  std::vector<Matrix> basis;
  basis.reserve(K + 1);
  basis.push_back(X);
  if (K >= 1) basis.push_back(op.apply(X));
  for (int k = 2; k <= K; ++k)
    basis.push_back(2.0 * op.apply(basis[k - 1]) - basis[k - 2]);
  return basis;
}

}  // namespace stablecheb
