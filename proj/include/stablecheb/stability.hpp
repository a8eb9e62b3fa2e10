#pragma once

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include "stablecheb/layers.hpp"
#include "stablecheb/rng.hpp"

namespace stablecheb {

constexpr int kDenseJacobianCap = 4096;  // on n*d

// Dense T_0..T_K of L~ via the three-term recurrence.
inline std::vector<Matrix> dense_cheb_polynomials(const ScaledLaplacianOp& op,
                                                  int K) {
  const int n = op.graph().num_nodes;
  std::vector<Matrix> T;
  T.push_back(Matrix::Identity(n, n));
  if (K >= 1) T.push_back(op.dense());
  for (int k = 2; k <= K; ++k) {
    Matrix next = 2.0 * T[1] * T[k - 1] - T[k - 2];
    // T_k(L~) is symmetric; resymmetrize so rounding in the matrix products
    // cannot break the exact antisymmetry of the assembled ODE Jacobian.
    T.push_back(0.5 * (next + next.transpose()));
  }
  return T;
}

inline Matrix kronecker(const Matrix& A, const Matrix& B) {
  Matrix out(A.rows() * B.rows(), A.cols() * B.cols());
  for (int i = 0; i < A.rows(); ++i)
    for (int j = 0; j < A.cols(); ++j)
      out.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
  return out;
}

// Layer Jacobian under column-stacking vec, vec(AXB) = (B^T kron A) vec(X).
// Vanilla (identity activation): J = sum_k W_k^T kron T_k(L~).
// Stable: J = I + eps * sum_k W^_k^T kron T_k(L~).
inline Matrix build_layer_jacobian(const SparseGraph& graph,
                                   const ChebLayerParams& params,
                                   double lambda_max = kLambdaMaxBound) {
  const int n = graph.num_nodes;
  const int dim = n * params.d_out();
  if (dim > kDenseJacobianCap)
    throw std::invalid_argument(
        "build_layer_jacobian: n*d = " + std::to_string(dim) +
        " exceeds dense cap " + std::to_string(kDenseJacobianCap) +
        "; use sensitivity_matrix for larger stacks");
  ScaledLaplacianOp op(graph, lambda_max);
  std::vector<Matrix> T = dense_cheb_polynomials(op, params.order());
  Matrix J = Matrix::Zero(n * params.d_in(), n * params.d_in());
  if (params.mode == LayerMode::Vanilla) {
    J.resize(n * params.d_out(), n * params.d_in());
    J.setZero();
    for (int k = 0; k <= params.order(); ++k)
      J += kronecker(params.weights[k].transpose(), T[k]);
  } else {
    for (int k = 0; k <= params.order(); ++k)
      J += kronecker(effective_weights(params.weights[k], params.gamma).transpose(),
                     T[k]);
    J = Matrix::Identity(J.rows(), J.cols()) + params.epsilon * J;
  }
  return J;
}

// Continuous-time Jacobian A = sum_k W^_k^T kron T_k(L~) of the Stable ODE;
// with gamma = 0 it is exactly antisymmetric.
inline Matrix build_ode_jacobian(const SparseGraph& graph,
                                 const ChebLayerParams& params,
                                 double lambda_max = kLambdaMaxBound) {
  ScaledLaplacianOp op(graph, lambda_max);
  const int n = graph.num_nodes;
  std::vector<Matrix> T = dense_cheb_polynomials(op, params.order());
  Matrix A = Matrix::Zero(n * params.d_in(), n * params.d_in());
  for (int k = 0; k <= params.order(); ++k)
    A += kronecker(effective_weights(params.weights[k], params.gamma).transpose(),
                   T[k]);
  return A;
}

struct SpectrumReport {
  std::vector<std::pair<double, double>> eigenvalues;  // (re, im)
  std::vector<double> singular_values;                 // sorted descending
  double spectral_norm = 0.0;
  double max_abs_real_part = 0.0;
  int matrix_dim = 0;
  bool converged = true;
};

inline SpectrumReport eig_spectrum(const Matrix& J) {
  if (J.rows() != J.cols())
    throw std::invalid_argument("eig_spectrum: matrix must be square");
  if (J.rows() > kDenseJacobianCap)
    throw std::invalid_argument("eig_spectrum: dim exceeds dense cap");
  SpectrumReport rep;
  rep.matrix_dim = static_cast<int>(J.rows());
  Eigen::EigenSolver<Matrix> es(J, /*computeEigenvectors=*/false);
  rep.converged = es.info() == Eigen::Success;
  for (int i = 0; i < J.rows(); ++i) {
    const auto ev = es.eigenvalues()(i);
    rep.eigenvalues.push_back({ev.real(), ev.imag()});
    rep.max_abs_real_part = std::max(rep.max_abs_real_part, std::abs(ev.real()));
  }
  // singular values from the symmetric eigenproblem on J^T J
  Eigen::SelfAdjointEigenSolver<Matrix> sa(J.transpose() * J);
  if (sa.info() != Eigen::Success) rep.converged = false;
  for (int i = J.rows() - 1; i >= 0; --i)
    rep.singular_values.push_back(std::sqrt(std::max(0.0, sa.eigenvalues()(i))));
  rep.spectral_norm = rep.singular_values.empty() ? 0.0 : rep.singular_values[0];
  return rep;
}

inline double spectral_norm(const Matrix& J) {
  Eigen::SelfAdjointEigenSolver<Matrix> sa(J.transpose() * J);
  return std::sqrt(std::max(0.0, sa.eigenvalues().maxCoeff()));
}

inline double spectral_radius(const Matrix& J) {
  Eigen::EigenSolver<Matrix> es(J, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------------------
// Node-pair sensitivity (identity activation only)

// Entry (v,u) is the Frobenius norm of the d_out x d_in block
// d x_v^{(L)} / d x_u^{(0)} of the stacked-layer Jacobian product.
inline Matrix sensitivity_matrix(const std::vector<ChebLayerParams>& layers,
                                 const SparseGraph& graph,
                                 double lambda_max = kLambdaMaxBound) {
  if (layers.empty())
    throw std::invalid_argument("sensitivity_matrix: empty layer stack");
  for (const auto& layer : layers)
    if (layer.activation != Activation::Identity)
      throw std::invalid_argument(
          "sensitivity_matrix: requires identity activation in every layer");
  const int n = graph.num_nodes;
  Matrix P = build_layer_jacobian(graph, layers[0], lambda_max);
  for (std::size_t l = 1; l < layers.size(); ++l)
    P = build_layer_jacobian(graph, layers[l], lambda_max) * P;
  const int d_in = layers.front().d_in();
  const int d_out = static_cast<int>(P.rows()) / n;
  Matrix S(n, n);
  for (int v = 0; v < n; ++v)
    for (int u = 0; u < n; ++u) {
      double sq = 0.0;
      for (int j = 0; j < d_out; ++j)
        for (int i = 0; i < d_in; ++i) {
          const double x = P(j * n + v, i * n + u);
          sq += x * x;
        }
      S(v, u) = std::sqrt(sq);
    }
  return S;
}

// ---------------------------------------------------------------------------
// Step-size scan: ||J||_2 - 1 ~ eps^2 for the Stable layer

struct NormScanRow {
  double epsilon;
  double mean_norm;          // mean ||J||_2 over seeds
  double mean_excess;        // mean (||J||_2 - 1)
};

struct NormScanResult {
  std::vector<NormScanRow> rows;
  double fitted_slope = 0.0;        // log(||J||_2 - 1) vs log eps
  std::vector<double> vanilla_depth_norms;  // mean ||J^(l)...J^(0)||_2 per depth
  double vanilla_log_slope = 0.0;   // linear fit of log norm vs depth
};

inline ChebLayerParams random_stable_layer(int d, int K, double sigma, Rng& rng,
                                           double epsilon, double gamma = 0.0) {
  ChebLayerParams p;
  p.mode = LayerMode::Stable;
  p.epsilon = epsilon;
  p.gamma = gamma;
  p.activation = Activation::Identity;
  for (int k = 0; k <= K; ++k) {
    Matrix W(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) W(i, j) = rng.normal(0.0, sigma);
    p.weights.push_back(std::move(W));
  }
  return p;
}

inline ChebLayerParams random_vanilla_layer(int d, int K, double sigma, Rng& rng) {
  ChebLayerParams p;
  p.mode = LayerMode::Vanilla;
  p.activation = Activation::Identity;
  for (int k = 0; k <= K; ++k) {
    Matrix W(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) W(i, j) = rng.normal(0.0, sigma);
    p.weights.push_back(std::move(W));
  }
  return p;
}

inline double least_squares_slope(const std::vector<double>& xs,
                                  const std::vector<double>& ys) {
  const double n = double(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

inline NormScanResult jacobian_norm_scan(const SparseGraph& graph, int d, int K,
                                         double sigma,
                                         const std::vector<double>& epsilons,
                                         int seeds,
                                         int vanilla_depth = 8,
                                         std::uint64_t base_seed = 7) {
  NormScanResult res;
  std::vector<double> log_eps, log_excess;
  for (double eps : epsilons) {
    double norm_sum = 0.0, excess_sum = 0.0;
    for (int s = 0; s < seeds; ++s) {
      Rng rng = Rng::derive(base_seed, s);  // same weights across eps values
      ChebLayerParams p = random_stable_layer(d, K, sigma, rng, eps, 0.0);
      Matrix J = build_layer_jacobian(graph, p);
      const double norm = spectral_norm(J);
      norm_sum += norm;
      excess_sum += norm - 1.0;
    }
    res.rows.push_back({eps, norm_sum / seeds, excess_sum / seeds});
    log_eps.push_back(std::log(eps));
    log_excess.push_back(std::log(std::max(1e-300, excess_sum / seeds)));
  }
  res.fitted_slope = least_squares_slope(log_eps, log_excess);

  // Contrast: vanilla-mode products grow or decay geometrically with depth.
  res.vanilla_depth_norms.assign(vanilla_depth, 0.0);
  for (int s = 0; s < seeds; ++s) {
    Rng rng = Rng::derive(base_seed ^ 0xabcdULL, s);
    Matrix P;
    for (int l = 0; l < vanilla_depth; ++l) {
      ChebLayerParams p = random_vanilla_layer(d, K, sigma, rng);
      Matrix J = build_layer_jacobian(graph, p);
      P = (l == 0) ? J : Matrix(J * P);
      res.vanilla_depth_norms[l] += spectral_norm(P) / seeds;
    }
  }
  std::vector<double> depths, lognorms;
  for (int l = 0; l < vanilla_depth; ++l) {
    depths.push_back(double(l + 1));
    lognorms.push_back(std::log(std::max(1e-300, res.vanilla_depth_norms[l])));
  }
  res.vanilla_log_slope = least_squares_slope(depths, lognorms);
  return res;
}

// ---------------------------------------------------------------------------
// Moment lab: moments of squared Jacobian singular values per Laplacian
// eigenvalue, against E = sigma^2 sum_k lambda^{2k} and
// Var = sigma^4 (sum_k lambda^{2k})^2, k = 1..K.

struct MomentRecord {
  double lambda;
  double empirical_mean;
  double empirical_var;
  double theory_mean;
  double theory_var;
  double se_mean;  // pooled-sample standard errors
  double se_var;
  int trials;
};

struct MomentReport {
  std::vector<MomentRecord> records;
  int K = 0;
  double sigma = 1.0;
  int d = 0;
  // Entries are sampled N(0, sigma^2/d): the square-Gaussian MP convention
  // under which the theory moments hold. Recorded so the theory columns are
  // self-consistent.
  std::string scaling = "entry_stddev = sigma / sqrt(d)";
};

inline MomentReport mp_moment_experiment(const std::vector<double>& lambdas,
                                         int K, double sigma, int d, int trials,
                                         std::uint64_t seed = 11) {
  if (trials < 1)
    throw std::invalid_argument("mp_moment_experiment: trials must be >= 1");
  if (K < 1) throw std::invalid_argument("mp_moment_experiment: K must be >= 1");
  MomentReport report;
  report.K = K;
  report.sigma = sigma;
  report.d = d;
  const double entry_sd = sigma / std::sqrt(double(d));
  for (std::size_t li = 0; li < lambdas.size(); ++li) {
    const double lambda = lambdas[li];
    double pow_sum = 0.0;
    for (int k = 1; k <= K; ++k) pow_sum += std::pow(lambda, 2 * k);
    // pooled central moments over all d * trials squared singular values,
    // accumulated with compensated summation
    long double s1 = 0, s2 = 0, s3 = 0, s4 = 0;
    const long N = long(d) * trials;
    std::vector<double> samples;
    samples.reserve(N);
    for (int t = 0; t < trials; ++t) {
      Rng rng = Rng::derive(seed, std::uint64_t(t) * 1000003ULL + li * 7919ULL);
      Matrix M = Matrix::Zero(d, d);
      double lam_k = 1.0;
      for (int k = 1; k <= K; ++k) {
        lam_k *= lambda;
        for (int i = 0; i < d; ++i)
          for (int j = 0; j < d; ++j) M(j, i) += lam_k * rng.normal(0.0, entry_sd);
      }
      Eigen::SelfAdjointEigenSolver<Matrix> sa(M.transpose() * M);
      for (int i = 0; i < d; ++i) {
        const double g = sa.eigenvalues()(i);
        samples.push_back(g);
        s1 += g;
      }
    }
    const double mean = double(s1 / N);
    for (double g : samples) {
      const long double c = g - mean;
      s2 += c * c;
      s3 += c * c * c;
      s4 += c * c * c * c;
    }
    MomentRecord rec;
    rec.lambda = lambda;
    rec.trials = trials;
    rec.empirical_mean = mean;
    rec.empirical_var = double(s2 / N);
    rec.theory_mean = sigma * sigma * pow_sum;
    rec.theory_var = sigma * sigma * sigma * sigma * pow_sum * pow_sum;
    rec.se_mean = std::sqrt(rec.empirical_var / double(N));
    const double m4 = double(s4 / N);
    rec.se_var = std::sqrt(std::max(0.0, m4 - rec.empirical_var * rec.empirical_var) /
                           double(N));
    report.records.push_back(rec);
  }
  return report;
}

}  // namespace stablecheb
