#pragma once

// Sum-to-one sparse reconstruction of a sample from its neighbors:
//
//   min_s  ||x - N s||_2^2 + gamma ||s||_1   s.t.  1^T s = 1
//
// solved by pairwise coordinate descent. A pair move s_i += t, s_j -= t
// keeps the affine constraint exact, and the one-dimensional subproblem is
// a convex piecewise quadratic minimized in closed form. Since the l1 term
// is separable, a point that no pair move can improve is globally optimal.

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cmsre/dataset.hpp"
#include "cmsre/error.hpp"

namespace cmsre {

enum class CodingFallback { uniform, error };

struct CodingConfig {
  /// l1 weight; unset means 0.01 * ||x||^2 / k per sample.
  std::optional<double> gamma;
  int max_iterations = 10000;  // full sweeps over all pairs
  double tolerance = 1e-13;    // relative objective decrease per sweep
  CodingFallback fallback = CodingFallback::uniform;

  void check() const {
    if (gamma && !(*gamma >= 0.0)) throw input_error("gamma must be >= 0");
    if (max_iterations < 1) throw input_error("max_iterations must be >= 1");
    if (!(tolerance > 0.0)) throw input_error("tolerance must be > 0");
  }
};

inline double effective_gamma(const Eigen::VectorXd& x, Index k, const CodingConfig& config) {
  return config.gamma ? *config.gamma : 0.01 * x.squaredNorm() / static_cast<double>(k);
}

/// ||x - N s||^2 + gamma ||s||_1
inline double code_objective(const Eigen::VectorXd& x, const Eigen::MatrixXd& neighbors,
                             const Eigen::VectorXd& s, double gamma) {
  return (x - neighbors * s).squaredNorm() + gamma * s.lpNorm<1>();
}

struct SparseCode {
  Eigen::VectorXd weights;
  double objective = 0.0;
  int sweeps = 0;
  bool converged = false;
  /// True when the solver gave up and returned uniform weights.
  bool fallback_used = false;
};

namespace detail {

/// Change in objective for the pair move (s_i + t, s_j - t), given the
/// quadratic coefficients a = ||n_i - n_j||^2 and b = r^T (n_i - n_j).
inline double pair_delta(double t, double a, double b, double si, double sj, double gamma) {
  return t * t * a - 2.0 * t * b +
         gamma * (std::abs(si + t) + std::abs(sj - t) - std::abs(si) - std::abs(sj));
}

/// Exact minimizer of pair_delta over t. Returns 0 when nothing improves.
inline double best_pair_step(double a, double b, double si, double sj, double gamma,
                             double* delta_out) {
  double best_t = 0.0;
  double best = 0.0;
  auto consider = [&](double t) {
    if (!std::isfinite(t)) return;
    const double d = pair_delta(t, a, b, si, sj, gamma);
    if (d < best) {
      best = d;
      best_t = t;
    }
  };
  consider(-si);
  consider(sj);
  if (a > 0.0) {
    for (double sigma_i : {-1.0, 1.0})
      for (double sigma_j : {-1.0, 1.0}) consider((2.0 * b - gamma * (sigma_i - sigma_j)) / (2.0 * a));
  }
  *delta_out = best;
  return best_t;
}

/// Minimizer of the objective restricted to `support` with fixed signs,
/// i.e. the KKT system
///   [2G  1][s ]   [2 N^T x - gamma sigma]
///   [1^T 0][mu] = [1                    ].
/// Returns an empty vector when the system has no usable solution.
inline Eigen::VectorXd support_solve(const Eigen::VectorXd& x, const Eigen::MatrixXd& neighbors,
                                     const std::vector<Index>& support,
                                     const Eigen::VectorXd& sigma, double gamma) {
  const auto p = static_cast<Index>(support.size());
  Eigen::MatrixXd sub(neighbors.rows(), p);
  for (Index c = 0; c < p; ++c) sub.col(c) = neighbors.col(support[c]);
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(p + 1, p + 1);
  kkt.topLeftCorner(p, p) = 2.0 * sub.transpose() * sub;
  kkt.topRightCorner(p, 1).setOnes();
  kkt.bottomLeftCorner(1, p).setOnes();
  Eigen::VectorXd rhs(p + 1);
  rhs.head(p) = 2.0 * sub.transpose() * x - gamma * sigma;
  rhs(p) = 1.0;
  const Eigen::VectorXd sol = Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(kkt).solve(rhs);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(neighbors.cols());
  for (Index c = 0; c < p; ++c) out(support[c]) = sol(c);
  if (!out.allFinite() || std::abs(out.sum() - 1.0) > 1e-9) return {};
  return out;
}

/// Active-set refinement of a coordinate-descent iterate: re-solves on the
/// supports left after dropping entries below a few relative thresholds and
/// keeps whichever point has the lowest true objective. Coordinate descent
/// approaches kinks of the l1 term only linearly; this jumps onto them.
/// Returns true when the objective dropped by more than `tolerance`
/// (relative).
inline bool polish(const Eigen::VectorXd& x, const Eigen::MatrixXd& neighbors, double gamma,
                   double tolerance, Eigen::VectorXd& s, double& objective) {
  const double scale = s.cwiseAbs().maxCoeff();
  const double start = objective;
  std::vector<Index> last;
  for (double rel : {0.0, 1e-8, 1e-6, 1e-4, 1e-2}) {
    std::vector<Index> support;
    for (Index i = 0; i < s.size(); ++i)
      if (std::abs(s(i)) > rel * scale) support.push_back(i);
    if (support.empty() || support == last) continue;
    last = support;
    Eigen::VectorXd sigma(static_cast<Index>(support.size()));
    for (std::size_t c = 0; c < support.size(); ++c) sigma(c) = s(support[c]) < 0.0 ? -1.0 : 1.0;
    const Eigen::VectorXd cand = support_solve(x, neighbors, support, sigma, gamma);
    if (cand.size() == 0) continue;
    const double obj = code_objective(x, neighbors, cand, gamma);
    if (obj < objective) {
      objective = obj;
      s = cand;
    }
  }
  return start - objective > tolerance * std::max(1.0, std::abs(objective));
}

}  // namespace detail

/// Solves for the k reconstruction weights of x over the columns of
/// `neighbors`, starting from uniform weights.
inline SparseCode solve_code(const Eigen::VectorXd& x, const Eigen::MatrixXd& neighbors,
                             const CodingConfig& config) {
  config.check();
  const Index k = neighbors.cols();
  if (k < 1) throw input_error("solve_code needs at least one neighbor");
  if (neighbors.rows() != x.size())
    throw input_error("dimension mismatch: x has " + std::to_string(x.size()) +
                      " entries, neighbors have " + std::to_string(neighbors.rows()) + " rows");
  if (!x.allFinite() || !neighbors.allFinite())
    throw numerical_error("non-finite sample or neighbor passed to solve_code");

  const double gamma = effective_gamma(x, k, config);
  SparseCode code;
  code.weights = Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k));

  if (k == 1) {
    code.converged = true;
    code.objective = code_objective(x, neighbors, code.weights, gamma);
    return code;
  }

  Eigen::VectorXd residual = x - neighbors * code.weights;
  Eigen::VectorXd& s = code.weights;
  double objective = residual.squaredNorm() + gamma * s.lpNorm<1>();

  // Pairwise difference norms do not change across sweeps.
  Eigen::MatrixXd gram = neighbors.transpose() * neighbors;

  for (int sweep = 1; sweep <= config.max_iterations; ++sweep) {
    const double before = objective;
    Eigen::VectorXd corr = neighbors.transpose() * residual;  // n_i^T r
    for (Index i = 0; i < k; ++i) {
      for (Index j = i + 1; j < k; ++j) {
        const double a = gram(i, i) + gram(j, j) - 2.0 * gram(i, j);
        const double b = corr(i) - corr(j);
        double delta = 0.0;
        const double t = detail::best_pair_step(a, b, s(i), s(j), gamma, &delta);
        if (t == 0.0 || delta >= 0.0) continue;
        s(i) += t;
        s(j) -= t;
        residual.noalias() -= t * (neighbors.col(i) - neighbors.col(j));
        corr.noalias() -= t * (gram.col(i) - gram.col(j));
      }
    }
    // Recompute from scratch to keep round-off from accumulating.
    residual = x - neighbors * s;
    objective = residual.squaredNorm() + gamma * s.lpNorm<1>();
    code.sweeps = sweep;
    const bool stalled = before - objective <= config.tolerance * std::max(1.0, std::abs(objective));
    // A polished point still has to survive a full sweep before it counts
    // as converged: no pair move improving it means it is optimal.
    const bool jumped = detail::polish(x, neighbors, gamma, config.tolerance, s, objective);
    residual = x - neighbors * s;
    if (jumped) continue;
    if (stalled) {
      code.converged = true;
      break;
    }
  }

  // Pin the affine constraint exactly against drift.
  const double excess = s.sum() - 1.0;
  if (excess != 0.0) {
    Index largest = 0;
    s.cwiseAbs().maxCoeff(&largest);
    s(largest) -= excess;
  }
  code.objective = code_objective(x, neighbors, s, gamma);

  if (!code.converged) {
    if (config.fallback == CodingFallback::error)
      throw numerical_error("sparse coding did not converge after " +
                            std::to_string(config.max_iterations) + " sweeps");
    code.weights = Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k));
    code.objective = code_objective(x, neighbors, code.weights, gamma);
    code.fallback_used = true;
  }
  return code;
}

/// Brute-force reference solver for k <= 4: enumerates every support and
/// sign pattern, solves the equality-constrained KKT system on each and
/// keeps the best feasible point under the true objective.
inline Eigen::VectorXd oracle_code(const Eigen::VectorXd& x, const Eigen::MatrixXd& neighbors,
                                   const CodingConfig& config) {
  const Index k = neighbors.cols();
  if (k < 1 || k > 4) throw input_error("oracle_code supports 1 <= k <= 4");
  if (neighbors.rows() != x.size()) throw input_error("dimension mismatch");
  const double gamma = effective_gamma(x, k, config);

  Eigen::VectorXd best = Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k));
  double best_obj = code_objective(x, neighbors, best, gamma);

  for (unsigned mask = 1; mask < (1u << k); ++mask) {
    std::vector<Index> support;
    for (Index i = 0; i < k; ++i)
      if (mask & (1u << i)) support.push_back(i);
    const auto p = static_cast<Index>(support.size());

    Eigen::MatrixXd sub(neighbors.rows(), p);
    for (Index c = 0; c < p; ++c) sub.col(c) = neighbors.col(support[c]);
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(p + 1, p + 1);
    kkt.topLeftCorner(p, p) = 2.0 * sub.transpose() * sub;
    kkt.topRightCorner(p, 1).setOnes();
    kkt.bottomLeftCorner(1, p).setOnes();
    const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(kkt);
    const Eigen::VectorXd rhs_base = 2.0 * sub.transpose() * x;

    for (unsigned signs = 0; signs < (1u << p); ++signs) {
      Eigen::VectorXd rhs(p + 1);
      for (Index c = 0; c < p; ++c) rhs(c) = rhs_base(c) - gamma * ((signs & (1u << c)) ? -1.0 : 1.0);
      rhs(p) = 1.0;
      const Eigen::VectorXd sol = cod.solve(rhs);
      if (!sol.allFinite()) continue;
      Eigen::VectorXd cand = Eigen::VectorXd::Zero(k);
      for (Index c = 0; c < p; ++c) cand(support[c]) = sol(c);
      if (std::abs(cand.sum() - 1.0) > 1e-9) continue;
      const double obj = code_objective(x, neighbors, cand, gamma);
      if (obj < best_obj) {
        best_obj = obj;
        best = cand;
      }
    }
  }
  return best;
}

/// S for one view: column i holds sample i's weights scattered to the
/// positions of its neighbors.
struct CoefficientMatrix {
  std::string view;
  Eigen::MatrixXd S;
  /// Samples whose solve fell back to uniform weights.
  std::vector<Index> fallback_samples;
};

inline CoefficientMatrix solve_view_codes(const ViewMatrix& view, const NeighborIndex& index,
                                          const CodingConfig& config) {
  const Index n = view.samples();
  if (index.sample_count() != n)
    throw input_error("neighbor index was built over " + std::to_string(index.sample_count()) +
                      " samples, view has " + std::to_string(n));
  CoefficientMatrix out;
  out.view = view.name;
  out.S = Eigen::MatrixXd::Zero(n, n);

  Eigen::MatrixXd local(view.dim(), index.k);
  for (Index i = 0; i < n; ++i) {
    const auto& nb = index.neighbors[i];
    for (Index t = 0; t < index.k; ++t) local.col(t) = view.data.col(nb[t]);
    SparseCode code;
    try {
      code = solve_code(view.data.col(i), local, config);
    } catch (const numerical_error& e) {
      throw numerical_error("view '" + view.name + "' sample " + std::to_string(i) + ": " +
                            e.what());
    }
    if (code.fallback_used) out.fallback_samples.push_back(i);
    for (Index t = 0; t < index.k; ++t) out.S(nb[t], i) = code.weights(t);
  }
  return out;
}

}  // namespace cmsre
