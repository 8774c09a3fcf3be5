#pragma once

// Reconstruction operators, single-view spectral embeddings and the
// co-regularized alternating solver that couples views.
//
// Each view v gets M = (I - S)(I - S)^T. Its embedding Y (d x n, rows
// orthonormal) minimizes tr(Y M Y^T). Views are coupled by the penalty
// -tr(Yv^T Yv Yu^T Yu) between every ordered pair, so each update is an
// eigenproblem on M - lambda * sum_{u != v} Yu^T Yu.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cmsre/dataset.hpp"
#include "cmsre/eigen.hpp"
#include "cmsre/error.hpp"
#include "cmsre/sparse_coding.hpp"

namespace cmsre {

struct ReconstructionOperator {
  std::string view;
  Eigen::MatrixXd M;
};

struct Embedding {
  std::string view;
  Eigen::MatrixXd Y;  // d x n

  Index dim() const { return Y.rows(); }
  Index samples() const { return Y.cols(); }
};

struct CmsreConfig {
  Index d = 10;
  double lambda = 0.8;
  int max_outer_iterations = 50;
  double convergence_tolerance = 1e-6;
  std::uint64_t seed = 0;

  void check(Index n) const {
    if (d < 1 || d > n - 2)
      throw input_error("d out of range: d=" + std::to_string(d) + ", must be in [1, " +
                        std::to_string(n - 2) + "]");
    if (!(lambda >= 0.0)) throw input_error("lambda must be >= 0");
    if (max_outer_iterations < 1) throw input_error("max_outer_iterations must be >= 1");
    if (!(convergence_tolerance > 0.0)) throw input_error("convergence_tolerance must be > 0");
  }
};

struct TraceRecord {
  int iteration = 0;
  double objective = 0.0;
  std::vector<double> per_view_reconstruction;
  double total_disagreement = 0.0;
  double delta = 0.0;
};

inline ReconstructionOperator build_operator(const CoefficientMatrix& codes) {
  const Index n = codes.S.rows();
  if (codes.S.cols() != n) throw input_error("coefficient matrix must be square");
  const Eigen::MatrixXd r = Eigen::MatrixXd::Identity(n, n) - codes.S;
  Eigen::MatrixXd m = r * r.transpose();
  return {codes.view, 0.5 * (m + m.transpose())};
}

/// Rows are the d lowest eigenvectors of A restricted to the complement of
/// the constant vector. The restriction is P A P with P = I - 11^T/n; the
/// constant direction is lifted above the spectrum so it never ranks among
/// the lowest d. For A with A*1 = 0 and 1 at the bottom of the spectrum
/// (every valid M) these are exactly eigenvectors 2..d+1 of A.
inline Eigen::MatrixXd embed_without_constant_mode(const Eigen::MatrixXd& a, Index d) {
  const Index n = a.rows();
  if (d < 1 || d > n - 2) throw input_error("d out of range for embedding selection");
  const double inv_n = 1.0 / static_cast<double>(n);
  const Eigen::VectorXd row_mean = a.rowwise().sum() * inv_n;
  const double total_mean = row_mean.sum() * inv_n;
  const double lift = a.norm() + 1.0;
  Eigen::MatrixXd deflated = a;
  deflated.colwise() -= row_mean;
  deflated.rowwise() -= row_mean.transpose();
  deflated.array() += total_mean + lift * inv_n;
  return symmetric_eigendecomposition(0.5 * (deflated + deflated.transpose())).vectors.topRows(d);
}

inline Embedding single_view_embed(const ReconstructionOperator& op, Index d) {
  const Index n = op.M.rows();
  if (d < 1 || d > n - 2)
    throw input_error("d out of range: d=" + std::to_string(d) + ", n=" + std::to_string(n));
  return {op.view, embed_without_constant_mode(op.M, d)};
}

inline double reconstruction_cost(const ReconstructionOperator& op, const Embedding& e) {
  return (e.Y * op.M * e.Y.transpose()).trace();
}

/// Trace-form disagreement -tr(Ya^T Ya Yb^T Yb), evaluated as -||Ya Yb^T||_F^2.
inline double disagreement(const Embedding& a, const Embedding& b) {
  if (a.Y.rows() != b.Y.rows() || a.Y.cols() != b.Y.cols())
    throw input_error("disagreement: embedding shapes differ");
  return -(a.Y * b.Y.transpose()).squaredNorm();
}

/// Frobenius distance between the norm-scaled sample Gram matrices,
/// || Ka/||Ka||_F^2 - Kb/||Kb||_F^2 ||_F^2 with K = Y^T Y. O(n^2).
inline double gram_disagreement(const Embedding& a, const Embedding& b) {
  if (a.Y.rows() != b.Y.rows() || a.Y.cols() != b.Y.cols())
    throw input_error("gram_disagreement: embedding shapes differ");
  const Eigen::MatrixXd ka = a.Y.transpose() * a.Y;
  const Eigen::MatrixXd kb = b.Y.transpose() * b.Y;
  return (ka / ka.squaredNorm() - kb / kb.squaredNorm()).squaredNorm();
}

/// Principal angles (ascending) between the row spaces of two d x n matrices.
inline Eigen::VectorXd principal_angles(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.cols() != b.cols()) throw input_error("principal_angles: sample counts differ");
  const Eigen::HouseholderQR<Eigen::MatrixXd> qa(a.transpose());
  const Eigen::HouseholderQR<Eigen::MatrixXd> qb(b.transpose());
  const Eigen::MatrixXd ua = qa.householderQ() * Eigen::MatrixXd::Identity(a.cols(), a.rows());
  const Eigen::MatrixXd ub = qb.householderQ() * Eigen::MatrixXd::Identity(b.cols(), b.rows());
  const Eigen::MatrixXd cross = ua.transpose() * ub;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross);
  const Eigen::VectorXd sv = svd.singularValues();
  // Sine-based angles are accurate near zero, where acos is not.
  const Eigen::MatrixXd resid = ub - ua * cross;
  Eigen::JacobiSVD<Eigen::MatrixXd> rsvd(resid);
  const Index p = std::min(a.rows(), b.rows());
  Eigen::VectorXd angles(p);
  const Eigen::VectorXd rs = rsvd.singularValues();  // descending sines
  for (Index i = 0; i < p; ++i) {
    const double c = std::clamp(sv(i), 0.0, 1.0);
    const double s = i < rs.size() ? std::clamp(rs(rs.size() - 1 - i), 0.0, 1.0) : 0.0;
    angles(i) = std::atan2(s, c);
  }
  std::sort(angles.begin(), angles.end());
  return angles;
}

inline Embedding coreg_update_view(const ReconstructionOperator& op,
                                   const std::vector<const Embedding*>& others, double lambda,
                                   Index d) {
  const Index n = op.M.rows();
  Eigen::MatrixXd a = op.M;
  if (lambda != 0.0) {
    for (const Embedding* u : others) {
      if (u->Y.cols() != n || u->Y.rows() != d)
        throw input_error("coreg_update_view: embedding of view '" + u->view +
                          "' has inconsistent shape");
      a.noalias() -= lambda * (u->Y.transpose() * u->Y);
    }
    a = 0.5 * (a + a.transpose());
  }
  return {op.view, embed_without_constant_mode(a, d)};
}

enum class Termination { converged, iteration_cap };

inline std::string to_string(Termination t) {
  return t == Termination::converged ? "converged" : "iteration_cap";
}

struct FitResult {
  std::vector<Embedding> embeddings;
  std::vector<TraceRecord> trace;
  Termination termination = Termination::iteration_cap;
};

inline TraceRecord evaluate_objective(const std::vector<ReconstructionOperator>& ops,
                                      const std::vector<Embedding>& ys, double lambda) {
  TraceRecord rec;
  double recon = 0.0;
  for (std::size_t v = 0; v < ops.size(); ++v) {
    rec.per_view_reconstruction.push_back(reconstruction_cost(ops[v], ys[v]));
    recon += rec.per_view_reconstruction.back();
  }
  for (std::size_t v = 0; v < ys.size(); ++v)
    for (std::size_t u = 0; u < ys.size(); ++u)
      if (u != v) rec.total_disagreement += disagreement(ys[v], ys[u]);
  rec.objective = recon + lambda * rec.total_disagreement;
  return rec;
}

/// Alternating solver over precomputed operators. Views are initialized
/// independently, then updated in index order with the latest embeddings
/// of all other views until the relative objective change falls below
/// the tolerance. trace[0] describes the initialization.
inline FitResult fit_cmsre(const std::vector<ReconstructionOperator>& ops,
                           const CmsreConfig& config) {
  if (ops.empty()) throw input_error("fit_cmsre needs at least one view");
  const Index n = ops.front().M.rows();
  for (const auto& op : ops)
    if (op.M.rows() != n || op.M.cols() != n)
      throw input_error("operator of view '" + op.view + "' has inconsistent size");
  config.check(n);

  FitResult fit;
  for (const auto& op : ops) fit.embeddings.push_back(single_view_embed(op, config.d));

  auto record = [&](int iteration, const TraceRecord* prev) {
    TraceRecord rec = evaluate_objective(ops, fit.embeddings, config.lambda);
    rec.iteration = iteration;
    if (!std::isfinite(rec.objective))
      throw numerical_error("non-finite objective at iteration " + std::to_string(iteration));
    if (prev)
      rec.delta = std::abs(rec.objective - prev->objective) / std::max(1.0, std::abs(prev->objective));
    fit.trace.push_back(std::move(rec));
  };
  record(0, nullptr);

  const std::size_t m = ops.size();
  std::vector<const Embedding*> others;
  for (int it = 1; it <= config.max_outer_iterations; ++it) {
    for (std::size_t v = 0; v < m; ++v) {
      others.clear();
      for (std::size_t u = 0; u < m; ++u)
        if (u != v) others.push_back(&fit.embeddings[u]);
      fit.embeddings[v] = coreg_update_view(ops[v], others, config.lambda, config.d);
    }
    const TraceRecord prev = fit.trace.back();
    record(it, &prev);
    if (fit.trace.back().delta < config.convergence_tolerance) {
      fit.termination = Termination::converged;
      break;
    }
  }
  return fit;
}

inline FitResult fit_cmsre(const MultiViewDataset& ds, const std::vector<CoefficientMatrix>& codes,
                           const CmsreConfig& config) {
  if (static_cast<Index>(codes.size()) != ds.view_count())
    throw input_error("need one coefficient matrix per view");
  std::vector<ReconstructionOperator> ops;
  for (const auto& c : codes) {
    if (c.S.rows() != ds.sample_count())
      throw input_error("coefficient matrix of view '" + c.view + "' has wrong size");
    ops.push_back(build_operator(c));
  }
  return fit_cmsre(ops, config);
}

/// Stacks the per-view embeddings into a (m*d) x n representation.
inline Eigen::MatrixXd stack_embeddings(const std::vector<Embedding>& ys) {
  if (ys.empty()) return {};
  Index rows = 0;
  for (const auto& e : ys) rows += e.Y.rows();
  Eigen::MatrixXd out(rows, ys.front().Y.cols());
  Index r = 0;
  for (const auto& e : ys) {
    out.middleRows(r, e.Y.rows()) = e.Y;
    r += e.Y.rows();
  }
  return out;
}

}  // namespace cmsre
