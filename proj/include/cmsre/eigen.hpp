#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "cmsre/error.hpp"

namespace cmsre {

/// Ascending eigenvalues with matching orthonormal eigenvectors stored as
/// rows. Each eigenvector's largest-magnitude entry (first on ties) is
/// positive.
struct SymmetricEigen {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
};

inline void fix_sign(Eigen::Ref<Eigen::VectorXd> v) {
  Eigen::Index pivot = 0;
  double best = -1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) > best) {
      best = std::abs(v(i));
      pivot = i;
    }
  }
  if (v(pivot) < 0.0) v = -v;
}

inline SymmetricEigen symmetric_eigendecomposition(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols()) throw numerical_error("eigendecomposition needs a square matrix");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
    throw numerical_error("eigendecomposition input is not symmetric");

  const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  if (solver.info() != Eigen::Success)
    throw numerical_error("symmetric eigensolver failed to converge (n=" +
                          std::to_string(a.rows()) + ", |A|_F=" + std::to_string(sym.norm()) +
                          ")");

  SymmetricEigen out;
  out.values = solver.eigenvalues();
  Eigen::MatrixXd cols = solver.eigenvectors();
  for (Eigen::Index j = 0; j < cols.cols(); ++j) fix_sign(cols.col(j));
  out.vectors = cols.transpose();

  const double bound = 1e-7 * std::max(1.0, sym.norm());
  const Eigen::MatrixXd resid =
      sym * out.vectors.transpose() - out.vectors.transpose() * out.values.asDiagonal();
  for (Eigen::Index j = 0; j < resid.cols(); ++j) {
    if (!(resid.col(j).norm() <= bound)) {
      const double lo = out.values.cwiseAbs().minCoeff();
      const double hi = out.values.cwiseAbs().maxCoeff();
      throw numerical_error("eigenpair " + std::to_string(j) + " residual " +
                            std::to_string(resid.col(j).norm()) + " exceeds " +
                            std::to_string(bound) + " (|lambda| range " + std::to_string(lo) +
                            " .. " + std::to_string(hi) + ")");
    }
  }
  return out;
}

}  // namespace cmsre
