#pragma once

// Initial node layout from node-to-source distances only.
//
// Inter-node distances are not observed, so each pair (i, j) is bracketed by
// the triangle inequality over every source l seen by both nodes:
//   max_l |d_il - d_jl|  <=  D_ij  <=  min_l (d_il + d_jl)
// and the bracket midpoint is embedded with classical MDS.

#include "garde/core.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace garde {

struct CompletedDistanceMatrix {
  Eigen::MatrixXd d_hat;
  Eigen::MatrixXd lower;
  Eigen::MatrixXd upper;

  /// upper - lower; wide brackets mean the midpoint is a poor guess.
  Eigen::MatrixXd bound_width() const { return upper - lower; }
};

inline CompletedDistanceMatrix complete_distances(const ObservationSet& obs) {
  const auto n_nodes = static_cast<Eigen::Index>(obs.node_count());
  CompletedDistanceMatrix out{Eigen::MatrixXd::Zero(n_nodes, n_nodes), Eigen::MatrixXd::Zero(n_nodes, n_nodes),
                              Eigen::MatrixXd::Zero(n_nodes, n_nodes)};
  for (std::size_t i = 0; i < obs.node_count(); ++i) {
    for (std::size_t j = i + 1; j < obs.node_count(); ++j) {
      double lower = 0.0;
      double upper = std::numeric_limits<double>::infinity();
      bool shared = false;
      for (std::size_t k = 0; k < obs.source_count(); ++k) {
        if (!obs.valid(i, k) || !obs.valid(j, k)) continue;
        shared = true;
        const double a = obs.distance(i, k);
        const double b = obs.distance(j, k);
        lower = std::max(lower, std::abs(a - b));
        upper = std::min(upper, a + b);
      }
      if (!shared) {
        throw DataError("nodes " + std::to_string(i) + " and " + std::to_string(j) + " share no valid source");
      }
      const auto r = static_cast<Eigen::Index>(i);
      const auto c = static_cast<Eigen::Index>(j);
      out.lower(r, c) = out.lower(c, r) = lower;
      out.upper(r, c) = out.upper(c, r) = upper;
      out.d_hat(r, c) = out.d_hat(c, r) = 0.5 * (lower + upper);
    }
  }
  return out;
}

/// Classical (Torgerson) MDS into the plane. The double-centered matrix
/// B = -1/2 J D^2 J is eigendecomposed and the two largest eigenpairs give
/// the coordinates; negative eigenvalues are treated as zero. The result is
/// centered at the origin. Eigenvector signs are fixed so the entry of
/// largest magnitude is positive.
inline std::vector<Point2> classical_mds(const Eigen::MatrixXd& d_hat) {
  const Eigen::Index n = d_hat.rows();
  if (n != d_hat.cols()) throw DataError("distance matrix must be square");
  if (n < 3) throw DataError("classical MDS in 2-D needs at least three points");
  const double scale = std::max(1.0, d_hat.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(d_hat(i, i)) > 1e-12 * scale) throw DataError("distance matrix must have a zero diagonal");
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!std::isfinite(d_hat(i, j)) || d_hat(i, j) < 0.0) {
        throw DataError("distance matrix entries must be finite and nonnegative");
      }
      if (std::abs(d_hat(i, j) - d_hat(j, i)) > 1e-9 * scale) throw DataError("distance matrix must be symmetric");
    }
  }

  const Eigen::MatrixXd squared = d_hat.cwiseProduct(d_hat);
  const Eigen::MatrixXd centering =
      Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
  Eigen::MatrixXd b = -0.5 * centering * squared * centering;
  b = 0.5 * (b + b.transpose()).eval();

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(b);
  if (solver.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  // Eigenvalues come back in ascending order.
  const double lambda1 = solver.eigenvalues()(n - 1);
  const double lambda2 = solver.eigenvalues()(n - 2);
  const double tol = 1e-10 * std::max(std::abs(lambda1), std::numeric_limits<double>::min());
  if (lambda1 <= tol || lambda2 <= tol) {
    throw NumericalError("distance matrix has fewer than two positive eigenvalues (collinear or degenerate layout)");
  }

  Eigen::MatrixXd coords(n, 2);
  for (int axis = 0; axis < 2; ++axis) {
    Eigen::VectorXd v = solver.eigenvectors().col(n - 1 - axis);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    coords.col(axis) = v * std::sqrt(solver.eigenvalues()(n - 1 - axis));
  }
  coords.rowwise() -= coords.colwise().mean();

  std::vector<Point2> out(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = coords.row(i).transpose();
  return out;
}

inline std::vector<Point2> initial_nodes(const ObservationSet& obs) {
  return classical_mds(complete_distances(obs).d_hat);
}

}  // namespace garde
