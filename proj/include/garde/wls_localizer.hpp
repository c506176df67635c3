#pragma once

// Range-based weighted least-squares localization of a single point.
//
// The anchor with the smallest observed distance is the reference. With
// anchor coordinates p_m taken relative to it, subtracting the reference
// circle equation from every other one gives the linear system
//   [2 p_mx  2 p_my] x = d_ref^2 + |p_m|^2 - d_m^2
// which is solved with weights 1 / w_m^2 and shifted back by the reference.
// The same routine localizes sources from nodes and nodes from sources.

#include "garde/core.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace garde {

/// Weighting distances are clamped to at least this value before inversion.
inline constexpr double kMinWeightDistance = 1e-3;

/// RtWR with reciprocal condition number below this is treated as singular.
inline constexpr double kMinReciprocalCondition = 1e-12;

inline std::size_t select_reference(std::span<const double> dists) {
  if (dists.empty()) throw DataError("reference selection needs at least one distance");
  // min_element returns the first minimum, so ties go to the lowest index.
  return static_cast<std::size_t>(std::min_element(dists.begin(), dists.end()) - dists.begin());
}

struct WlsProblem {
  std::vector<Point2> anchors;
  std::vector<double> dists;
  std::vector<double> weight_dists;
  std::size_t reference_index = 0;

  static WlsProblem make(std::vector<Point2> anchors, std::vector<double> dists, std::vector<double> weight_dists) {
    WlsProblem p{std::move(anchors), std::move(dists), std::move(weight_dists), 0};
    if (!p.dists.empty()) p.reference_index = select_reference(p.dists);
    return p;
  }
};

inline Point2 wls_solve(const WlsProblem& problem) {
  const std::size_t m = problem.anchors.size();
  if (m < 3) throw DataError("WLS localization needs at least three anchors, got " + std::to_string(m));
  if (problem.dists.size() != m || problem.weight_dists.size() != m) {
    throw DataError("WLS problem has mismatched anchor, distance and weight counts");
  }
  if (problem.reference_index >= m) throw DataError("WLS reference index out of range");
  for (std::size_t i = 0; i < m; ++i) {
    if (!std::isfinite(problem.dists[i]) || problem.dists[i] <= 0.0 || !std::isfinite(problem.weight_dists[i]) ||
        problem.weight_dists[i] < 0.0) {
      throw DataError("WLS distances must be finite and positive");
    }
  }

  const std::size_t ref = problem.reference_index;
  const Point2& origin = problem.anchors[ref];
  const double d_ref = problem.dists[ref];

  Eigen::Matrix2d normal = Eigen::Matrix2d::Zero();
  Eigen::Vector2d rhs = Eigen::Vector2d::Zero();
  for (std::size_t i = 0; i < m; ++i) {
    if (i == ref) continue;
    const Eigen::Vector2d p = problem.anchors[i] - origin;
    const Eigen::Vector2d row = 2.0 * p;
    const double b = d_ref * d_ref + p.squaredNorm() - problem.dists[i] * problem.dists[i];
    const double wd = std::max(problem.weight_dists[i], kMinWeightDistance);
    const double w = 1.0 / (wd * wd);
    normal += w * row * row.transpose();
    rhs += w * b * row;
  }

  // Closed-form eigenvalues of the symmetric 2x2 normal matrix.
  const double half_trace = 0.5 * (normal(0, 0) + normal(1, 1));
  const double half_gap = 0.5 * (normal(0, 0) - normal(1, 1));
  const double radius = std::hypot(half_gap, normal(0, 1));
  const double lambda_max = half_trace + radius;
  const double lambda_min = half_trace - radius;
  if (!(lambda_max > 0.0) || lambda_min < kMinReciprocalCondition * lambda_max) {
    throw NumericalError("singular anchor configuration (anchors collinear with the reference)");
  }
  return normal.ldlt().solve(rhs) + origin;
}

namespace detail {

inline std::string with_index(const char* what, std::size_t index, const std::exception& e) {
  return std::string(what) + " " + std::to_string(index) + ": " + e.what();
}

}  // namespace detail

/// Source positions from node positions; weighting distances are the
/// observed distances of each source column.
inline std::vector<Point2> localize_all_sources(std::span<const Point2> nodes, const ObservationSet& obs) {
  if (nodes.size() != obs.node_count()) throw DataError("node count does not match observations");
  std::vector<Point2> out(obs.source_count());
  for (std::size_t k = 0; k < obs.source_count(); ++k) {
    std::vector<Point2> anchors;
    std::vector<double> dists;
    for (std::size_t n = 0; n < obs.node_count(); ++n) {
      if (!obs.valid(n, k)) continue;
      anchors.push_back(nodes[n]);
      dists.push_back(obs.distance(n, k));
    }
    try {
      out[k] = wls_solve(WlsProblem::make(std::move(anchors), dists, dists));
    } catch (const NumericalError& e) {
      throw NumericalError(detail::with_index("source", k, e));
    } catch (const DataError& e) {
      throw DataError(detail::with_index("source", k, e));
    }
  }
  return out;
}

/// Node positions from the given subset of sources of `current`. Weighting
/// distances are model distances |p_n - o_k| in the current geometry.
inline std::vector<Point2> localize_all_nodes(const Geometry& current, const ObservationSet& obs,
                                              std::span<const std::size_t> source_ids) {
  check_dimensions(current, obs);
  std::vector<Point2> out(obs.node_count());
  for (std::size_t n = 0; n < obs.node_count(); ++n) {
    std::vector<Point2> anchors;
    std::vector<double> dists;
    std::vector<double> weights;
    for (const std::size_t k : source_ids) {
      if (k >= obs.source_count()) throw DataError("source index " + std::to_string(k) + " out of range");
      if (!obs.valid(n, k)) continue;
      anchors.push_back(current.sources[k]);
      dists.push_back(obs.distance(n, k));
      weights.push_back(distance(current.nodes[n], current.sources[k]));
    }
    try {
      out[n] = wls_solve(WlsProblem::make(std::move(anchors), std::move(dists), std::move(weights)));
    } catch (const NumericalError& e) {
      throw NumericalError(detail::with_index("node", n, e));
    } catch (const DataError& e) {
      throw DataError(detail::with_index("node", n, e));
    }
  }
  return out;
}

inline std::vector<Point2> localize_all_nodes(const Geometry& current, const ObservationSet& obs) {
  std::vector<std::size_t> all(obs.source_count());
  for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
  return localize_all_nodes(current, obs, all);
}

}  // namespace garde
