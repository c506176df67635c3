#pragma once

// Cramer-Rao lower bounds for range-only 2-D position estimates under
// i.i.d. zero-mean Gaussian range errors of standard deviation sigma_d.
//
// For a point q observed from anchors a_i the expected Hessian entries of the
// log-likelihood are
//   g_xx = -sum (a_ix - q_x)^2 / (sigma^2 |a_i - q|^2)
//   g_yy = -sum (a_iy - q_y)^2 / (sigma^2 |a_i - q|^2)
//   g_xy = -sum (a_ix - q_x)(a_iy - q_y) / (sigma^2 |a_i - q|^2)
// and RMSE(q_hat) >= sqrt((g_xx + g_yy) / (g_xy^2 - g_xx g_yy)).
// Sources are bounded with the nodes as anchors and nodes with the sources
// as anchors; each bound conditions on the other set being known.

#include "garde/core.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace garde {

struct Gammas {
  double xx = 0.0;
  double yy = 0.0;
  double xy = 0.0;

  /// g_xy^2 - g_xx g_yy; negative when the information matrix is invertible.
  double determinant_term() const { return xy * xy - xx * yy; }
};

/// Gamma sums over the anchors with `use[i]` set (all anchors when `use` is empty).
inline Gammas gammas(std::span<const Point2> anchors, const Point2& point, double sigma_d,
                     std::span<const bool> use = {}) {
  if (!(sigma_d > 0.0) || !std::isfinite(sigma_d)) throw DataError("sigma_d must be positive and finite");
  if (!use.empty() && use.size() != anchors.size()) throw DataError("anchor mask has the wrong length");
  const double inv_var = 1.0 / (sigma_d * sigma_d);
  Gammas g;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    if (!use.empty() && !use[i]) continue;
    const Eigen::Vector2d delta = anchors[i] - point;
    const double sq = delta.squaredNorm();
    if (sq <= 1e-24) throw NumericalError("anchor " + std::to_string(i) + " coincides with the bounded position");
    g.xx -= inv_var * delta.x() * delta.x() / sq;
    g.yy -= inv_var * delta.y() * delta.y() / sq;
    g.xy -= inv_var * delta.x() * delta.y() / sq;
  }
  return g;
}

inline Gammas gammas_for_source(std::span<const Point2> nodes, const Point2& source, double sigma_d) {
  return gammas(nodes, source, sigma_d);
}

inline Gammas gammas_for_node(std::span<const Point2> sources, const Point2& node, double sigma_d) {
  return gammas(sources, node, sigma_d);
}

inline double rmse_bound(const Gammas& g) {
  const double det = g.determinant_term();
  const double scale = (g.xx + g.yy) * (g.xx + g.yy);
  if (!(-det > 1e-12 * scale)) {
    throw NumericalError("singular Fisher information (anchors collinear with the bounded position)");
  }
  return std::sqrt((g.xx + g.yy) / det);
}

inline double source_rmse_bound(std::span<const Point2> nodes, const Point2& source, double sigma_d) {
  return rmse_bound(gammas_for_source(nodes, source, sigma_d));
}

inline double node_rmse_bound(std::span<const Point2> sources, const Point2& node, double sigma_d) {
  return rmse_bound(gammas_for_node(sources, node, sigma_d));
}

struct CrlbEntry {
  std::size_t index = 0;
  std::optional<Gammas> gammas;    // empty when an anchor coincides with the position
  std::optional<double> rmse_bound;
  std::string error;               // empty on success
};

struct CrlbReport {
  std::vector<CrlbEntry> per_position;
  double sigma_d = 0.0;

  /// Root mean square of the successful bounds; NaN when none succeeded.
  double rms_bound() const {
    double sq = 0.0;
    std::size_t count = 0;
    for (const auto& e : per_position) {
      if (!e.rmse_bound) continue;
      sq += *e.rmse_bound * *e.rmse_bound;
      ++count;
    }
    return count == 0 ? std::numeric_limits<double>::quiet_NaN() : std::sqrt(sq / static_cast<double>(count));
  }
};

struct CrlbReports {
  CrlbReport sources;
  CrlbReport nodes;
};

namespace detail {

inline CrlbEntry crlb_entry(std::size_t index, std::span<const Point2> anchors, const Point2& point, double sigma_d,
                            std::span<const bool> use) {
  CrlbEntry entry{index, std::nullopt, std::nullopt, {}};
  try {
    entry.gammas = gammas(anchors, point, sigma_d, use);
    entry.rmse_bound = rmse_bound(*entry.gammas);
  } catch (const NumericalError&) {
    entry.error = entry.gammas ? "singular" : "coincident";
  }
  return entry;
}

}  // namespace detail

/// Per-source bounds over all nodes and per-node bounds over all sources.
/// When `obs` is given only valid (node, source) pairs contribute. Singular
/// positions are reported in their own entry without affecting the rest.
inline CrlbReports crlb_report(const Geometry& geometry, double sigma_d, const ObservationSet* obs = nullptr) {
  if (!(sigma_d > 0.0) || !std::isfinite(sigma_d)) throw DataError("sigma_d must be positive and finite");
  if (obs != nullptr) check_dimensions(geometry, *obs);

  CrlbReports out;
  out.sources.sigma_d = sigma_d;
  out.nodes.sigma_d = sigma_d;

  std::unique_ptr<bool[]> storage;
  auto mask_of = [&](auto&& valid_at, std::size_t count) -> std::span<const bool> {
    if (obs == nullptr) return {};
    storage = std::make_unique<bool[]>(count);
    for (std::size_t i = 0; i < count; ++i) storage[i] = valid_at(i);
    return {storage.get(), count};
  };

  for (std::size_t k = 0; k < geometry.source_count(); ++k) {
    const auto use = mask_of([&](std::size_t n) { return obs->valid(n, k); }, geometry.node_count());
    out.sources.per_position.push_back(detail::crlb_entry(k, geometry.nodes, geometry.sources[k], sigma_d, use));
  }
  for (std::size_t n = 0; n < geometry.node_count(); ++n) {
    const auto use = mask_of([&](std::size_t k) { return obs->valid(n, k); }, geometry.source_count());
    out.nodes.per_position.push_back(detail::crlb_entry(n, geometry.sources, geometry.nodes[n], sigma_d, use));
  }
  return out;
}

}  // namespace garde
