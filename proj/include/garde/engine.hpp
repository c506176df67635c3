#pragma once

// Alternating weighted least-squares geometry calibration with annealed
// restarts.
//
//   init:   bracket-midpoint MDS for nodes, WLS for sources, one iterate()
//   round:  iterate(), keep the better of (new, best) by mean |residual|,
//           restart from best + mu(g) * N(0, 1) on every coordinate
//
// iterate() runs a fixed number of passes of
//   fit_select -> node WLS -> rigid map onto current nodes -> alpha merge
//   -> source WLS -> beta merge

#include "garde/core.hpp"
#include "garde/mds_init.hpp"
#include "garde/rng.hpp"
#include "garde/wls_localizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace garde {

struct GardeConfig {
  double alpha = 0.2;  // weight kept on the previous node positions
  double beta = 0.2;   // weight kept on the previous source positions
  std::size_t num_iterations = 30;
  std::size_t num_annealing = 30;
  double mu0 = 0.5;  // meters
  double mu_decay = 0.6;
  double fit_fraction = 0.8;
  std::size_t min_fit_sources = 4;
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (!(alpha >= 0.0 && alpha < 1.0)) throw DataError("alpha must lie in [0, 1)");
    if (!(beta >= 0.0 && beta < 1.0)) throw DataError("beta must lie in [0, 1)");
    if (!(mu0 >= 0.0) || !std::isfinite(mu0)) throw DataError("mu0 must be finite and nonnegative");
    if (!(mu_decay > 0.0 && mu_decay < 1.0)) throw DataError("mu_decay must lie in (0, 1)");
    if (!(fit_fraction > 0.0 && fit_fraction <= 1.0)) throw DataError("fit_fraction must lie in (0, 1]");
    if (min_fit_sources < 4) throw DataError("min_fit_sources must be at least 4");
  }

  /// Perturbation scale of annealing round g (1-based).
  double mu(std::size_t round) const { return mu0 * std::pow(mu_decay, static_cast<double>(round)); }
};

struct TraceRecord {
  std::size_t round = 0;         // 0 is the pre-annealing iterate
  double fit_score = 0.0;        // score of this round's iterate output
  double best_fit_score = 0.0;   // score of the incumbent after selection
  double mu = 0.0;               // perturbation applied after this round
  bool failed = false;           // iterate hit a singular configuration
};

struct CalibrationResult {
  Geometry geometry;
  std::vector<std::size_t> selected_sources;
  double fit_score = 0.0;
  std::vector<TraceRecord> trace;
};

/// Per-source mean |d_hat - |p_n - o_k|| over that source's valid entries;
/// +inf for sources without valid entries.
inline std::vector<double> source_fit_scores(const Geometry& geometry, const ObservationSet& obs) {
  check_dimensions(geometry, obs);
  std::vector<double> scores(obs.source_count(), std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k < obs.source_count(); ++k) {
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t n = 0; n < obs.node_count(); ++n) {
      if (!obs.valid(n, k)) continue;
      total += std::abs(obs.distance(n, k) - distance(geometry.nodes[n], geometry.sources[k]));
      ++count;
    }
    if (count > 0) scores[k] = total / static_cast<double>(count);
  }
  return scores;
}

inline std::size_t fit_select_count(std::size_t source_count, const GardeConfig& config) {
  // The epsilon keeps products such as 0.8 * 10 from rounding up to 9.
  const auto by_fraction =
      static_cast<std::size_t>(std::ceil(config.fit_fraction * static_cast<double>(source_count) - 1e-9));
  return std::min(source_count, std::max(by_fraction, config.min_fit_sources));
}

/// Indices (ascending) of the best-fitting sources. Ties in score go to the
/// lower index.
inline std::vector<std::size_t> fit_select(const Geometry& geometry, const ObservationSet& obs,
                                           const GardeConfig& config) {
  if (obs.source_count() < config.min_fit_sources) {
    throw DataError("fit selection needs at least " + std::to_string(config.min_fit_sources) + " sources, got " +
                    std::to_string(obs.source_count()));
  }
  const auto scores = source_fit_scores(geometry, obs);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t keep = fit_select_count(scores.size(), config);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                    [&](std::size_t a, std::size_t b) { return scores[a] < scores[b] || (scores[a] == scores[b] && a < b); });
  order.resize(keep);
  std::sort(order.begin(), order.end());
  return order;
}

/// The candidate if it fits the observations strictly better, otherwise the incumbent.
inline const Geometry& opt_select(const Geometry& candidate, const Geometry& incumbent, const ObservationSet& obs) {
  return mean_abs_residual(candidate, obs) < mean_abs_residual(incumbent, obs) ? candidate : incumbent;
}

namespace detail {

inline Geometry iterate_passes(Geometry geometry, const ObservationSet& obs, const GardeConfig& config,
                               std::size_t passes) {
  for (std::size_t pass = 1; pass <= passes; ++pass) {
    try {
      const auto selected = fit_select(geometry, obs, config);
      const auto fresh_nodes = localize_all_nodes(geometry, obs, selected);
      const auto mapped = align(fresh_nodes, geometry.nodes, /*allow_reflection=*/false).aligned;
      for (std::size_t n = 0; n < geometry.nodes.size(); ++n) {
        geometry.nodes[n] = config.alpha * geometry.nodes[n] + (1.0 - config.alpha) * mapped[n];
      }
      const auto fresh_sources = localize_all_sources(geometry.nodes, obs);
      for (std::size_t k = 0; k < geometry.sources.size(); ++k) {
        geometry.sources[k] = config.beta * geometry.sources[k] + (1.0 - config.beta) * fresh_sources[k];
      }
    } catch (const NumericalError& e) {
      throw NumericalError("iterate pass " + std::to_string(pass) + ": " + e.what());
    }
  }
  return geometry;
}

}  // namespace detail

inline Geometry iterate(const Geometry& geometry, const ObservationSet& obs, const GardeConfig& config) {
  check_dimensions(geometry, obs);
  return detail::iterate_passes(geometry, obs, config, config.num_iterations);
}

/// Initial geometry: MDS nodes and WLS sources, before any iterate pass.
inline Geometry initialize(const ObservationSet& obs) {
  Geometry g;
  try {
    g.nodes = initial_nodes(obs);
    g.sources = localize_all_sources(g.nodes, obs);
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("initialization: ") + e.what());
  }
  return g;
}

inline CalibrationResult run(const ObservationSet& obs, const GardeConfig& config) {
  config.validate();
  obs.check_solvable();
  if (obs.node_count() < 3) throw DataError("calibration needs at least three nodes");

  CalibrationResult result;
  Geometry working = initialize(obs);
  try {
    working = iterate(working, obs, config);
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("iterate: ") + e.what());
  }
  Geometry best = working;
  double best_score = mean_abs_residual(best, obs);
  result.trace.push_back({0, best_score, best_score, 0.0, false});

  std::size_t failed_rounds = 0;
  for (std::size_t round = 1; round <= config.num_annealing; ++round) {
    TraceRecord record{round, std::numeric_limits<double>::quiet_NaN(), best_score, config.mu(round), false};
    try {
      working = iterate(working, obs, config);
      const double score = mean_abs_residual(working, obs);
      record.fit_score = score;
      if (score < best_score) {
        best = working;
        best_score = score;
      }
    } catch (const NumericalError&) {
      record.failed = true;
      ++failed_rounds;
    }
    record.best_fit_score = best_score;
    result.trace.push_back(record);

    Rng rng(derive_seed(config.rng_seed, round));
    working = best;
    for (auto& p : working.nodes) p += record.mu * Point2(rng.normal(), rng.normal());
    for (auto& o : working.sources) o += record.mu * Point2(rng.normal(), rng.normal());
  }
  if (config.num_annealing > 0 && failed_rounds == config.num_annealing) {
    throw NumericalError("annealing: every round hit a singular configuration");
  }

  result.geometry = std::move(best);
  result.fit_score = best_score;
  result.selected_sources = fit_select(result.geometry, obs, config);
  return result;
}

}  // namespace garde
