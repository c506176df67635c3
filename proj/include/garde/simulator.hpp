#pragma once

// Synthetic calibration scenarios and the Monte-Carlo experiment harness.
//
// Distance estimates are drawn from a parametric error model instead of an
// acoustic front end:
//   gaussian           d_hat = d + N(0, sigma^2)
//   heteroscedastic    d_hat = d + N(0, (sigma + slope * d)^2)
//   outlier            gaussian, plus +outlier_shift with probability outlier_rate
// Entries with d > oor_threshold are marked missing and draws below 1 mm are
// clamped to 1 mm.

#include "garde/core.hpp"
#include "garde/crlb.hpp"
#include "garde/engine.hpp"
#include "garde/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <thread>
#include <vector>

namespace garde {

struct Scenario {
  double room_width = 6.0;
  double room_height = 5.0;
  std::size_t node_count = 4;
  std::size_t source_count = 500;
  double margin = 0.5;
  double min_separation = 0.1;
  double min_node_separation = 1.0;  // extra spacing between nodes only
  std::uint64_t rng_seed = 0;
};

/// Placement attempts per position before generation gives up.
inline constexpr std::size_t kMaxPlacementAttempts = 100000;

enum class NoiseKind { gaussian, heteroscedastic, outlier };

struct NoiseModel {
  NoiseKind kind = NoiseKind::gaussian;
  double sigma_d = 0.1;
  double slope = 0.02;
  double outlier_rate = 0.0;
  double outlier_shift = 1.0;
  double oor_threshold = std::numeric_limits<double>::infinity();

  void validate() const {
    if (!(sigma_d > 0.0) || !std::isfinite(sigma_d)) throw DataError("noise sigma_d must be positive and finite");
    if (!(outlier_rate >= 0.0 && outlier_rate < 1.0)) throw DataError("noise outlier_rate must lie in [0, 1)");
    if (!std::isfinite(slope) || slope < 0.0) throw DataError("noise slope must be finite and nonnegative");
    if (!std::isfinite(outlier_shift)) throw DataError("noise outlier_shift must be finite");
    if (!(oor_threshold > 0.0)) throw DataError("noise oor_threshold must be positive");
  }

  double stddev_at(double true_distance) const {
    return kind == NoiseKind::heteroscedastic ? sigma_d + slope * true_distance : sigma_d;
  }
};

inline const char* to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::gaussian: return "gaussian";
    case NoiseKind::heteroscedastic: return "heteroscedastic";
    case NoiseKind::outlier: return "outlier";
  }
  return "gaussian";
}

inline Geometry generate_scenario(const Scenario& s) {
  const double x_lo = s.margin;
  const double x_hi = s.room_width - s.margin;
  const double y_lo = s.margin;
  const double y_hi = s.room_height - s.margin;
  if (!(x_hi >= x_lo && y_hi >= y_lo)) throw DataError("room is smaller than twice the wall margin");

  Rng rng(s.rng_seed);
  std::vector<Point2> placed;
  placed.reserve(s.node_count + s.source_count);
  const double min_sq = s.min_separation * s.min_separation;
  const double node_sep = std::max(s.min_separation, s.min_node_separation);
  const double node_sq = node_sep * node_sep;
  for (std::size_t i = 0; i < s.node_count + s.source_count; ++i) {
    bool ok = false;
    for (std::size_t attempt = 0; attempt < kMaxPlacementAttempts && !ok; ++attempt) {
      const Point2 candidate(rng.uniform(x_lo, x_hi), rng.uniform(y_lo, y_hi));
      ok = true;
      for (std::size_t j = 0; j < placed.size() && ok; ++j) {
        const double limit = (i < s.node_count && j < s.node_count) ? node_sq : min_sq;
        ok = (placed[j] - candidate).squaredNorm() >= limit;
      }
      if (ok) placed.push_back(candidate);
    }
    if (!ok) {
      throw DataError("could not place position " + std::to_string(i) + " after " +
                      std::to_string(kMaxPlacementAttempts) + " attempts; separation constraints infeasible");
    }
  }
  Geometry g;
  g.nodes.assign(placed.begin(), placed.begin() + static_cast<std::ptrdiff_t>(s.node_count));
  g.sources.assign(placed.begin() + static_cast<std::ptrdiff_t>(s.node_count), placed.end());
  return g;
}

/// Noise-free observations: every pair valid at its true distance.
inline ObservationSet exact_observations(const Geometry& geometry) {
  Eigen::MatrixXd d(static_cast<Eigen::Index>(geometry.node_count()), static_cast<Eigen::Index>(geometry.source_count()));
  for (std::size_t n = 0; n < geometry.node_count(); ++n) {
    for (std::size_t k = 0; k < geometry.source_count(); ++k) {
      d(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k)) = distance(geometry.nodes[n], geometry.sources[k]);
    }
  }
  return ObservationSet(std::move(d));
}

inline constexpr double kMinSynthesizedDistance = 1e-3;

inline ObservationSet synthesize_observations(const Geometry& geometry, const NoiseModel& noise, std::uint64_t seed) {
  noise.validate();
  const auto n_nodes = static_cast<Eigen::Index>(geometry.node_count());
  const auto n_sources = static_cast<Eigen::Index>(geometry.source_count());
  Eigen::MatrixXd d(n_nodes, n_sources);
  MaskMatrix valid(n_nodes, n_sources);
  Rng rng(seed);
  // Draw order is fixed (node-major) and every entry consumes its draws even
  // when masked, so masking never shifts the noise of other entries.
  for (Eigen::Index n = 0; n < n_nodes; ++n) {
    for (Eigen::Index k = 0; k < n_sources; ++k) {
      const double truth = distance(geometry.nodes[static_cast<std::size_t>(n)], geometry.sources[static_cast<std::size_t>(k)]);
      double value = truth + noise.stddev_at(truth) * rng.normal();
      if (noise.kind == NoiseKind::outlier && rng.bernoulli(noise.outlier_rate)) value += noise.outlier_shift;
      d(n, k) = std::max(value, kMinSynthesizedDistance);
      valid(n, k) = truth <= noise.oor_threshold;
    }
  }
  return ObservationSet(std::move(d), std::move(valid));
}

/// Standard deviation used for the bounds: the model's average standard
/// deviation over the realized valid distances.
inline double effective_sigma(const Geometry& truth, const ObservationSet& obs, const NoiseModel& noise) {
  if (noise.kind != NoiseKind::heteroscedastic) return noise.sigma_d;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t n = 0; n < obs.node_count(); ++n) {
    for (std::size_t k = 0; k < obs.source_count(); ++k) {
      if (!obs.valid(n, k)) continue;
      total += noise.stddev_at(distance(truth.nodes[n], truth.sources[k]));
      ++count;
    }
  }
  return count == 0 ? noise.sigma_d : total / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// Monte-Carlo harness

enum class Variant { with_annealing, without_annealing, iteration_sweep };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::with_annealing: return "with_annealing";
    case Variant::without_annealing: return "without_annealing";
    case Variant::iteration_sweep: return "iteration_sweep";
  }
  return "with_annealing";
}

struct MonteCarloConfig {
  Scenario scenario;
  NoiseModel noise;
  GardeConfig garde;
  std::size_t trials = 1;
  std::uint64_t seed = 0;
  std::vector<Variant> variants{Variant::with_annealing, Variant::without_annealing};
  std::vector<std::size_t> sweep_iterations{0, 1, 2, 5, 10, 30};
  unsigned threads = 1;
};

/// One GARDE run of one trial. Rows of the iteration sweep are labelled
/// "sweep" (no annealing) or "sweep_annealed".
struct TrialRow {
  std::size_t trial = 0;
  std::string variant;
  std::size_t iterations = 0;
  std::size_t annealing = 0;
  bool ok = false;
  std::string error;
  double calibration_error_nodes = 0.0;
  double calibration_error_sources = 0.0;
  double calibration_error_geometry = 0.0;
  double max_error_full = 0.0;    // max |d_hat - d_true| over all valid observations
  double max_error_subset = 0.0;  // same, restricted to the selected sources
  double rmse_nodes = 0.0;        // per-position errors after joint alignment
  double rmse_sources = 0.0;
  double crlb_nodes = 0.0;        // RMS of per-position bounds
  double crlb_sources = 0.0;
  double sigma_crlb = 0.0;
  double fit_score = 0.0;
  std::size_t selected_count = 0;
};

struct VariantSummary {
  std::string variant;
  std::size_t iterations = 0;
  std::size_t annealing = 0;
  std::size_t ok = 0;
  std::size_t failed = 0;
  double mean_calibration_error = 0.0;
  double median_calibration_error = 0.0;
  double max_calibration_error = 0.0;
  double mean_calibration_error_sources = 0.0;
  double rmse_nodes = 0.0;  // pooled over trials
  double rmse_sources = 0.0;
  double crlb_nodes = 0.0;
  double crlb_sources = 0.0;
  double subset_below_full_fraction = 0.0;
};

struct CurvePoint {
  double x = 0.0;
  double y = 0.0;
};

struct ExperimentTable {
  std::vector<TrialRow> rows;  // ordered by (trial, run order within trial)
  std::vector<VariantSummary> summaries;
  std::size_t failed_trials = 0;  // trials with at least one failed run
  std::vector<CurvePoint> cdf_full;      // empirical CDF of max_error_full
  std::vector<CurvePoint> cdf_subset;    // empirical CDF of max_error_subset
  std::vector<CurvePoint> sweep_plain;   // iterations -> mean calibration error
  std::vector<CurvePoint> sweep_annealed;
  std::vector<CurvePoint> crlb_vs_rmse_nodes;    // per trial (bound, empirical)
  std::vector<CurvePoint> crlb_vs_rmse_sources;
};

struct PositionErrors {
  double rmse_nodes = 0.0;
  double rmse_sources = 0.0;
};

/// Per-class RMSE after aligning the whole estimated geometry onto the truth.
inline PositionErrors position_errors(const Geometry& estimate, const Geometry& truth) {
  const auto est = estimate.all_positions();
  const auto ref = truth.all_positions();
  const auto aligned = align(est, ref, /*allow_reflection=*/true).aligned;
  double sq_nodes = 0.0;
  double sq_sources = 0.0;
  for (std::size_t i = 0; i < aligned.size(); ++i) {
    const double e = (aligned[i] - ref[i]).squaredNorm();
    (i < truth.node_count() ? sq_nodes : sq_sources) += e;
  }
  return {std::sqrt(sq_nodes / static_cast<double>(std::max<std::size_t>(1, truth.node_count()))),
          std::sqrt(sq_sources / static_cast<double>(std::max<std::size_t>(1, truth.source_count())))};
}

/// Largest |d_hat - d_true| over valid entries of the listed sources.
inline double max_observation_error(const Geometry& truth, const ObservationSet& obs,
                                    std::span<const std::size_t> source_ids) {
  double worst = 0.0;
  for (const std::size_t k : source_ids) {
    for (std::size_t n = 0; n < obs.node_count(); ++n) {
      if (!obs.valid(n, k)) continue;
      worst = std::max(worst, std::abs(obs.distance(n, k) - distance(truth.nodes[n], truth.sources[k])));
    }
  }
  return worst;
}

namespace detail {

struct RunSpec {
  std::string variant;
  std::size_t iterations;
  std::size_t annealing;
};

inline std::vector<RunSpec> run_specs(const MonteCarloConfig& config) {
  std::vector<RunSpec> specs;
  for (const Variant v : config.variants) {
    switch (v) {
      case Variant::with_annealing:
        specs.push_back({"with_annealing", config.garde.num_iterations, config.garde.num_annealing});
        break;
      case Variant::without_annealing:
        specs.push_back({"without_annealing", config.garde.num_iterations, 0});
        break;
      case Variant::iteration_sweep:
        for (const std::size_t it : config.sweep_iterations) specs.push_back({"sweep", it, 0});
        for (const std::size_t it : config.sweep_iterations) {
          specs.push_back({"sweep_annealed", it, config.garde.num_annealing});
        }
        break;
    }
  }
  return specs;
}

inline std::vector<TrialRow> run_trial(const MonteCarloConfig& config, const std::vector<RunSpec>& specs,
                                       std::size_t trial) {
  std::vector<TrialRow> rows;
  Scenario scenario = config.scenario;
  scenario.rng_seed = derive_seed(config.seed, 4 * trial);
  const std::uint64_t noise_seed = derive_seed(config.seed, 4 * trial + 1);
  const std::uint64_t garde_seed = derive_seed(config.seed, 4 * trial + 2);

  Geometry truth;
  ObservationSet obs;
  std::string setup_error;
  try {
    truth = generate_scenario(scenario);
    obs = synthesize_observations(truth, config.noise, noise_seed);
  } catch (const Error& e) {
    setup_error = std::string("setup: ") + e.what();
  }

  for (const auto& spec : specs) {
    TrialRow row;
    row.trial = trial;
    row.variant = spec.variant;
    row.iterations = spec.iterations;
    row.annealing = spec.annealing;
    if (!setup_error.empty()) {
      row.error = setup_error;
      rows.push_back(row);
      continue;
    }
    try {
      GardeConfig garde = config.garde;
      garde.num_iterations = spec.iterations;
      garde.num_annealing = spec.annealing;
      garde.rng_seed = garde_seed;
      const auto result = run(obs, garde);

      row.calibration_error_nodes = calibration_error(result.geometry.nodes, truth.nodes);
      row.calibration_error_sources = calibration_error(result.geometry.sources, truth.sources);
      row.calibration_error_geometry = calibration_error(result.geometry, truth);
      std::vector<std::size_t> all(obs.source_count());
      for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
      row.max_error_full = max_observation_error(truth, obs, all);
      row.max_error_subset = max_observation_error(truth, obs, result.selected_sources);
      const auto errors = position_errors(result.geometry, truth);
      row.rmse_nodes = errors.rmse_nodes;
      row.rmse_sources = errors.rmse_sources;
      row.sigma_crlb = effective_sigma(truth, obs, config.noise);
      const auto bounds = crlb_report(truth, row.sigma_crlb, &obs);
      row.crlb_nodes = bounds.nodes.rms_bound();
      row.crlb_sources = bounds.sources.rms_bound();
      row.fit_score = result.fit_score;
      row.selected_count = result.selected_sources.size();
      row.ok = true;
    } catch (const Error& e) {
      row.error = e.what();
    }
    rows.push_back(row);
  }
  return rows;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

inline std::vector<CurvePoint> empirical_cdf(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  std::vector<CurvePoint> out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out.push_back({values[i], static_cast<double>(i + 1) / static_cast<double>(values.size())});
  }
  return out;
}

}  // namespace detail

inline VariantSummary summarize(const std::vector<TrialRow>& rows, const std::string& variant, std::size_t iterations,
                                std::size_t annealing) {
  VariantSummary s{variant, iterations, annealing};
  std::vector<double> errors;
  double sum_src = 0.0;
  double sq_nodes = 0.0;
  double sq_sources = 0.0;
  double sq_crlb_nodes = 0.0;
  double sq_crlb_sources = 0.0;
  std::size_t below = 0;
  for (const auto& r : rows) {
    if (r.variant != variant || r.iterations != iterations || r.annealing != annealing) continue;
    if (!r.ok) {
      ++s.failed;
      continue;
    }
    ++s.ok;
    errors.push_back(r.calibration_error_nodes);
    sum_src += r.calibration_error_sources;
    sq_nodes += r.rmse_nodes * r.rmse_nodes;
    sq_sources += r.rmse_sources * r.rmse_sources;
    sq_crlb_nodes += r.crlb_nodes * r.crlb_nodes;
    sq_crlb_sources += r.crlb_sources * r.crlb_sources;
    if (r.max_error_subset < r.max_error_full) ++below;
  }
  if (s.ok == 0) return s;
  const auto count = static_cast<double>(s.ok);
  double sum = 0.0;
  for (const double e : errors) sum += e;
  s.mean_calibration_error = sum / count;
  s.median_calibration_error = detail::median(errors);
  s.max_calibration_error = *std::max_element(errors.begin(), errors.end());
  s.mean_calibration_error_sources = sum_src / count;
  s.rmse_nodes = std::sqrt(sq_nodes / count);
  s.rmse_sources = std::sqrt(sq_sources / count);
  s.crlb_nodes = std::sqrt(sq_crlb_nodes / count);
  s.crlb_sources = std::sqrt(sq_crlb_sources / count);
  s.subset_below_full_fraction = static_cast<double>(below) / count;
  return s;
}

/// Runs every trial, optionally on several threads. Results depend only on
/// the configuration: each trial draws from its own derived seeds and rows
/// are stored by trial index.
inline ExperimentTable run_montecarlo(const MonteCarloConfig& config) {
  if (config.trials == 0) throw DataError("trials must be at least 1");
  config.garde.validate();
  config.noise.validate();
  const auto specs = detail::run_specs(config);
  if (specs.empty()) throw DataError("no experiment variants selected");

  std::vector<std::vector<TrialRow>> per_trial(config.trials);
  const unsigned threads = std::max(1u, std::min<unsigned>(config.threads, static_cast<unsigned>(config.trials)));
  if (threads == 1) {
    for (std::size_t t = 0; t < config.trials; ++t) per_trial[t] = detail::run_trial(config, specs, t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) {
      pool.emplace_back([&] {
        for (std::size_t t = next++; t < config.trials; t = next++) per_trial[t] = detail::run_trial(config, specs, t);
      });
    }
    for (auto& th : pool) th.join();
  }

  ExperimentTable table;
  for (auto& rows : per_trial) {
    const bool any_failed = std::any_of(rows.begin(), rows.end(), [](const TrialRow& r) { return !r.ok; });
    if (any_failed) ++table.failed_trials;
    table.rows.insert(table.rows.end(), rows.begin(), rows.end());
  }

  // Summaries in run-spec order.
  for (const auto& spec : specs) {
    table.summaries.push_back(summarize(table.rows, spec.variant, spec.iterations, spec.annealing));
  }

  // Outlier CDFs and bound comparison come from the first non-sweep variant.
  const auto primary = std::find_if(specs.begin(), specs.end(), [](const detail::RunSpec& s) {
    return s.variant == "with_annealing" || s.variant == "without_annealing";
  });
  if (primary != specs.end()) {
    std::vector<double> full;
    std::vector<double> subset;
    for (const auto& r : table.rows) {
      if (!r.ok || r.variant != primary->variant) continue;
      full.push_back(r.max_error_full);
      subset.push_back(r.max_error_subset);
      table.crlb_vs_rmse_nodes.push_back({r.crlb_nodes, r.rmse_nodes});
      table.crlb_vs_rmse_sources.push_back({r.crlb_sources, r.rmse_sources});
    }
    table.cdf_full = detail::empirical_cdf(full);
    table.cdf_subset = detail::empirical_cdf(subset);
  }
  for (const auto& s : table.summaries) {
    if (s.ok == 0) continue;
    if (s.variant == "sweep") table.sweep_plain.push_back({static_cast<double>(s.iterations), s.mean_calibration_error});
    if (s.variant == "sweep_annealed") {
      table.sweep_annealed.push_back({static_cast<double>(s.iterations), s.mean_calibration_error});
    }
  }
  return table;
}

}  // namespace garde
