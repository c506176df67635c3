#pragma once

// File formats.
//
//   geometry JSON     {"nodes": [{"id", "x", "y"}, ...], "sources": [...]}
//   result JSON       geometry plus "selected_sources", "fit_score", "trace"
//   observations CSV  node_id,source_id,distance_m   (absent pairs are missing)
//   CRLB CSV          kind,index,gamma_xx,gamma_yy,gamma_xy,rmse_bound_m
//
// CSV floats are printed with 17 significant digits. JSON floats use the
// shortest representation that parses back to the same double. Loaders
// throw DataError with the path of the offending field.

#include "garde/core.hpp"
#include "garde/crlb.hpp"
#include "garde/engine.hpp"
#include "garde/simulator.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace garde::io {

using Json = nlohmann::ordered_json;

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string() + ": cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(path.string() + ": cannot open for writing");
  out << text;
  if (!out) throw DataError(path.string() + ": write failed");
}

inline Json parse_json(const std::string& text, const std::string& where) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw DataError(where + ": invalid JSON (" + e.what() + ")");
  }
}

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Field access with path-qualified errors.

class Fields {
 public:
  Fields(const Json& object, std::string path) : object_(object), path_(std::move(path)) {
    if (!object_.is_object()) throw DataError(path_ + ": expected an object");
  }

  bool has(const std::string& key) const {
    used_.insert(key);
    return object_.contains(key) && !object_.at(key).is_null();
  }

  const Json& at(const std::string& key) const {
    used_.insert(key);
    if (!object_.contains(key)) throw DataError(field(key) + ": missing required field");
    return object_.at(key);
  }

  double number(const std::string& key) const {
    const Json& v = at(key);
    if (!v.is_number()) throw DataError(field(key) + ": expected a number");
    return v.get<double>();
  }

  double number_or(const std::string& key, double fallback) const {
    used_.insert(key);
    return has(key) ? number(key) : fallback;
  }

  std::uint64_t count(const std::string& key) const {
    const Json& v = at(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
    throw DataError(field(key) + ": expected a nonnegative integer");
  }

  std::uint64_t count_or(const std::string& key, std::uint64_t fallback) const {
    used_.insert(key);
    return has(key) ? count(key) : fallback;
  }

  std::string text(const std::string& key) const {
    const Json& v = at(key);
    if (!v.is_string()) throw DataError(field(key) + ": expected a string");
    return v.get<std::string>();
  }

  /// Rejects keys that were never looked up.
  void reject_unknown() const {
    for (const auto& item : object_.items()) {
      if (!used_.count(item.key())) throw DataError(field(item.key()) + ": unknown field");
    }
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  const Json& object_;
  std::string path_;
  mutable std::set<std::string> used_;
};

// ---------------------------------------------------------------------------
// Geometry and calibration results.

inline Json points_to_json(const std::vector<Point2>& points) {
  Json arr = Json::array();
  for (std::size_t i = 0; i < points.size(); ++i) arr.push_back({{"id", i}, {"x", points[i].x()}, {"y", points[i].y()}});
  return arr;
}

inline Json geometry_to_json(const Geometry& g) {
  return Json{{"nodes", points_to_json(g.nodes)}, {"sources", points_to_json(g.sources)}};
}

inline std::vector<Point2> points_from_json(const Json& arr, const std::string& path) {
  if (!arr.is_array()) throw DataError(path + ": expected an array");
  std::vector<Point2> out(arr.size());
  std::vector<bool> seen(arr.size(), false);
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const Fields f(arr[i], path + "[" + std::to_string(i) + "]");
    const std::uint64_t id = f.count("id");
    if (id >= arr.size()) throw DataError(f.field("id") + ": id " + std::to_string(id) + " out of range");
    if (seen[id]) throw DataError(f.field("id") + ": duplicate id " + std::to_string(id));
    seen[id] = true;
    const Point2 p(f.number("x"), f.number("y"));
    if (!is_finite(p)) throw DataError(path + "[" + std::to_string(i) + "]: coordinates must be finite");
    out[id] = p;
    f.reject_unknown();
  }
  return out;
}

/// Accepts any object with "nodes" and "sources"; other top-level keys (such
/// as those of a calibration result) are ignored.
inline Geometry geometry_from_json(const Json& j, const std::string& where = "geometry") {
  const Fields f(j, where);
  return Geometry{points_from_json(f.at("nodes"), f.field("nodes")), points_from_json(f.at("sources"), f.field("sources"))};
}

inline Geometry load_geometry(const std::filesystem::path& path) {
  return geometry_from_json(parse_json(read_text(path), path.string()), path.string());
}

inline void save_geometry(const std::filesystem::path& path, const Geometry& g) {
  write_text(path, dump(geometry_to_json(g)));
}

inline Json result_to_json(const CalibrationResult& r) {
  Json j = geometry_to_json(r.geometry);
  j["selected_sources"] = r.selected_sources;
  j["fit_score"] = r.fit_score;
  Json trace = Json::array();
  for (const auto& t : r.trace) {
    Json rec{{"round", t.round}, {"fit_score", nullptr}, {"best_fit_score", t.best_fit_score}, {"mu", t.mu},
             {"failed", t.failed}};
    if (!t.failed) rec["fit_score"] = t.fit_score;
    trace.push_back(rec);
  }
  j["trace"] = trace;
  return j;
}

// ---------------------------------------------------------------------------
// Observations CSV.

inline std::string observations_to_csv(const ObservationSet& obs) {
  std::string out = "node_id,source_id,distance_m\n";
  for (std::size_t n = 0; n < obs.node_count(); ++n) {
    for (std::size_t k = 0; k < obs.source_count(); ++k) {
      if (!obs.valid(n, k)) continue;
      out += std::to_string(n) + "," + std::to_string(k) + "," + format_double(obs.distance(n, k)) + "\n";
    }
  }
  return out;
}

namespace detail {

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

inline std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline std::uint64_t parse_index(const std::string& text, const std::string& where) {
  const std::string t = trim(text);
  if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos) {
    throw DataError(where + ": expected a nonnegative integer, got '" + t + "'");
  }
  try {
    return std::stoull(t);
  } catch (const std::exception&) {
    throw DataError(where + ": integer out of range");
  }
}

inline double parse_number(const std::string& text, const std::string& where) {
  const std::string t = trim(text);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    throw DataError(where + ": expected a number, got '" + t + "'");
  }
  if (used != t.size()) throw DataError(where + ": expected a number, got '" + t + "'");
  return v;
}

}  // namespace detail

/// Node and source counts are one more than the largest id present.
inline ObservationSet observations_from_csv(const std::string& text, const std::string& where = "observations") {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != "node_id,source_id,distance_m") {
    throw DataError(where + ":1: header must be 'node_id,source_id,distance_m'");
  }
  struct Entry {
    std::uint64_t n, k;
    double d;
  };
  std::vector<Entry> entries;
  std::uint64_t max_n = 0, max_k = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const std::string at = where + ":" + std::to_string(line_no);
    const auto cells = detail::split(line, ',');
    if (cells.size() != 3) throw DataError(at + ": expected 3 columns, got " + std::to_string(cells.size()));
    const Entry e{detail::parse_index(cells[0], at + ": node_id"), detail::parse_index(cells[1], at + ": source_id"),
                  detail::parse_number(cells[2], at + ": distance_m")};
    if (!std::isfinite(e.d) || e.d <= 0.0) throw DataError(at + ": distance_m must be finite and positive");
    max_n = std::max(max_n, e.n);
    max_k = std::max(max_k, e.k);
    entries.push_back(e);
  }
  if (entries.empty()) throw DataError(where + ": no observations");
  if (max_n >= 100000 || max_k >= 10000000) throw DataError(where + ": ids are implausibly large");

  const auto rows = static_cast<Eigen::Index>(max_n + 1);
  const auto cols = static_cast<Eigen::Index>(max_k + 1);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(rows, cols);
  MaskMatrix valid = MaskMatrix::Constant(rows, cols, false);
  for (const auto& e : entries) {
    const auto r = static_cast<Eigen::Index>(e.n);
    const auto c = static_cast<Eigen::Index>(e.k);
    if (valid(r, c)) {
      throw DataError(where + ": duplicate observation for node " + std::to_string(e.n) + ", source " +
                      std::to_string(e.k));
    }
    valid(r, c) = true;
    d(r, c) = e.d;
  }
  return ObservationSet(std::move(d), std::move(valid));
}

inline ObservationSet load_observations(const std::filesystem::path& path) {
  return observations_from_csv(read_text(path), path.string());
}

inline void save_observations(const std::filesystem::path& path, const ObservationSet& obs) {
  write_text(path, observations_to_csv(obs));
}

// ---------------------------------------------------------------------------
// CRLB CSV.

inline std::string crlb_to_csv(const CrlbReports& reports) {
  std::string out = "kind,index,gamma_xx,gamma_yy,gamma_xy,rmse_bound_m\n";
  auto emit = [&](const char* kind, const CrlbReport& report) {
    for (const auto& e : report.per_position) {
      out += std::string(kind) + "," + std::to_string(e.index) + ",";
      if (e.gammas) {
        out += format_double(e.gammas->xx) + "," + format_double(e.gammas->yy) + "," + format_double(e.gammas->xy);
      } else {
        out += "nan,nan,nan";
      }
      out += ",";
      out += e.rmse_bound ? format_double(*e.rmse_bound) : "error:" + e.error;
      out += "\n";
    }
  };
  emit("source", reports.sources);
  emit("node", reports.nodes);
  return out;
}

// ---------------------------------------------------------------------------
// Configuration files.

inline GardeConfig garde_config_from_json(const Json& j, const std::string& path = "garde") {
  const Fields f(j, path);
  GardeConfig c;
  c.alpha = f.number_or("alpha", c.alpha);
  c.beta = f.number_or("beta", c.beta);
  c.num_iterations = f.count_or("num_iterations", c.num_iterations);
  c.num_annealing = f.count_or("num_annealing", c.num_annealing);
  c.mu0 = f.number_or("mu0", c.mu0);
  c.mu_decay = f.number_or("mu_decay", c.mu_decay);
  c.fit_fraction = f.number_or("fit_fraction", c.fit_fraction);
  c.min_fit_sources = f.count_or("min_fit_sources", c.min_fit_sources);
  c.rng_seed = f.count_or("rng_seed", c.rng_seed);
  f.reject_unknown();
  try {
    c.validate();
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
  return c;
}

inline Json garde_config_to_json(const GardeConfig& c) {
  return Json{{"alpha", c.alpha},
              {"beta", c.beta},
              {"num_iterations", c.num_iterations},
              {"num_annealing", c.num_annealing},
              {"mu0", c.mu0},
              {"mu_decay", c.mu_decay},
              {"fit_fraction", c.fit_fraction},
              {"min_fit_sources", c.min_fit_sources},
              {"rng_seed", c.rng_seed}};
}

/// Room size and counts are required; spacing fields default.
inline Scenario scenario_from_json(const Json& j, const std::string& path = "scenario") {
  const Fields f(j, path);
  Scenario s;
  const Fields room(f.at("room"), f.field("room"));
  s.room_width = room.number("width");
  s.room_height = room.number("height");
  room.reject_unknown();
  s.node_count = f.count("node_count");
  s.source_count = f.count("source_count");
  s.margin = f.number_or("margin", s.margin);
  s.min_separation = f.number_or("min_separation", s.min_separation);
  s.min_node_separation = f.number_or("min_node_separation", s.min_node_separation);
  s.rng_seed = f.count_or("rng_seed", s.rng_seed);
  f.reject_unknown();
  if (!(s.room_width > 0.0) || !(s.room_height > 0.0)) throw DataError(f.field("room") + ": dimensions must be positive");
  if (s.node_count < 3) throw DataError(f.field("node_count") + ": at least 3 nodes are required");
  if (s.source_count < 3) throw DataError(f.field("source_count") + ": at least 3 sources are required");
  if (!(s.margin >= 0.0)) throw DataError(f.field("margin") + ": must be nonnegative");
  if (!(s.min_separation >= 0.0)) throw DataError(f.field("min_separation") + ": must be nonnegative");
  if (!(s.min_node_separation >= 0.0)) throw DataError(f.field("min_node_separation") + ": must be nonnegative");
  return s;
}

inline Json scenario_to_json(const Scenario& s) {
  return Json{{"room", {{"width", s.room_width}, {"height", s.room_height}}},
              {"node_count", s.node_count},
              {"source_count", s.source_count},
              {"margin", s.margin},
              {"min_separation", s.min_separation},
              {"min_node_separation", s.min_node_separation},
              {"rng_seed", s.rng_seed}};
}

inline NoiseKind noise_kind_from_string(const std::string& name, const std::string& where) {
  if (name == "gaussian") return NoiseKind::gaussian;
  if (name == "heteroscedastic") return NoiseKind::heteroscedastic;
  if (name == "outlier") return NoiseKind::outlier;
  throw DataError(where + ": unknown noise kind '" + name + "' (gaussian, heteroscedastic, outlier)");
}

/// A missing or null oor_threshold means no distance is flagged.
inline NoiseModel noise_from_json(const Json& j, const std::string& path = "noise") {
  const Fields f(j, path);
  NoiseModel m;
  m.kind = noise_kind_from_string(f.text("kind"), f.field("kind"));
  m.sigma_d = f.number("sigma_d");
  m.slope = f.number_or("slope", m.slope);
  m.outlier_rate = f.number_or("outlier_rate", m.outlier_rate);
  m.outlier_shift = f.number_or("outlier_shift", m.outlier_shift);
  m.oor_threshold = f.number_or("oor_threshold", m.oor_threshold);
  f.reject_unknown();
  try {
    m.validate();
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
  return m;
}

inline Json noise_to_json(const NoiseModel& m) {
  Json j{{"kind", to_string(m.kind)},
         {"sigma_d", m.sigma_d},
         {"slope", m.slope},
         {"outlier_rate", m.outlier_rate},
         {"outlier_shift", m.outlier_shift},
         {"oor_threshold", nullptr}};
  if (std::isfinite(m.oor_threshold)) j["oor_threshold"] = m.oor_threshold;
  return j;
}

inline Variant variant_from_string(const std::string& name, const std::string& where) {
  if (name == "with_annealing") return Variant::with_annealing;
  if (name == "without_annealing") return Variant::without_annealing;
  if (name == "iteration_sweep") return Variant::iteration_sweep;
  throw DataError(where + ": unknown variant '" + name + "' (with_annealing, without_annealing, iteration_sweep)");
}

inline MonteCarloConfig montecarlo_config_from_json(const Json& j, const std::string& path = "montecarlo") {
  const Fields f(j, path);
  MonteCarloConfig c;
  c.scenario = scenario_from_json(f.at("scenario"), f.field("scenario"));
  c.noise = noise_from_json(f.at("noise"), f.field("noise"));
  if (f.has("garde")) c.garde = garde_config_from_json(f.at("garde"), f.field("garde"));
  c.trials = f.count("trials");
  if (c.trials == 0) throw DataError(f.field("trials") + ": must be at least 1");
  c.seed = f.count("seed");
  if (f.has("variants")) {
    const Json& arr = f.at("variants");
    if (!arr.is_array() || arr.empty()) throw DataError(f.field("variants") + ": expected a non-empty array");
    c.variants.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string where = f.field("variants") + "[" + std::to_string(i) + "]";
      if (!arr[i].is_string()) throw DataError(where + ": expected a string");
      c.variants.push_back(variant_from_string(arr[i].get<std::string>(), where));
    }
  }
  if (f.has("sweep_iterations")) {
    const Json& arr = f.at("sweep_iterations");
    if (!arr.is_array() || arr.empty()) throw DataError(f.field("sweep_iterations") + ": expected a non-empty array");
    c.sweep_iterations.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      if (!arr[i].is_number_integer() || arr[i].get<std::int64_t>() < 0) {
        throw DataError(f.field("sweep_iterations") + "[" + std::to_string(i) + "]: expected a nonnegative integer");
      }
      c.sweep_iterations.push_back(arr[i].get<std::size_t>());
    }
  }
  f.reject_unknown();
  return c;
}

inline Json load_json(const std::filesystem::path& path) { return parse_json(read_text(path), path.string()); }

// ---------------------------------------------------------------------------
// Monte-Carlo outputs.

inline std::string experiment_to_csv(const ExperimentTable& table) {
  std::string out =
      "trial,variant,iterations,annealing,ok,error,calibration_error_nodes,calibration_error_sources,"
      "calibration_error_geometry,max_error_full,max_error_subset,rmse_nodes,rmse_sources,crlb_nodes,crlb_sources,"
      "sigma_crlb,fit_score,selected_count\n";
  for (const auto& r : table.rows) {
    std::string error = r.error;
    for (char& ch : error) {
      if (ch == ',' || ch == '\n' || ch == '"') ch = ';';
    }
    out += std::to_string(r.trial) + "," + r.variant + "," + std::to_string(r.iterations) + "," +
           std::to_string(r.annealing) + "," + (r.ok ? "1" : "0") + "," + error;
    for (const double v : {r.calibration_error_nodes, r.calibration_error_sources, r.calibration_error_geometry,
                           r.max_error_full, r.max_error_subset, r.rmse_nodes, r.rmse_sources, r.crlb_nodes,
                           r.crlb_sources, r.sigma_crlb, r.fit_score}) {
      out += "," + (r.ok ? format_double(v) : std::string("nan"));
    }
    out += "," + std::to_string(r.selected_count) + "\n";
  }
  return out;
}

inline Json summary_to_json(const ExperimentTable& table, const MonteCarloConfig& config) {
  // JSON has no NaN; empty variants report null statistics.
  auto num = [](double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); };
  Json variants = Json::array();
  for (const auto& s : table.summaries) {
    const bool any = s.ok > 0;
    variants.push_back({{"variant", s.variant},
                        {"iterations", s.iterations},
                        {"annealing", s.annealing},
                        {"ok", s.ok},
                        {"failed", s.failed},
                        {"mean_calibration_error", any ? num(s.mean_calibration_error) : Json(nullptr)},
                        {"median_calibration_error", any ? num(s.median_calibration_error) : Json(nullptr)},
                        {"max_calibration_error", any ? num(s.max_calibration_error) : Json(nullptr)},
                        {"mean_calibration_error_sources", any ? num(s.mean_calibration_error_sources) : Json(nullptr)},
                        {"rmse_nodes", any ? num(s.rmse_nodes) : Json(nullptr)},
                        {"rmse_sources", any ? num(s.rmse_sources) : Json(nullptr)},
                        {"crlb_nodes", any ? num(s.crlb_nodes) : Json(nullptr)},
                        {"crlb_sources", any ? num(s.crlb_sources) : Json(nullptr)},
                        {"subset_below_full_fraction", any ? num(s.subset_below_full_fraction) : Json(nullptr)}});
  }
  return Json{{"trials", config.trials},
              {"seed", config.seed},
              {"failed_trials", table.failed_trials},
              {"scenario", scenario_to_json(config.scenario)},
              {"noise", noise_to_json(config.noise)},
              {"garde", garde_config_to_json(config.garde)},
              {"variants", variants}};
}

inline std::string curve_to_csv(const std::vector<CurvePoint>& curve, const std::string& x_name,
                                const std::string& y_name) {
  std::string out = x_name + "," + y_name + "\n";
  for (const auto& p : curve) out += format_double(p.x) + "," + format_double(p.y) + "\n";
  return out;
}

/// Files written by write_experiment, in order.
inline const std::vector<std::string>& experiment_file_names() {
  static const std::vector<std::string> names{"experiment.csv",
                                              "summary.json",
                                              "cdf_max_error_full.csv",
                                              "cdf_max_error_subset.csv",
                                              "error_vs_iterations.csv",
                                              "error_vs_iterations_annealed.csv",
                                              "crlb_vs_rmse_nodes.csv",
                                              "crlb_vs_rmse_sources.csv"};
  return names;
}

inline void write_experiment(const std::filesystem::path& dir, const ExperimentTable& table,
                             const MonteCarloConfig& config) {
  std::filesystem::create_directories(dir);
  write_text(dir / "experiment.csv", experiment_to_csv(table));
  write_text(dir / "summary.json", dump(summary_to_json(table, config)));
  write_text(dir / "cdf_max_error_full.csv", curve_to_csv(table.cdf_full, "max_error_m", "cdf"));
  write_text(dir / "cdf_max_error_subset.csv", curve_to_csv(table.cdf_subset, "max_error_m", "cdf"));
  write_text(dir / "error_vs_iterations.csv",
             curve_to_csv(table.sweep_plain, "iterations", "mean_calibration_error_m"));
  write_text(dir / "error_vs_iterations_annealed.csv",
             curve_to_csv(table.sweep_annealed, "iterations", "mean_calibration_error_m"));
  write_text(dir / "crlb_vs_rmse_nodes.csv", curve_to_csv(table.crlb_vs_rmse_nodes, "crlb_m", "rmse_m"));
  write_text(dir / "crlb_vs_rmse_sources.csv", curve_to_csv(table.crlb_vs_rmse_sources, "crlb_m", "rmse_m"));
}

}  // namespace garde::io
