// garde: command-line front end.
//
// Exit status: 0 success, 2 usage error, 3 data or schema error,
// 4 numerical failure. Errors are reported as one line on stderr:
//   error: <usage|data|numerical>: <message>

#include "garde/garde.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

namespace {

namespace fs = std::filesystem;
using namespace garde;

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

int fail(const char* kind, const std::string& message, int code) {
  std::cerr << "error: " << kind << ": " << one_line(message) << "\n";
  return code;
}

unsigned thread_count() {
  const char* env = std::getenv("GARDE_THREADS");
  if (env == nullptr || *env == '\0') return std::max(1u, std::thread::hardware_concurrency());
  const std::string text(env);
  if (text.find_first_not_of("0123456789") != std::string::npos) {
    throw UsageError("GARDE_THREADS must be a positive integer, got '" + text + "'");
  }
  const unsigned long value = std::stoul(text);
  if (value == 0 || value > 4096) throw UsageError("GARDE_THREADS must be between 1 and 4096");
  return static_cast<unsigned>(value);
}

struct SimulateArgs {
  std::string config, noise, out_obs, out_truth;
  std::optional<std::uint64_t> seed;
};

int simulate(const SimulateArgs& a) {
  Scenario scenario = io::scenario_from_json(io::load_json(a.config), a.config);
  const NoiseModel noise = io::noise_from_json(io::load_json(a.noise), a.noise);
  const std::uint64_t seed = a.seed.value_or(scenario.rng_seed);
  scenario.rng_seed = derive_seed(seed, 0);
  const Geometry truth = generate_scenario(scenario);
  const ObservationSet obs = synthesize_observations(truth, noise, derive_seed(seed, 1));
  io::save_observations(a.out_obs, obs);
  io::save_geometry(a.out_truth, truth);
  return 0;
}

struct CalibrateArgs {
  std::string obs, out, config;
  std::optional<std::size_t> iterations, annealing;
  std::optional<std::uint64_t> seed;
};

int calibrate(const CalibrateArgs& a) {
  GardeConfig config;
  if (!a.config.empty()) config = io::garde_config_from_json(io::load_json(a.config), a.config);
  if (a.iterations) config.num_iterations = *a.iterations;
  if (a.annealing) config.num_annealing = *a.annealing;
  if (a.seed) config.rng_seed = *a.seed;
  config.validate();
  const ObservationSet obs = io::load_observations(a.obs);
  obs.check_solvable();
  const CalibrationResult result = run(obs, config);
  io::write_text(a.out, io::dump(io::result_to_json(result)));
  return 0;
}

struct CrlbArgs {
  std::string geometry, out, obs;
  double sigma = 0.0;
};

int crlb(const CrlbArgs& a) {
  if (!(a.sigma > 0.0) || !std::isfinite(a.sigma)) throw UsageError("--sigma must be positive and finite");
  const Geometry geometry = io::load_geometry(a.geometry);
  std::optional<ObservationSet> obs;
  if (!a.obs.empty()) obs = io::load_observations(a.obs);
  const auto reports = crlb_report(geometry, a.sigma, obs ? &*obs : nullptr);
  io::write_text(a.out, io::crlb_to_csv(reports));
  return 0;
}

struct MonteCarloArgs {
  std::string config, out_dir;
  bool force = false;
};

int montecarlo(const MonteCarloArgs& a) {
  MonteCarloConfig config = io::montecarlo_config_from_json(io::load_json(a.config), a.config);
  config.threads = thread_count();
  const fs::path dir(a.out_dir);
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw UsageError("--out-dir " + a.out_dir + " exists and is not a directory");
    if (!fs::is_empty(dir) && !a.force) {
      throw UsageError("--out-dir " + a.out_dir + " is not empty; pass --force to overwrite");
    }
  }
  const ExperimentTable table = run_montecarlo(config);
  io::write_experiment(dir, table, config);
  return 0;
}

struct EvalArgs {
  std::string est, truth, target = "nodes";
  bool no_reflection = false;
};

int eval(const EvalArgs& a) {
  const Geometry est = io::load_geometry(a.est);
  const Geometry truth = io::load_geometry(a.truth);
  const bool reflect = !a.no_reflection;
  double error = 0.0;
  if (a.target == "nodes") {
    error = calibration_error(est.nodes, truth.nodes, reflect);
  } else if (a.target == "sources") {
    error = calibration_error(est.sources, truth.sources, reflect);
  } else {
    error = calibration_error(est, truth, reflect);
  }
  std::cout << io::format_double(error) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Geometry calibration of acoustic sensor networks from node-to-source distances"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Draw a random scenario and noisy distance observations");
  sim_cmd->add_option("--config", sim.config, "Scenario JSON")->required()->check(CLI::ExistingFile);
  sim_cmd->add_option("--noise", sim.noise, "Noise model JSON")->required()->check(CLI::ExistingFile);
  sim_cmd->add_option("--out-obs", sim.out_obs, "Output observations CSV")->required();
  sim_cmd->add_option("--out-truth", sim.out_truth, "Output ground-truth geometry JSON")->required();
  sim_cmd->add_option("--seed", sim.seed, "Master seed (default: scenario rng_seed)");

  CalibrateArgs cal;
  auto* cal_cmd = app.add_subcommand("calibrate", "Estimate node and source positions from observations");
  cal_cmd->add_option("--obs", cal.obs, "Observations CSV")->required()->check(CLI::ExistingFile);
  cal_cmd->add_option("--out", cal.out, "Output calibration result JSON")->required();
  cal_cmd->add_option("--config", cal.config, "Optional algorithm configuration JSON")->check(CLI::ExistingFile);
  cal_cmd->add_option("--iterations", cal.iterations, "Passes per iterate call (default 30)");
  cal_cmd->add_option("--annealing", cal.annealing, "Annealing rounds (default 30)");
  cal_cmd->add_option("--seed", cal.seed, "Annealing seed (default 0)");

  CrlbArgs cr;
  auto* cr_cmd = app.add_subcommand("crlb", "Per-position Cramer-Rao bounds for a geometry");
  cr_cmd->add_option("--geometry", cr.geometry, "Geometry JSON")->required()->check(CLI::ExistingFile);
  cr_cmd->add_option("--sigma", cr.sigma, "Distance error standard deviation in meters")->required();
  cr_cmd->add_option("--out", cr.out, "Output CSV")->required();
  cr_cmd->add_option("--obs", cr.obs, "Optional observations CSV; only valid pairs contribute")
      ->check(CLI::ExistingFile);

  MonteCarloArgs mc;
  auto* mc_cmd = app.add_subcommand("montecarlo", "Run a seeded Monte-Carlo experiment");
  mc_cmd->add_option("--config", mc.config, "Experiment JSON")->required()->check(CLI::ExistingFile);
  mc_cmd->add_option("--out-dir", mc.out_dir, "Output directory")->required();
  mc_cmd->add_flag("--force", mc.force, "Overwrite files in a non-empty output directory");

  EvalArgs ev;
  auto* ev_cmd = app.add_subcommand("eval", "Print the calibration error of an estimate against the truth");
  ev_cmd->add_option("--est", ev.est, "Estimated geometry or calibration result JSON")
      ->required()
      ->check(CLI::ExistingFile);
  ev_cmd->add_option("--truth", ev.truth, "Ground-truth geometry JSON")->required()->check(CLI::ExistingFile);
  ev_cmd->add_flag("--no-reflection", ev.no_reflection, "Disallow mirroring in the rigid fit");
  ev_cmd->add_option("--target", ev.target, "Positions compared: nodes, sources or geometry (default nodes)")
      ->check(CLI::IsMember({"nodes", "sources", "geometry"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), kExitUsage);
  }

  try {
    if (*sim_cmd) return simulate(sim);
    if (*cal_cmd) return calibrate(cal);
    if (*cr_cmd) return crlb(cr);
    if (*mc_cmd) return montecarlo(mc);
    if (*ev_cmd) return eval(ev);
  } catch (const UsageError& e) {
    return fail("usage", e.what(), kExitUsage);
  } catch (const DataError& e) {
    return fail("data", e.what(), kExitData);
  } catch (const NumericalError& e) {
    return fail("numerical", e.what(), kExitNumerical);
  } catch (const std::filesystem::filesystem_error& e) {
    return fail("data", e.what(), kExitData);
  }
  return kExitUsage;
}
