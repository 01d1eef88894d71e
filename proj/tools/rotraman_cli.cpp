// Command-line front end: scenario simulation, validity reports, preset
// listing. Deterministic output goes to stdout and files; progress and
// warnings go to stderr.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "rotraman/scenario.hpp"
#include "rotraman/version.hpp"

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw rotraman::ScenarioError("cannot read config file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// A config argument is either a built-in preset name or a JSON file path.
rotraman::Scenario load(const std::string& config) {
  if (rotraman::is_preset(config)) return rotraman::preset(config);
  return rotraman::parse_scenario(slurp(config));
}

struct Overrides {
  std::optional<std::string> backend;
  std::optional<std::uint64_t> seed;
  std::optional<int> trajectories;
  std::optional<int> jmax;
  std::optional<double> tmax;
  std::optional<int> threads;
};

void apply(const Overrides& ov, rotraman::Scenario& s) {
  if (ov.backend) {
    if (*ov.backend == "lindblad")
      s.backend = rotraman::Backend::lindblad;
    else if (*ov.backend == "trajectories")
      s.backend = rotraman::Backend::trajectories;
    else if (*ov.backend == "both")
      s.backend = rotraman::Backend::both;
    else
      throw rotraman::ScenarioError(
          "--backend: must be \"lindblad\", \"trajectories\", or \"both\"");
  }
  if (ov.seed) s.master_seed = *ov.seed;
  if (ov.trajectories) s.n_traj = *ov.trajectories;
  if (ov.jmax) s.j_max = *ov.jmax;
  if (ov.tmax) s.t_max = *ov.tmax;
  if (ov.threads) s.n_threads = *ov.threads;
  rotraman::validate_scenario(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rotraman: rotational Raman decoherence simulator"};
  app.set_version_flag("--version", std::string("rotraman ") + rotraman::kVersion);
  app.require_subcommand(1);

  std::string config;
  std::string out_dir = ".";
  Overrides ov;

  auto add_overrides = [&](CLI::App* cmd) {
    cmd->add_option("--backend", ov.backend,
                    "Override the backend (lindblad|trajectories|both)");
    cmd->add_option("--seed", ov.seed, "Override the master seed");
    cmd->add_option("--trajectories", ov.trajectories,
                    "Override the trajectory count");
    cmd->add_option("--jmax", ov.jmax, "Override the basis truncation");
    cmd->add_option("--tmax", ov.tmax, "Override the time horizon (units 1/B)");
    cmd->add_option("--threads", ov.threads, "Worker threads for the ensemble");
  };

  auto* simulate = app.add_subcommand("simulate", "Run a scenario");
  simulate->add_option("config", config, "Preset name or JSON config path")
      ->required();
  simulate->add_option("--out-dir", out_dir, "Output directory");
  add_overrides(simulate);

  auto* validity = app.add_subcommand(
      "validity", "Print the vibrational validity report for a scenario");
  validity->add_option("config", config, "Preset name or JSON config path")
      ->required();
  add_overrides(validity);

  auto* presets = app.add_subcommand("presets", "List built-in presets");

  CLI11_PARSE(app, argc, argv);

  try {
    if (presets->parsed()) {
      for (const auto& name : rotraman::preset_names())
        std::cout << name << "\n";
      return 0;
    }

    rotraman::Scenario s = load(config);
    apply(ov, s);

    if (validity->parsed()) {
      std::cout << rotraman::validity_block_json(s);
      return 0;
    }

    const auto outcome = rotraman::run_scenario(s, out_dir);
    for (const auto& f : outcome.files_written)
      std::cout << f << "\n";
    return 0;
  } catch (const rotraman::ScenarioError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const rotraman::NumericalAbort& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
