#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rotraman/common.hpp"
#include "rotraman/coupling.hpp"

namespace rotraman {

// Configuration or validation failure. The CLI maps this to exit code 2.
class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Backend { lindblad, trajectories, both };

enum class InitialKind { coherent, basis_state, amplitudes };

struct InitialState {
  InitialKind kind = InitialKind::coherent;
  int j = 0;
  double theta = 0.0;  // coherent only
  double phi = 0.0;    // coherent only
  int m = 0;           // basis_state only
  std::vector<cdouble> amps;  // amplitudes only, length (j_max+1)^2
};

// Vibrational ratios for the validity report; all three must come together.
struct VibRatios {
  double omega_nu_over_B = 0.0;
  double delta_over_B = 0.0;
  double eta = 0.0;
};

struct Tolerances {
  double rel_tol = 1e-9;    // ODE path
  double trace_tol = 1e-6;  // abort threshold on |trace - 1|
};

struct Scenario {
  std::string name = "custom";
  int j_max = 12;
  InitialState initial;
  FieldConfig field;
  double t_max = 20.0;
  int n_points = 2000;
  Backend backend = Backend::lindblad;
  int n_traj = 2000;
  std::uint64_t master_seed = 1;
  int n_threads = 1;
  double leakage_threshold = 1e-6;
  Tolerances tol;
  bool write_jump_log = false;
  std::optional<VibRatios> vib;
};

// Parses a JSON configuration document. Unknown keys, duplicate keys, and
// invariant violations throw ScenarioError with a path-qualified message.
Scenario parse_scenario(const std::string& text);

// Re-validates a scenario after programmatic edits (CLI flag overrides).
void validate_scenario(const Scenario& s);

// Built-in presets: "kerr-fig2", "kerr-fig2-unitary", "kerr-fig2-long".
std::vector<std::string> preset_names();
bool is_preset(const std::string& name);
Scenario preset(const std::string& name);

// Canonical JSON echo of a scenario (stable key order); embedded in the run
// summary so any run can be reproduced exactly.
std::string scenario_to_json(const Scenario& s);

// FNV-1a 64-bit hash of the canonical echo, printed as 16 hex digits.
std::string scenario_hash(const Scenario& s);

// Initial state vector on the basis implied by s.j_max (normalized).
Vec initial_vector(const Scenario& s);

struct RunOutcome {
  std::vector<std::string> files_written;
  std::string summary_json;
};

// Executes the scenario: runs the selected backend(s), writes the observable
// tables plus summary.json (and jumps.tsv when requested) under out_dir.
// Throws ScenarioError for invalid scenarios; NumericalAbort still writes a
// summary.json carrying a machine-readable error record before propagating.
RunOutcome run_scenario(const Scenario& s, const std::string& out_dir);

// The validity block alone (summary-shaped JSON fragment, or a "not
// evaluated" stub when no ratios are present).
std::string validity_block_json(const Scenario& s);

}  // namespace rotraman
