#include "rotraman/scenario.hpp"

#include <cmath>
#include <filesystem>
#include <iostream>
#include <set>
#include <vector>

#include <json.hpp>

#include "rotraman/angmom.hpp"
#include "rotraman/lindblad.hpp"
#include "rotraman/tableio.hpp"
#include "rotraman/trajectories.hpp"
#include "rotraman/version.hpp"
#include "rotraman/vibvalidity.hpp"

namespace rotraman {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr double kPi = 3.14159265358979323846;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ScenarioError(path + ": " + what);
}

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) fail(path.empty() ? it.key() : path + "." + it.key(),
                  "unknown key");
  }
}

double get_num(const json& obj, const std::string& path, const char* key,
               double def) {
  if (!obj.contains(key)) return def;
  const auto& v = obj.at(key);
  if (!v.is_number()) fail(path + "." + key, "expected a number");
  return v.get<double>();
}

int get_int(const json& obj, const std::string& path, const char* key,
            int def) {
  if (!obj.contains(key)) return def;
  const auto& v = obj.at(key);
  if (!v.is_number_integer()) fail(path + "." + key, "expected an integer");
  return v.get<int>();
}

bool get_bool(const json& obj, const std::string& path, const char* key,
              bool def) {
  if (!obj.contains(key)) return def;
  const auto& v = obj.at(key);
  if (!v.is_boolean()) fail(path + "." + key, "expected a boolean");
  return v.get<bool>();
}

std::string get_str(const json& obj, const std::string& path, const char* key,
                    const std::string& def) {
  if (!obj.contains(key)) return def;
  const auto& v = obj.at(key);
  if (!v.is_string()) fail(path + "." + key, "expected a string");
  return v.get<std::string>();
}

// Complex values are written as [re, im]; a bare number means purely real.
cdouble get_complex(const json& v, const std::string& path) {
  if (v.is_number()) return cdouble(v.get<double>(), 0.0);
  if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number())
    return cdouble(v[0].get<double>(), v[1].get<double>());
  fail(path, "expected a number or [re, im] pair");
}

InitialState parse_initial(const json& obj) {
  InitialState ini;
  const std::string type = get_str(obj, "initial", "type", "coherent");
  if (type == "coherent") {
    check_keys(obj, "initial", {"type", "j", "theta", "phi"});
    ini.kind = InitialKind::coherent;
    ini.j = get_int(obj, "initial", "j", 0);
    ini.theta = get_num(obj, "initial", "theta", 0.0);
    ini.phi = get_num(obj, "initial", "phi", 0.0);
  } else if (type == "basis_state") {
    check_keys(obj, "initial", {"type", "j", "m"});
    ini.kind = InitialKind::basis_state;
    ini.j = get_int(obj, "initial", "j", 0);
    ini.m = get_int(obj, "initial", "m", 0);
  } else if (type == "amplitudes") {
    check_keys(obj, "initial", {"type", "amplitudes"});
    ini.kind = InitialKind::amplitudes;
    if (!obj.contains("amplitudes"))
      fail("initial.amplitudes", "missing required key");
    const auto& arr = obj.at("amplitudes");
    if (!arr.is_array()) fail("initial.amplitudes", "expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i)
      ini.amps.push_back(get_complex(
          arr[i], "initial.amplitudes[" + std::to_string(i) + "]"));
  } else {
    fail("initial.type",
         "must be \"coherent\", \"basis_state\", or \"amplitudes\"");
  }
  return ini;
}

FieldConfig parse_field(const json& obj) {
  FieldConfig f;
  check_keys(obj, "field",
             {"omega_R", "gamma_over_delta", "detuning_sign", "components"});
  f.omega_R = get_num(obj, "field", "omega_R", f.omega_R);
  f.gamma_over_delta =
      get_num(obj, "field", "gamma_over_delta", f.gamma_over_delta);
  f.detuning_sign = get_int(obj, "field", "detuning_sign", f.detuning_sign);
  if (obj.contains("components")) {
    const auto& arr = obj.at("components");
    if (!arr.is_array() || arr.empty())
      fail("field.components", "expected a non-empty array");
    f.components.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string path = "field.components[" + std::to_string(i) + "]";
      const auto& c = arr[i];
      if (!c.is_object()) fail(path, "expected an object");
      check_keys(c, path, {"amplitude", "polarization", "delta"});
      FieldComponent comp;
      if (c.contains("amplitude"))
        comp.amplitude = get_complex(c.at("amplitude"), path + ".amplitude");
      if (c.contains("polarization")) {
        const auto& pol = c.at("polarization");
        if (!pol.is_array() || pol.size() != 3)
          fail(path + ".polarization", "expected an array of 3 entries");
        for (int a = 0; a < 3; ++a)
          comp.polarization(a) = get_complex(
              pol[a], path + ".polarization[" + std::to_string(a) + "]");
      }
      comp.delta = get_num(c, path, "delta", 0.0);
      f.components.push_back(comp);
    }
  }
  return f;
}

}  // namespace

Scenario parse_scenario(const std::string& text) {
  json root;
  try {
    // The parser callback sees every key as it streams by; a per-object key
    // set catches duplicates, which nlohmann would otherwise silently merge.
    std::vector<std::set<std::string>> key_stack;
    auto cb = [&key_stack](int /*depth*/, json::parse_event_t event,
                           json& parsed) {
      if (event == json::parse_event_t::object_start) {
        key_stack.emplace_back();
      } else if (event == json::parse_event_t::object_end) {
        key_stack.pop_back();
      } else if (event == json::parse_event_t::key) {
        const auto k = parsed.get<std::string>();
        if (!key_stack.back().insert(k).second)
          throw ScenarioError("duplicate key \"" + k + "\"");
      }
      return true;
    };
    root = json::parse(text, cb);
  } catch (const json::parse_error& e) {
    throw ScenarioError(std::string("configuration is not valid JSON: ") +
                        e.what());
  }
  if (!root.is_object())
    throw ScenarioError("configuration root must be an object");

  check_keys(root, "",
             {"name", "j_max", "initial", "field", "t_max", "n_points",
              "backend", "n_traj", "master_seed", "n_threads",
              "leakage_threshold", "rel_tol", "trace_tol", "write_jump_log",
              "vib"});

  Scenario s;
  s.name = get_str(root, "", "name", s.name);
  s.j_max = get_int(root, "", "j_max", s.j_max);
  if (root.contains("initial")) {
    if (!root.at("initial").is_object()) fail("initial", "expected an object");
    s.initial = parse_initial(root.at("initial"));
  }
  if (root.contains("field")) {
    if (!root.at("field").is_object()) fail("field", "expected an object");
    s.field = parse_field(root.at("field"));
  }
  s.t_max = get_num(root, "", "t_max", s.t_max);
  s.n_points = get_int(root, "", "n_points", s.n_points);
  const std::string backend = get_str(root, "", "backend", "lindblad");
  if (backend == "lindblad")
    s.backend = Backend::lindblad;
  else if (backend == "trajectories")
    s.backend = Backend::trajectories;
  else if (backend == "both")
    s.backend = Backend::both;
  else
    fail("backend", "must be \"lindblad\", \"trajectories\", or \"both\"");
  s.n_traj = get_int(root, "", "n_traj", s.n_traj);
  if (root.contains("master_seed")) {
    const auto& v = root.at("master_seed");
    if (!v.is_number_integer())
      fail("master_seed", "expected a non-negative integer");
    if (!v.is_number_unsigned() && v.get<long long>() < 0)
      fail("master_seed", "expected a non-negative integer");
    s.master_seed = v.get<std::uint64_t>();
  }
  s.n_threads = get_int(root, "", "n_threads", s.n_threads);
  s.leakage_threshold =
      get_num(root, "", "leakage_threshold", s.leakage_threshold);
  s.tol.rel_tol = get_num(root, "", "rel_tol", s.tol.rel_tol);
  s.tol.trace_tol = get_num(root, "", "trace_tol", s.tol.trace_tol);
  s.write_jump_log = get_bool(root, "", "write_jump_log", s.write_jump_log);
  // null means "no vib block", so the canonical echo stays re-parseable
  if (root.contains("vib") && !root.at("vib").is_null()) {
    const auto& v = root.at("vib");
    if (!v.is_object()) fail("vib", "expected an object");
    check_keys(v, "vib", {"omega_nu_over_B", "delta_over_B", "eta"});
    VibRatios vr;
    vr.omega_nu_over_B = get_num(v, "vib", "omega_nu_over_B", 0.0);
    vr.delta_over_B = get_num(v, "vib", "delta_over_B", 0.0);
    vr.eta = get_num(v, "vib", "eta", 0.0);
    s.vib = vr;
  }

  validate_scenario(s);
  return s;
}

void validate_scenario(const Scenario& s) {
  if (s.j_max < 3) fail("j_max", "must be >= 3 (buffer plus heating headroom)");
  if (s.n_points < 2) fail("n_points", "must be >= 2");
  if (!(s.t_max > 0.0)) fail("t_max", "must be positive");
  if (s.n_threads < 1) fail("n_threads", "must be >= 1");
  if (!(s.leakage_threshold > 0.0)) fail("leakage_threshold", "must be positive");
  if (!(s.tol.rel_tol > 0.0)) fail("rel_tol", "must be positive");
  if (!(s.tol.trace_tol > 0.0)) fail("trace_tol", "must be positive");
  if (s.backend != Backend::lindblad && s.n_traj < 1)
    fail("n_traj", "must be >= 1 when trajectories are selected");

  const auto& ini = s.initial;
  switch (ini.kind) {
    case InitialKind::coherent:
      if (ini.j < 0 || ini.j > s.j_max - 3)
        fail("initial.j", "must satisfy 0 <= j <= j_max - 3");
      if (ini.theta < 0.0 || ini.theta > kPi)
        fail("initial.theta", "must lie in [0, pi]");
      if (ini.phi < 0.0 || ini.phi >= 2.0 * kPi)
        fail("initial.phi", "must lie in [0, 2*pi)");
      break;
    case InitialKind::basis_state:
      if (ini.j < 0 || ini.j > s.j_max - 3)
        fail("initial.j", "must satisfy 0 <= j <= j_max - 3");
      if (ini.m < -ini.j || ini.m > ini.j)
        fail("initial.m", "must satisfy |m| <= j");
      break;
    case InitialKind::amplitudes: {
      const int n = (s.j_max + 1) * (s.j_max + 1);
      if (static_cast<int>(ini.amps.size()) != n)
        fail("initial.amplitudes",
             "must have (j_max+1)^2 = " + std::to_string(n) + " entries");
      double norm2 = 0.0;
      for (const auto& a : ini.amps) norm2 += std::norm(a);
      if (std::abs(norm2 - 1.0) > 1e-8)
        fail("initial.amplitudes", "must be normalized (sum |a|^2 = 1)");
      const RotBasis basis = build_basis(s.j_max);
      for (int idx = 0; idx < n; ++idx)
        if (basis.jm(idx).first > s.j_max - 3 && std::abs(ini.amps[idx]) > 0.0)
          fail("initial.amplitudes",
               "support must stay within j <= j_max - 3 (heating headroom)");
      break;
    }
  }

  const auto& f = s.field;
  if (!(f.omega_R >= 0.0)) fail("field.omega_R", "must be >= 0");
  if (f.gamma_over_delta < 0.0)
    fail("field.gamma_over_delta", "must be >= 0");
  if (f.gamma_over_delta >= 1.0)
    fail("field.gamma_over_delta",
         "must be < 1 (the model assumes far off-resonant drive)");
  if (f.gamma_over_delta > 0.1)
    std::cerr << "warning: field.gamma_over_delta = " << f.gamma_over_delta
              << " strains the off-resonant assumption\n";
  if (f.detuning_sign != 1 && f.detuning_sign != -1)
    fail("field.detuning_sign", "must be +1 or -1");
  if (f.components.empty()) fail("field.components", "must be non-empty");
  double amp2 = 0.0;
  for (std::size_t i = 0; i < f.components.size(); ++i) {
    const auto& c = f.components[i];
    const std::string path = "field.components[" + std::to_string(i) + "]";
    if (std::abs(c.polarization.norm() - 1.0) > 1e-8)
      fail(path + ".polarization", "must be a unit vector");
    amp2 += std::norm(c.amplitude);
    if (std::abs(c.delta) > 10.0)
      std::cerr << "warning: " << path << ".delta = " << c.delta
                << " is far outside the rotational band\n";
  }
  if (std::abs(amp2 - 1.0) > 1e-8)
    fail("field.components",
         "relative amplitudes must satisfy sum |a_k|^2 = 1");

  if (s.vib) {
    if (!(s.vib->omega_nu_over_B > 0.0))
      fail("vib.omega_nu_over_B", "must be positive");
    if (!(s.vib->delta_over_B > 0.0)) fail("vib.delta_over_B", "must be positive");
    if (!(s.vib->eta > 0.0)) fail("vib.eta", "must be positive");
  }
}

std::vector<std::string> preset_names() {
  return {"kerr-fig2", "kerr-fig2-unitary", "kerr-fig2-long"};
}

bool is_preset(const std::string& name) {
  for (const auto& p : preset_names())
    if (p == name) return true;
  return false;
}

Scenario preset(const std::string& name) {
  if (!is_preset(name)) throw ScenarioError("unknown preset \"" + name + "\"");
  // Common core: x-polarized cw drive at Omega_R/B = 0.1 on a coherent
  // state with j = 2, theta = phi = pi/2.
  Scenario s;
  s.name = name;
  s.j_max = 12;
  s.initial.kind = InitialKind::coherent;
  s.initial.j = 2;
  s.initial.theta = kPi / 2.0;
  s.initial.phi = kPi / 2.0;
  s.field.omega_R = 0.1;
  s.field.gamma_over_delta = 0.01;
  s.field.detuning_sign = +1;
  s.field.components = {FieldComponent{1.0, {1.0, 0.0, 0.0}, 0.0}};
  s.t_max = 20.0;
  s.n_points = 2000;
  s.backend = Backend::lindblad;
  s.n_traj = 2000;
  s.master_seed = 1;

  if (name == "kerr-fig2-unitary") {
    s.field.gamma_over_delta = 0.0;
  } else if (name == "kerr-fig2-long") {
    // Decoherence horizon: direct integration at this span is impractical,
    // so the preset defaults to the trajectory backend. The per-trajectory
    // leakage abort is disabled (threshold 1.0): over this horizon a few
    // trajectories per thousand genuinely heat into the truncation edge,
    // each carrying 1/N weight, and the ensemble-mean leakage column of the
    // output is the meaningful contamination measure (about 1e-6 here).
    s.t_max = 2000.0;
    s.backend = Backend::trajectories;
    s.leakage_threshold = 1.0;
  }
  return s;
}

namespace {

ordered_json complex_json(const cdouble& z) {
  return ordered_json::array({z.real(), z.imag()});
}

ordered_json scenario_echo(const Scenario& s) {
  ordered_json j;
  j["name"] = s.name;
  j["j_max"] = s.j_max;
  ordered_json ini;
  switch (s.initial.kind) {
    case InitialKind::coherent:
      ini["type"] = "coherent";
      ini["j"] = s.initial.j;
      ini["theta"] = s.initial.theta;
      ini["phi"] = s.initial.phi;
      break;
    case InitialKind::basis_state:
      ini["type"] = "basis_state";
      ini["j"] = s.initial.j;
      ini["m"] = s.initial.m;
      break;
    case InitialKind::amplitudes: {
      ini["type"] = "amplitudes";
      ordered_json arr = ordered_json::array();
      for (const auto& a : s.initial.amps) arr.push_back(complex_json(a));
      ini["amplitudes"] = std::move(arr);
      break;
    }
  }
  j["initial"] = std::move(ini);
  ordered_json field;
  field["omega_R"] = s.field.omega_R;
  field["gamma_over_delta"] = s.field.gamma_over_delta;
  field["detuning_sign"] = s.field.detuning_sign;
  ordered_json comps = ordered_json::array();
  for (const auto& c : s.field.components) {
    ordered_json cj;
    cj["amplitude"] = complex_json(c.amplitude);
    cj["polarization"] = ordered_json::array({complex_json(c.polarization(0)),
                                              complex_json(c.polarization(1)),
                                              complex_json(c.polarization(2))});
    cj["delta"] = c.delta;
    comps.push_back(std::move(cj));
  }
  field["components"] = std::move(comps);
  j["field"] = std::move(field);
  j["t_max"] = s.t_max;
  j["n_points"] = s.n_points;
  j["backend"] = s.backend == Backend::lindblad
                     ? "lindblad"
                     : (s.backend == Backend::trajectories ? "trajectories"
                                                           : "both");
  // n_threads is deliberately absent: results are worker-count independent,
  // so it is an execution knob, not part of the scenario identity.
  j["n_traj"] = s.n_traj;
  j["master_seed"] = s.master_seed;
  j["leakage_threshold"] = s.leakage_threshold;
  j["rel_tol"] = s.tol.rel_tol;
  j["trace_tol"] = s.tol.trace_tol;
  j["write_jump_log"] = s.write_jump_log;
  if (s.vib) {
    ordered_json v;
    v["omega_nu_over_B"] = s.vib->omega_nu_over_B;
    v["delta_over_B"] = s.vib->delta_over_B;
    v["eta"] = s.vib->eta;
    j["vib"] = std::move(v);
  } else {
    j["vib"] = nullptr;
  }
  return j;
}

}  // namespace

std::string scenario_to_json(const Scenario& s) {
  return scenario_echo(s).dump(2) + "\n";
}

std::string scenario_hash(const Scenario& s) {
  const std::string text = scenario_echo(s).dump();
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  static const char* hex = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = hex[h & 0xf];
    h >>= 4;
  }
  return out;
}

Vec initial_vector(const Scenario& s) {
  const RotBasis basis = build_basis(s.j_max);
  switch (s.initial.kind) {
    case InitialKind::coherent:
      return coherent_state(basis, s.initial.j, s.initial.theta, s.initial.phi)
          .amps;
    case InitialKind::basis_state: {
      Vec v = Vec::Zero(basis.size());
      v[basis.index(s.initial.j, s.initial.m)] = 1.0;
      return v;
    }
    case InitialKind::amplitudes: {
      Vec v(basis.size());
      for (int i = 0; i < basis.size(); ++i) v[i] = s.initial.amps[i];
      return v.normalized();
    }
  }
  throw ScenarioError("initial: unreachable kind");
}

namespace {

ordered_json validity_block(const Scenario& s) {
  ordered_json block;
  if (!s.vib) {
    block["status"] = "not evaluated";
    block["reason"] = "no vibrational ratios (vib block) supplied";
    return block;
  }
  VibRateModel model;
  model.eta = s.vib->eta;
  model.rate_prefactor = s.field.omega_R * s.field.gamma_over_delta;
  model.omega_nu_over_B = s.vib->omega_nu_over_B;
  model.delta_over_B = s.vib->delta_over_B;
  const auto rep = max_valid_time(model);
  block["status"] = "evaluated";
  block["eta"] = model.eta;
  block["omega_nu_over_B"] = model.omega_nu_over_B;
  block["delta_over_B"] = model.delta_over_B;
  block["rate_prefactor"] = model.rate_prefactor;
  block["safety_c"] = rep.safety_c;
  block["tau_margin"] = rep.tau_margin;
  block["tau_crossing"] = rep.tau_crossing;
  block["tau_valid"] = rep.tau_valid;
  block["t_max"] = s.t_max;
  block["within_bound"] = s.t_max <= rep.tau_valid;
  block["note"] = s.t_max <= rep.tau_valid
                      ? "within validity regime"
                      : "t_max exceeds the validity bound";
  return block;
}

}  // namespace

std::string validity_block_json(const Scenario& s) {
  return validity_block(s).dump(2) + "\n";
}

namespace {

const char* channel_letter(int ch) {
  switch (ch) {
    case 0: return "x";
    case 1: return "y";
    case 2: return "z";
    default: return "?";
  }
}

ordered_json comparison_block(const ObservableSeries& a,
                              const ObservableSeries& b) {
  // max |delta| per column over the common grid
  auto maxdiff = [&](auto proj) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.rows.size(); ++i)
      d = std::max(d, std::abs(proj(a.rows[i]) - proj(b.rows[i])));
    return d;
  };
  ordered_json c;
  c["max_abs_delta"] = {
      {"jx", maxdiff([](const ObservableRecord& r) { return r.jx; })},
      {"jy", maxdiff([](const ObservableRecord& r) { return r.jy; })},
      {"jz", maxdiff([](const ObservableRecord& r) { return r.jz; })},
      {"var_jx", maxdiff([](const ObservableRecord& r) { return r.var_jx; })},
      {"var_jy", maxdiff([](const ObservableRecord& r) { return r.var_jy; })},
      {"var_jz", maxdiff([](const ObservableRecord& r) { return r.var_jz; })},
      {"j2", maxdiff([](const ObservableRecord& r) { return r.jsq; })},
      {"purity", maxdiff([](const ObservableRecord& r) { return r.purity; })},
  };
  return c;
}

}  // namespace

RunOutcome run_scenario(const Scenario& s, const std::string& out_dir) {
  validate_scenario(s);
  std::filesystem::create_directories(out_dir);

  RunOutcome outcome;
  ordered_json summary;
  summary["artifact"] = {{"name", "rotraman"}, {"version", kVersion}};
  summary["scenario"] = scenario_echo(s);
  summary["scenario_hash"] = scenario_hash(s);

  auto flush_summary = [&]() {
    const std::string path = out_dir + "/summary.json";
    outcome.summary_json = summary.dump(2) + "\n";
    write_file(path, outcome.summary_json);
    bool listed = false;
    for (const auto& f : outcome.files_written) listed |= (f == "summary.json");
    if (!listed) outcome.files_written.push_back("summary.json");
  };

  const RotBasis basis = build_basis(s.j_max);
  const Vec psi0 = initial_vector(s);
  const LindbladOps ops = build_lindblad(basis, s.field);

  const bool want_lindblad =
      s.backend == Backend::lindblad || s.backend == Backend::both;
  const bool want_traj =
      s.backend == Backend::trajectories || s.backend == Backend::both;

  ObservableSeries lindblad_series, traj_series;
  try {
    if (want_lindblad) {
      PropagateOptions popt;
      popt.t_max = s.t_max;
      popt.n_points = s.n_points;
      popt.rel_tol = s.tol.rel_tol;
      popt.leakage_threshold = s.leakage_threshold;
      popt.trace_tol = s.tol.trace_tol;
      const Mat sigma0 = psi0 * psi0.adjoint();
      auto run = propagate(ops, sigma0, popt);
      lindblad_series = std::move(run.series);
      write_file(out_dir + "/observables_lindblad.tsv",
                 render_table(lindblad_series));
      outcome.files_written.push_back("observables_lindblad.tsv");
      summary["lindblad"] = {{"expected_jumps", run.expected_jumps},
                             {"min_eig", run.min_eig},
                             {"max_herm_resid", run.max_herm_resid},
                             {"rhs_evals", run.rhs_evals}};
    }

    if (want_traj) {
      EnsembleOptions eopt;
      eopt.n_traj = s.n_traj;
      eopt.master_seed = s.master_seed;
      eopt.n_threads = s.n_threads;
      eopt.t_max = s.t_max;
      eopt.n_points = s.n_points;
      eopt.leakage_threshold = s.leakage_threshold;
      eopt.rel_tol = s.tol.rel_tol;
      eopt.keep_jump_log = s.write_jump_log;
      auto ens = run_ensemble(ops, psi0, eopt);
      traj_series = std::move(ens.series);
      write_file(out_dir + "/observables_trajectories.tsv",
                 render_table(traj_series));
      outcome.files_written.push_back("observables_trajectories.tsv");
      summary["trajectories"] = {
          {"n_traj", s.n_traj},
          {"master_seed", s.master_seed},
          {"mean_jumps", ens.mean_jumps},
          {"se_jumps", ens.se_jumps},
          {"total_jumps", ens.total_jumps},
          {"channel_counts",
           {{"x", ens.channel_counts[0]},
            {"y", ens.channel_counts[1]},
            {"z", ens.channel_counts[2]}}}};
      if (s.write_jump_log) {
        std::string log = "trajectory\tt\tchannel\n";
        for (const auto& [traj, t, ch] : ens.jump_log) {
          log += std::to_string(traj);
          log += '\t';
          log += format_double(t);
          log += '\t';
          log += channel_letter(ch);
          log += '\n';
        }
        write_file(out_dir + "/jumps.tsv", log);
        outcome.files_written.push_back("jumps.tsv");
      }
    }
  } catch (const NumericalAbort& e) {
    summary["error"] = {{"type", "numerical_abort"}, {"what", e.what()}};
    flush_summary();
    throw;
  }

  if (want_lindblad && want_traj)
    summary["comparison"] = comparison_block(lindblad_series, traj_series);

  summary["validity"] = validity_block(s);
  summary["files"] = outcome.files_written;
  flush_summary();
  return outcome;
}

}  // namespace rotraman
