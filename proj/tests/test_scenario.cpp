#include <doctest.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "rotraman/angmom.hpp"
#include "rotraman/common.hpp"
#include "rotraman/scenario.hpp"
#include "rotraman/vibvalidity.hpp"

using namespace rotraman;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Fresh scratch directory per test case, removed on scope exit.
struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("rotraman_scn_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  static int counter;
};
int TempDir::counter = 0;

}  // namespace

TEST_CASE("empty configuration yields the documented defaults") {
  const Scenario s = parse_scenario("{}");
  CHECK(s.name == "custom");
  CHECK(s.j_max == 12);
  CHECK(s.initial.kind == InitialKind::coherent);
  CHECK(s.initial.j == 0);
  CHECK(s.initial.theta == 0.0);
  CHECK(s.initial.phi == 0.0);
  CHECK(s.field.omega_R == 0.0);
  CHECK(s.field.gamma_over_delta == 0.0);
  CHECK(s.field.detuning_sign == 1);
  REQUIRE(s.field.components.size() == 1);
  CHECK(s.field.components[0].amplitude == cdouble(1.0, 0.0));
  CHECK(s.field.components[0].polarization(0) == cdouble(1.0, 0.0));
  CHECK(s.field.components[0].delta == 0.0);
  CHECK(s.t_max == 20.0);
  CHECK(s.n_points == 2000);
  CHECK(s.backend == Backend::lindblad);
  CHECK(s.n_traj == 2000);
  CHECK(s.master_seed == 1);
  CHECK(s.n_threads == 1);
  CHECK(s.leakage_threshold == 1e-6);
  CHECK(s.tol.rel_tol == 1e-9);
  CHECK(s.tol.trace_tol == 1e-6);
  CHECK(s.write_jump_log == false);
  CHECK(!s.vib.has_value());
}

TEST_CASE("full configuration parses every field") {
  const char* text = R"({
    "name": "example",
    "j_max": 8,
    "initial": {"type": "basis_state", "j": 2, "m": -1},
    "field": {
      "omega_R": 0.25,
      "gamma_over_delta": 0.02,
      "detuning_sign": -1,
      "components": [
        {"amplitude": [0.8, 0.0],
         "polarization": [[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]],
         "delta": 0.5},
        {"amplitude": [0.0, 0.6],
         "polarization": [[0.70710678118654752, 0.0],
                          [0.0, 0.70710678118654752],
                          [0.0, 0.0]],
         "delta": -0.5}
      ]
    },
    "t_max": 3.5,
    "n_points": 40,
    "backend": "both",
    "n_traj": 17,
    "master_seed": 99,
    "n_threads": 4,
    "leakage_threshold": 0.01,
    "rel_tol": 1e-8,
    "trace_tol": 1e-5,
    "write_jump_log": true,
    "vib": {"omega_nu_over_B": 120.0, "delta_over_B": 2e4, "eta": 1.5}
  })";
  const Scenario s = parse_scenario(text);
  CHECK(s.name == "example");
  CHECK(s.j_max == 8);
  CHECK(s.initial.kind == InitialKind::basis_state);
  CHECK(s.initial.j == 2);
  CHECK(s.initial.m == -1);
  CHECK(s.field.omega_R == 0.25);
  CHECK(s.field.gamma_over_delta == 0.02);
  CHECK(s.field.detuning_sign == -1);
  REQUIRE(s.field.components.size() == 2);
  CHECK(s.field.components[0].amplitude == cdouble(0.8, 0.0));
  CHECK(s.field.components[0].polarization(2) == cdouble(1.0, 0.0));
  CHECK(s.field.components[0].delta == 0.5);
  CHECK(s.field.components[1].amplitude == cdouble(0.0, 0.6));
  CHECK(s.field.components[1].delta == -0.5);
  CHECK(s.t_max == 3.5);
  CHECK(s.n_points == 40);
  CHECK(s.backend == Backend::both);
  CHECK(s.n_traj == 17);
  CHECK(s.master_seed == 99);
  CHECK(s.n_threads == 4);
  CHECK(s.leakage_threshold == 0.01);
  CHECK(s.tol.rel_tol == 1e-8);
  CHECK(s.tol.trace_tol == 1e-5);
  CHECK(s.write_jump_log == true);
  REQUIRE(s.vib.has_value());
  CHECK(s.vib->omega_nu_over_B == 120.0);
  CHECK(s.vib->delta_over_B == 2e4);
  CHECK(s.vib->eta == 1.5);
}

TEST_CASE("parse errors carry path-qualified messages") {
  CHECK_THROWS_WITH_AS(parse_scenario("not json"),
                       doctest::Contains("not valid JSON"), ScenarioError);
  CHECK_THROWS_WITH_AS(parse_scenario("[1, 2]"),
                       doctest::Contains("root must be an object"),
                       ScenarioError);
  CHECK_THROWS_WITH_AS(parse_scenario(R"({"j_max": 5, "j_max": 6})"),
                       doctest::Contains("duplicate key \"j_max\""),
                       ScenarioError);
  CHECK_THROWS_WITH_AS(parse_scenario(R"({"bogus": 1})"),
                       doctest::Contains("bogus: unknown key"), ScenarioError);
  CHECK_THROWS_WITH_AS(
      parse_scenario(R"({"initial": {"type": "coherent", "jj": 2}})"),
      doctest::Contains("initial.jj: unknown key"), ScenarioError);
  CHECK_THROWS_WITH_AS(
      parse_scenario(R"({"field": {"components": [{"phase": 0}]}})"),
      doctest::Contains("field.components[0].phase: unknown key"),
      ScenarioError);
  CHECK_THROWS_WITH_AS(parse_scenario(R"({"j_max": "twelve"})"),
                       doctest::Contains("j_max: expected an integer"),
                       ScenarioError);
  CHECK_THROWS_WITH_AS(parse_scenario(R"({"t_max": "soon"})"),
                       doctest::Contains("t_max: expected a number"),
                       ScenarioError);
  CHECK_THROWS_WITH_AS(parse_scenario(R"({"write_jump_log": 1})"),
                       doctest::Contains("write_jump_log: expected a boolean"),
                       ScenarioError);
  CHECK_THROWS_WITH_AS(parse_scenario(R"({"master_seed": -5})"),
                       doctest::Contains("master_seed"), ScenarioError);
  CHECK_THROWS_WITH_AS(parse_scenario(R"({"initial": {"type": "squeezed"}})"),
                       doctest::Contains("initial.type"), ScenarioError);
  CHECK_THROWS_WITH_AS(
      parse_scenario(R"({"field": {"components": [{"amplitude": [1]}]}})"),
      doctest::Contains("expected a number or [re, im] pair"), ScenarioError);
  CHECK_THROWS_WITH_AS(parse_scenario(R"({"field": {"components": []}})"),
                       doctest::Contains("field.components"), ScenarioError);
  CHECK_THROWS_WITH_AS(parse_scenario(R"({"backend": "exact"})"),
                       doctest::Contains("backend: must be"), ScenarioError);
}

TEST_CASE("validation rejects out-of-domain scenarios") {
  CHECK_THROWS_WITH_AS(parse_scenario(R"({"j_max": 2})"),
                       doctest::Contains("j_max: must be >= 3"),
                       ScenarioError);
  CHECK_THROWS_WITH_AS(parse_scenario(R"({"n_points": 1})"),
                       doctest::Contains("n_points"), ScenarioError);
  CHECK_THROWS_WITH_AS(parse_scenario(R"({"t_max": 0})"),
                       doctest::Contains("t_max: must be positive"),
                       ScenarioError);
  CHECK_THROWS_WITH_AS(parse_scenario(R"({"n_threads": 0})"),
                       doctest::Contains("n_threads"), ScenarioError);
  CHECK_THROWS_WITH_AS(parse_scenario(R"({"leakage_threshold": 0})"),
                       doctest::Contains("leakage_threshold"), ScenarioError);
  CHECK_THROWS_WITH_AS(
      parse_scenario(R"({"initial": {"type": "coherent", "theta": -1}})"),
      doctest::Contains("initial.theta: must lie in [0, pi]"), ScenarioError);
  CHECK_THROWS_WITH_AS(
      parse_scenario(R"({"initial": {"type": "coherent", "phi": 6.3}})"),
      doctest::Contains("initial.phi"), ScenarioError);
  // heating headroom: the top three j shells are reserved
  CHECK_THROWS_WITH_AS(
      parse_scenario(R"({"j_max": 6, "initial": {"type": "coherent", "j": 4}})"),
      doctest::Contains("initial.j: must satisfy 0 <= j <= j_max - 3"),
      ScenarioError);
  CHECK_THROWS_WITH_AS(
      parse_scenario(R"({"initial": {"type": "basis_state", "j": 1, "m": 2}})"),
      doctest::Contains("initial.m"), ScenarioError);
  CHECK_THROWS_WITH_AS(
      parse_scenario(R"({"field": {"gamma_over_delta": 1.0}})"),
      doctest::Contains("field.gamma_over_delta: must be < 1"), ScenarioError);
  CHECK_THROWS_WITH_AS(
      parse_scenario(R"({"field": {"gamma_over_delta": -0.1}})"),
      doctest::Contains("field.gamma_over_delta"), ScenarioError);
  CHECK_THROWS_WITH_AS(parse_scenario(R"({"field": {"detuning_sign": 0}})"),
                       doctest::Contains("field.detuning_sign"),
                       ScenarioError);
  CHECK_THROWS_WITH_AS(
      parse_scenario(
          R"({"field": {"components": [{"polarization": [1, 1, 0]}]}})"),
      doctest::Contains("field.components[0].polarization: must be a unit"),
      ScenarioError);
  CHECK_THROWS_WITH_AS(
      parse_scenario(
          R"({"field": {"components": [
            {"amplitude": 0.5, "polarization": [1, 0, 0]},
            {"amplitude": 0.5, "polarization": [0, 0, 1]}]}})"),
      doctest::Contains("sum |a_k|^2 = 1"), ScenarioError);
  CHECK_THROWS_WITH_AS(
      parse_scenario(R"({"backend": "trajectories", "n_traj": 0})"),
      doctest::Contains("n_traj"), ScenarioError);
  // n_traj is ignored by the direct backend
  CHECK_NOTHROW(parse_scenario(R"({"backend": "lindblad", "n_traj": 0})"));
  CHECK_THROWS_WITH_AS(
      parse_scenario(R"({"vib": {"omega_nu_over_B": 100, "delta_over_B": 1e4}})"),
      doctest::Contains("vib.eta: must be positive"), ScenarioError);

  SUBCASE("amplitude lists are checked for size, norm, and support") {
    json cfg;
    cfg["j_max"] = 5;
    cfg["initial"]["type"] = "amplitudes";
    cfg["initial"]["amplitudes"] = json::array({1.0, 0.0});
    CHECK_THROWS_WITH_AS(parse_scenario(cfg.dump()),
                         doctest::Contains("(j_max+1)^2 = 36"), ScenarioError);

    auto amps = json::array();
    for (int i = 0; i < 36; ++i) amps.push_back(0.0);
    amps[0] = 0.5;  // norm 0.25
    cfg["initial"]["amplitudes"] = amps;
    CHECK_THROWS_WITH_AS(parse_scenario(cfg.dump()),
                         doctest::Contains("must be normalized"),
                         ScenarioError);

    amps[0] = 0.0;
    amps[35] = 1.0;  // j = 5 lies in the reserved headroom
    cfg["initial"]["amplitudes"] = amps;
    CHECK_THROWS_WITH_AS(parse_scenario(cfg.dump()),
                         doctest::Contains("j <= j_max - 3"), ScenarioError);
  }
}

TEST_CASE("presets are known and self-consistent") {
  CHECK(preset_names() == std::vector<std::string>{"kerr-fig2",
                                                   "kerr-fig2-unitary",
                                                   "kerr-fig2-long"});
  for (const auto& name : preset_names()) {
    CHECK(is_preset(name));
    const Scenario s = preset(name);
    CHECK(s.name == name);
    CHECK_NOTHROW(validate_scenario(s));
  }
  CHECK(!is_preset("kerr-fig3"));
  CHECK_THROWS_WITH_AS(preset("kerr-fig3"),
                       doctest::Contains("unknown preset"), ScenarioError);

  const Scenario base = preset("kerr-fig2");
  CHECK(base.j_max == 12);
  CHECK(base.initial.kind == InitialKind::coherent);
  CHECK(base.initial.j == 2);
  CHECK(base.field.omega_R == 0.1);
  CHECK(base.field.gamma_over_delta == 0.01);
  CHECK(base.t_max == 20.0);
  CHECK(base.n_points == 2000);
  CHECK(base.backend == Backend::lindblad);
  CHECK(base.n_traj == 2000);
  CHECK(base.master_seed == 1);

  const Scenario unitary = preset("kerr-fig2-unitary");
  CHECK(unitary.field.gamma_over_delta == 0.0);
  CHECK(unitary.t_max == base.t_max);

  const Scenario longrun = preset("kerr-fig2-long");
  CHECK(longrun.t_max == 2000.0);
  CHECK(longrun.backend == Backend::trajectories);
  CHECK(longrun.leakage_threshold == 1.0);
}

TEST_CASE("canonical echo reproduces the scenario exactly") {
  for (const auto& name : preset_names()) {
    const Scenario s = preset(name);
    const std::string echo = scenario_to_json(s);
    const Scenario back = parse_scenario(echo);
    CHECK(scenario_hash(back) == scenario_hash(s));
    CHECK(scenario_to_json(back) == echo);
  }
  // a custom scenario exercising the remaining branches
  json cfg;
  cfg["name"] = "roundtrip";
  cfg["j_max"] = 6;
  cfg["initial"]["type"] = "amplitudes";
  auto amps = json::array();
  for (int i = 0; i < 49; ++i) amps.push_back(0.0);
  amps[0] = 0.6;
  amps[3] = json::array({0.0, 0.8});
  cfg["initial"]["amplitudes"] = amps;
  cfg["backend"] = "trajectories";
  cfg["n_traj"] = 3;
  cfg["vib"] = {{"omega_nu_over_B", 80.0},
                {"delta_over_B", 5e3},
                {"eta", 2.0}};
  const Scenario s = parse_scenario(cfg.dump());
  const Scenario back = parse_scenario(scenario_to_json(s));
  CHECK(scenario_hash(back) == scenario_hash(s));
  CHECK(scenario_to_json(back) == scenario_to_json(s));
}

TEST_CASE("scenario hash tracks physics, not execution knobs") {
  const Scenario a = preset("kerr-fig2");
  const std::string h = scenario_hash(a);
  CHECK(h.size() == 16);
  for (char c : h) CHECK(std::isxdigit(static_cast<unsigned char>(c)));
  CHECK(scenario_hash(a) == h);  // deterministic

  Scenario threads = a;
  threads.n_threads = 7;
  CHECK(scenario_hash(threads) == h);
  CHECK(scenario_to_json(threads).find("n_threads") == std::string::npos);

  Scenario changed = a;
  changed.field.gamma_over_delta = 0.02;
  CHECK(scenario_hash(changed) != h);
  Scenario seeded = a;
  seeded.master_seed = 2;
  CHECK(scenario_hash(seeded) != h);
}

TEST_CASE("initial vectors match their constructions") {
  Scenario s;
  s.j_max = 6;
  s.initial.kind = InitialKind::coherent;
  s.initial.j = 2;
  s.initial.theta = 1.1;
  s.initial.phi = 2.2;
  const RotBasis basis = build_basis(6);
  const Vec v = initial_vector(s);
  const Vec ref = coherent_state(basis, 2, 1.1, 2.2).amps;
  CHECK((v - ref).norm() < 1e-15);

  s.initial.kind = InitialKind::basis_state;
  s.initial.j = 3;
  s.initial.m = -2;
  const Vec b = initial_vector(s);
  CHECK(std::abs(b[basis.index(3, -2)] - 1.0) < 1e-15);
  CHECK(std::abs(b.norm() - 1.0) < 1e-15);

  s.initial.kind = InitialKind::amplitudes;
  s.initial.amps.assign(basis.size(), cdouble(0.0, 0.0));
  s.initial.amps[0] = cdouble(0.6, 0.0);
  s.initial.amps[basis.index(1, 1)] = cdouble(0.0, 0.8);
  const Vec c = initial_vector(s);
  CHECK(std::abs(c.norm() - 1.0) < 1e-14);
  CHECK(std::abs(c[0] - cdouble(0.6, 0.0)) < 1e-12);
  CHECK(std::abs(c[basis.index(1, 1)] - cdouble(0.0, 0.8)) < 1e-12);
}

TEST_CASE("validity block reports the heating budget") {
  Scenario s = preset("kerr-fig2");
  const json none = json::parse(validity_block_json(s));
  CHECK(none["status"] == "not evaluated");

  s.vib = VibRatios{100.0, 1e4, 1.0};
  const json block = json::parse(validity_block_json(s));
  CHECK(block["status"] == "evaluated");
  CHECK(block["eta"] == 1.0);
  CHECK(block["rate_prefactor"].get<double>() ==
        doctest::Approx(0.1 * 0.01).epsilon(1e-15));
  VibRateModel model;
  model.eta = 1.0;
  model.rate_prefactor = 0.1 * 0.01;
  model.omega_nu_over_B = 100.0;
  model.delta_over_B = 1e4;
  const auto rep = max_valid_time(model);
  CHECK(block["tau_margin"].get<double>() ==
        doctest::Approx(rep.tau_margin).epsilon(1e-12));
  CHECK(block["tau_crossing"].get<double>() ==
        doctest::Approx(rep.tau_crossing).epsilon(1e-9));
  CHECK(block["tau_valid"].get<double>() ==
        doctest::Approx(rep.tau_valid).epsilon(1e-12));
  CHECK(block["within_bound"] == (s.t_max <= rep.tau_valid));

  s.t_max = 1e12;  // far past any budget
  const json beyond = json::parse(validity_block_json(s));
  CHECK(beyond["within_bound"] == false);
}

TEST_CASE("run_scenario writes tables and a faithful summary") {
  TempDir dir;
  json cfg;
  cfg["name"] = "smoke";
  cfg["j_max"] = 5;
  cfg["initial"] = {{"type", "coherent"}, {"j", 2},
                    {"theta", 1.5707963267948966},
                    {"phi", 1.5707963267948966}};
  cfg["field"] = {{"omega_R", 1.0}, {"gamma_over_delta", 0.3}};
  cfg["t_max"] = 2.0;
  cfg["n_points"] = 9;
  cfg["backend"] = "both";
  cfg["n_traj"] = 48;
  cfg["master_seed"] = 11;
  cfg["leakage_threshold"] = 1.0;  // small basis, edge population is real
  cfg["write_jump_log"] = true;
  const Scenario s = parse_scenario(cfg.dump());

  const RunOutcome out = run_scenario(s, dir.path.string());
  for (const char* f : {"observables_lindblad.tsv",
                        "observables_trajectories.tsv", "jumps.tsv",
                        "summary.json"}) {
    CAPTURE(f);
    CHECK(fs::exists(dir.path / f));
    CHECK(std::find(out.files_written.begin(), out.files_written.end(), f) !=
          out.files_written.end());
  }

  const json summary = json::parse(out.summary_json);
  CHECK(summary["artifact"]["name"] == "rotraman");
  CHECK(summary["scenario_hash"] == scenario_hash(s));
  CHECK(summary["scenario"]["name"] == "smoke");
  CHECK(summary["lindblad"].contains("expected_jumps"));
  CHECK(summary["trajectories"]["n_traj"] == 48);
  const long total = summary["trajectories"]["total_jumps"].get<long>();
  const long by_channel =
      summary["trajectories"]["channel_counts"]["x"].get<long>() +
      summary["trajectories"]["channel_counts"]["y"].get<long>() +
      summary["trajectories"]["channel_counts"]["z"].get<long>();
  CHECK(total == by_channel);
  CHECK(total > 0);  // gd = 0.3 at Omega_R = 1 jumps many times in t = 2
  CHECK(summary["comparison"]["max_abs_delta"].contains("purity"));
  CHECK(summary["validity"]["status"] == "not evaluated");
  CHECK(out.summary_json == slurp(dir.path / "summary.json"));

  // ensemble averages should sit near the direct solution even at N = 48
  CHECK(summary["comparison"]["max_abs_delta"]["jy"].get<double>() < 0.5);

  const std::string jumps = slurp(dir.path / "jumps.tsv");
  std::istringstream lines(jumps);
  std::string line;
  REQUIRE(std::getline(lines, line));
  CHECK(line == "trajectory\tt\tchannel");
  long rows = 0;
  long last_traj = -1;
  while (std::getline(lines, line)) {
    std::istringstream cols(line);
    std::string traj, t, ch;
    REQUIRE(std::getline(cols, traj, '\t'));
    REQUIRE(std::getline(cols, t, '\t'));
    REQUIRE(std::getline(cols, ch, '\t'));
    const long id = std::stol(traj);
    CHECK(id >= last_traj);  // grouped by trajectory in index order
    last_traj = id;
    const double tv = std::stod(t);
    CHECK(tv >= 0.0);
    CHECK(tv <= 2.0);
    CHECK((ch == "x" || ch == "y" || ch == "z"));
    ++rows;
  }
  CHECK(rows == total);

  // the two tables share the grid column
  const std::string tab = slurp(dir.path / "observables_lindblad.tsv");
  CHECK(tab.rfind("t\tjx\tjy\tjz\t", 0) == 0);
}

TEST_CASE("run_scenario records numerical aborts before rethrowing") {
  TempDir dir;
  json cfg;
  cfg["j_max"] = 5;
  cfg["initial"] = {{"type", "coherent"}, {"j", 2},
                    {"theta", 1.5707963267948966},
                    {"phi", 1.5707963267948966}};
  cfg["field"] = {{"omega_R", 1.0}, {"gamma_over_delta", 0.01}};
  cfg["t_max"] = 5.0;
  cfg["n_points"] = 6;
  cfg["leakage_threshold"] = 1e-10;  // the j = 5 shell fills well past this
  const Scenario s = parse_scenario(cfg.dump());

  CHECK_THROWS_AS(run_scenario(s, dir.path.string()), NumericalAbort);
  REQUIRE(fs::exists(dir.path / "summary.json"));
  const json summary = json::parse(slurp(dir.path / "summary.json"));
  CHECK(summary["error"]["type"] == "numerical_abort");
  const std::string what = summary["error"]["what"].get<std::string>();
  CHECK(what.find("leakage") != std::string::npos);
  CHECK(summary["scenario_hash"] == scenario_hash(s));
}
