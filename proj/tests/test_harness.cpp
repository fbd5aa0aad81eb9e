#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

#include "phaseflow/errors.hpp"
#include "phaseflow/harness/experiment.hpp"
#include "phaseflow/harness/svg_plot.hpp"
#include "phaseflow/harness/table.hpp"

using namespace phaseflow;
using namespace phaseflow::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("phaseflow_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentSpec small(ExperimentKind kind) {
  auto s = default_spec(kind);
  s.quiet = true;
  switch (kind) {
    case ExperimentKind::tgamma_sweep:
      s.dims = {60, 90};
      s.trials = 3;
      break;
    case ExperimentKind::race:
      s.dims = {50};
      s.trials = 3;
      break;
    case ExperimentKind::omega_trace:
      s.dims = {80};
      s.trials = 3;
      s.init_draws = 10;
      break;
    case ExperimentKind::timing:
      s.dims = {40, 80};
      s.trials = 2;
      break;
    case ExperimentKind::substages:
      s.dims = {100};
      s.trials = 2;
      break;
    case ExperimentKind::state_evolution:
      s.dims = {100, 1000};
      s.trials = 2;
      s.emp_m = 20000;
      s.perturb = 0.05;
      break;
    case ExperimentKind::lemma3_check:
      s.dims = {2, 5};
      s.samples = 20000;
      break;
  }
  return s;
}

int exit_code(const std::string& command) {
  const int status = std::system((command + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("table formatting and parsing") {
  Table t({"a", "b", "c"});
  t.add_row({cell(std::size_t{3}), cell(0.1), cell(std::optional<std::size_t>{})});
  t.add_row({cell(true), cell(-2.5e-300), cell(std::optional<std::size_t>{7})});
  CHECK_THROWS_AS(t.add_row({"1"}), ParameterError);
  CHECK(t.to_csv() == "a,b,c\n3,0.1,NA\n1,-2.5e-300,7\n");
  CHECK(std::isnan(t.number(0, "c")));
  CHECK(t.number(1, "b") == -2.5e-300);
  CHECK_THROWS_AS(t.column("zz"), ParameterError);
  CHECK(Table::parse(t.to_csv()) == t);
  const auto dir = scratch("table");
  t.write(dir / "t.csv");
  CHECK(Table::read(dir / "t.csv") == t);
  CHECK_THROWS_AS(t.write(dir / "missing" / "t.csv"), IoError);
  CHECK_THROWS_AS(Table::read(dir / "nope.csv"), IoError);
}

TEST_CASE("svg renderer") {
  LinePlot p{"A <title>", "x", "y", {}, {{2.0, "mark"}}, true};
  p.series.push_back({"s1", {1, 2, 3, 4}, {1, 0.1, NAN, 0.001}, false, true});
  p.series.push_back({"s2", {1, 4}, {2, 3}, true, false});
  const auto svg = render_svg(p);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("A &lt;title&gt;") != std::string::npos);
  CHECK(svg.find("stroke-dasharray") != std::string::npos);
  // The NaN splits s1 into two polylines; s2 adds one more.
  std::size_t lines = 0;
  for (std::size_t at = svg.find("<polyline"); at != std::string::npos; at = svg.find("<polyline", at + 1)) ++lines;
  CHECK(lines == 3);
  CHECK(svg.find("nan") == std::string::npos);
  CHECK(render_svg(LinePlot{}).find("</svg>") != std::string::npos);
}

TEST_CASE("experiment names and defaults") {
  for (auto k : all_kinds()) CHECK(parse_kind(kind_name(k)) == k);
  CHECK_FALSE(parse_kind("fig9").has_value());
  const auto s = default_spec(ExperimentKind::tgamma_sweep);
  CHECK(s.mu_rwf == 0.5);
  CHECK(s.mu_wf == 0.1);
  CHECK(s.oversampling == 10.0);
  CHECK(s.gammas == std::vector<double>{0.5, 0.1});
  CHECK(default_spec(ExperimentKind::race).dims == std::vector<std::size_t>{100, 200, 500});
  CHECK(default_spec(ExperimentKind::timing).dims == std::vector<std::size_t>{500, 1000, 2000, 4000});
  CHECK(default_spec(ExperimentKind::timing).trials >= 5);
  CHECK(default_spec(ExperimentKind::substages).oversampling == 12.0);
  CHECK(auto_block_count(100) == 7);
  CHECK(auto_block_count(500) == 10);
  auto k = s;
  k.K = 3;
  CHECK(block_count_for(k, 100, 1000) == 3);
  k.K = 5000;
  CHECK(block_count_for(k, 100, 1000) == 1000);
}

TEST_CASE("spec validation") {
  auto s = default_spec(ExperimentKind::race);
  s.trials = 0;
  CHECK_THROWS_AS(s.validate(), ParameterError);
  s = default_spec(ExperimentKind::race);
  s.dims.clear();
  CHECK_THROWS_AS(s.validate(), ParameterError);
  s = default_spec(ExperimentKind::race);
  s.oversampling = 0.5;
  CHECK_THROWS_AS(s.validate(), ParameterError);
  s = default_spec(ExperimentKind::lemma3_check);
  s.samples = 10;
  CHECK_THROWS_AS(s.validate(), ParameterError);
  for (auto kind : all_kinds()) CHECK_NOTHROW(default_spec(kind).validate());
}

TEST_CASE("trial problems are keyed by their seed") {
  const auto a = make_trial_problem(30, 300, 5);
  const auto b = make_trial_problem(30, 300, 5);
  CHECK(a.x == b.x);
  CHECK(a.z0 == b.z0);
  CHECK(a.ensemble == b.ensemble);
  CHECK(a.x.norm() == doctest::Approx(1.0));
  CHECK_FALSE(make_trial_problem(30, 300, 6).x == a.x);
  const auto s = default_spec(ExperimentKind::race);
  CHECK(trial_seed(s, 100, 0) != trial_seed(s, 100, 1));
  CHECK(trial_seed(s, 100, 0) != trial_seed(default_spec(ExperimentKind::omega_trace), 100, 0));
}

TEST_CASE("single-trial sweep is reproducible") {
  auto s = small(ExperimentKind::tgamma_sweep);
  s.dims = {100};
  s.trials = 1;
  const auto a = compute_experiment(s);
  const auto b = compute_experiment(s);
  REQUIRE(a.tables.at("tgamma.csv").size() == 1);
  CHECK(a.tables == b.tables);
  CHECK(a.tables.at("tgamma.csv").number(0, "T_gamma_0.5") <= a.tables.at("tgamma.csv").number(0, "T_gamma_0.1"));
}

TEST_CASE("outputs do not depend on the worker count") {
  for (auto kind : all_kinds()) {
    CAPTURE(kind_name(kind));
    auto s = small(kind);
    s.workers = 1;
    const auto one = compute_experiment(s);
    s.workers = 3;
    const auto three = compute_experiment(s);
    REQUIRE(one.tables.size() == three.tables.size());
    for (const auto& [name, table] : one.tables) {
      if (name.find("_times") != std::string::npos) continue;
      CHECK_MESSAGE(table.to_csv() == three.tables.at(name).to_csv(), name);
    }
  }
}

TEST_CASE("race legs share their start and swap cleanly") {
  auto s = small(ExperimentKind::race);
  const auto fwd = compute_experiment(s);
  s.legs = {Algorithm::wf, Algorithm::rwf};
  const auto rev = compute_experiment(s);
  const auto& curves = fwd.tables.at("race_curves.csv");
  std::vector<std::string> starts;
  for (std::size_t r = 0; r < curves.size(); ++r) {
    if (curves.at(r, "k") == "0") starts.push_back(curves.at(r, "median_dist_rel"));
  }
  REQUIRE(starts.size() == 2);
  CHECK(starts[0] == starts[1]);
  auto rows_for = [](const Table& t, const std::string& alg) {
    std::vector<std::vector<std::string>> out;
    for (std::size_t r = 0; r < t.size(); ++r) {
      if (t.at(r, "algorithm") == alg) out.push_back(t.rows()[r]);
    }
    return out;
  };
  for (const char* name : {"race.csv", "race_curves.csv"}) {
    for (const char* alg : {"rwf", "wf"}) {
      CHECK(rows_for(fwd.tables.at(name), alg) == rows_for(rev.tables.at(name), alg));
    }
  }
  CHECK(fwd.tables.at("race.csv").at(0, "algorithm") == "rwf");
  CHECK(rev.tables.at("race.csv").at(0, "algorithm") == "wf");
}

TEST_CASE("omega trace ends past the omega threshold") {
  auto s = small(ExperimentKind::omega_trace);
  const auto out = compute_experiment(s);
  const auto& sum = out.tables.at("omega_summary.csv");
  for (std::size_t r = 0; r < sum.size(); ++r) {
    CHECK(sum.number(r, "final_omega") >= std::numbers::pi / 2 - s.gamma / 4);
    CHECK(sum.at(r, "reached_omega_target") == "1");
  }
  CHECK(out.tables.at("omega_init.csv").size() == 10);
}

TEST_CASE("timing iteration counts repeat exactly") {
  const auto s = small(ExperimentKind::timing);
  const auto a = compute_experiment(s);
  const auto b = compute_experiment(s);
  CHECK(a.tables.at("timing.csv") == b.tables.at("timing.csv"));
  const auto& t = a.tables.at("timing_times.csv");
  for (std::size_t r = 0; r < t.size(); ++r) {
    CHECK(t.number(r, "spectral_seconds") > 0.0);
    CHECK(t.number(r, "rwf_seconds") > 0.0);
  }
}

TEST_CASE("sub-stage landmarks at n = 1200, m = 12n") {
  auto s = default_spec(ExperimentKind::substages);
  s.quiet = true;
  const auto out = compute_experiment(s);
  const auto& lm = out.tables.at("substages_landmarks.csv");
  std::size_t complete = 0;
  for (std::size_t r = 0; r < lm.size(); ++r) {
    if (lm.at(r, "T_gamma") == "NA") continue;
    ++complete;
    CHECK(lm.at(r, "ordered") == "1");
    CHECK(lm.number(r, "T_11") <= lm.number(r, "T_1"));
    CHECK(lm.number(r, "T_1") <= lm.number(r, "T_gamma2"));
    CHECK(lm.number(r, "T_gamma2") <= lm.number(r, "T_gamma"));
    CHECK(lm.number(r, "beta_band_fraction") >= 0.9);
    CHECK(lm.number(r, "alpha_increase_fraction") >= 0.9);
    CHECK(lm.number(r, "min_beta") > 0.0);
    CHECK(lm.number(r, "min_beta") <= 1.0);
  }
  MESSAGE("trials reaching T_gamma: " << complete << "/" << lm.size());
  CHECK(complete >= 3);
}

TEST_CASE("state evolution outputs") {
  const auto out = compute_experiment(small(ExperimentKind::state_evolution));
  const auto& curves = out.tables.at("state_evolution.csv");
  bool perturbed = false;
  for (std::size_t r = 0; r < curves.size(); ++r) perturbed = perturbed || curves.at(r, "curve") == "perturbed";
  CHECK(perturbed);
  const auto& steps = out.tables.at("state_evolution_steps.csv");
  CHECK(steps.number(0, "steps_to_gamma") <= steps.number(1, "steps_to_gamma"));
  CHECK(out.tables.at("state_evolution_fit.csv").column("value") == 1);
}

TEST_CASE("lemma3 check reports per-cell seeds and samples") {
  auto s = default_spec(ExperimentKind::lemma3_check);
  s.quiet = true;
  s.dims = {2, 4};
  const auto out = compute_experiment(s);
  const auto& t = out.tables.at("lemma3.csv");
  CHECK(t.size() == 14);
  for (std::size_t r = 0; r < t.size(); ++r) {
    CHECK(t.number(r, "samples") == 1e6);
    CHECK_FALSE(t.at(r, "seed").empty());
    if (t.at(r, "theta_index") == "0") CHECK(t.number(r, "max_abs_error") <= 5e-3);
  }
  CHECK_THROWS_AS(make_angle_pair(1, 0.3, 1), ParameterError);
  const auto pair = make_angle_pair(6, 0.4, 2);
  const auto d = decompose(pair.z, pair.x);
  CHECK(d.theta == doctest::Approx(0.4));
  CHECK(d.r == doctest::Approx(1.5));
}

TEST_CASE("written outputs, manifest and replot") {
  auto s = small(ExperimentKind::omega_trace);
  s.output_dir = scratch("omega");
  CHECK(run_experiment(s) == 0);
  for (const char* f : {"omega.csv", "omega_summary.csv", "omega_init.csv", "manifest.json", "omega_trace.svg"}) {
    CHECK(fs::exists(s.output_dir / f));
  }
  const auto svg = slurp(s.output_dir / "omega_trace.svg");
  fs::remove(s.output_dir / "omega_trace.svg");
  replot(ExperimentKind::omega_trace, s.output_dir);
  CHECK(slurp(s.output_dir / "omega_trace.svg") == svg);

  // A trial rerun from its manifest seed reproduces the logged trace.
  const auto manifest = nlohmann::json::parse(slurp(s.output_dir / "manifest.json"));
  CHECK(manifest["experiment"] == "omega_trace");
  const auto& cell0 = manifest["cells"][0];
  const auto seed = cell0["trials"][1]["seed"].get<std::uint64_t>();
  TraceRequest req;
  req.n = cell0["n"].get<std::size_t>();
  req.seed = seed;
  req.config.K = cell0["K"].get<std::size_t>();
  req.config.tol = s.tol;
  const auto report = rerun_trial(req);
  const auto logged = Table::read(s.output_dir / "omega.csv");
  std::size_t matched = 0;
  for (std::size_t r = 0; r < logged.size(); ++r) {
    if (logged.at(r, "trial") != "1") continue;
    const auto k = static_cast<std::size_t>(logged.number(r, "k"));
    CHECK(cell(report.trace[k].omega) == logged.at(r, "omega"));
    CHECK(cell(report.trace[k].alpha) == logged.at(r, "alpha"));
    ++matched;
  }
  CHECK(matched > 5);
}

TEST_CASE("unwritable output directory is an I/O error") {
  const auto dir = scratch("blocked");
  std::ofstream(dir / "file") << "x";
  auto s = small(ExperimentKind::lemma3_check);
  s.output_dir = dir / "file" / "sub";
  CHECK_THROWS_AS(run_experiment(s), IoError);
}

TEST_CASE("command-line exit codes") {
  const std::string cli = PHASEFLOW_CLI_PATH;
  const auto dir = scratch("cli");
  CHECK(exit_code(cli + " --help") == 0);
  CHECK(exit_code(cli) == 2);
  CHECK(exit_code(cli + " race --trials 0 --out " + (dir / "a").string()) == 2);
  CHECK(exit_code(cli + " race --n 1 --out " + (dir / "a").string()) == 2);
  CHECK(exit_code(cli + " race --bogus") == 2);
  std::ofstream(dir / "file") << "x";
  CHECK(exit_code(cli + " lemma3_check --n 2 --samples 2000 --out " + (dir / "file" / "x").string()) == 1);
  CHECK(exit_code(cli + " race --n 20 --trials 2 --legs wf --mu-wf 40 --quiet --out " + (dir / "d").string()) ==
        3);
  const auto diverged = Table::read(dir / "d" / "race.csv");
  CHECK(diverged.at(0, "diverged") == "1");
  CHECK(exit_code(cli + " lemma3_check --n 2 --samples 2000 --quiet --out " + (dir / "ok").string()) == 0);
  CHECK(fs::exists(dir / "ok" / "lemma3.csv"));
  CHECK(exit_code(cli + " replot omega_trace " + (dir / "ok").string()) == 1);
  CHECK(exit_code(cli + " trace --n 50 --seed 3 --out " + (dir / "trace.csv").string()) == 0);
  CHECK(slurp(dir / "trace.csv").rfind("k,alpha,beta,r,omega,dist_rel,loss\n", 0) == 0);
}
