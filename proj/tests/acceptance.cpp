// Acceptance checks, one per criterion. Prints "criterion N: PASS|FAIL ..." lines
// and exits non-zero if any selected criterion fails.
#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <unistd.h>

#include "phaseflow/analysis.hpp"
#include "phaseflow/ensemble.hpp"
#include "phaseflow/harness/experiment.hpp"
#include "phaseflow/harness/table.hpp"
#include "phaseflow/objective.hpp"
#include "phaseflow/rng.hpp"
#include "phaseflow/solver.hpp"

using namespace phaseflow;
using namespace phaseflow::harness;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double median_of(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

ExperimentSpec quiet_default(ExperimentKind kind) {
  auto s = default_spec(kind);
  s.quiet = true;
  return s;
}

// --- 1: closed-form expected update vs Monte Carlo ---------------------------
Verdict lemma3_grid() {
  const auto t0 = Clock::now();
  const std::size_t dims[] = {2, 4, 8, 12, 16};
  std::size_t components = 0, within = 0;
  double worst = 0.0;
  for (std::size_t j = 0; j < 50; ++j) {
    const double theta = (static_cast<double>(j) + 0.5) * (std::numbers::pi / 2) / 50.0;
    const auto pair = make_angle_pair(dims[j % 5], theta, derive_seed(101, {j, 0}));
    const auto cell = evaluate_lemma3_cell(pair, 1000000, derive_seed(101, {j, 1}));
    components += cell.components;
    within += cell.within_band;
    worst = std::max(worst, cell.max_z_score);
  }
  const double elapsed = seconds_since(t0);
  const double frac = double(within) / double(components);
  return {frac >= 0.98 && elapsed <= 120.0, std::to_string(within) + "/" + std::to_string(components) +
                                                " components within 3 sigma (" + fmt(100 * frac) +
                                                "%), worst z " + fmt(worst) + ", " + fmt(elapsed, 3) + " s"};
}

// --- 2: gradients vs central differences ------------------------------------
double fd_relative_error(const std::function<double(std::span<const double>)>& loss,
                         const std::vector<double>& grad, std::vector<double> z) {
  const double h = 1e-6;
  double num = 0.0, den = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    const double keep = z[j];
    z[j] = keep + h;
    const double up = loss(z);
    z[j] = keep - h;
    const double down = loss(z);
    z[j] = keep;
    const double fd = (up - down) / (2 * h);
    num += (fd - grad[j]) * (fd - grad[j]);
    den += grad[j] * grad[j];
  }
  return std::sqrt(num / den);
}

Verdict gradient_check() {
  double worst_rwf = 0.0, worst_wf = 0.0;
  std::size_t redraws = 0;
  for (std::uint64_t t = 0; t < 100; ++t) {
    const std::size_t n = 2 + t % 19;
    const std::size_t m = std::min<std::size_t>(200, 10 * n);
    const auto x = random_unit_signal(n, derive_seed(202, {t, 0}));
    const auto e = observe(generate_gaussian_ensemble(n, m, derive_seed(202, {t, 1})), x);
    const SampleRange all{0, m};
    // Redraw z until no sample sits near a kink of |a^T z|.
    std::vector<double> z;
    for (std::uint64_t draw = 0;; ++draw) {
      Rng rng(derive_seed(202, {t, 2, draw}));
      z.assign(n, 0.0);
      for (auto& v : z) v = rng.gaussian();
      double closest = INFINITY;
      for (std::size_t i = 0; i < m; ++i) closest = std::min(closest, std::abs(dot(e.row(i), z)) / norm2(e.row(i)));
      if (closest > 1e-3) break;
      ++redraws;
    }
    const auto g_rwf = rwf_gradient(e, all, z).gradient;
    const auto g_wf = wf_gradient(e, all, z).gradient;
    worst_rwf = std::max(worst_rwf, fd_relative_error([&](auto v) { return rwf_loss(e, all, v); }, g_rwf, z));
    worst_wf = std::max(worst_wf, fd_relative_error([&](auto v) { return wf_loss(e, all, v); }, g_wf, z));
  }
  return {worst_rwf <= 1e-5 && worst_wf <= 1e-6, "max relative error RWF " + fmt(worst_rwf) + ", WF " +
                                                     fmt(worst_wf) + " over 100 instances (" +
                                                     std::to_string(redraws) + " kink redraws)"};
}

// --- 3 and 4: full-batch recovery and the two-phase shape ---------------------
RunReport full_batch_run(std::size_t n, std::uint64_t seed, double tol) {
  const auto p = make_trial_problem(n, 10 * n, seed);
  SolverConfig c;
  c.mu = 0.5;
  c.K = 1;
  c.tol = tol;
  c.max_iters = 500;
  return run(c, p.ensemble, partition_blocks(10 * n, 1), p.z0, p.x);
}

Verdict recovery() {
  const auto t0 = Clock::now();
  std::size_t ok = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    try {
      ok += full_batch_run(100, derive_seed(303, {s}), 1e-7).converged ? 1 : 0;
    } catch (const DivergenceError&) {
    }
  }
  const double elapsed = seconds_since(t0);
  return {ok >= 95 && elapsed <= 60.0,
          std::to_string(ok) + "/100 seeds reached dist <= 1e-7 within 500 iterations, " + fmt(elapsed, 3) + " s"};
}

Verdict two_phase() {
  const std::size_t dims[] = {100, 200, 400, 800};
  const double tols[] = {1e-3, 1e-5, 1e-7};
  const std::uint64_t seeds = 25;
  std::vector<double> ratios;
  // medians[(n, tol)] of the first k with dist <= tol, over converged runs
  std::vector<std::array<double, 3>> rows;  // log n, log 1/tol, median T
  std::size_t converged = 0, total = 0;
  std::string per_n;
  for (std::size_t n : dims) {
    const std::size_t before = converged;
    std::vector<std::vector<double>> hits(3);
    for (std::uint64_t s = 0; s < seeds; ++s, ++total) {
      RunReport r;
      try {
        r = full_batch_run(n, derive_seed(303, {n, s}), 1e-7);
      } catch (const DivergenceError&) {
        continue;
      }
      if (!r.converged) continue;
      ++converged;
      ratios.push_back(r.contraction_estimate);
      for (std::size_t j = 0; j < 3; ++j) {
        std::size_t k = 0;
        while (r.trace[k].dist_rel > tols[j]) ++k;
        hits[j].push_back(double(k));
      }
    }
    per_n += " n=" + std::to_string(n) + ":" + std::to_string(converged - before);
    for (std::size_t j = 0; j < 3; ++j) {
      if (!hits[j].empty()) rows.push_back({std::log(double(n)), std::log(1.0 / tols[j]), median_of(hits[j])});
    }
  }
  if (rows.size() < 3) return {false, "too few converged runs to fit (" + std::to_string(converged) + ")"};
  // Least squares T ~ a log n + b log(1/tol), no intercept.
  double s11 = 0, s12 = 0, s22 = 0, s1y = 0, s2y = 0, mean = 0;
  for (const auto& [u, v, y] : rows) {
    s11 += u * u;
    s12 += u * v;
    s22 += v * v;
    s1y += u * y;
    s2y += v * y;
    mean += y;
  }
  mean /= double(rows.size());
  const double det = s11 * s22 - s12 * s12;
  const double a = (s1y * s22 - s2y * s12) / det;
  const double b = (s2y * s11 - s1y * s12) / det;
  double ss_res = 0, ss_tot = 0;
  for (const auto& [u, v, y] : rows) {
    ss_res += (y - a * u - b * v) * (y - a * u - b * v);
    ss_tot += (y - mean) * (y - mean);
  }
  const double r2 = 1.0 - ss_res / ss_tot;
  const double rho = median_of(ratios);
  return {rho <= 0.9 && r2 >= 0.8, "median post-T_gamma ratio " + fmt(rho) + ", fit a=" + fmt(a) + " b=" + fmt(b) +
                                       " R^2=" + fmt(r2) + " on " + std::to_string(rows.size()) + " medians (" +
                                       std::to_string(converged) + "/" + std::to_string(total) + " runs converged," + per_n + ")"};
}

// --- 5 to 9: harness experiments at their default sizes ------------------------
Verdict tgamma_scaling() {
  const auto t0 = Clock::now();
  const auto out = compute_experiment(quiet_default(ExperimentKind::tgamma_sweep));
  const auto& t = out.tables.at("tgamma_summary.csv");
  std::size_t r100 = t.size(), r1600 = t.size();
  for (std::size_t r = 0; r < t.size(); ++r) {
    if (t.at(r, "n") == "100") r100 = r;
    if (t.at(r, "n") == "1600") r1600 = r;
  }
  if (r100 == t.size() || r1600 == t.size()) return {false, "n = 100 or 1600 missing"};
  bool pass = true;
  std::string detail;
  for (const char* g : {"0.5", "0.1"}) {
    const std::string col = std::string("median_T_gamma_") + g;
    const double ratio = t.number(r1600, col) / t.number(r100, col);
    pass = pass && ratio <= 2.5;
    detail += "ratio(gamma=" + std::string(g) + ")=" + fmt(ratio) + " ";
  }
  bool below = true;
  for (std::size_t r = 0; r < t.size(); ++r) {
    below = below && t.number(r, "median_T_gamma_0.5") <= t.number(r, "median_T_gamma_0.1");
  }
  const double elapsed = seconds_since(t0);
  return {pass && below && elapsed <= 1800.0,
          detail + (below ? "gamma=0.5 curve at or below gamma=0.1, " : "curves cross, ") + fmt(elapsed, 4) + " s"};
}

Verdict race_ordering() {
  const auto out = compute_experiment(quiet_default(ExperimentKind::race));
  const auto& t = out.tables.at("race.csv");
  std::map<std::string, std::map<std::string, std::map<std::string, double>>> iters;  // n, trial, alg
  for (std::size_t r = 0; r < t.size(); ++r) {
    const double k = t.at(r, "iterations") == "NA" ? INFINITY : t.number(r, "iterations");
    iters[t.at(r, "n")][t.at(r, "trial")][t.at(r, "algorithm")] = k;
  }
  bool pass = true;
  std::string detail;
  for (const auto& [n, trials] : iters) {
    std::size_t wins = 0;
    for (const auto& [trial, by] : trials) wins += by.at("rwf") < by.at("wf") ? 1 : 0;
    pass = pass && wins >= 90;
    detail += "n=" + n + ": " + std::to_string(wins) + "/" + std::to_string(trials.size()) + " ";
  }
  return {pass, detail + "seeds with RWF strictly faster"};
}

Verdict omega_growth() {
  const auto out = compute_experiment(quiet_default(ExperimentKind::omega_trace));
  const auto& sum = out.tables.at("omega_summary.csv");
  std::vector<double> fractions;
  for (std::size_t r = 0; r < sum.size(); ++r) fractions.push_back(sum.number(r, "nondecreasing_fraction"));
  const auto& init = out.tables.at("omega_init.csv");
  std::vector<double> tans;
  for (std::size_t r = 0; r < init.size(); ++r) tans.push_back(init.number(r, "tan_omega0"));
  const double frac = median_of(fractions);
  const double ratio = median_of(tans) / init.number(0, "reference");
  return {frac >= 0.95 && ratio >= 1.0 / 3 && ratio <= 3.0,
          "median non-decreasing fraction " + fmt(frac) + ", median tan(omega_0) / (n log n)^-1/2 = " + fmt(ratio)};
}

Verdict timing_ordering() {
  const auto out = compute_experiment(quiet_default(ExperimentKind::timing));
  const auto& t = out.tables.at("timing_times_summary.csv");
  bool increasing = true;
  std::string detail = "ratio of medians:";
  for (std::size_t r = 0; r < t.size(); ++r) {
    detail += " " + fmt(t.number(r, "ratio_of_medians"));
    if (r > 0) increasing = increasing && t.number(r, "ratio_of_medians") > t.number(r - 1, "ratio_of_medians");
  }
  return {increasing && t.size() >= 4, detail};
}

Verdict state_tracking() {
  const auto out = compute_experiment(quiet_default(ExperimentKind::state_evolution));
  const auto& fit = out.tables.at("state_evolution_fit.csv");
  double exponent = NAN;
  for (std::size_t r = 0; r < fit.size(); ++r) {
    if (fit.at(r, "quantity") == "n_exponent") exponent = fit.number(r, "value");
  }
  const auto& emp = out.tables.at("state_evolution_empirical.csv");
  double worst = 0.0;
  for (std::size_t r = 0; r < emp.size(); ++r) {
    if (emp.number(r, "k") > 10) continue;
    worst = std::max(worst, std::abs(emp.number(r, "alpha_emp") - emp.number(r, "alpha_rec")));
  }
  return {exponent <= 0.1 && worst <= 0.1,
          "n-exponent " + fmt(exponent) + ", max |alpha_emp - alpha_rec| over k <= 10: " + fmt(worst)};
}

// --- 10: CLI determinism across runs and worker counts ------------------------
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Verdict determinism() {
  const std::map<std::string, std::string> args = {
      {"tgamma_sweep", "--n 60 120 --trials 4"},
      {"race", "--n 50 80 --trials 4"},
      {"omega_trace", "--n 100 --trials 4 --init-draws 20"},
      {"timing", "--n 60 120 --trials 2"},
      {"substages", "--n 150 --trials 3"},
      {"state_evolution", "--n 100 1000 --trials 2 --emp-m 20000 --perturb 0.05"},
      {"lemma3_check", "--n 2 3 --samples 20000"},
  };
  const fs::path root = fs::temp_directory_path() / ("phaseflow_accept_" + std::to_string(::getpid()));
  fs::remove_all(root);
  std::size_t files = 0;
  std::vector<std::string> mismatches;
  for (const auto& [kind, extra] : args) {
    const std::pair<const char*, const char*> runs[] = {{"a", "1"}, {"b", "1"}, {"c", "2"}};
    for (const auto& [tag, workers] : runs) {
      const auto dir = root / kind / tag;
      const std::string cmd = std::string("PHASEFLOW_WORKERS=") + workers + " " + PHASEFLOW_CLI_PATH + " " + kind +
                              " " + extra + " --seed 7 --quiet --out " + dir.string() + " >/dev/null 2>&1";
      if (std::system(cmd.c_str()) != 0) return {false, kind + " run " + tag + " failed"};
    }
    for (const auto& entry : fs::directory_iterator(root / kind / "a")) {
      const auto name = entry.path().filename().string();
      if (entry.path().extension() != ".csv" || name.find("_times") != std::string::npos) continue;
      ++files;
      const auto ref = slurp(entry.path());
      for (const char* tag : {"b", "c"}) {
        if (slurp(root / kind / tag / name) != ref) mismatches.push_back(kind + "/" + name + " (" + tag + ")");
      }
    }
  }
  fs::remove_all(root);
  std::string detail = std::to_string(files) + " CSV files compared over 7 subcommands";
  for (const auto& m : mismatches) detail += ", differs: " + m;
  return {mismatches.empty() && files >= 7, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"phaseflow acceptance checks"};
  std::vector<int> selected;
  app.add_option("--criterion", selected, "Criterion numbers to run (default: all)")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);
  if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};

  const std::map<int, std::function<Verdict()>> checks = {
      {1, lemma3_grid},     {2, gradient_check},  {3, recovery},        {4, two_phase},      {5, tgamma_scaling},
      {6, race_ordering},   {7, omega_growth},    {8, timing_ordering}, {9, state_tracking}, {10, determinism},
  };
  bool all = true;
  for (int c : selected) {
    Verdict v;
    try {
      v = checks.at(c)();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    std::cout << "criterion " << c << ": " << (v.pass ? "PASS" : "FAIL") << "  " << v.detail << std::endl;
    all = all && v.pass;
  }
  return all ? 0 : 1;
}
