#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "phaseflow/ensemble.hpp"
#include "phaseflow/harness/table.hpp"
#include "phaseflow/init.hpp"
#include "phaseflow/solver.hpp"

namespace phaseflow::harness {

enum class ExperimentKind { tgamma_sweep, race, omega_trace, timing, substages, state_evolution, lemma3_check };

std::string_view kind_name(ExperimentKind kind);
std::optional<ExperimentKind> parse_kind(std::string_view name);
const std::vector<ExperimentKind>& all_kinds();

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::tgamma_sweep;
  std::vector<std::size_t> dims;
  double oversampling = 10.0;  // m / n
  std::size_t trials = 1;
  double gamma = 0.1;
  std::vector<double> gammas;  // tgamma_sweep reports one T_gamma column per entry
  double delta = kDefaultDelta;
  double mu_rwf = 0.5;
  double mu_wf = 0.1;
  std::size_t K = 0;  // 0 picks auto_block_count(n)
  std::uint64_t master_seed = 42;
  std::filesystem::path output_dir = "out";
  std::size_t max_iters = 1000;
  double tol = 1e-3;
  std::size_t samples = 1000000;  // Monte-Carlo samples per lemma3 cell
  std::vector<Algorithm> legs = {Algorithm::rwf, Algorithm::wf};
  SpectralMethod spectral_method = SpectralMethod::dense;
  std::size_t spectral_iterations = kDefaultPowerIterations;
  std::size_t emp_n = 64;       // empirical overlay of state_evolution
  std::size_t emp_m = 500000;
  double perturb = 0.0;         // perturbation ceiling for an extra state-evolution curve
  std::size_t init_draws = 100; // omega_trace: draws for the tan(omega_0) statistic
  std::size_t workers = 0;      // 0: PHASEFLOW_WORKERS or all available threads
  bool quiet = false;

  /// Throws ParameterError.
  void validate() const;
};

ExperimentSpec default_spec(ExperimentKind kind);

/// ceil(1.5 ln n), the resampling block count used when K is left at 0.
std::size_t auto_block_count(std::size_t n);
std::size_t sample_count_for(const ExperimentSpec& spec, std::size_t n);
/// spec.K, or auto_block_count(n), clamped to [1, m].
std::size_t block_count_for(const ExperimentSpec& spec, std::size_t n, std::size_t m);

std::uint64_t trial_seed(const ExperimentSpec& spec, std::size_t n, std::size_t trial);

struct TrialProblem {
  SignalVector x;
  MeasurementSet ensemble;  // observed
  SignalVector z0;          // random init, scale 1
};

/// Unit signal, observed Gaussian ensemble and random start, all keyed by one seed.
TrialProblem make_trial_problem(std::size_t n, std::size_t m, std::uint64_t seed);

std::size_t resolve_workers(std::size_t requested);

struct ExperimentOutput {
  std::map<std::string, Table> tables;  // file name -> contents
  std::size_t diverged = 0;
  double wall_time = 0.0;
  std::string manifest_json;
};

/// Runs the experiment in memory.
ExperimentOutput compute_experiment(const ExperimentSpec& spec);

/// Writes every table, manifest.json and the plot to spec.output_dir.
void write_outputs(const ExperimentSpec& spec, const ExperimentOutput& output);

/// compute + write. Returns the number of divergent trials.
std::size_t run_experiment(const ExperimentSpec& spec);

/// Regenerates <kind>.svg from the CSVs already present in dir. lemma3_check has no plot.
void replot(ExperimentKind kind, const std::filesystem::path& dir);

/// Unit x and a z with ||z|| = 1.5 at acute angle theta to x, in dimension d.
struct AnglePair {
  std::vector<double> z;
  std::vector<double> x;
};
AnglePair make_angle_pair(std::size_t d, double theta, std::uint64_t seed);

struct Lemma3Cell {
  double max_abs_error = 0.0;
  double max_z_score = 0.0;  // max_j |mc_j - closed_j| / se_j
  std::size_t components = 0;
  std::size_t within_band = 0;  // components with z-score <= 3
};
/// Closed-form expected update against a Monte-Carlo estimate for one pair.
Lemma3Cell evaluate_lemma3_cell(const AnglePair& pair, std::size_t samples, std::uint64_t seed);

/// Single-trial rerun from a manifest seed, for tracing one (cell, trial).
struct TraceRequest {
  std::size_t n = 100;
  double oversampling = 10.0;
  std::uint64_t seed = 0;
  SolverConfig config;
};
RunReport rerun_trial(const TraceRequest& request);

}  // namespace phaseflow::harness
