#include <omp.h>

#include <array>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <string>

#include "detail.hpp"
#include "phaseflow/errors.hpp"
#include "phaseflow/rng.hpp"

namespace phaseflow::harness {

namespace {

constexpr std::array<std::pair<ExperimentKind, std::string_view>, 7> kKindNames = {{
    {ExperimentKind::tgamma_sweep, "tgamma_sweep"},
    {ExperimentKind::race, "race"},
    {ExperimentKind::omega_trace, "omega_trace"},
    {ExperimentKind::timing, "timing"},
    {ExperimentKind::substages, "substages"},
    {ExperimentKind::state_evolution, "state_evolution"},
    {ExperimentKind::lemma3_check, "lemma3_check"},
}};

void require(bool ok, const std::string& message) {
  if (!ok) throw ParameterError(message);
}

}  // namespace

std::string_view kind_name(ExperimentKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

std::optional<ExperimentKind> parse_kind(std::string_view name) {
  for (const auto& [k, n] : kKindNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

const std::vector<ExperimentKind>& all_kinds() {
  static const std::vector<ExperimentKind> kinds = [] {
    std::vector<ExperimentKind> out;
    for (const auto& [k, name] : kKindNames) out.push_back(k);
    return out;
  }();
  return kinds;
}

ExperimentSpec default_spec(ExperimentKind kind) {
  ExperimentSpec s;
  s.kind = kind;
  switch (kind) {
    case ExperimentKind::tgamma_sweep:
      s.dims = {100, 200, 400, 800, 1600, 2000};
      s.trials = 50;
      s.gammas = {0.5, 0.1};
      break;
    case ExperimentKind::race:
      s.dims = {100, 200, 500};
      s.trials = 100;
      s.tol = 1e-5;
      s.max_iters = 5000;
      break;
    case ExperimentKind::omega_trace:
      s.dims = {500};
      s.trials = 20;
      break;
    case ExperimentKind::timing:
      s.dims = {500, 1000, 2000, 4000};
      s.trials = 5;
      s.gamma = 0.5;
      s.tol = 0.1;
      break;
    case ExperimentKind::substages:
      s.dims = {1200};
      s.oversampling = 12.0;
      s.trials = 5;
      s.K = 1;
      break;
    case ExperimentKind::state_evolution:
      s.dims = {100, 1000, 10000, 100000, 1000000};
      s.trials = 3;
      s.K = 1;
      s.max_iters = 30;
      break;
    case ExperimentKind::lemma3_check:
      s.dims = {2, 4, 8, 16};
      s.trials = 1;
      break;
  }
  return s;
}

void ExperimentSpec::validate() const {
  require(trials >= 1, "trials must be at least 1");
  require(!dims.empty(), "dims must be nonempty");
  for (std::size_t n : dims) require(n >= 2, "every dimension must be at least 2");
  require(std::isfinite(oversampling) && oversampling >= 1.0, "oversampling ratio must be at least 1");
  require(gamma > 0.0 && gamma < 1.0, "gamma must lie in (0, 1)");
  for (double g : gammas) require(g > 0.0 && g < 1.0, "every gamma must lie in (0, 1)");
  require(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
  require(mu_rwf > 0.0 && mu_rwf <= 1.0, "mu for RWF must lie in (0, 1]");
  require(mu_wf > 0.0 && std::isfinite(mu_wf), "mu for WF must be positive");
  require(max_iters >= 1, "max_iters must be at least 1");
  require(tol > 0.0 && std::isfinite(tol), "tol must be positive");
  require(perturb >= 0.0 && perturb < 1.0, "perturbation ceiling must lie in [0, 1)");
  require(spectral_iterations >= 1, "spectral iterations must be at least 1");
  switch (kind) {
    case ExperimentKind::tgamma_sweep:
      require(!gammas.empty(), "tgamma_sweep needs at least one gamma");
      break;
    case ExperimentKind::race:
      require(!legs.empty(), "race needs at least one leg");
      require(tol < gamma, "tol must be smaller than gamma");
      break;
    case ExperimentKind::omega_trace:
    case ExperimentKind::substages:
      require(init_draws >= 1, "init_draws must be at least 1");
      break;
    case ExperimentKind::timing:
      require(tol < gamma, "tol must be smaller than gamma");
      break;
    case ExperimentKind::state_evolution:
      require(emp_n >= 2 && emp_m >= emp_n, "empirical overlay needs n >= 2 and m >= n");
      break;
    case ExperimentKind::lemma3_check:
      require(samples >= 1000, "lemma3_check needs at least 1000 samples per cell");
      break;
  }
}

std::size_t auto_block_count(std::size_t n) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(1.5 * std::log(static_cast<double>(n)))));
}

std::size_t sample_count_for(const ExperimentSpec& spec, std::size_t n) {
  return static_cast<std::size_t>(std::llround(spec.oversampling * static_cast<double>(n)));
}

std::size_t block_count_for(const ExperimentSpec& spec, std::size_t n, std::size_t m) {
  const std::size_t K = spec.K == 0 ? auto_block_count(n) : spec.K;
  return std::clamp<std::size_t>(K, 1, m);
}

std::uint64_t trial_seed(const ExperimentSpec& spec, std::size_t n, std::size_t trial) {
  return derive_seed(spec.master_seed, {static_cast<std::uint64_t>(spec.kind), n, trial});
}

TrialProblem make_trial_problem(std::size_t n, std::size_t m, std::uint64_t seed) {
  auto x = random_unit_signal(n, derive_seed(seed, {1}));
  auto ensemble = observe(generate_gaussian_ensemble(n, m, derive_seed(seed, {2})), x);
  auto z0 = random_init(n, 1.0, derive_seed(seed, {3}));
  return {std::move(x), std::move(ensemble), std::move(z0)};
}

std::size_t resolve_workers(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("PHASEFLOW_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
    throw ParameterError("PHASEFLOW_WORKERS must be a positive integer");
  }
  return static_cast<std::size_t>(std::max(1, omp_get_max_threads()));
}

RunReport rerun_trial(const TraceRequest& request) {
  ExperimentSpec probe;
  probe.oversampling = request.oversampling;
  const std::size_t m = sample_count_for(probe, request.n);
  auto problem = make_trial_problem(request.n, m, request.seed);
  if (request.config.algorithm == Algorithm::wf) {
    return run_wf(request.config, problem.ensemble, problem.z0, problem.x);
  }
  const std::size_t K = std::clamp<std::size_t>(request.config.K, 1, m);
  SolverConfig config = request.config;
  config.K = K;
  return run(config, problem.ensemble, partition_blocks(m, K), problem.z0, problem.x);
}

namespace detail {

std::vector<std::size_t> largest_first(const std::vector<double>& weights) {
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return weights[a] > weights[b]; });
  return order;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  const double frac = pos - static_cast<double>(lo);
  if (lo == hi) return values[lo];
  return values[lo] + frac * (values[hi] - values[lo]);
}

double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

std::optional<double> median_missing_high(const std::vector<std::optional<std::size_t>>& values) {
  if (values.empty()) return std::nullopt;
  std::vector<double> v;
  for (const auto& x : values) {
    v.push_back(x ? static_cast<double>(*x) : std::numeric_limits<double>::infinity());
  }
  const double med = median(std::move(v));
  if (!std::isfinite(med)) return std::nullopt;
  return med;
}

std::string algorithm_name(Algorithm a) { return a == Algorithm::rwf ? "rwf" : "wf"; }

Json spec_to_json(const ExperimentSpec& spec) {
  Json legs = Json::array();
  for (auto a : spec.legs) legs.push_back(algorithm_name(a));
  return Json{
      {"kind", std::string(kind_name(spec.kind))},
      {"dims", spec.dims},
      {"oversampling", spec.oversampling},
      {"trials", spec.trials},
      {"gamma", spec.gamma},
      {"gammas", spec.gammas},
      {"delta", spec.delta},
      {"mu_rwf", spec.mu_rwf},
      {"mu_wf", spec.mu_wf},
      {"K", spec.K},
      {"master_seed", spec.master_seed},
      {"output_dir", spec.output_dir.string()},
      {"max_iters", spec.max_iters},
      {"tol", spec.tol},
      {"samples", spec.samples},
      {"legs", legs},
      {"spectral_method", spec.spectral_method == SpectralMethod::dense ? "dense" : "matrix_free"},
      {"spectral_iterations", spec.spectral_iterations},
      {"emp_n", spec.emp_n},
      {"emp_m", spec.emp_m},
      {"perturb", spec.perturb},
      {"init_draws", spec.init_draws},
  };
}

Json stats_json(const std::vector<double>& values) {
  std::vector<double> finite;
  for (double v : values) {
    if (std::isfinite(v)) finite.push_back(v);
  }
  Json j{{"count", values.size()}, {"finite", finite.size()}};
  if (finite.empty()) {
    j["median"] = nullptr;
    j["iqr"] = nullptr;
  } else {
    j["median"] = median(finite);
    j["iqr"] = quantile(finite, 0.75) - quantile(finite, 0.25);
  }
  return j;
}

std::pair<double, double> linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
  return {my - slope * mx, slope};
}

}  // namespace detail

}  // namespace phaseflow::harness
