#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>

#include "detail.hpp"
#include "phaseflow/analysis.hpp"
#include "phaseflow/errors.hpp"
#include "phaseflow/rng.hpp"

#ifndef PHASEFLOW_VERSION
#define PHASEFLOW_VERSION "unknown"
#endif

namespace phaseflow::harness {

using detail::Json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Partial {
  std::map<std::string, Table> tables;
  Json cells = Json::array();
  Json aggregates = Json::object();
  std::size_t diverged = 0;
};

struct TrialRun {
  RunReport report;
  bool diverged = false;
};

TrialRun guarded(const SolverConfig& config, const TrialProblem& p, std::size_t K) {
  try {
    if (config.algorithm == Algorithm::wf) return {run_wf(config, p.ensemble, p.z0, p.x), false};
    return {run(config, p.ensemble, partition_blocks(p.ensemble.sample_count(), K), p.z0, p.x), false};
  } catch (const DivergenceError& e) {
    TrialRun out;
    out.report.trace = e.trace();
    out.report.T_gamma = detect_t_gamma(out.report.trace, config.gamma);
    out.report.final_dist = kNaN;
    out.report.contraction_estimate = kNaN;
    out.diverged = true;
    return out;
  }
}

SolverConfig rwf_config(const ExperimentSpec& spec, std::size_t K, std::uint64_t seed) {
  SolverConfig c;
  c.mu = spec.mu_rwf;
  c.gamma = spec.gamma;
  c.K = K;
  c.max_iters = spec.max_iters;
  c.tol = spec.tol;
  c.seed = seed;
  return c;
}

std::string gamma_label(double g) { return format_double(g); }

struct Cell {
  std::size_t n = 0;
  std::size_t m = 0;
  std::size_t K = 0;
};

std::vector<Cell> cells_for(const ExperimentSpec& spec) {
  std::vector<Cell> cells;
  for (std::size_t n : spec.dims) {
    const std::size_t m = sample_count_for(spec, n);
    cells.push_back({n, m, block_count_for(spec, n, m)});
  }
  return cells;
}

/// Flattened (cell, trial) task list plus the matching manifest entries.
struct Grid {
  std::vector<Cell> cells;
  std::size_t trials = 0;
  std::size_t size() const { return cells.size() * trials; }
  const Cell& cell_of(std::size_t task) const { return cells[task / trials]; }
  std::size_t trial_of(std::size_t task) const { return task % trials; }
  std::vector<std::size_t> order() const {
    std::vector<double> w;
    for (std::size_t i = 0; i < size(); ++i) w.push_back(static_cast<double>(cell_of(i).m * cell_of(i).n));
    return detail::largest_first(w);
  }
};

Json manifest_cells(const ExperimentSpec& spec, const Grid& grid) {
  Json cells = Json::array();
  for (const auto& c : grid.cells) {
    Json trials = Json::array();
    for (std::size_t t = 0; t < grid.trials; ++t) {
      trials.push_back({{"trial", t}, {"seed", trial_seed(spec, c.n, t)}});
    }
    cells.push_back({{"n", c.n}, {"m", c.m}, {"K", c.K}, {"trials", trials}});
  }
  return cells;
}

std::vector<double> as_doubles(const std::vector<std::optional<std::size_t>>& v) {
  std::vector<double> out;
  for (const auto& x : v) out.push_back(x ? static_cast<double>(*x) : kNaN);
  return out;
}

// ---------------------------------------------------------------------------

Partial tgamma_sweep(const ExperimentSpec& spec, std::size_t workers) {
  const Grid grid{cells_for(spec), spec.trials};
  const double gamma_min = *std::min_element(spec.gammas.begin(), spec.gammas.end());
  std::vector<TrialRun> runs(grid.size());
  detail::run_pool(grid.order(), workers, spec.quiet, "tgamma_sweep", [&](std::size_t i) {
    const Cell& c = grid.cell_of(i);
    const auto seed = trial_seed(spec, c.n, grid.trial_of(i));
    const auto problem = make_trial_problem(c.n, c.m, seed);
    SolverConfig config = rwf_config(spec, c.K, seed);
    config.gamma = gamma_min;
    config.stop_at_gamma = true;
    runs[i] = guarded(config, problem, c.K);
  });

  Partial out;
  std::vector<std::string> header = {"n", "m", "K", "trial", "seed"};
  for (double g : spec.gammas) header.push_back("T_gamma_" + gamma_label(g));
  header.insert(header.end(), {"iterations", "diverged"});
  Table table(header);

  std::vector<std::string> summary_header = {"n"};
  for (double g : spec.gammas) {
    const auto l = gamma_label(g);
    summary_header.insert(summary_header.end(),
                          {"median_T_gamma_" + l, "q1_T_gamma_" + l, "q3_T_gamma_" + l, "reached_" + l});
  }
  summary_header.push_back("log_reference");
  Table summary(summary_header);

  std::vector<std::vector<std::optional<double>>> medians(grid.cells.size());
  for (std::size_t ci = 0; ci < grid.cells.size(); ++ci) {
    const Cell& c = grid.cells[ci];
    std::vector<std::vector<std::optional<std::size_t>>> per_gamma(spec.gammas.size());
    for (std::size_t t = 0; t < grid.trials; ++t) {
      const auto& r = runs[ci * grid.trials + t];
      std::vector<std::string> row = {cell(c.n), cell(c.m), cell(c.K), cell(t), cell(trial_seed(spec, c.n, t))};
      for (std::size_t g = 0; g < spec.gammas.size(); ++g) {
        const auto T = detect_t_gamma(r.report.trace, spec.gammas[g]);
        per_gamma[g].push_back(T);
        row.push_back(cell(T));
      }
      row.push_back(cell(r.report.iterations()));
      row.push_back(cell(r.diverged));
      out.diverged += r.diverged ? 1 : 0;
      table.add_row(std::move(row));
    }
    Json agg = Json::object();
    for (std::size_t g = 0; g < spec.gammas.size(); ++g) {
      medians[ci].push_back(detail::median_missing_high(per_gamma[g]));
      agg["T_gamma_" + gamma_label(spec.gammas[g])] = detail::stats_json(as_doubles(per_gamma[g]));
    }
    out.aggregates[std::to_string(c.n)] = agg;
  }

  // c log n through the smallest-gamma medians, as the logarithmic reference curve.
  const auto ref_index = static_cast<std::size_t>(
      std::min_element(spec.gammas.begin(), spec.gammas.end()) - spec.gammas.begin());
  std::vector<double> ratios;
  for (std::size_t ci = 0; ci < grid.cells.size(); ++ci) {
    if (medians[ci][ref_index]) ratios.push_back(*medians[ci][ref_index] / std::log(double(grid.cells[ci].n)));
  }
  const double c_ref = ratios.empty() ? kNaN : detail::median(ratios);

  for (std::size_t ci = 0; ci < grid.cells.size(); ++ci) {
    const Cell& c = grid.cells[ci];
    std::vector<std::string> row = {cell(c.n)};
    for (std::size_t g = 0; g < spec.gammas.size(); ++g) {
      std::vector<double> finite;
      for (std::size_t t = 0; t < grid.trials; ++t) {
        const auto T = detect_t_gamma(runs[ci * grid.trials + t].report.trace, spec.gammas[g]);
        if (T) finite.push_back(static_cast<double>(*T));
      }
      const auto& med = medians[ci][g];
      row.push_back(med ? cell(*med) : "NA");
      row.push_back(finite.empty() ? "NA" : cell(detail::quantile(finite, 0.25)));
      row.push_back(finite.empty() ? "NA" : cell(detail::quantile(finite, 0.75)));
      row.push_back(cell(finite.size()));
    }
    row.push_back(cell(c_ref * std::log(double(c.n))));
    summary.add_row(std::move(row));
  }

  out.tables.emplace("tgamma.csv", std::move(table));
  out.tables.emplace("tgamma_summary.csv", std::move(summary));
  out.cells = manifest_cells(spec, grid);
  return out;
}

// ---------------------------------------------------------------------------

Partial race(const ExperimentSpec& spec, std::size_t workers) {
  const Grid grid{cells_for(spec), spec.trials};
  const std::size_t legs = spec.legs.size();
  std::vector<TrialRun> runs(grid.size() * legs);
  detail::run_pool(grid.order(), workers, spec.quiet, "race", [&](std::size_t i) {
    const Cell& c = grid.cell_of(i);
    const auto seed = trial_seed(spec, c.n, grid.trial_of(i));
    const auto problem = make_trial_problem(c.n, c.m, seed);
    for (std::size_t l = 0; l < legs; ++l) {
      SolverConfig config = rwf_config(spec, c.K, seed);
      config.algorithm = spec.legs[l];
      if (spec.legs[l] == Algorithm::wf) {
        config.mu = spec.mu_wf;
        config.K = 1;
      }
      runs[i * legs + l] = guarded(config, problem, config.K);
    }
  });

  Partial out;
  Table table({"n", "m", "trial", "seed", "algorithm", "mu", "K", "iterations", "converged", "final_dist",
               "contraction", "diverged"});
  Table curves({"n", "algorithm", "k", "median_dist_rel", "q1_dist_rel", "q3_dist_rel"});
  for (std::size_t ci = 0; ci < grid.cells.size(); ++ci) {
    const Cell& c = grid.cells[ci];
    std::vector<std::vector<double>> iterations(legs);
    for (std::size_t t = 0; t < grid.trials; ++t) {
      for (std::size_t l = 0; l < legs; ++l) {
        const auto& r = runs[(ci * grid.trials + t) * legs + l];
        const bool wf = spec.legs[l] == Algorithm::wf;
        table.add_row({cell(c.n), cell(c.m), cell(t), cell(trial_seed(spec, c.n, t)),
                       detail::algorithm_name(spec.legs[l]), cell(wf ? spec.mu_wf : spec.mu_rwf),
                       cell(wf ? std::size_t{1} : c.K),
                       r.report.converged ? cell(r.report.iterations()) : std::string("NA"),
                       cell(r.report.converged), cell(r.report.final_dist),
                       cell(r.report.contraction_estimate), cell(r.diverged)});
        iterations[l].push_back(r.report.converged ? static_cast<double>(r.report.iterations()) : kNaN);
        out.diverged += r.diverged ? 1 : 0;
      }
    }
    Json agg = Json::object();
    for (std::size_t l = 0; l < legs; ++l) {
      agg[detail::algorithm_name(spec.legs[l])] = detail::stats_json(iterations[l]);
      // Median dist curve; finished runs hold their last value.
      std::size_t longest = 0;
      for (std::size_t t = 0; t < grid.trials; ++t) {
        longest = std::max(longest, runs[(ci * grid.trials + t) * legs + l].report.trace.size());
      }
      for (std::size_t k = 0; k < longest; ++k) {
        std::vector<double> d;
        for (std::size_t t = 0; t < grid.trials; ++t) {
          const auto& trace = runs[(ci * grid.trials + t) * legs + l].report.trace;
          if (trace.empty()) continue;
          d.push_back(trace[std::min(k, trace.size() - 1)].dist_rel);
        }
        curves.add_row({cell(c.n), detail::algorithm_name(spec.legs[l]), cell(k), cell(detail::median(d)),
                        cell(detail::quantile(d, 0.25)), cell(detail::quantile(d, 0.75))});
      }
    }
    if (legs >= 2) {
      std::size_t first_wins = 0;
      for (std::size_t t = 0; t < grid.trials; ++t) {
        const double a = iterations[0][t];
        const double b = iterations[1][t];
        if (std::isfinite(a) && (!std::isfinite(b) || a < b)) ++first_wins;
      }
      agg["first_leg_strictly_faster"] = first_wins;
    }
    out.aggregates[std::to_string(c.n)] = agg;
  }
  out.tables.emplace("race.csv", std::move(table));
  out.tables.emplace("race_curves.csv", std::move(curves));
  out.cells = manifest_cells(spec, grid);
  return out;
}

// ---------------------------------------------------------------------------

double tan_omega0(const SignalVector& z0, const SignalVector& x) {
  const auto d = decompose(z0.values(), x.values());
  return std::abs(d.alpha) / d.beta;
}

Partial omega_trace(const ExperimentSpec& spec, std::size_t workers) {
  const Grid grid{cells_for(spec), spec.trials};
  std::vector<TrialRun> runs(grid.size());
  detail::run_pool(grid.order(), workers, spec.quiet, "omega_trace", [&](std::size_t i) {
    const Cell& c = grid.cell_of(i);
    const auto seed = trial_seed(spec, c.n, grid.trial_of(i));
    const auto problem = make_trial_problem(c.n, c.m, seed);
    // Runs past T_gamma so the trace also reaches T_omega, which may come later.
    runs[i] = guarded(rwf_config(spec, c.K, seed), problem, c.K);
  });

  Partial out;
  const double omega_target = std::numbers::pi / 2 - spec.gamma / 4;
  Table trace_table({"n", "trial", "k", "omega", "tan_omega", "alpha", "beta"});
  Table summary({"n", "m", "K", "trial", "seed", "T_gamma", "T_omega", "phase1_steps", "nondecreasing_fraction",
                 "tan_omega0", "final_omega", "reached_omega_target", "diverged"});
  Table init({"n", "draw", "seed", "tan_omega0", "reference"});
  for (std::size_t ci = 0; ci < grid.cells.size(); ++ci) {
    const Cell& c = grid.cells[ci];
    std::vector<double> fractions;
    for (std::size_t t = 0; t < grid.trials; ++t) {
      const auto& r = runs[ci * grid.trials + t];
      const auto& trace = r.report.trace;
      const auto lm = detect_landmarks(trace, spec.gamma, spec.delta);
      // Phase 1 is [0, T_gamma]; the recorded trace runs to max(T_gamma, T_omega + 1).
      const std::size_t last = lm.T_gamma ? *lm.T_gamma : trace.size() - 1;
      const std::size_t recorded = std::min(
          trace.size() - 1, std::max(last, lm.T_omega ? *lm.T_omega + 1 : trace.size() - 1));
      for (std::size_t k = 0; k <= recorded; ++k) {
        const auto& row = trace[k];
        trace_table.add_row({cell(c.n), cell(t), cell(row.k), cell(row.omega), cell(std::tan(row.omega)),
                             cell(row.alpha), cell(row.beta)});
      }
      std::size_t up = 0;
      for (std::size_t k = 0; k < last; ++k) up += trace[k + 1].omega >= trace[k].omega ? 1 : 0;
      const double fraction = last > 0 ? static_cast<double>(up) / static_cast<double>(last) : kNaN;
      fractions.push_back(fraction);
      const double final_omega = trace[recorded].omega;
      summary.add_row({cell(c.n), cell(c.m), cell(c.K), cell(t), cell(trial_seed(spec, c.n, t)),
                       cell(lm.T_gamma), cell(lm.T_omega), cell(last), cell(fraction),
                       cell(std::tan(trace[0].omega)), cell(final_omega), cell(final_omega >= omega_target),
                       cell(r.diverged)});
      out.diverged += r.diverged ? 1 : 0;
    }
    // Initial angles need only x and z0, so they are cheap to draw many times.
    const double reference = 1.0 / std::sqrt(double(c.n) * std::log(double(c.n)));
    std::vector<double> tans;
    for (std::size_t d = 0; d < spec.init_draws; ++d) {
      const auto seed = trial_seed(spec, c.n, d);
      const auto x = random_unit_signal(c.n, derive_seed(seed, {1}));
      const auto z0 = random_init(c.n, 1.0, derive_seed(seed, {3}));
      tans.push_back(tan_omega0(z0, x));
      init.add_row({cell(c.n), cell(d), cell(seed), cell(tans.back()), cell(reference)});
    }
    const double med_tan = detail::median(tans);
    out.aggregates[std::to_string(c.n)] = {{"nondecreasing_fraction", detail::stats_json(fractions)},
                                           {"median_tan_omega0", med_tan},
                                           {"reference_tan_omega0", reference},
                                           {"ratio_to_reference", med_tan / reference}};
  }
  out.tables.emplace("omega.csv", std::move(trace_table));
  out.tables.emplace("omega_summary.csv", std::move(summary));
  out.tables.emplace("omega_init.csv", std::move(init));
  out.cells = manifest_cells(spec, grid);
  return out;
}

// ---------------------------------------------------------------------------

Partial timing(const ExperimentSpec& spec) {
  // Repetitions run one after another so they do not compete for cores.
  const Grid grid{cells_for(spec), spec.trials};
  Partial out;
  Table counts({"n", "m", "K", "rep", "seed", "power_iterations", "spectral_correlation", "rwf_iterations",
                "rwf_reached", "diverged"});
  Table times({"n", "rep", "spectral_seconds", "rwf_seconds", "ratio"});
  Table summary({"n", "median_spectral_seconds", "median_rwf_seconds", "ratio_of_medians", "median_ratio"});
  for (const Cell& c : grid.cells) {
    std::vector<double> ts, tr, ratio;
    for (std::size_t rep = 0; rep < grid.trials; ++rep) {
      const auto seed = trial_seed(spec, c.n, rep);
      auto problem = make_trial_problem(c.n, c.m, seed);
      const auto init =
          spectral_init(problem.ensemble, spec.spectral_iterations, derive_seed(seed, {4}), &problem.x,
                        spec.spectral_method);
      const auto r = guarded(rwf_config(spec, c.K, seed), problem, c.K);
      if (!spec.quiet) std::fprintf(stderr, "\rtiming: n=%zu rep %zu/%zu", c.n, rep + 1, grid.trials);
      counts.add_row({cell(c.n), cell(c.m), cell(c.K), cell(rep), cell(seed), cell(init.power_iterations),
                      cell(init.correlation.value_or(kNaN)), cell(r.report.iterations()),
                      cell(r.report.converged), cell(r.diverged)});
      out.diverged += r.diverged ? 1 : 0;
      ts.push_back(init.wall_time);
      tr.push_back(r.report.wall_time);
      ratio.push_back(init.wall_time / r.report.wall_time);
      times.add_row({cell(c.n), cell(rep), cell(ts.back()), cell(tr.back()), cell(ratio.back())});
    }
    const double ms = detail::median(ts);
    const double mr = detail::median(tr);
    summary.add_row({cell(c.n), cell(ms), cell(mr), cell(ms / mr), cell(detail::median(ratio))});
    out.aggregates[std::to_string(c.n)] = {{"spectral_seconds", detail::stats_json(ts)},
                                           {"rwf_seconds", detail::stats_json(tr)},
                                           {"ratio", detail::stats_json(ratio)}};
  }
  if (!spec.quiet) std::fputc('\n', stderr);
  out.tables.emplace("timing.csv", std::move(counts));
  out.tables.emplace("timing_times.csv", std::move(times));
  out.tables.emplace("timing_times_summary.csv", std::move(summary));
  out.cells = manifest_cells(spec, grid);
  return out;
}

// ---------------------------------------------------------------------------

Partial substages(const ExperimentSpec& spec, std::size_t workers) {
  const Grid grid{cells_for(spec), spec.trials};
  std::vector<TrialRun> runs(grid.size());
  detail::run_pool(grid.order(), workers, spec.quiet, "substages", [&](std::size_t i) {
    const Cell& c = grid.cell_of(i);
    const auto seed = trial_seed(spec, c.n, grid.trial_of(i));
    const auto problem = make_trial_problem(c.n, c.m, seed);
    SolverConfig config = rwf_config(spec, c.K, seed);
    config.stop_at_gamma = true;
    runs[i] = guarded(config, problem, c.K);
  });

  Partial out;
  Table curves({"n", "trial", "k", "alpha", "beta"});
  Table landmarks({"n", "m", "K", "trial", "seed", "T_11", "T_1", "T_gamma2", "T_omega", "T_gamma", "ordered",
                   "beta_band_fraction", "alpha_increase_fraction", "min_beta", "diverged"});
  for (std::size_t ci = 0; ci < grid.cells.size(); ++ci) {
    const Cell& c = grid.cells[ci];
    std::vector<double> band, increase;
    for (std::size_t t = 0; t < grid.trials; ++t) {
      const auto& r = runs[ci * grid.trials + t];
      const auto& trace = r.report.trace;
      for (const auto& row : trace.rows()) {
        curves.add_row({cell(c.n), cell(t), cell(row.k), cell(row.alpha), cell(row.beta)});
      }
      const auto lm = detect_landmarks(trace, spec.gamma, spec.delta);
      const std::size_t last = trace.size() - 1;
      double beta_fraction = kNaN;
      if (lm.T_11 && lm.T_1 && *lm.T_1 > *lm.T_11) {
        std::size_t in = 0;
        for (std::size_t s = *lm.T_11 + 1; s <= std::min(*lm.T_1, last); ++s) {
          in += (trace[s].beta >= 1.0 / 3 - 0.1 && trace[s].beta <= 0.75 + 0.1) ? 1 : 0;
        }
        beta_fraction = static_cast<double>(in) / static_cast<double>(*lm.T_1 - *lm.T_11);
      }
      double alpha_fraction = kNaN;
      if (lm.T_11) {
        std::size_t up = 0;
        std::size_t steps = 0;
        for (std::size_t s = 0; s <= *lm.T_11 && s + 1 <= last; ++s, ++steps) {
          up += trace[s + 1].alpha > trace[s].alpha ? 1 : 0;
        }
        if (steps > 0) alpha_fraction = static_cast<double>(up) / static_cast<double>(steps);
      }
      // Smallest beta seen before T_gamma (or over the whole trace if it never got there).
      const std::size_t phase1_end = lm.T_gamma ? std::min(*lm.T_gamma, last) : last;
      double min_beta = trace[0].beta;
      for (std::size_t s = 1; s <= phase1_end; ++s) min_beta = std::min(min_beta, trace[s].beta);
      band.push_back(beta_fraction);
      increase.push_back(alpha_fraction);
      landmarks.add_row({cell(c.n), cell(c.m), cell(c.K), cell(t), cell(trial_seed(spec, c.n, t)),
                         cell(lm.T_11), cell(lm.T_1), cell(lm.T_gamma2), cell(lm.T_omega), cell(lm.T_gamma),
                         cell(lm.ordered()), cell(beta_fraction), cell(alpha_fraction), cell(min_beta),
                         cell(r.diverged)});
      out.diverged += r.diverged ? 1 : 0;
    }
    out.aggregates[std::to_string(c.n)] = {{"beta_band_fraction", detail::stats_json(band)},
                                           {"alpha_increase_fraction", detail::stats_json(increase)}};
  }
  out.tables.emplace("substages.csv", std::move(curves));
  out.tables.emplace("substages_landmarks.csv", std::move(landmarks));
  out.cells = manifest_cells(spec, grid);
  return out;
}

// ---------------------------------------------------------------------------

Partial state_evolution(const ExperimentSpec& spec, std::size_t workers) {
  Partial out;
  Table curves({"curve", "n", "step", "alpha", "beta"});
  Table steps({"n", "alpha0", "steps_to_gamma"});
  std::vector<double> log_n, log_steps, ln_n, step_counts;
  for (std::size_t n : spec.dims) {
    StateEvolutionOptions opt;
    opt.mu = spec.mu_rwf;
    opt.gamma = spec.gamma;
    const double alpha0 = initial_alpha_for_dimension(double(n));
    const auto states = run_state_evolution(alpha0, 1.0, opt);
    for (std::size_t s = 0; s < states.size(); ++s) {
      curves.add_row({"clean", cell(n), cell(s), cell(states[s].alpha), cell(states[s].beta)});
    }
    const std::size_t count = states.size() - 1;
    steps.add_row({cell(n), cell(alpha0), cell(count)});
    log_n.push_back(std::log(double(n)));
    log_steps.push_back(std::log(double(count)));
    ln_n.push_back(std::log(double(n)));
    step_counts.push_back(double(count));
    if (spec.perturb > 0.0) {
      opt.perturbation_ceiling = spec.perturb;
      opt.seed = derive_seed(spec.master_seed, {static_cast<std::uint64_t>(spec.kind), n, 0xbe7a});
      const auto noisy = run_state_evolution(alpha0, 1.0, opt);
      for (std::size_t s = 0; s < noisy.size(); ++s) {
        curves.add_row({"perturbed", cell(n), cell(s), cell(noisy[s].alpha), cell(noisy[s].beta)});
      }
    }
  }
  Table fit({"quantity", "value"});
  if (spec.dims.size() >= 2) {
    const auto [intercept, exponent] = detail::linear_fit(log_n, log_steps);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < ln_n.size(); ++i) {
      sxy += ln_n[i] * step_counts[i];
      sxx += ln_n[i] * ln_n[i];
    }
    fit.add_row({"n_exponent", cell(exponent)});
    fit.add_row({"log_intercept", cell(intercept)});
    fit.add_row({"C_log_n", cell(sxy / sxx)});
    out.aggregates["n_exponent"] = exponent;
    out.aggregates["C_log_n"] = sxy / sxx;
  }

  // Empirical overlay: full-sample trajectories next to the recursion started
  // from the same (alpha_0, beta_0).
  const std::size_t n = spec.emp_n;
  const std::size_t m = spec.emp_m;
  const std::size_t K = std::clamp<std::size_t>(spec.K == 0 ? auto_block_count(n) : spec.K, 1, m);
  std::vector<TrialRun> runs(spec.trials);
  std::vector<std::size_t> order(spec.trials);
  std::iota(order.begin(), order.end(), 0);
  detail::run_pool(order, workers, spec.quiet, "state_evolution", [&](std::size_t t) {
    const auto seed = trial_seed(spec, n, t);
    const auto problem = make_trial_problem(n, m, seed);
    runs[t] = guarded(rwf_config(spec, K, seed), problem, K);
  });
  Table empirical({"trial", "seed", "k", "alpha_emp", "beta_emp", "alpha_rec", "beta_rec"});
  Json deviations = Json::array();
  Json cells = Json::array();
  for (std::size_t t = 0; t < spec.trials; ++t) {
    const auto& trace = runs[t].report.trace;
    const auto seed = trial_seed(spec, n, t);
    StateEvolutionOptions opt;
    opt.mu = spec.mu_rwf;
    opt.gamma = spec.gamma;
    opt.stop_at_gamma = false;
    opt.max_steps = trace.size() - 1;
    const auto rec = run_state_evolution(trace[0].alpha, trace[0].beta, opt);
    double worst = 0.0;
    for (std::size_t k = 0; k < trace.size(); ++k) {
      empirical.add_row({cell(t), cell(seed), cell(k), cell(trace[k].alpha), cell(trace[k].beta),
                         cell(rec[k].alpha), cell(rec[k].beta)});
      if (k <= 10) worst = std::max(worst, std::abs(trace[k].alpha - rec[k].alpha));
    }
    deviations.push_back(worst);
    out.diverged += runs[t].diverged ? 1 : 0;
    cells.push_back({{"trial", t}, {"seed", seed}});
  }
  out.aggregates["empirical"] = {{"n", n}, {"m", m}, {"K", K}, {"max_alpha_deviation_first_10", deviations}};
  out.cells = Json::array({Json{{"n", n}, {"m", m}, {"K", K}, {"trials", cells}}});
  out.tables.emplace("state_evolution.csv", std::move(curves));
  out.tables.emplace("state_evolution_steps.csv", std::move(steps));
  out.tables.emplace("state_evolution_fit.csv", std::move(fit));
  out.tables.emplace("state_evolution_empirical.csv", std::move(empirical));
  return out;
}

// ---------------------------------------------------------------------------

constexpr std::size_t kLemma3Angles = 7;  // 0, pi/12, ..., pi/2

Partial lemma3_check(const ExperimentSpec& spec, std::size_t workers) {
  const std::size_t cells = spec.dims.size() * kLemma3Angles;
  std::vector<Lemma3Cell> results(cells);
  std::vector<double> weights;
  for (std::size_t i = 0; i < cells; ++i) weights.push_back(double(spec.dims[i / kLemma3Angles]));
  detail::run_pool(detail::largest_first(weights), workers, spec.quiet, "lemma3_check", [&](std::size_t i) {
    const std::size_t d = spec.dims[i / kLemma3Angles];
    const std::size_t j = i % kLemma3Angles;
    const double theta = double(j) * std::numbers::pi / 12;
    const auto seed = trial_seed(spec, d, j);
    results[i] = evaluate_lemma3_cell(make_angle_pair(d, theta, derive_seed(seed, {1})), spec.samples,
                                      derive_seed(seed, {2}));
  });
  Partial out;
  Table table({"dim", "theta_index", "theta", "seed", "samples", "max_abs_error", "max_z_score", "components",
               "within_band", "all_within_3sigma"});
  std::size_t components = 0, within = 0;
  for (std::size_t i = 0; i < cells; ++i) {
    const std::size_t d = spec.dims[i / kLemma3Angles];
    const std::size_t j = i % kLemma3Angles;
    const auto& r = results[i];
    table.add_row({cell(d), cell(j), cell(double(j) * std::numbers::pi / 12), cell(trial_seed(spec, d, j)),
                   cell(spec.samples), cell(r.max_abs_error), cell(r.max_z_score), cell(r.components),
                   cell(r.within_band), cell(r.within_band == r.components)});
    components += r.components;
    within += r.within_band;
    out.cells.push_back({{"dim", d}, {"theta_index", j}, {"seed", trial_seed(spec, d, j)}});
  }
  out.aggregates = {{"components", components},
                    {"within_band", within},
                    {"fraction_within_band", double(within) / double(components)}};
  out.tables.emplace("lemma3.csv", std::move(table));
  return out;
}

}  // namespace

AnglePair make_angle_pair(std::size_t d, double theta, std::uint64_t seed) {
  if (d < 2) throw ParameterError("angle pairs need dimension at least 2");
  Rng rng(seed);
  std::vector<double> x(d), u(d);
  for (auto& v : x) v = rng.gaussian();
  const double nx = norm2(x);
  for (auto& v : x) v /= nx;
  for (auto& v : u) v = rng.gaussian();
  const double proj = dot(u, x);
  for (std::size_t i = 0; i < d; ++i) u[i] -= proj * x[i];
  const double nu = norm2(u);
  for (auto& v : u) v /= nu;
  std::vector<double> z(d);
  for (std::size_t i = 0; i < d; ++i) z[i] = 1.5 * (std::cos(theta) * x[i] + std::sin(theta) * u[i]);
  return {std::move(z), std::move(x)};
}

Lemma3Cell evaluate_lemma3_cell(const AnglePair& pair, std::size_t samples, std::uint64_t seed) {
  const auto closed = expected_update(pair.z, pair.x);
  const auto mc = mc_expectation_estimate(pair.z, pair.x, samples, seed);
  Lemma3Cell out;
  out.components = closed.size();
  for (std::size_t j = 0; j < closed.size(); ++j) {
    const double err = std::abs(mc.mean[j] - closed[j]);
    const double z = mc.std_error[j] > 0.0 ? err / mc.std_error[j] : (err == 0.0 ? 0.0 : kNaN);
    out.max_abs_error = std::max(out.max_abs_error, err);
    out.max_z_score = std::max(out.max_z_score, z);
    out.within_band += z <= 3.0 ? 1 : 0;
  }
  return out;
}

ExperimentOutput compute_experiment(const ExperimentSpec& spec) {
  spec.validate();
  const std::size_t workers = resolve_workers(spec.workers);
  const auto start = std::chrono::steady_clock::now();
  Partial p;
  switch (spec.kind) {
    case ExperimentKind::tgamma_sweep: p = tgamma_sweep(spec, workers); break;
    case ExperimentKind::race: p = race(spec, workers); break;
    case ExperimentKind::omega_trace: p = omega_trace(spec, workers); break;
    case ExperimentKind::timing: p = timing(spec); break;
    case ExperimentKind::substages: p = substages(spec, workers); break;
    case ExperimentKind::state_evolution: p = state_evolution(spec, workers); break;
    case ExperimentKind::lemma3_check: p = lemma3_check(spec, workers); break;
  }
  ExperimentOutput out;
  out.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out.diverged = p.diverged;
  out.tables = std::move(p.tables);
  Json files = Json::array();
  for (const auto& [name, table] : out.tables) files.push_back(name);
  const Json manifest = {
      {"software", "phaseflow"},
      {"version", PHASEFLOW_VERSION},
      {"experiment", std::string(kind_name(spec.kind))},
      {"spec", detail::spec_to_json(spec)},
      {"workers", workers},
      {"wall_time_seconds", out.wall_time},
      {"diverged_trials", out.diverged},
      {"files", files},
      {"cells", p.cells},
      {"aggregates", p.aggregates},
  };
  out.manifest_json = manifest.dump(2) + "\n";
  return out;
}

void write_outputs(const ExperimentSpec& spec, const ExperimentOutput& output) {
  std::error_code ec;
  std::filesystem::create_directories(spec.output_dir, ec);
  if (ec) throw IoError("cannot create " + spec.output_dir.string() + ": " + ec.message());
  for (const auto& [name, table] : output.tables) table.write(spec.output_dir / name);
  const auto manifest_path = spec.output_dir / "manifest.json";
  std::ofstream manifest(manifest_path, std::ios::binary);
  if (!manifest) throw IoError("cannot open " + manifest_path.string() + " for writing");
  manifest << output.manifest_json;
  if (!manifest) throw IoError("failed writing " + manifest_path.string());
  replot(spec.kind, spec.output_dir);
}

std::size_t run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  // Fail on an unwritable directory before spending time on the trials.
  std::error_code ec;
  std::filesystem::create_directories(spec.output_dir, ec);
  if (ec || !std::filesystem::is_directory(spec.output_dir)) {
    throw IoError("cannot create output directory " + spec.output_dir.string());
  }
  const auto output = compute_experiment(spec);
  write_outputs(spec, output);
  return output.diverged;
}

}  // namespace phaseflow::harness
