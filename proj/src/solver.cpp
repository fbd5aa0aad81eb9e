#include "phaseflow/solver.hpp"

#include <chrono>
#include <cmath>

#include "phaseflow/errors.hpp"
#include "phaseflow/objective.hpp"

namespace phaseflow {

void SolverConfig::validate() const {
  if (!(mu >= 0.0) || !std::isfinite(mu)) throw ParameterError("step size must be non-negative");
  if (algorithm == Algorithm::rwf && mu > 1.0) throw ParameterError("rwf step size must lie in [0, 1]");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ParameterError("gamma must lie in (0, 1)");
  if (!(tol > 0.0 && tol < gamma)) throw ParameterError("tol must lie in (0, gamma)");
  if (K == 0) throw ParameterError("block count must be positive");
}

std::vector<double> rwf_step(std::span<const double> z, const MeasurementSet& ensemble, SampleRange block,
                             double mu) {
  const auto g = rwf_gradient(ensemble, block, z);
  std::vector<double> next(z.begin(), z.end());
  for (std::size_t j = 0; j < next.size(); ++j) next[j] -= mu * g.gradient[j];
  return next;
}

namespace {

RunReport iterate(const SolverConfig& config, const MeasurementSet& ensemble, const BlockSchedule& schedule,
                  const SignalVector& z0, const SignalVector& x, const RunHooks& hooks) {
  config.validate();
  const std::size_t n = ensemble.dimension();
  if (z0.size() != n || x.size() != n) throw ParameterError("signal dimension does not match ensemble");
  if (schedule.sample_count() != ensemble.sample_count()) throw ParameterError("schedule does not match ensemble");
  if (!ensemble.observed()) throw StateError("ensemble has no observations");

  const auto start = std::chrono::steady_clock::now();
  const bool reshaped = config.algorithm == Algorithm::rwf;
  const double x_norm = x.norm();
  if (x_norm == 0.0) throw ParameterError("truth is zero");
  // Metrics are taken against the sign of x the start point leans towards; the
  // finished trace is flipped if the run ended up near the other sign.
  const SignalVector x_ref = dot(z0.values(), x.values()) >= 0.0 ? x : x.scaled(-1.0);
  const double guard = 10.0 * z0.norm() + 10.0;

  // loss(0) per block, for the truth-free stop rule.
  std::vector<double> zero_loss(schedule.block_count(), 0.0);
  for (std::size_t t = 0; t < schedule.block_count(); ++t) {
    const auto b = schedule.block(t);
    double s = 0.0;
    for (std::size_t i = b.begin; i < b.end; ++i) {
      const double y = ensemble.observations()[i];
      s += reshaped ? y * y : y * y * y * y;
    }
    zero_loss[t] = s / ((reshaped ? 2.0 : 4.0) * static_cast<double>(b.size()));
  }

  RunReport report;
  std::vector<double> z = z0.entries();
  for (std::size_t k = 0;; ++k) {
    const std::size_t t = k % schedule.block_count();
    const SampleRange block = schedule.block(t);
    const auto g = reshaped ? rwf_gradient(ensemble, block, z) : wf_gradient(ensemble, block, z);

    const auto d = decompose(z, x_ref.values());
    TraceRow row{k, d.alpha, d.beta, d.r, d.omega, dist(z, x.values()) / x_norm, g.loss};
    report.trace.append(row);
    if (!report.T_gamma && std::abs(1.0 - std::abs(row.alpha)) <= config.gamma / 2 && row.beta <= config.gamma / 2) {
      report.T_gamma = k;
    }

    if (config.stop_rule == StopRule::distance) {
      report.converged = row.dist_rel <= config.tol;
    } else {
      report.converged = g.loss <= config.tol * config.tol * zero_loss[t];
    }
    if (report.converged || (config.stop_at_gamma && report.T_gamma) || k >= config.max_iters) break;

    bool finite = true;
    for (std::size_t j = 0; j < n; ++j) {
      z[j] -= config.mu * g.gradient[j];
      finite = finite && std::isfinite(z[j]);
    }
    if (hooks.on_update) hooks.on_update(k, block);
    if (!finite || norm2(z) > guard) {
      throw DivergenceError("iterate diverged at iteration " + std::to_string(k + 1), std::move(report.trace));
    }
  }

  if (report.trace.back().alpha < 0.0) report.trace.negate_alpha();
  report.final_dist = dist(z, x.values());
  report.contraction_estimate =
      report.T_gamma ? contraction_estimate(report.trace, *report.T_gamma) : std::nan("");
  report.final_iterate = std::move(z);
  report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace

RunReport run(const SolverConfig& config, const MeasurementSet& ensemble, const BlockSchedule& schedule,
              const SignalVector& z0, const SignalVector& x, const RunHooks& hooks) {
  if (config.algorithm != Algorithm::rwf) throw ParameterError("run() drives rwf; use run_wf for wf");
  if (schedule.block_count() != config.K) throw ParameterError("schedule block count differs from config.K");
  return iterate(config, ensemble, schedule, z0, x, hooks);
}

RunReport run_wf(const SolverConfig& config, const MeasurementSet& ensemble, const SignalVector& z0,
                 const SignalVector& x, const RunHooks& hooks) {
  SolverConfig cfg = config;
  cfg.algorithm = Algorithm::wf;
  cfg.K = 1;
  return iterate(cfg, ensemble, partition_blocks(ensemble.sample_count(), 1), z0, x, hooks);
}

}  // namespace phaseflow
