#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "phaseflow/analysis.hpp"
#include "phaseflow/ensemble.hpp"

namespace phaseflow {

enum class Algorithm { rwf, wf };

enum class StopRule {
  distance,       // dist(z_k, x) <= tol ||x||; needs the truth
  relative_loss,  // loss(z_k) <= tol^2 loss(0) on the active block; truth-free
};

struct SolverConfig {
  double mu = 0.5;
  double gamma = 0.1;
  std::size_t K = 1;
  std::size_t max_iters = 1000;
  double tol = 1e-7;
  std::uint64_t seed = 0;  // echoed into manifests; the iteration itself is deterministic
  Algorithm algorithm = Algorithm::rwf;
  StopRule stop_rule = StopRule::distance;
  /// Stop as soon as T_gamma is reached, for experiments that only need Phase 1.
  bool stop_at_gamma = false;

  void validate() const;
};

struct RunReport {
  IterateTrace trace;
  std::optional<std::size_t> T_gamma;
  bool converged = false;
  double final_dist = 0.0;  // absolute dist(z_final, x)
  double contraction_estimate = 0.0;  // median per-step dist ratio from T_gamma on; NaN if undefined
  double wall_time = 0.0;
  std::vector<double> final_iterate;

  std::size_t iterations() const { return trace.empty() ? 0 : trace.size() - 1; }
};

/// Thrown when an iterate turns non-finite or leaves the ball ||z|| <= 10 ||z0|| + 10.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, IterateTrace trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}
  const IterateTrace& trace() const { return trace_; }

 private:
  IterateTrace trace_;
};

struct RunHooks {
  /// Called once per applied update with the iteration index and the block it read.
  std::function<void(std::size_t k, SampleRange block)> on_update;
};

/// z - mu * rwf_gradient(ensemble, block, z).gradient
std::vector<double> rwf_step(std::span<const double> z, const MeasurementSet& ensemble, SampleRange block,
                             double mu);

/// Resampled (K > 1) or full-batch (K = 1) reshaped Wirtinger flow. The truth x
/// is only used for the trace metrics and the distance stop rule.
RunReport run(const SolverConfig& config, const MeasurementSet& ensemble, const BlockSchedule& schedule,
              const SignalVector& z0, const SignalVector& x, const RunHooks& hooks = {});

/// Full-batch Wirtinger flow on the quartic loss.
RunReport run_wf(const SolverConfig& config, const MeasurementSet& ensemble, const SignalVector& z0,
                 const SignalVector& x, const RunHooks& hooks = {});

}  // namespace phaseflow
