#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "phaseflow/ensemble.hpp"

namespace phaseflow {

enum class InitMethod { random, spectral };

struct InitReport {
  SignalVector z0;
  InitMethod method;
  std::optional<double> correlation;  // |<z0,x>| / (||z0|| ||x||), only when the truth is supplied
  std::optional<double> norm_ratio;   // ||z0|| / ||x||
  double wall_time = 0.0;             // seconds
  std::size_t power_iterations = 0;
};

/// z0 with i.i.d. N(0, scale^2/n) entries.
SignalVector random_init(std::size_t n, double scale, std::uint64_t seed);

using LinearOperator = std::function<void(std::span<const double> in, std::span<double> out)>;

struct PowerIterationResult {
  std::vector<double> vector;  // unit norm, first nonzero entry positive
  double eigenvalue = 0.0;     // Rayleigh quotient at the returned vector
  std::size_t iterations = 0;
  bool converged = false;  // successive-iterate angle fell below the tolerance
};

inline constexpr std::size_t kDefaultPowerIterations = 200;
inline constexpr double kPowerAngleTolerance = 1e-8;

/// Power iteration from a seeded Gaussian start; stops after max_iterations or
/// once the angle between successive iterates drops below angle_tolerance.
PowerIterationResult power_iteration(const LinearOperator& apply, std::size_t n, std::size_t max_iterations,
                                     std::uint64_t seed, double angle_tolerance = kPowerAngleTolerance);

/// sqrt(pi/2) * mean(y): estimate of ||x|| from the observations.
double spectral_norm_estimate(std::span<const double> observations);

enum class SpectralMethod {
  matrix_free,  // D v = (1/m) A^T (y .* (A v)), O(mn) per sweep
  dense,        // assemble D explicitly (O(m n^2)), then O(n^2) sweeps
};

/// z0 = lambda0 * v with v the principal eigenvector of D = (1/m) sum y_i a_i a_i^T.
/// Both methods run the same power iteration; they differ only in how D is applied.
/// `truth` only feeds the diagnostics in the report.
InitReport spectral_init(const MeasurementSet& ensemble, std::size_t iterations, std::uint64_t seed,
                         const SignalVector* truth = nullptr,
                         SpectralMethod method = SpectralMethod::matrix_free);

struct InitCheck {
  bool satisfied = false;
  /// |<z0,x>| / ||x||^2 - 1/(2 sqrt(n log n)); non-negative when the correlation test passes.
  double correlation_margin = 0.0;
  /// 1/log n - | ||z0||/||x|| - 1 |; non-negative when the norm band holds.
  double norm_margin = 0.0;
};

InitCheck check_init_condition(const SignalVector& z0, const SignalVector& x);

}  // namespace phaseflow
