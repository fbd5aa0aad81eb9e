#include "phaseflow/init.hpp"

#include <chrono>
#include <cmath>
#include <numbers>

#include "phaseflow/errors.hpp"
#include "phaseflow/kernels.hpp"
#include "phaseflow/rng.hpp"

namespace phaseflow {

namespace {

void normalize(std::span<double> v) {
  const double nrm = norm2(v);
  for (double& e : v) e /= nrm;
}

void canonicalize_sign(std::span<double> v) {
  for (double e : v) {
    if (e == 0.0) continue;
    if (e < 0.0) {
      for (double& f : v) f = -f;
    }
    return;
  }
}

// Angle between two unit vectors, insensitive to sign; accurate for tiny angles.
double unsigned_angle(std::span<const double> a, std::span<const double> b) {
  double minus = 0.0;
  double plus = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    minus += (a[i] - b[i]) * (a[i] - b[i]);
    plus += (a[i] + b[i]) * (a[i] + b[i]);
  }
  const double chord = std::sqrt(std::min(minus, plus));
  return 2.0 * std::asin(std::min(1.0, chord / 2.0));
}

}  // namespace

SignalVector random_init(std::size_t n, double scale, std::uint64_t seed) {
  if (n < 2) throw ParameterError("random_init: dimension must be at least 2");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw ParameterError("random_init: scale must be positive");
  Rng rng(seed);
  const double sd = scale / std::sqrt(static_cast<double>(n));
  std::vector<double> z(n);
  for (double& e : z) e = sd * rng.gaussian();
  return SignalVector(std::move(z));
}

PowerIterationResult power_iteration(const LinearOperator& apply, std::size_t n, std::size_t max_iterations,
                                     std::uint64_t seed, double angle_tolerance) {
  if (max_iterations == 0) throw ParameterError("power iteration needs at least one iteration");
  if (n == 0) throw ParameterError("power iteration on an empty space");
  Rng rng(seed);
  std::vector<double> v(n);
  do {
    for (double& e : v) e = rng.gaussian();
  } while (norm2(v) == 0.0);
  normalize(v);

  PowerIterationResult result;
  std::vector<double> w(n);
  for (std::size_t it = 0; it < max_iterations; ++it) {
    apply(v, w);
    const double nrm = norm2(w);
    if (nrm == 0.0 || !std::isfinite(nrm)) break;
    for (double& e : w) e /= nrm;
    const double angle = unsigned_angle(v, w);
    v.swap(w);
    result.iterations = it + 1;
    if (angle < angle_tolerance) {
      result.converged = true;
      break;
    }
  }
  canonicalize_sign(v);
  apply(v, w);
  result.eigenvalue = dot(v, w);
  result.vector = std::move(v);
  return result;
}

double spectral_norm_estimate(std::span<const double> observations) {
  if (observations.empty()) throw ParameterError("no observations");
  double sum = 0.0;
  for (double y : observations) sum += y;
  return std::sqrt(std::numbers::pi / 2.0) * sum / static_cast<double>(observations.size());
}

InitReport spectral_init(const MeasurementSet& ensemble, std::size_t iterations, std::uint64_t seed,
                         const SignalVector* truth, SpectralMethod method) {
  if (!ensemble.observed()) throw StateError("spectral_init: ensemble has no observations");
  if (iterations == 0) throw ParameterError("spectral_init: iterations must be positive");
  if (truth && truth->size() != ensemble.dimension()) throw ParameterError("truth dimension mismatch");

  const auto start = std::chrono::steady_clock::now();
  const std::size_t n = ensemble.dimension();
  const double inv_m = 1.0 / static_cast<double>(ensemble.sample_count());
  std::vector<double> dense;
  LinearOperator apply;
  if (method == SpectralMethod::matrix_free) {
    apply = [&](std::span<const double> in, std::span<double> out) {
      kernels::weighted_gram_apply(ensemble.matrix(), ensemble.observations(), n, ensemble.all(), in, out);
      for (double& e : out) e *= inv_m;
    };
  } else {
    dense.resize(n * n);
    kernels::weighted_gram_matrix(ensemble.matrix(), ensemble.observations(), n, ensemble.all(), dense);
    for (double& e : dense) e *= inv_m;
    apply = [&](std::span<const double> in, std::span<double> out) {
      for (std::size_t j = 0; j < n; ++j) out[j] = dot({dense.data() + j * n, n}, in);
    };
  }
  auto power = power_iteration(apply, n, iterations, seed);
  const double lambda0 = spectral_norm_estimate(ensemble.observations());
  for (double& e : power.vector) e *= lambda0;
  SignalVector z0(std::move(power.vector));
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  InitReport report{std::move(z0), InitMethod::spectral, std::nullopt, std::nullopt, elapsed, power.iterations};
  if (truth) {
    const double zn = report.z0.norm();
    const double xn = truth->norm();
    report.correlation = std::abs(dot(report.z0.values(), truth->values())) / (zn * xn);
    report.norm_ratio = zn / xn;
  }
  return report;
}

InitCheck check_init_condition(const SignalVector& z0, const SignalVector& x) {
  if (z0.size() != x.size()) throw ParameterError("check_init_condition: dimension mismatch");
  const double xx = dot(x.values(), x.values());
  if (xx == 0.0) throw ParameterError("check_init_condition: truth is zero");
  const double n = static_cast<double>(x.size());
  const double log_n = std::log(n);
  const double threshold = 1.0 / (2.0 * std::sqrt(n * log_n));
  InitCheck check;
  check.correlation_margin = std::abs(dot(z0.values(), x.values())) / xx - threshold;
  check.norm_margin = 1.0 / log_n - std::abs(z0.norm() / std::sqrt(xx) - 1.0);
  check.satisfied = check.correlation_margin >= 0.0 && check.norm_margin >= 0.0;
  return check;
}

}  // namespace phaseflow
