#include "phaseflow/objective.hpp"

#include <cmath>

#include "phaseflow/errors.hpp"
#include "phaseflow/kernels.hpp"

namespace phaseflow {

namespace {

void check_inputs(const MeasurementSet& ensemble, SampleRange subset, std::span<const double> z) {
  if (!ensemble.observed()) throw StateError("ensemble has no observations");
  if (subset.empty()) throw ParameterError("sample subset is empty");
  if (subset.end > ensemble.sample_count()) throw ParameterError("sample subset exceeds ensemble");
  if (z.size() != ensemble.dimension()) throw ParameterError("iterate dimension does not match ensemble");
  for (double v : z) {
    if (!std::isfinite(v)) throw ParameterError("iterate has non-finite entries");
  }
}

template <class Kernel>
GradientResult evaluate(const MeasurementSet& ensemble, SampleRange subset, std::span<const double> z,
                        double loss_scale, Kernel kernel) {
  check_inputs(ensemble, subset, z);
  GradientResult result;
  result.gradient.resize(z.size());
  const auto sums =
      kernel(ensemble.matrix(), ensemble.observations(), ensemble.dimension(), subset, z, result.gradient);
  const double inv = 1.0 / static_cast<double>(subset.size());
  for (double& g : result.gradient) g *= inv;
  result.loss = sums.loss * inv * loss_scale;
  result.zero_crossings = sums.zero_crossings;
  return result;
}

}  // namespace

GradientResult rwf_gradient(const MeasurementSet& ensemble, SampleRange subset, std::span<const double> z) {
  return evaluate(ensemble, subset, z, 0.5, kernels::reshaped_residual);
}

double rwf_loss(const MeasurementSet& ensemble, SampleRange subset, std::span<const double> z) {
  return rwf_gradient(ensemble, subset, z).loss;
}

GradientResult wf_gradient(const MeasurementSet& ensemble, SampleRange subset, std::span<const double> z) {
  auto result = evaluate(ensemble, subset, z, 0.25, kernels::quartic_residual);
  result.zero_crossings = 0;
  return result;
}

double wf_loss(const MeasurementSet& ensemble, SampleRange subset, std::span<const double> z) {
  return wf_gradient(ensemble, subset, z).loss;
}

}  // namespace phaseflow
