#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "phaseflow/ensemble.hpp"

namespace phaseflow {

struct GradientResult {
  std::vector<double> gradient;
  double loss = 0.0;
  std::size_t zero_crossings = 0;  // samples in the subset with <a_i, z> == 0 exactly
};

/// (1/(2|S|)) sum_{i in S} (|<a_i,z>| - y_i)^2
double rwf_loss(const MeasurementSet& ensemble, SampleRange subset, std::span<const double> z);

/// Generalized gradient of rwf_loss with sign(0) = 0, normalized by |S|.
GradientResult rwf_gradient(const MeasurementSet& ensemble, SampleRange subset, std::span<const double> z);

/// (1/(4|S|)) sum_{i in S} (<a_i,z>^2 - y_i^2)^2
double wf_loss(const MeasurementSet& ensemble, SampleRange subset, std::span<const double> z);

GradientResult wf_gradient(const MeasurementSet& ensemble, SampleRange subset, std::span<const double> z);

}  // namespace phaseflow
