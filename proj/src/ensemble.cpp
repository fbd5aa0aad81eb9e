#include "phaseflow/ensemble.hpp"

#include <cmath>
#include <string>

#include "phaseflow/errors.hpp"
#include "phaseflow/rng.hpp"

namespace phaseflow {

SignalVector::SignalVector(std::vector<double> entries) : entries_(std::move(entries)) {
  if (entries_.size() < 2) throw ParameterError("signal dimension must be at least 2");
  for (double v : entries_) {
    if (!std::isfinite(v)) throw ParameterError("signal entries must be finite");
  }
}

double SignalVector::norm() const { return norm2(entries_); }

SignalVector SignalVector::scaled(double c) const {
  std::vector<double> out(entries_);
  for (double& v : out) v *= c;
  return SignalVector(std::move(out));
}

SignalVector random_unit_signal(std::size_t n, std::uint64_t seed) {
  if (n < 2) throw ParameterError("signal dimension must be at least 2");
  Rng rng(seed);
  std::vector<double> v(n);
  double nrm = 0.0;
  while (nrm == 0.0) {
    for (double& e : v) e = rng.gaussian();
    nrm = norm2(v);
  }
  for (double& e : v) e /= nrm;
  return SignalVector(std::move(v));
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

MeasurementSet::MeasurementSet(std::size_t n, std::size_t m, std::uint64_t seed,
                               std::vector<double> vectors, std::vector<double> observations)
    : n_(n), m_(m), seed_(seed), vectors_(std::move(vectors)), observations_(std::move(observations)) {
  if (n < 2) throw ParameterError("ensemble dimension must be at least 2");
  if (m < 1) throw ParameterError("ensemble needs at least one sample");
  if (vectors_.size() != n * m) throw ParameterError("vector storage does not match m x n");
  if (!observations_.empty() && observations_.size() != m) {
    throw ParameterError("observation count does not match m");
  }
}

MeasurementSet MeasurementSet::with_observations(std::vector<double> observations) && {
  return MeasurementSet(n_, m_, seed_, std::move(vectors_), std::move(observations));
}

MeasurementSet generate_gaussian_ensemble(std::size_t n, std::size_t m, std::uint64_t seed) {
  if (n < 2) throw ParameterError("ensemble dimension must be at least 2, got " + std::to_string(n));
  if (m < 1) throw ParameterError("ensemble needs at least one sample");
  std::vector<double> vectors(n * m);
  const auto chunks = static_cast<std::int64_t>((m + kEnsembleChunkRows - 1) / kEnsembleChunkRows);
#pragma omp parallel for schedule(static) if (chunks > 1)
  for (std::int64_t c = 0; c < chunks; ++c) {
    Rng rng(seed, static_cast<std::uint64_t>(c));
    const std::size_t first = static_cast<std::size_t>(c) * kEnsembleChunkRows;
    const std::size_t last = std::min(m, first + kEnsembleChunkRows);
    for (std::size_t k = first * n; k < last * n; ++k) vectors[k] = rng.gaussian();
  }
  return MeasurementSet(n, m, seed, std::move(vectors));
}

MeasurementSet observe(MeasurementSet ensemble, const SignalVector& x) {
  const std::size_t n = ensemble.dimension();
  if (x.size() != n) throw ParameterError("signal dimension does not match ensemble");
  const std::size_t m = ensemble.sample_count();
  std::vector<double> y(m);
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (m * n > (1u << 16))
  for (std::int64_t i = 0; i < rows; ++i) {
    y[static_cast<std::size_t>(i)] = std::abs(dot(ensemble.row(static_cast<std::size_t>(i)), x.values()));
  }
  return std::move(ensemble).with_observations(std::move(y));
}

BlockSchedule::BlockSchedule(std::size_t m, std::size_t block_count) : m_(m) {
  if (block_count == 0) throw ParameterError("block count must be positive");
  if (block_count > m) throw ParameterError("block count exceeds sample count");
  block_size_ = m / block_count;
  blocks_.reserve(block_count);
  for (std::size_t t = 0; t < block_count; ++t) {
    const std::size_t begin = t * block_size_;
    const std::size_t end = (t + 1 == block_count) ? m : begin + block_size_;
    blocks_.push_back({begin, end});
  }
}

BlockSchedule partition_blocks(std::size_t m, std::size_t block_count) { return BlockSchedule(m, block_count); }

}  // namespace phaseflow
