#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace phaseflow {

/// Dense real signal of dimension n >= 2 with finite entries. Holds the ground
/// truth and solver iterates.
class SignalVector {
 public:
  explicit SignalVector(std::vector<double> entries);

  std::size_t size() const { return entries_.size(); }
  double operator[](std::size_t i) const { return entries_[i]; }
  std::span<const double> values() const { return entries_; }
  operator std::span<const double>() const { return entries_; }
  const std::vector<double>& entries() const { return entries_; }

  double norm() const;
  SignalVector scaled(double c) const;

  friend bool operator==(const SignalVector&, const SignalVector&) = default;

 private:
  std::vector<double> entries_;
};

/// Uniformly random direction on the unit sphere in n dimensions.
SignalVector random_unit_signal(std::size_t n, std::uint64_t seed);

/// Half-open range [begin, end) of sample indices (0-based).
struct SampleRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool empty() const { return end <= begin; }
  bool contains(std::size_t i) const { return i >= begin && i < end; }
  friend bool operator==(const SampleRange&, const SampleRange&) = default;
};

/// m sensing vectors stored as one row-major m x n matrix, plus the magnitude
/// observations once `observe` has been applied. Immutable after construction.
class MeasurementSet {
 public:
  MeasurementSet(std::size_t n, std::size_t m, std::uint64_t seed, std::vector<double> vectors,
                 std::vector<double> observations = {});

  std::size_t dimension() const { return n_; }
  std::size_t sample_count() const { return m_; }
  std::uint64_t seed() const { return seed_; }
  bool observed() const { return !observations_.empty(); }

  std::span<const double> matrix() const { return vectors_; }
  std::span<const double> row(std::size_t i) const { return {vectors_.data() + i * n_, n_}; }
  std::span<const double> observations() const { return observations_; }
  SampleRange all() const { return {0, m_}; }

  /// Moves the matrix into a new set carrying the given observations.
  MeasurementSet with_observations(std::vector<double> observations) &&;

  friend bool operator==(const MeasurementSet&, const MeasurementSet&) = default;

 private:
  std::size_t n_;
  std::size_t m_;
  std::uint64_t seed_;
  std::vector<double> vectors_;
  std::vector<double> observations_;
};

/// Rows drawn in chunks of this many; chunk c uses RNG stream c.
inline constexpr std::size_t kEnsembleChunkRows = 256;

MeasurementSet generate_gaussian_ensemble(std::size_t n, std::size_t m, std::uint64_t seed);

/// y_i = |<a_i, x>|. Takes the ensemble by value so large matrices can be moved through.
MeasurementSet observe(MeasurementSet ensemble, const SignalVector& x);

/// K disjoint contiguous blocks covering {0..m-1}; every block has floor(m/K)
/// samples except the last, which absorbs the remainder.
class BlockSchedule {
 public:
  BlockSchedule(std::size_t m, std::size_t block_count);

  std::size_t block_count() const { return blocks_.size(); }
  std::size_t block_size() const { return block_size_; }
  std::size_t sample_count() const { return m_; }
  const std::vector<SampleRange>& blocks() const { return blocks_; }
  const SampleRange& block(std::size_t t) const { return blocks_.at(t); }
  /// Block used at iteration k: t = k mod K.
  const SampleRange& block_for_iteration(std::size_t k) const { return blocks_[k % blocks_.size()]; }

 private:
  std::size_t m_;
  std::size_t block_size_;
  std::vector<SampleRange> blocks_;
};

BlockSchedule partition_blocks(std::size_t m, std::size_t block_count);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

}  // namespace phaseflow
