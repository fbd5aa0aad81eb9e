#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace phaseflow {

std::uint64_t splitmix64(std::uint64_t& state);

/// Hashes a master seed and a path of identifiers (cell, trial, role...) into
/// an independent 64-bit seed. Same inputs give the same seed on every platform.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path);

/// xoshiro256** keyed by (seed, stream). Distinct streams of one seed are
/// independent, which lets chunked parallel loops draw reproducibly no matter
/// how chunks are mapped to threads.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  /// Uniform on [0, 1).
  double uniform();

  /// Standard normal via Box-Muller; the second variate of each pair is cached.
  double gaussian();

 private:
  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace phaseflow
