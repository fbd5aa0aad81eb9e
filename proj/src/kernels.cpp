#include "phaseflow/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace phaseflow::kernels {

namespace {

// Below this many multiply-adds per call the OpenMP fork costs more than it saves.
constexpr std::size_t kParallelWork = std::size_t{1} << 17;

struct Reshaped {
  std::span<const double> y;
  double operator()(std::size_t i, double u, RowSums& sums) const {
    const double residual = std::abs(u) - y[i];
    sums.loss += residual * residual;
    if (u == 0.0) {
      ++sums.zero_crossings;
      return 0.0;
    }
    return u > 0.0 ? residual : -residual;
  }
};

struct Quartic {
  std::span<const double> y;
  double operator()(std::size_t i, double u, RowSums& sums) const {
    const double residual = u * u - y[i] * y[i];
    sums.loss += residual * residual;
    return residual * u;
  }
};

struct Weighted {
  std::span<const double> w;
  double operator()(std::size_t i, double u, RowSums&) const { return w[i] * u; }
};

template <class RowOp>
void accumulate_rows(const double* matrix, std::size_t n, std::size_t first, std::size_t last,
                     const double* z, double* acc, RowSums& sums, const RowOp& op) {
  for (std::size_t i = first; i < last; ++i) {
    const double* a = matrix + i * n;
    double u = 0.0;
    for (std::size_t j = 0; j < n; ++j) u += a[j] * z[j];
    const double c = op(i, u, sums);
    if (c == 0.0) continue;
    for (std::size_t j = 0; j < n; ++j) acc[j] += c * a[j];
  }
}

template <class RowOp>
RowSums chunked(std::span<const double> matrix, std::size_t n, SampleRange range, std::span<const double> z,
                std::span<double> out, const RowOp& op) {
  std::fill(out.begin(), out.end(), 0.0);
  const std::size_t rows = range.size();
  const std::size_t chunks = (rows + kChunkRows - 1) / kChunkRows;
  if (chunks <= 1) {
    RowSums sums;
    accumulate_rows(matrix.data(), n, range.begin, range.end, z.data(), out.data(), sums, op);
    return sums;
  }
  std::vector<double> partial(chunks * n, 0.0);
  std::vector<RowSums> partial_sums(chunks);
  const auto chunk_count = static_cast<std::int64_t>(chunks);
#pragma omp parallel for schedule(static) if (rows * n >= kParallelWork)
  for (std::int64_t c = 0; c < chunk_count; ++c) {
    const std::size_t first = range.begin + static_cast<std::size_t>(c) * kChunkRows;
    const std::size_t last = std::min(range.end, first + kChunkRows);
    accumulate_rows(matrix.data(), n, first, last, z.data(), partial.data() + static_cast<std::size_t>(c) * n,
                    partial_sums[static_cast<std::size_t>(c)], op);
  }
  RowSums sums;
  for (std::size_t c = 0; c < chunks; ++c) {
    const double* p = partial.data() + c * n;
    for (std::size_t j = 0; j < n; ++j) out[j] += p[j];
    sums.loss += partial_sums[c].loss;
    sums.zero_crossings += partial_sums[c].zero_crossings;
  }
  return sums;
}

template <class RowOp>
RowSums single_pass(std::span<const double> matrix, std::size_t n, SampleRange range, std::span<const double> z,
                    std::span<double> out, const RowOp& op) {
  std::fill(out.begin(), out.end(), 0.0);
  RowSums sums;
  accumulate_rows(matrix.data(), n, range.begin, range.end, z.data(), out.data(), sums, op);
  return sums;
}

}  // namespace

RowSums reshaped_residual(std::span<const double> matrix, std::span<const double> y, std::size_t n,
                          SampleRange range, std::span<const double> z, std::span<double> out) {
  return chunked(matrix, n, range, z, out, Reshaped{y});
}

RowSums quartic_residual(std::span<const double> matrix, std::span<const double> y, std::size_t n,
                         SampleRange range, std::span<const double> z, std::span<double> out) {
  return chunked(matrix, n, range, z, out, Quartic{y});
}

void weighted_gram_apply(std::span<const double> matrix, std::span<const double> weights, std::size_t n,
                         SampleRange range, std::span<const double> v, std::span<double> out) {
  chunked(matrix, n, range, v, out, Weighted{weights});
}

namespace serial {

RowSums reshaped_residual(std::span<const double> matrix, std::span<const double> y, std::size_t n,
                          SampleRange range, std::span<const double> z, std::span<double> out) {
  return single_pass(matrix, n, range, z, out, Reshaped{y});
}

RowSums quartic_residual(std::span<const double> matrix, std::span<const double> y, std::size_t n,
                         SampleRange range, std::span<const double> z, std::span<double> out) {
  return single_pass(matrix, n, range, z, out, Quartic{y});
}

void weighted_gram_apply(std::span<const double> matrix, std::span<const double> weights, std::size_t n,
                         SampleRange range, std::span<const double> v, std::span<double> out) {
  single_pass(matrix, n, range, v, out, Weighted{weights});
}

}  // namespace serial

}  // namespace phaseflow::kernels
