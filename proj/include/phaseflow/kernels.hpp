#pragma once

// Row-streaming kernels shared by the objective, the power iteration and the
// benchmark. Each kernel computes out = sum_i c_i(u_i) a_i with u_i = <a_i, z>
// over a contiguous sample range in one fused pass.
//
// The default kernels split the range into fixed chunks of kChunkRows rows,
// accumulate each chunk independently (in parallel under OpenMP) and combine
// the chunk partials in chunk order. The chunk layout does not depend on the
// thread count, so results are bit-identical for any number of workers.
// `serial::` holds the straightforward single-accumulator reference used by the
// tests and the benchmark.

#include <cstddef>
#include <span>

#include "phaseflow/ensemble.hpp"

namespace phaseflow::kernels {

inline constexpr std::size_t kChunkRows = 256;

struct RowSums {
  double loss = 0.0;               // sum of per-row loss terms
  std::size_t zero_crossings = 0;  // rows with u_i == 0 exactly
};

/// out = sum (|u_i| - y_i) sign(u_i) a_i with sign(0) = 0; loss = sum (|u_i| - y_i)^2.
RowSums reshaped_residual(std::span<const double> matrix, std::span<const double> y, std::size_t n,
                          SampleRange range, std::span<const double> z, std::span<double> out);

/// out = sum (u_i^2 - y_i^2) u_i a_i; loss = sum (u_i^2 - y_i^2)^2.
RowSums quartic_residual(std::span<const double> matrix, std::span<const double> y, std::size_t n,
                         SampleRange range, std::span<const double> z, std::span<double> out);

/// out = sum w_i u_i a_i, i.e. (A^T diag(w) A) v restricted to the range.
void weighted_gram_apply(std::span<const double> matrix, std::span<const double> weights, std::size_t n,
                         SampleRange range, std::span<const double> v, std::span<double> out);

/// Dense weighted Gram matrix G = sum_i w_i a_i a_i^T over the range, written
/// as a full symmetric n x n row-major matrix. Requires w_i >= 0. Rows are
/// folded in fixed blocks through a single-threaded SYRK, so the result does
/// not depend on the worker count.
void weighted_gram_matrix(std::span<const double> matrix, std::span<const double> weights, std::size_t n,
                          SampleRange range, std::span<double> out);

namespace serial {

void weighted_gram_matrix(std::span<const double> matrix, std::span<const double> weights, std::size_t n,
                          SampleRange range, std::span<double> out);

RowSums reshaped_residual(std::span<const double> matrix, std::span<const double> y, std::size_t n,
                          SampleRange range, std::span<const double> z, std::span<double> out);
RowSums quartic_residual(std::span<const double> matrix, std::span<const double> y, std::size_t n,
                         SampleRange range, std::span<const double> z, std::span<double> out);
void weighted_gram_apply(std::span<const double> matrix, std::span<const double> weights, std::size_t n,
                         SampleRange range, std::span<const double> v, std::span<double> out);

}  // namespace serial

}  // namespace phaseflow::kernels
