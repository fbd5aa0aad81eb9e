#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "phaseflow/errors.hpp"
#include "phaseflow/kernels.hpp"

namespace phaseflow::kernels {

namespace {

constexpr std::size_t kGramBlockRows = 512;

using RowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

}  // namespace

void weighted_gram_matrix(std::span<const double> matrix, std::span<const double> weights, std::size_t n,
                          SampleRange range, std::span<double> out) {
  if (out.size() != n * n) throw ParameterError("gram output must be n x n");
  const auto dim = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::MatrixXd panel;
  for (std::size_t first = range.begin; first < range.end; first += kGramBlockRows) {
    const std::size_t rows = std::min(kGramBlockRows, range.end - first);
    RowMajorMap block(matrix.data() + first * n, static_cast<Eigen::Index>(rows), dim);
    panel = block.transpose();
    for (std::size_t i = 0; i < rows; ++i) {
      const double w = weights[first + i];
      if (w < 0.0) throw ParameterError("gram weights must be non-negative");
      panel.col(static_cast<Eigen::Index>(i)) *= std::sqrt(w);
    }
    gram.selfadjointView<Eigen::Lower>().rankUpdate(panel);
  }
  for (Eigen::Index j = 0; j < dim; ++j) {
    for (Eigen::Index l = 0; l <= j; ++l) {
      out[static_cast<std::size_t>(j) * n + static_cast<std::size_t>(l)] = gram(j, l);
      out[static_cast<std::size_t>(l) * n + static_cast<std::size_t>(j)] = gram(j, l);
    }
  }
}

namespace serial {

void weighted_gram_matrix(std::span<const double> matrix, std::span<const double> weights, std::size_t n,
                          SampleRange range, std::span<double> out) {
  if (out.size() != n * n) throw ParameterError("gram output must be n x n");
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = range.begin; i < range.end; ++i) {
    const double* a = matrix.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double s = weights[i] * a[j];
      for (std::size_t l = 0; l < n; ++l) out[j * n + l] += s * a[l];
    }
  }
}

}  // namespace serial

}  // namespace phaseflow::kernels
