#pragma once

#include <omp.h>

#include <algorithm>
#include <cstddef>
#include <cstdio>
#include <exception>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "phaseflow/harness/experiment.hpp"

namespace phaseflow::harness::detail {

using Json = nlohmann::ordered_json;

/// Runs body(i) for every i in `order` on a pool of `workers` threads, pulling
/// tasks dynamically. Callers store results by index, so completion order never
/// shows up in the output. The first exception thrown by a task is rethrown.
template <class Body>
void run_pool(const std::vector<std::size_t>& order, std::size_t workers, bool quiet, std::string_view label,
              Body body) {
  const std::size_t total = order.size();
  std::vector<std::exception_ptr> errors(total);
  std::size_t done = 0;
#pragma omp parallel for schedule(dynamic, 1) num_threads(static_cast<int>(workers))
  for (std::size_t j = 0; j < total; ++j) {
    try {
      body(order[j]);
    } catch (...) {
      errors[j] = std::current_exception();
    }
    if (!quiet) {
#pragma omp critical(phaseflow_progress)
      {
        ++done;
        std::fprintf(stderr, "\r%.*s: %zu/%zu", static_cast<int>(label.size()), label.data(), done, total);
        if (done == total) std::fputc('\n', stderr);
      }
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

/// Task indices ordered by descending weight; ties keep index order.
std::vector<std::size_t> largest_first(const std::vector<double>& weights);

double median(std::vector<double> values);
double quantile(std::vector<double> values, double q);
/// Median where a missing value counts as +infinity, so the median is missing
/// once half the trials or more never got there.
std::optional<double> median_missing_high(const std::vector<std::optional<std::size_t>>& values);

std::string algorithm_name(Algorithm a);

Json spec_to_json(const ExperimentSpec& spec);
Json stats_json(const std::vector<double>& values);

/// Least-squares fit of y = c0 + c1 x; returns {c0, c1}.
std::pair<double, double> linear_fit(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace phaseflow::harness::detail
