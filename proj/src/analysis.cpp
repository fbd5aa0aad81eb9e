#include "phaseflow/analysis.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "phaseflow/errors.hpp"
#include "phaseflow/rng.hpp"

namespace phaseflow {

namespace {

constexpr double kPi = std::numbers::pi;

void require_same_size(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ParameterError("vector dimensions differ");
}

double parse_double(std::string_view field) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw ParameterError("malformed number in trace CSV: '" + std::string(field) + "'");
  }
  return v;
}

}  // namespace

Decomposition decompose(std::span<const double> z, std::span<const double> x) {
  require_same_size(z, x);
  const double xx = dot(x, x);
  if (xx == 0.0) throw ParameterError("truth vector is zero");
  const double x_norm = std::sqrt(xx);
  const double zx = dot(z, x);
  Decomposition d;
  d.alpha = zx / xx;
  double perp_sq = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double p = z[i] - d.alpha * x[i];
    perp_sq += p * p;
  }
  d.beta = std::sqrt(perp_sq) / x_norm;
  d.r = norm2(z) / x_norm;
  d.omega = std::atan2(std::abs(d.alpha), d.beta);
  if (d.r == 0.0) {
    d.theta = kPi / 2;
  } else {
    const double c = std::clamp(std::abs(zx) / (d.r * x_norm * x_norm), 0.0, 1.0);
    d.theta = std::acos(c);
  }
  return d;
}

double dist(std::span<const double> z, std::span<const double> x) {
  require_same_size(z, x);
  double minus = 0.0;
  double plus = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    minus += (z[i] - x[i]) * (z[i] - x[i]);
    plus += (z[i] + x[i]) * (z[i] + x[i]);
  }
  return std::sqrt(std::min(minus, plus));
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void IterateTrace::write_csv(std::ostream& out) const {
  out << kCsvHeader << '\n';
  for (const auto& row : rows_) {
    out << row.k << ',' << format_double(row.alpha) << ',' << format_double(row.beta) << ','
        << format_double(row.r) << ',' << format_double(row.omega) << ',' << format_double(row.dist_rel) << ','
        << format_double(row.loss) << '\n';
  }
}

IterateTrace IterateTrace::read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw ParameterError("trace CSV header mismatch");
  IterateTrace trace;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (fields.size() != 7) throw ParameterError("trace CSV row has wrong field count");
    TraceRow row;
    row.k = static_cast<std::size_t>(parse_double(fields[0]));
    row.alpha = parse_double(fields[1]);
    row.beta = parse_double(fields[2]);
    row.r = parse_double(fields[3]);
    row.omega = parse_double(fields[4]);
    row.dist_rel = parse_double(fields[5]);
    row.loss = parse_double(fields[6]);
    trace.append(row);
  }
  return trace;
}

bool SubstageLandmarks::ordered() const {
  if (!T_11 || !T_1 || !T_gamma2 || !T_gamma) return true;
  return *T_11 <= *T_1 && *T_1 <= *T_gamma2 && *T_gamma2 <= *T_gamma;
}

std::optional<std::size_t> detect_t_gamma(const IterateTrace& trace, double gamma) {
  for (const auto& row : trace.rows()) {
    if (std::abs(1.0 - std::abs(row.alpha)) <= gamma / 2 && row.beta <= gamma / 2) return row.k;
  }
  return std::nullopt;
}

SubstageLandmarks detect_landmarks(const IterateTrace& trace, double gamma, double delta) {
  SubstageLandmarks out;
  if (trace.empty()) return out;
  out.T_gamma = detect_t_gamma(trace, gamma);

  const auto& rows = trace.rows();
  const std::size_t last = rows.size() - 1;
  auto first_ahead = [&](auto&& condition) -> std::optional<std::size_t> {
    for (std::size_t t = 0; t <= last; ++t) {
      if (condition(rows[std::min(t + 1, last)])) return t;
    }
    return std::nullopt;
  };
  out.T_gamma2 = first_ahead([&](const TraceRow& r) { return r.beta <= gamma / 2; });
  out.T_omega = first_ahead([&](const TraceRow& r) { return r.omega >= kPi / 2 - gamma / 4; });
  out.T_11 = first_ahead([](const TraceRow& r) { return r.beta <= 0.75; });
  out.T_1 = first_ahead([&](const TraceRow& r) { return r.alpha >= delta; });
  return out;
}

double contraction_estimate(const IterateTrace& trace, std::size_t from) {
  std::vector<double> ratios;
  const auto& rows = trace.rows();
  for (std::size_t k = from; k + 1 < rows.size(); ++k) {
    if (rows[k].dist_rel > 0.0) ratios.push_back(rows[k + 1].dist_rel / rows[k].dist_rel);
  }
  if (ratios.empty()) return std::nan("");
  const auto mid = ratios.begin() + static_cast<std::ptrdiff_t>(ratios.size() / 2);
  std::nth_element(ratios.begin(), mid, ratios.end());
  if (ratios.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(ratios.begin(), mid);
  return 0.5 * (lower + upper);
}

std::vector<double> expected_update(std::span<const double> z, std::span<const double> x) {
  require_same_size(z, x);
  const double z_norm = norm2(z);
  const double x_norm = norm2(x);
  if (z_norm == 0.0) throw ParameterError("expected_update: z is zero, angle undefined");
  if (x_norm == 0.0) throw ParameterError("expected_update: x is zero");
  const double zx = dot(z, x);
  const double orient = zx >= 0.0 ? 1.0 : -1.0;
  const double theta = std::acos(std::clamp(std::abs(zx) / (z_norm * x_norm), 0.0, 1.0));
  const double along_x = (1.0 - 2.0 * theta / kPi) * orient;
  const double along_z = 2.0 * std::sin(theta) / kPi * x_norm / z_norm;
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = along_x * x[i] + along_z * z[i];
  return out;
}

std::vector<double> expected_gradient(std::span<const double> z, std::span<const double> x) {
  auto out = expected_update(z, x);
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] - out[i];
  return out;
}

McEstimate mc_expectation_estimate(std::span<const double> z, std::span<const double> x, std::size_t samples,
                                   std::uint64_t seed) {
  require_same_size(z, x);
  if (samples < 1000) throw ParameterError("Monte-Carlo oracle needs at least 1000 samples");
  const std::size_t n = z.size();
  const std::size_t chunks = (samples + kMcChunkSamples - 1) / kMcChunkSamples;
  std::vector<double> sums(chunks * n, 0.0);
  std::vector<double> squares(chunks * n, 0.0);
  const auto chunk_count = static_cast<std::int64_t>(chunks);
#pragma omp parallel for schedule(static)
  for (std::int64_t c = 0; c < chunk_count; ++c) {
    Rng rng(seed, static_cast<std::uint64_t>(c));
    const std::size_t first = static_cast<std::size_t>(c) * kMcChunkSamples;
    const std::size_t last = std::min(samples, first + kMcChunkSamples);
    double* sum = sums.data() + static_cast<std::size_t>(c) * n;
    double* sq = squares.data() + static_cast<std::size_t>(c) * n;
    std::vector<double> a(n);
    for (std::size_t s = first; s < last; ++s) {
      for (double& e : a) e = rng.gaussian();
      const double az = dot(a, z);
      const double ax = dot(a, x);
      const double sign = az > 0.0 ? 1.0 : (az < 0.0 ? -1.0 : 0.0);
      const double coeff = sign * std::abs(ax);
      for (std::size_t j = 0; j < n; ++j) {
        const double v = coeff * a[j];
        sum[j] += v;
        sq[j] += v * v;
      }
    }
  }
  McEstimate est;
  est.samples = samples;
  est.mean.assign(n, 0.0);
  est.std_error.assign(n, 0.0);
  std::vector<double> total_sq(n, 0.0);
  for (std::size_t c = 0; c < chunks; ++c) {
    for (std::size_t j = 0; j < n; ++j) {
      est.mean[j] += sums[c * n + j];
      total_sq[j] += squares[c * n + j];
    }
  }
  const double count = static_cast<double>(samples);
  for (std::size_t j = 0; j < n; ++j) {
    est.mean[j] /= count;
    const double variance = std::max(0.0, (total_sq[j] / count - est.mean[j] * est.mean[j]) * count / (count - 1));
    est.std_error[j] = std::sqrt(variance / count);
  }
  return est;
}

std::vector<double> mc_expectation_oracle(std::span<const double> z, std::span<const double> x,
                                          std::size_t samples, std::uint64_t seed) {
  return mc_expectation_estimate(z, x, samples, seed).mean;
}

StateEvolutionState state_evolution_step(const StateEvolutionState& s, double mu) {
  if (s.beta < 0.0) throw ParameterError("state evolution: beta must be non-negative");
  const double r_sq = s.alpha * s.alpha + s.beta * s.beta;
  if (r_sq == 0.0) throw ParameterError("state evolution: alpha and beta are both zero");
  const double pull = 2.0 / kPi * s.beta / r_sq;
  StateEvolutionState next = s;
  next.alpha = (1.0 - mu * (1.0 - pull + s.zeta)) * s.alpha + 2.0 * mu / kPi * std::asin(s.alpha / std::sqrt(r_sq));
  next.beta = (1.0 - mu * (1.0 - pull + s.rho)) * s.beta;
  return next;
}

std::vector<StateEvolutionState> run_state_evolution(double alpha0, double beta0,
                                                     const StateEvolutionOptions& options) {
  if (options.perturbation_ceiling < 0.0) throw ParameterError("perturbation ceiling must be non-negative");
  Rng rng(options.seed);
  auto draw = [&] {
    if (options.perturbation_ceiling == 0.0) return 0.0;
    return options.perturbation_ceiling * (2.0 * rng.uniform() - 1.0);
  };
  std::vector<StateEvolutionState> states;
  StateEvolutionState s{alpha0, beta0, draw(), draw()};
  states.push_back(s);
  auto reached = [&](const StateEvolutionState& st) {
    return std::abs(1.0 - st.alpha) <= options.gamma / 2 && st.beta <= options.gamma / 2;
  };
  for (std::size_t k = 0; k < options.max_steps; ++k) {
    if (options.stop_at_gamma && reached(s)) break;
    s = state_evolution_step(s, options.mu);
    s.zeta = draw();
    s.rho = draw();
    states.push_back(s);
  }
  return states;
}

double initial_alpha_for_dimension(double n) { return 1.0 / (2.0 * std::sqrt(n * std::log(n))); }

}  // namespace phaseflow
