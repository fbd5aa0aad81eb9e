#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "phaseflow/ensemble.hpp"

namespace phaseflow {

/// Iterate z split against the truth x. All lengths are relative to ||x||, so
/// for unit x they are the plain signal coefficient and orthogonal norm.
struct Decomposition {
  double alpha = 0.0;  // <z, x> / ||x||^2
  double beta = 0.0;   // ||z - alpha x|| / ||x||
  double r = 0.0;      // ||z|| / ||x||
  double omega = 0.0;  // arctan(|alpha| / beta), pi/2 when beta == 0
  double theta = 0.0;  // acute angle between z and x, in [0, pi/2]
};

Decomposition decompose(std::span<const double> z, std::span<const double> x);

/// min(||z - x||, ||z + x||)
double dist(std::span<const double> z, std::span<const double> x);

struct TraceRow {
  std::size_t k = 0;
  double alpha = 0.0;
  double beta = 0.0;
  double r = 0.0;
  double omega = 0.0;
  double dist_rel = 0.0;
  double loss = 0.0;

  friend bool operator==(const TraceRow&, const TraceRow&) = default;
};

/// One row per iterate z_0, z_1, ... recorded before each update.
class IterateTrace {
 public:
  static constexpr const char* kCsvHeader = "k,alpha,beta,r,omega,dist_rel,loss";

  void append(const TraceRow& row) { rows_.push_back(row); }
  const std::vector<TraceRow>& rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }
  bool empty() const { return rows_.empty(); }
  const TraceRow& operator[](std::size_t k) const { return rows_[k]; }
  const TraceRow& back() const { return rows_.back(); }
  /// Re-expresses alpha against -x.
  void negate_alpha() {
    for (auto& r : rows_) r.alpha = -r.alpha;
  }

  void write_csv(std::ostream& out) const;
  static IterateTrace read_csv(std::istream& in);

  friend bool operator==(const IterateTrace&, const IterateTrace&) = default;

 private:
  std::vector<TraceRow> rows_;
};

/// Shortest round-trip decimal form of v ("nan"/"inf" for non-finite values).
std::string format_double(double v);

struct SubstageLandmarks {
  std::optional<std::size_t> T_gamma;   // first k: |1 - |alpha_k|| <= gamma/2 and beta_k <= gamma/2
  std::optional<std::size_t> T_gamma2;  // first k: beta_{k+1} <= gamma/2
  std::optional<std::size_t> T_omega;   // first k: omega_{k+1} >= pi/2 - gamma/4
  std::optional<std::size_t> T_11;      // first t: beta_{t+1} <= 3/4
  std::optional<std::size_t> T_1;       // first t: alpha_{t+1} >= delta

  /// T_11 <= T_1 <= T_gamma2 <= T_gamma, checked only when all are defined.
  bool ordered() const;
};

inline constexpr double kDefaultDelta = 0.2;

std::optional<std::size_t> detect_t_gamma(const IterateTrace& trace, double gamma);

/// Landmarks of the form min{t : condition(row t+1)} treat the final row as
/// persisting, since a trace ends only when the run has stopped moving
/// (converged) or hit its cap. A trace started at the truth therefore has every
/// landmark at 0.
SubstageLandmarks detect_landmarks(const IterateTrace& trace, double gamma, double delta = kDefaultDelta);

/// Median of dist_{k+1}/dist_k over k >= from; NaN if there is no such pair.
double contraction_estimate(const IterateTrace& trace, std::size_t from);

/// Closed-form E[sign(a^T z) |a^T x| a] for a ~ N(0, I):
/// (1 - 2 theta/pi) x~ + (2 sin theta / pi) ||x|| z/||z||, with theta the acute
/// angle between z and x and x~ = x oriented towards z.
std::vector<double> expected_update(std::span<const double> z, std::span<const double> x);

/// Population gradient z - expected_update(z, x) (unit-norm truth).
std::vector<double> expected_gradient(std::span<const double> z, std::span<const double> x);

struct McEstimate {
  std::vector<double> mean;
  std::vector<double> std_error;  // per-component sample std / sqrt(samples)
  std::size_t samples = 0;
};

/// Samples are drawn in chunks of this size; chunk c uses RNG stream c.
inline constexpr std::size_t kMcChunkSamples = 4096;

/// Monte-Carlo estimate of E[sign(a^T z) |a^T x| a] with per-component standard errors.
McEstimate mc_expectation_estimate(std::span<const double> z, std::span<const double> x, std::size_t samples,
                                   std::uint64_t seed);

std::vector<double> mc_expectation_oracle(std::span<const double> z, std::span<const double> x,
                                          std::size_t samples, std::uint64_t seed);

struct StateEvolutionState {
  double alpha = 0.0;
  double beta = 0.0;
  double zeta = 0.0;  // perturbation on the alpha contraction factor
  double rho = 0.0;   // perturbation on the beta contraction factor
};

/// One step of the two-variable recursion for (alpha, beta).
StateEvolutionState state_evolution_step(const StateEvolutionState& s, double mu);

struct StateEvolutionOptions {
  double mu = 0.5;
  double gamma = 0.1;
  std::size_t max_steps = 10000;
  /// Per-step zeta, rho drawn uniformly from [-ceiling, ceiling]; 0 gives the clean recursion.
  double perturbation_ceiling = 0.0;
  std::uint64_t seed = 0;
  /// Stop at the first state with |1 - alpha| <= gamma/2 and beta <= gamma/2.
  bool stop_at_gamma = true;
};

/// States s_0 .. s_T starting from (alpha0, beta0).
std::vector<StateEvolutionState> run_state_evolution(double alpha0, double beta0,
                                                     const StateEvolutionOptions& options);

/// Starting point (1/(2 sqrt(n log n)), 1) used for the log n scaling study.
double initial_alpha_for_dimension(double n);

}  // namespace phaseflow
