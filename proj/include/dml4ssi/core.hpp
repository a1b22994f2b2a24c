#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dml4ssi {

// One time step W_t = (X_t, D_t, H_t, Y_t). D is stored as an int so that
// externally supplied data with a non-binary treatment can still be validated.
struct Observation {
  std::vector<double> x;
  int d = 0;
  std::vector<double> h;
  double y = 0.0;
};

struct Regime {
  enum class Kind { kGeometricErgodic, kMDependent };

  Kind kind = Kind::kGeometricErgodic;
  std::size_t m = 0;  // only meaningful for kMDependent

  static Regime GeometricErgodic() { return {}; }
  static Regime MDependent(std::size_t m) { return {Kind::kMDependent, m}; }

  bool operator==(const Regime&) const = default;
};

// Block-randomized switchback design. Positions 1-m..0 are burn-in
// assignments; the first switch is uniform on {1, ..., block_len}.
struct SwitchbackDesign {
  std::size_t m = 5;
  std::size_t block_len = 10;
  double treat_prob = 0.5;

  bool operator==(const SwitchbackDesign&) const = default;
};

struct Trajectory {
  std::vector<double> h0;
  std::vector<Observation> obs;
  Regime regime;
  std::optional<SwitchbackDesign> design;

  std::size_t T() const { return obs.size(); }
  std::size_t p_x() const { return obs.empty() ? 0 : obs.front().x.size(); }
  std::size_t p_h() const { return h0.size(); }
};

struct Violation {
  std::size_t t = 0;  // 0 refers to the initial-state row
  std::string message;
};

struct ValidationResult {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  std::string summary() const;
};

// Checks every Trajectory invariant and reports all violations at once.
ValidationResult validate_trajectory(const Trajectory& traj);

// ---------------------------------------------------------------------------
// Randomness
//
// A stream is identified by (seed, stream_id). Draws come from xoshiro256**
// whose 256-bit state is filled by SplitMix64 from a mix of both words, so a
// stream is reproducible across runs and platforms.

struct RngStream {
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;

  bool operator==(const RngStream&) const = default;
};

RngStream derive_stream(const RngStream& base, std::uint64_t index);

class Rng {
 public:
  explicit Rng(const RngStream& stream);

  std::uint64_t next_u64();
  // Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal by inversion of uniform().
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  bool bernoulli(double p) { return uniform() < p; }
  // Uniform on {0, ..., n-1}; n must be positive.
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint64_t s_[4];
};

// Standard normal quantile function (Wichura AS241, ~1e-16 relative error).
double normal_quantile(double p);
double normal_cdf(double z);

// ---------------------------------------------------------------------------
// Compensated (Neumaier) summation.

class CompensatedSum {
 public:
  void add(double v);
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

double compensated_sum(std::span<const double> values);
double compensated_mean(std::span<const double> values);

// ---------------------------------------------------------------------------

struct EstimateReport {
  std::string estimator;
  double psi_hat = 0.0;
  double sigma2_hat = 0.0;  // raw estimate; may be negative for m-dependent
  double ci_low = 0.0;
  double ci_high = 0.0;
  double alpha = 0.05;
  std::size_t T = 0;
  bool degenerate = false;  // negative variance clamped at CI construction
};

// Formats a double with 17 significant digits (round-trip exact).
std::string format_double(double v);

}  // namespace dml4ssi
