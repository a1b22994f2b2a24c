#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "dml4ssi/core.hpp"

namespace dml4ssi {

struct H0Mode {
  enum class Kind { kDeterministic, kStationaryDraw };
  Kind kind = Kind::kDeterministic;
  double value = 1.0;  // used by kDeterministic

  static H0Mode Deterministic(double v) { return {Kind::kDeterministic, v}; }
  static H0Mode StationaryDraw() { return {Kind::kStationaryDraw, 0.0}; }
};

// Observational model with an AR(1) shared state:
//   X_t,i ~ N(x_mean, x_sd^2), D_t ~ Ber(clip(X_t,1, zeta, 1-zeta)),
//   H_t = ar_coef (H_{t-1} - 1) + 1 + N(0, h_noise_sd^2),
//   Y_t = sin(2 pi X_t,1) + direct D_t + interaction H_t D_t + intercept + N(0, y_noise_sd^2).
struct AdeDgpConfig {
  std::size_t p_x = 10;
  double x_mean = 1.0;
  double x_sd = 1.0;
  double zeta = 0.1;
  double ar_coef = 0.75;
  double h_noise_sd = 1.0;
  double y_noise_sd = std::sqrt(0.1);
  H0Mode h0_mode = H0Mode::Deterministic(1.0);
  double direct_coef = 2.0;
  double interaction_coef = 2.0;
  double intercept = -1.0;

  // Throws std::invalid_argument naming the violated invariant.
  void validate() const;
};

// Switchback model: H_t = (D_{t-m}, ..., D_{t-1}, X_{t-m,1}, ..., X_{t-1,1}),
//   Y_t = sin(2 pi X_t,1) + direct D_t
//         + spill (1/m) sum_{i=1..m} exp(-D_{t-i} / spill_scale) + intercept + noise.
struct SwitchbackDgpConfig {
  std::size_t p_x = 1;
  SwitchbackDesign design{5, 10, 0.5};
  double y_noise_sd = std::sqrt(0.1);
  double spill_coef = 2.0;
  double spill_scale = 3.0;
  double direct_coef = 2.0;
  double intercept = -1.0;

  void validate() const;
};

using DgpConfig = std::variant<AdeDgpConfig, SwitchbackDgpConfig>;

void validate_design(const SwitchbackDesign& design);

struct TruthSpec {
  enum class Method { kAnalytic, kOracleMonteCarlo };

  double psi_star = 0.0;
  Method method = Method::kAnalytic;
  std::size_t oracle_reps = 0;
  RngStream oracle_seed;
  double oracle_se = 0.0;  // Monte Carlo standard error, oracle only
};

double ar1_step(double h_prev, double noise, const AdeDgpConfig& cfg);
double propensity_true(double x1, double zeta);

// Noise-free conditional means E[Y | D, X, H] of the two models.
double ade_outcome_mean(const AdeDgpConfig& cfg, int d, std::span<const double> x,
                        std::span<const double> h);
double switchback_outcome_mean(const SwitchbackDgpConfig& cfg, int d,
                               std::span<const double> x, std::span<const double> h);

// Mean of H_t under the configured initial state.
double ade_state_mean(const AdeDgpConfig& cfg, std::size_t t);

Trajectory simulate_ade_dgp(const AdeDgpConfig& cfg, std::size_t T, const RngStream& stream);

struct SwitchbackAssignments {
  // Positions 1-m, ..., T; index i corresponds to position i + 1 - m.
  std::vector<int> assignments;
  std::size_t offset = 1;  // first switch position, in {1, ..., block_len}
};

SwitchbackAssignments draw_switchback_assignments(const SwitchbackDesign& design, std::size_t T,
                                                  Rng& rng);
SwitchbackAssignments draw_switchback_assignments(const SwitchbackDesign& design, std::size_t T,
                                                  const RngStream& stream);

enum class WindowValue { kAllOnes, kAllZeros };

// Exact P(D_{t-m..t} = b) under the design, by enumeration of the offsets.
double switchback_window_prob(const SwitchbackDesign& design, std::size_t t, WindowValue b);

// forced_assignment, when set, replaces the randomized design (all positions,
// burn-in included, get that treatment). Used by the GATE oracle.
Trajectory simulate_switchback_dgp(const SwitchbackDgpConfig& cfg, std::size_t T,
                                   const RngStream& stream,
                                   std::optional<int> forced_assignment = std::nullopt);

// Analytic ADE over horizon T: direct + interaction * mean_t E[H_t].
TruthSpec true_ade(const AdeDgpConfig& cfg, std::size_t T = 1000);
// Monte Carlo oracle: R independent length-T chains, averaging f*(1,.)-f*(0,.).
TruthSpec oracle_ade(const AdeDgpConfig& cfg, std::size_t T, std::size_t R,
                     const RngStream& stream);

// Analytic GATE: direct + spill (exp(-1/spill_scale) - 1).
TruthSpec true_gate(const SwitchbackDgpConfig& cfg);
// Monte Carlo oracle: mean difference of outcomes simulated under forced
// all-ones and forced all-zeros assignment, over R steps each.
TruthSpec oracle_gate(const SwitchbackDgpConfig& cfg, std::size_t R, const RngStream& stream);

}  // namespace dml4ssi
