#include "dml4ssi/dgp.hpp"

#include <algorithm>
#include <numbers>
#include <stdexcept>
#include <string>

namespace dml4ssi {
namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

double spillover(const SwitchbackDgpConfig& cfg, std::span<const double> past_treatments) {
  if (past_treatments.empty()) return 0.0;
  double acc = 0.0;
  for (double d : past_treatments) acc += std::exp(-d / cfg.spill_scale);
  return cfg.spill_coef * acc / static_cast<double>(past_treatments.size());
}

double sample_mean_and_se(const std::vector<double>& v, double& se) {
  const double mean = compensated_mean(v);
  CompensatedSum ss;
  for (double e : v) ss.add((e - mean) * (e - mean));
  const double n = static_cast<double>(v.size());
  se = v.size() > 1 ? std::sqrt(ss.value() / (n - 1.0) / n) : 0.0;
  return mean;
}

}  // namespace

void AdeDgpConfig::validate() const {
  require(p_x >= 1, "dgp.p_X must be a positive integer");
  require(std::isfinite(x_mean), "dgp.x_mean must be finite");
  require(x_sd > 0.0 && std::isfinite(x_sd), "dgp.x_sd must be positive");
  require(zeta > 0.0 && zeta < 0.5, "dgp.zeta must lie in (0, 0.5), got " + format_double(zeta));
  require(std::fabs(ar_coef) < 1.0, "dgp.ar_coef must satisfy |ar_coef| < 1, got " +
                                        format_double(ar_coef));
  require(h_noise_sd >= 0.0 && std::isfinite(h_noise_sd), "dgp.h_noise_sd must be >= 0");
  require(y_noise_sd >= 0.0 && std::isfinite(y_noise_sd), "dgp.y_noise_sd must be >= 0");
  require(std::isfinite(h0_mode.value), "dgp.h0_mode.value must be finite");
  require(std::isfinite(direct_coef) && std::isfinite(interaction_coef) &&
              std::isfinite(intercept),
          "dgp coefficients must be finite");
}

void validate_design(const SwitchbackDesign& design) {
  require(design.block_len > design.m, "design.block_len must exceed design.m (got block_len=" +
                                           std::to_string(design.block_len) +
                                           ", m=" + std::to_string(design.m) + ")");
  require(design.treat_prob > 0.0 && design.treat_prob < 1.0,
          "design.treat_prob must lie in (0, 1), got " + format_double(design.treat_prob));
}

void SwitchbackDgpConfig::validate() const {
  require(p_x >= 1, "dgp.p_X must be a positive integer");
  validate_design(design);
  require(y_noise_sd >= 0.0 && std::isfinite(y_noise_sd), "dgp.y_noise_sd must be >= 0");
  require(spill_scale > 0.0 && std::isfinite(spill_scale), "dgp.spill_scale must be positive");
  require(std::isfinite(spill_coef) && std::isfinite(direct_coef) && std::isfinite(intercept),
          "dgp coefficients must be finite");
}

double ar1_step(double h_prev, double noise, const AdeDgpConfig& cfg) {
  return cfg.ar_coef * (h_prev - 1.0) + 1.0 + noise;
}

double propensity_true(double x1, double zeta) { return std::clamp(x1, zeta, 1.0 - zeta); }

double ade_outcome_mean(const AdeDgpConfig& cfg, int d, std::span<const double> x,
                        std::span<const double> h) {
  const double dd = static_cast<double>(d);
  return std::sin(2.0 * std::numbers::pi * x[0]) + cfg.direct_coef * dd +
         cfg.interaction_coef * h[0] * dd + cfg.intercept;
}

double switchback_outcome_mean(const SwitchbackDgpConfig& cfg, int d, std::span<const double> x,
                               std::span<const double> h) {
  return std::sin(2.0 * std::numbers::pi * x[0]) + cfg.direct_coef * static_cast<double>(d) +
         spillover(cfg, h.first(cfg.design.m)) + cfg.intercept;
}

double ade_state_mean(const AdeDgpConfig& cfg, std::size_t t) {
  if (cfg.h0_mode.kind == H0Mode::Kind::kStationaryDraw) return 1.0;
  return 1.0 + (cfg.h0_mode.value - 1.0) * std::pow(cfg.ar_coef, static_cast<double>(t));
}

Trajectory simulate_ade_dgp(const AdeDgpConfig& cfg, std::size_t T, const RngStream& stream) {
  cfg.validate();
  if (T == 0) throw std::invalid_argument("T must be >= 1");
  Rng rng(stream);

  Trajectory traj;
  traj.regime = Regime::GeometricErgodic();
  double h = cfg.h0_mode.value;
  if (cfg.h0_mode.kind == H0Mode::Kind::kStationaryDraw) {
    const double sd = cfg.h_noise_sd / std::sqrt(1.0 - cfg.ar_coef * cfg.ar_coef);
    h = rng.normal(1.0, sd);
  }
  traj.h0 = {h};
  traj.obs.reserve(T);

  for (std::size_t t = 1; t <= T; ++t) {
    Observation o;
    o.x.resize(cfg.p_x);
    for (auto& xi : o.x) xi = rng.normal(cfg.x_mean, cfg.x_sd);
    o.d = rng.bernoulli(propensity_true(o.x[0], cfg.zeta)) ? 1 : 0;
    h = ar1_step(h, cfg.h_noise_sd * rng.normal(), cfg);
    o.h = {h};
    o.y = ade_outcome_mean(cfg, o.d, o.x, o.h) + cfg.y_noise_sd * rng.normal();
    traj.obs.push_back(std::move(o));
  }
  return traj;
}

SwitchbackAssignments draw_switchback_assignments(const SwitchbackDesign& design, std::size_t T,
                                                  Rng& rng) {
  // Degenerate probabilities 0 and 1 are valid for drawing assignments; the
  // estimators need both arms and go through validate_design.
  require(design.block_len > design.m, "design.block_len must exceed design.m");
  require(design.treat_prob >= 0.0 && design.treat_prob <= 1.0, "design.treat_prob must lie in [0, 1]");
  if (T == 0) throw std::invalid_argument("T must be >= 1");
  SwitchbackAssignments out;
  out.offset = 1 + static_cast<std::size_t>(rng.below(design.block_len));
  out.assignments.resize(T + design.m);

  // Position p (1-m..T) lies in block 0 when p < offset, otherwise in block
  // 1 + (p - offset) / block_len. Blocks are visited in increasing order.
  const long long m = static_cast<long long>(design.m);
  const long long offset = static_cast<long long>(out.offset);
  const long long len = static_cast<long long>(design.block_len);
  long long current_block = -1;
  int current_value = 0;
  for (std::size_t i = 0; i < out.assignments.size(); ++i) {
    const long long p = static_cast<long long>(i) + 1 - m;
    const long long block = p < offset ? 0 : 1 + (p - offset) / len;
    if (block != current_block) {
      current_block = block;
      current_value = rng.bernoulli(design.treat_prob) ? 1 : 0;
    }
    out.assignments[i] = current_value;
  }
  return out;
}

SwitchbackAssignments draw_switchback_assignments(const SwitchbackDesign& design, std::size_t T,
                                                  const RngStream& stream) {
  Rng rng(stream);
  return draw_switchback_assignments(design, T, rng);
}

double switchback_window_prob(const SwitchbackDesign& design, std::size_t t, WindowValue b) {
  validate_design(design);
  if (t == 0) throw std::invalid_argument("switchback_window_prob requires t >= 1");
  const double p = b == WindowValue::kAllOnes ? design.treat_prob : 1.0 - design.treat_prob;
  const long long lo = static_cast<long long>(t) - static_cast<long long>(design.m);
  const long long hi = static_cast<long long>(t);
  const long long len = static_cast<long long>(design.block_len);

  double total = 0.0;
  for (long long offset = 1; offset <= len; ++offset) {
    // Block starts strictly inside the window (lo, hi] split it further.
    int blocks = 1;
    long long start = offset;
    if (start <= lo) start += ((lo - start) / len + 1) * len;
    for (; start <= hi; start += len) ++blocks;
    total += std::pow(p, blocks);
  }
  return total / static_cast<double>(len);
}

Trajectory simulate_switchback_dgp(const SwitchbackDgpConfig& cfg, std::size_t T,
                                   const RngStream& stream, std::optional<int> forced_assignment) {
  cfg.validate();
  if (T == 0) throw std::invalid_argument("T must be >= 1");
  if (forced_assignment && *forced_assignment != 0 && *forced_assignment != 1) {
    throw std::invalid_argument("forced assignment must be 0 or 1");
  }
  Rng rng(stream);
  const std::size_t m = cfg.design.m;

  std::vector<int> d;
  if (forced_assignment) {
    d.assign(T + m, *forced_assignment);
  } else {
    d = draw_switchback_assignments(cfg.design, T, rng).assignments;
  }
  std::vector<std::vector<double>> x(T + m, std::vector<double>(cfg.p_x));
  for (auto& row : x) {
    for (auto& v : row) v = rng.uniform();
  }

  Trajectory traj;
  traj.regime = Regime::MDependent(m);
  traj.design = cfg.design;
  // Index i in d/x is position i + 1 - m; time t sits at index t - 1 + m.
  auto state_at = [&](std::size_t t) {
    std::vector<double> h(2 * m);
    const std::size_t first = t - 1;  // index of position t - m
    for (std::size_t i = 0; i < m; ++i) {
      h[i] = static_cast<double>(d[first + i]);
      h[m + i] = x[first + i][0];
    }
    return h;
  };
  // h0 records the burn-in window (positions 1-m..0), which is also H_1.
  traj.h0 = state_at(1);

  traj.obs.reserve(T);
  for (std::size_t t = 1; t <= T; ++t) {
    Observation o;
    o.x = x[t - 1 + m];
    o.d = d[t - 1 + m];
    o.h = state_at(t);
    o.y = switchback_outcome_mean(cfg, o.d, o.x, o.h) + cfg.y_noise_sd * rng.normal();
    traj.obs.push_back(std::move(o));
  }
  return traj;
}

TruthSpec true_ade(const AdeDgpConfig& cfg, std::size_t T) {
  cfg.validate();
  if (T == 0) throw std::invalid_argument("T must be >= 1");
  CompensatedSum acc;
  for (std::size_t t = 1; t <= T; ++t) acc.add(ade_state_mean(cfg, t));
  TruthSpec truth;
  truth.psi_star =
      cfg.direct_coef + cfg.interaction_coef * acc.value() / static_cast<double>(T);
  return truth;
}

TruthSpec oracle_ade(const AdeDgpConfig& cfg, std::size_t T, std::size_t R,
                     const RngStream& stream) {
  if (R == 0) throw std::invalid_argument("oracle needs R >= 1");
  std::vector<double> chain_means(R);
  for (std::size_t r = 0; r < R; ++r) {
    const Trajectory traj = simulate_ade_dgp(cfg, T, derive_stream(stream, r));
    CompensatedSum acc;
    for (const auto& o : traj.obs) {
      acc.add(ade_outcome_mean(cfg, 1, o.x, o.h) - ade_outcome_mean(cfg, 0, o.x, o.h));
    }
    chain_means[r] = acc.value() / static_cast<double>(T);
  }
  TruthSpec truth;
  truth.method = TruthSpec::Method::kOracleMonteCarlo;
  truth.oracle_reps = R;
  truth.oracle_seed = stream;
  truth.psi_star = sample_mean_and_se(chain_means, truth.oracle_se);
  return truth;
}

TruthSpec true_gate(const SwitchbackDgpConfig& cfg) {
  cfg.validate();
  TruthSpec truth;
  truth.psi_star = cfg.direct_coef;
  if (cfg.design.m > 0) {
    truth.psi_star += cfg.spill_coef * (std::exp(-1.0 / cfg.spill_scale) - 1.0);
  }
  return truth;
}

TruthSpec oracle_gate(const SwitchbackDgpConfig& cfg, std::size_t R, const RngStream& stream) {
  if (R == 0) throw std::invalid_argument("oracle needs R >= 1");
  const Trajectory treated = simulate_switchback_dgp(cfg, R, derive_stream(stream, 0), 1);
  const Trajectory control = simulate_switchback_dgp(cfg, R, derive_stream(stream, 1), 0);
  std::vector<double> y1(R), y0(R);
  for (std::size_t t = 0; t < R; ++t) {
    y1[t] = treated.obs[t].y;
    y0[t] = control.obs[t].y;
  }
  double se1 = 0.0, se0 = 0.0;
  const double mean1 = sample_mean_and_se(y1, se1);
  const double mean0 = sample_mean_and_se(y0, se0);
  TruthSpec truth;
  truth.method = TruthSpec::Method::kOracleMonteCarlo;
  truth.oracle_reps = R;
  truth.oracle_seed = stream;
  truth.psi_star = mean1 - mean0;
  truth.oracle_se = std::sqrt(se1 * se1 + se0 * se0);
  return truth;
}

}  // namespace dml4ssi
