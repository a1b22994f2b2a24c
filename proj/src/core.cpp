#include "dml4ssi/core.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace dml4ssi {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t splitmix64(std::uint64_t& state) {
  state += kGolden;
  return mix64(state);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

bool all_finite(const std::vector<double>& v) {
  for (double e : v) {
    if (!std::isfinite(e)) return false;
  }
  return true;
}

}  // namespace

std::string ValidationResult::summary() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < violations.size(); ++i) {
    if (i) os << "; ";
    os << violations[i].message;
  }
  return os.str();
}

ValidationResult validate_trajectory(const Trajectory& traj) {
  ValidationResult result;
  auto add = [&](std::size_t t, std::string msg) {
    result.violations.push_back({t, std::move(msg)});
  };

  if (traj.obs.empty()) add(0, "trajectory is empty (T must be >= 1)");
  if (!all_finite(traj.h0)) add(0, "non-finite shared state at t=0");

  if (traj.regime.kind == Regime::Kind::kMDependent && traj.design &&
      traj.design->m != traj.regime.m) {
    add(0, "switchback design m=" + std::to_string(traj.design->m) +
               " differs from regime m=" + std::to_string(traj.regime.m));
  }
  if (traj.design && traj.design->block_len <= traj.design->m) {
    add(0, "switchback block length must exceed m");
  }

  const std::size_t p_x = traj.p_x();
  const std::size_t p_h = traj.p_h();
  for (std::size_t i = 0; i < traj.obs.size(); ++i) {
    const Observation& o = traj.obs[i];
    const std::size_t t = i + 1;
    const std::string at = " at t=" + std::to_string(t);
    if (o.x.size() != p_x) {
      add(t, "covariate dimension " + std::to_string(o.x.size()) +
                 " != " + std::to_string(p_x) + at);
    }
    if (o.h.size() != p_h) {
      add(t, "shared state dimension " + std::to_string(o.h.size()) +
                 " != " + std::to_string(p_h) + at);
    }
    if (o.d != 0 && o.d != 1) add(t, "treatment not binary" + at);
    if (!all_finite(o.x)) add(t, "non-finite covariate" + at);
    if (!all_finite(o.h)) add(t, "non-finite shared state" + at);
    if (!std::isfinite(o.y)) add(t, "non-finite outcome" + at);
  }
  return result;
}

RngStream derive_stream(const RngStream& base, std::uint64_t index) {
  return {base.seed, mix64(base.stream_id ^ mix64(index + 0x632BE59BD9B4E019ULL))};
}

Rng::Rng(const RngStream& stream) {
  std::uint64_t state = mix64(stream.seed ^ 0xD1B54A32D192ED03ULL) ^
                        mix64(stream.stream_id + kGolden);
  for (auto& word : s_) word = splitmix64(state);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() {
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::normal() { return normal_quantile(uniform()); }

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below requires n > 0");
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    const std::uint64_t r = next_u64();
    if (r >= threshold) return r % n;
  }
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw std::domain_error("normal_quantile requires p in [0, 1]");
  }
  const double q = p - 0.5;
  if (std::fabs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r +
                 67265.770927008700853) * r + 45921.953931549871457) * r +
               13731.693765509461125) * r + 1971.5909503065514427) * r +
             133.14166789178437745) * r + 3.387132872796366608) /
           (((((((r * 5226.495278852545925 + 28729.085735721942674) * r +
                 39307.89580009271061) * r + 21213.794301586595867) * r +
               5394.1960214247511077) * r + 687.1870074920579083) * r +
             42.313330701600911252) * r + 1.0);
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((r * 7.7454501427834140764e-4 + 0.0227238449892691845833) * r +
                0.24178072517745061177) * r + 1.27045825245236838258) * r +
              3.64784832476320460504) * r + 5.7694972214606914055) * r +
            4.6303378461565452959) * r + 1.42343711074968357734) /
          (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r +
                0.0151986665636164571966) * r + 0.14810397642748007459) * r +
              0.68976733498510000455) * r + 1.6763848301838038494) * r +
            2.05319162663775882187) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r +
                0.0012426609473880784386) * r + 0.026532189526576123093) * r +
              0.29656057182850489123) * r + 1.7848265399172913358) * r +
            5.4637849111641143699) * r + 6.6579046435011037772) /
          (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r +
                1.8463183175100546818e-5) * r + 7.868691311456132591e-4) * r +
              0.0148753612908506148525) * r + 0.13692988092273580531) * r +
            0.59983220655588793769) * r + 1.0);
  }
  return q < 0.0 ? -val : val;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

void CompensatedSum::add(double v) {
  const double t = sum_ + v;
  if (std::fabs(sum_) >= std::fabs(v)) {
    comp_ += (sum_ - t) + v;
  } else {
    comp_ += (v - t) + sum_;
  }
  sum_ = t;
}

double compensated_sum(std::span<const double> values) {
  CompensatedSum acc;
  for (double v : values) acc.add(v);
  return acc.value();
}

double compensated_mean(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("mean of empty series");
  return compensated_sum(values) / static_cast<double>(values.size());
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

}  // namespace dml4ssi
