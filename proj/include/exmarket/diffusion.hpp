#pragma once

// Euler-Maruyama integration of the large-market limit
//   dQ = beta (p - Q) dt + gamma sqrt(eta) (1 - Q) Q dB
//   dX = lambda_F (F - X) dt + sigma_xi sqrt(lambda_N + c_e Q) gamma sqrt(eta) (1 - Q) Q dW
// with B and W independent.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <utility>
#include <vector>

#include "exmarket/model.hpp"
#include "exmarket/rng.hpp"

namespace exmarket {

enum class BoundaryPolicy { kClamp, kReflect };

struct SdeConfig {
  double dt = 1e-4;
  double horizon = 1.0;
  BoundaryPolicy boundary = BoundaryPolicy::kClamp;
  std::uint64_t seed = 0;
  std::uint64_t replication = 0;
  // keep every k-th step (the final step is always kept)
  std::size_t record_every = 1;
};

// fraction of boundary-corrected steps above which a run counts as unstable
inline constexpr double kUnstableBoundaryFraction = 0.01;

inline double stability_dt_limit(const LimitParams& l) {
  const double g2e = l.gamma * l.gamma * l.eta;
  return g2e > 0.0 ? 0.1 / g2e : std::numeric_limits<double>::infinity();
}

struct LimitPath {
  std::vector<double> grid;
  std::vector<double> q;
  std::vector<double> x;  // empty for simulate_q
  std::uint64_t seed = 0;
  std::uint64_t replication = 0;
  std::size_t steps = 0;
  std::size_t boundary_steps = 0;
  bool coarse_dt = false;  // dt above the stability guard

  double boundary_fraction() const noexcept {
    return steps == 0 ? 0.0 : static_cast<double>(boundary_steps) / static_cast<double>(steps);
  }
  bool unstable() const noexcept { return boundary_fraction() >= kUnstableBoundaryFraction; }
};

inline void validate(const SdeConfig& cfg) {
  if (!(cfg.dt > 0.0)) throw ValidationError("dt must be positive");
  if (!(cfg.horizon > 0.0)) throw ValidationError("horizon must be positive");
  if (cfg.dt > cfg.horizon) throw ValidationError("dt must not exceed the horizon");
  if (cfg.record_every == 0) throw ValidationError("record_every must be positive");
}

/// E[Q_t] = p + (q0 - p) exp(-beta t); exact because the drift is linear.
inline double mean_ode(const LimitParams& l, double q0, double t) {
  return l.p + (q0 - l.p) * std::exp(-l.beta * t);
}

/// X with the noise switched off: F + (x0 - F) exp(-lambda_F t).
inline double price_mean_ode(const LimitParams& l, double x0, double t) {
  return l.fundamental_value + (x0 - l.fundamental_value) * std::exp(-l.lambda_f * t);
}

inline double euler_q_step(const LimitParams& l, double q, double dt, double dB) noexcept {
  return q + l.beta * (l.p - q) * dt + l.vol_q() * (1.0 - q) * q * dB;
}

inline double euler_x_step(const LimitParams& l, double x, double q, double dt, double dW) noexcept {
  const double activity = std::max(0.0, l.lambda_n + l.c_e * q);
  return x + l.lambda_f * (l.fundamental_value - x) * dt +
         l.sigma_xi * std::sqrt(activity) * l.vol_q() * (1.0 - q) * q * dW;
}

/// Maps an Euler iterate back into [0, 1]; returns true if it had left.
inline bool apply_boundary(double& q, BoundaryPolicy policy) noexcept {
  if (q >= 0.0 && q <= 1.0) return false;
  if (policy == BoundaryPolicy::kReflect) {
    if (q < 0.0) q = -q;
    if (q > 1.0) q = 2.0 - q;
  }
  q = std::clamp(q, 0.0, 1.0);
  return true;
}

namespace detail {

template <bool WithPrice>
LimitPath integrate(const LimitParams& l, double q0, double x0, const SdeConfig& cfg) {
  validate(l);
  validate(cfg);
  if (!(q0 >= 0.0 && q0 <= 1.0)) throw ValidationError("q0 must lie in [0,1]");
  if constexpr (WithPrice) {
    if (std::min(l.lambda_n, l.lambda_n + l.c_e) < 0.0)
      throw ValidationError("lambda_N + c_e q must be nonnegative");
  }
  LimitPath path;
  path.seed = cfg.seed;
  path.replication = cfg.replication;
  path.steps = static_cast<std::size_t>(std::llround(cfg.horizon / cfg.dt));
  path.coarse_dt = cfg.dt > stability_dt_limit(l);
  const std::size_t kept = path.steps / cfg.record_every + 2;
  path.grid.reserve(kept);
  path.q.reserve(kept);
  if constexpr (WithPrice) path.x.reserve(kept);

  auto rng_b = make_stream(cfg.seed, cfg.replication, Purpose::kBrownianQ);
  auto rng_w = make_stream(cfg.seed, cfg.replication, Purpose::kBrownianX);
  // one distribution per stream: libstdc++ caches the second Box-Muller value
  std::normal_distribution<double> normal_b, normal_w;
  const double sqdt = std::sqrt(cfg.dt);

  double q = q0;
  double x = x0;
  auto record = [&](std::size_t i) {
    path.grid.push_back(static_cast<double>(i) * cfg.dt);
    path.q.push_back(q);
    if constexpr (WithPrice) path.x.push_back(x);
  };
  record(0);
  for (std::size_t i = 1; i <= path.steps; ++i) {
    const double q_prev = q;
    q = euler_q_step(l, q, cfg.dt, sqdt * normal_b(rng_b));
    if (apply_boundary(q, cfg.boundary)) ++path.boundary_steps;
    if constexpr (WithPrice) x = euler_x_step(l, x, q_prev, cfg.dt, sqdt * normal_w(rng_w));
    if (i % cfg.record_every == 0 || i == path.steps) record(i);
  }
  return path;
}

}  // namespace detail

inline LimitPath simulate_q(const LimitParams& l, double q0, const SdeConfig& cfg) {
  return detail::integrate<false>(l, q0, 0.0, cfg);
}

inline LimitPath simulate_xq(const LimitParams& l, double q0, double x0, const SdeConfig& cfg) {
  return detail::integrate<true>(l, q0, x0, cfg);
}

/// Draws (q0, x0) from the limit's initial distributions for one replication.
inline std::pair<double, double> draw_initial(const LimitParams& l, std::uint64_t seed,
                                              std::uint64_t replication) {
  auto rng = make_stream(seed, replication, Purpose::kInitial);
  const double q0 = l.q0_dist.sample(rng);
  const double x0 = l.x0_dist.sample(rng);
  return {q0, x0};
}

}  // namespace exmarket
