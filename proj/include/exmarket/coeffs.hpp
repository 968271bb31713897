#pragma once

// Finite-n aggregated drift/volume coefficients of the excitement and price
// chains and their large-market limits.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "exmarket/model.hpp"

namespace exmarket {

/// Second component of the expected aggregated transition,
///   (1/n) sum_a mu_a [(1 - v) P_up,a(v) - v P_down,a(v)],
/// evaluated from the per-agent probabilities. b^1 = -b^2.
inline double b_n(const Population& pop, double v2) {
  detail::check_excitement(v2);
  const double n = static_cast<double>(pop.size());
  double s = 0.0;
  for (const auto& g : pop.groups()) {
    const auto& a = g.params;
    const double mu = n * a.gamma_sq;
    s += static_cast<double>(g.count) * mu *
         ((1.0 - v2) * detail::up_prob(a, v2, n) - v2 * detail::down_prob(a, v2, n));
  }
  return s / n;
}

/// (c_n^2)^2 = (1/n^2) sum_a mu_a [(1 - v) P_up,a(v) + v P_down,a(v)].
inline double c_n_sq(const Population& pop, double v2) {
  detail::check_excitement(v2);
  const double n = static_cast<double>(pop.size());
  double s = 0.0;
  for (const auto& g : pop.groups()) {
    const auto& a = g.params;
    const double mu = n * a.gamma_sq;
    s += static_cast<double>(g.count) * mu *
         ((1.0 - v2) * detail::up_prob(a, v2, n) + v2 * detail::down_prob(a, v2, n));
  }
  return s / (n * n);
}

/// Full two-state coefficient structure at v = (1 - v2, v2).
struct TransitionCoefficients {
  double b1 = 0.0, b2 = 0.0;
  double c1 = 0.0, c2 = 0.0, c12 = 0.0, c21 = 0.0;  // squared entries
};

inline TransitionCoefficients transition_coefficients(const Population& pop, double v2) {
  TransitionCoefficients t;
  t.b2 = b_n(pop, v2);
  t.b1 = -t.b2;
  t.c2 = c_n_sq(pop, v2);
  t.c1 = t.c2;
  t.c12 = -t.c2;
  t.c21 = -t.c2;
  return t;
}

/// Expected aggregated excess demand, (1/n) sum over fundamentalists of
/// lambda_bar (F - x).
inline double z_n(const Population& pop, const MarketParams& market, double x) {
  const double n = static_cast<double>(pop.size());
  double s = 0.0;
  for (const auto& g : pop.groups())
    if (g.params.fundamentalist) s += static_cast<double>(g.count) * g.params.lambda_bar;
  return s * (market.fundamental_value - x) / n;
}

// Trading volume. Excited agents are noise traders, n q of them in
// expectation; their boost c_e is weighted by the mean noise-trader
// gamma^2 eta, which reduces to the limit constant for homogeneous traders.
inline double sigma_n_sq(const Population& pop, const MarketParams& market, double x, double q) {
  detail::check_excitement(q);
  const double n = static_cast<double>(pop.size());
  const double gap = market.fundamental_value - x;
  double fund = 0.0;
  double noise_weighted = 0.0;
  double noise_ge = 0.0;
  double noise_count = 0.0;
  for (const auto& g : pop.groups()) {
    const auto& a = g.params;
    const double c = static_cast<double>(g.count);
    if (a.fundamentalist) {
      fund += c * a.lambda_bar * gap * gap / n;
    } else {
      noise_weighted += c * a.lambda_bar * a.gamma_sq * a.eta;
      noise_ge += c * a.gamma_sq * a.eta;
      noise_count += c;
    }
  }
  const double mean_ge = noise_count > 0.0 ? noise_ge / noise_count : 0.0;
  const double qq = q * q * (1.0 - q) * (1.0 - q);
  const double s2 = market.sigma_xi * market.sigma_xi;
  return (fund + s2 * qq * (noise_weighted + market.c_e * n * q * mean_ge)) / n;
}

struct LimitCoefficients {
  double b = 0.0;
  double c_sq = 0.0;
  double z = 0.0;
  double sigma_sq = 0.0;
};

inline LimitCoefficients limit_coeffs(const LimitParams& l, double x, double q) {
  detail::check_excitement(q);
  const double g2e = l.gamma * l.gamma * l.eta;
  const double qq = q * q * (1.0 - q) * (1.0 - q);
  LimitCoefficients c;
  c.b = l.beta * (l.p - q);
  c.c_sq = g2e * qq;
  c.z = l.lambda_f * (l.fundamental_value - x);
  c.sigma_sq = (l.lambda_n + l.c_e * q) * l.sigma_xi * l.sigma_xi * g2e * qq;
  return c;
}

struct ProbeGrid {
  std::vector<double> v2;  // excitement probes (b, c, sigma)
  std::vector<double> x;   // price probes (z, sigma)

  static ProbeGrid defaults(double fundamental_value) {
    ProbeGrid g;
    for (int i = 0; i <= 10; ++i) g.v2.push_back(i / 10.0);
    for (int i = -4; i <= 4; ++i) g.x.push_back(fundamental_value + 5.0 * i);
    return g;
  }
};

enum class Coefficient { kB, kCSq, kZ, kSigmaSq };

inline const char* name(Coefficient c) {
  switch (c) {
    case Coefficient::kB: return "b";
    case Coefficient::kCSq: return "c_sq";
    case Coefficient::kZ: return "z";
    case Coefficient::kSigmaSq: return "sigma_sq";
  }
  return "?";
}

struct CoeffRow {
  std::size_t n = 0;
  Coefficient coefficient = Coefficient::kB;
  double x = 0.0;
  double v2 = 0.0;
  double finite = 0.0;
  double limit = 0.0;
  double gap() const { return std::abs(finite - limit); }
};

struct CoeffSupGaps {
  std::size_t n = 0;
  double b = 0.0, c_sq = 0.0, z = 0.0, sigma_sq = 0.0;

  double get(Coefficient c) const {
    switch (c) {
      case Coefficient::kB: return b;
      case Coefficient::kCSq: return c_sq;
      case Coefficient::kZ: return z;
      case Coefficient::kSigmaSq: return sigma_sq;
    }
    return 0.0;
  }
};

struct CoeffReport {
  std::vector<std::size_t> n_list;
  ProbeGrid grid;
  std::vector<CoeffRow> rows;
  std::vector<CoeffSupGaps> sup_gaps;  // one per n, in n_list order

  /// Sup gap of `c` weakly decreasing along n_list.
  bool monotone(Coefficient c, double slack = 1e-12) const {
    for (std::size_t i = 1; i < sup_gaps.size(); ++i)
      if (sup_gaps[i].get(c) > sup_gaps[i - 1].get(c) + slack) return false;
    return true;
  }

  /// Monotone and either already exact or shrinking from first to last n.
  bool converging(Coefficient c, double exact_tol = 1e-12) const {
    if (sup_gaps.empty()) return true;
    if (!monotone(c)) return false;
    const double last = sup_gaps.back().get(c);
    return last <= exact_tol || last < sup_gaps.front().get(c);
  }

  bool converging() const {
    for (auto c : {Coefficient::kB, Coefficient::kCSq, Coefficient::kZ, Coefficient::kSigmaSq})
      if (!converging(c)) return false;
    return true;
  }
};

using AgentFamily = std::function<Population(std::size_t n)>;

/// Evaluates every coefficient on the probe grid for each n and records the
/// supremum absolute gap to the limit. `market` supplies c_e, F and sigma_xi
/// (its n is overridden).
inline CoeffReport convergence_report(const AgentFamily& family, MarketParams market,
                                      const LimitParams& limit, const ProbeGrid& grid,
                                      const std::vector<std::size_t>& n_list) {
  CoeffReport rep;
  rep.n_list = n_list;
  rep.grid = grid;
  for (std::size_t n : n_list) {
    const Population pop = family(n);
    if (pop.size() != n) throw ValidationError("family returned a population of the wrong size");
    market.n = n;
    CoeffSupGaps sup;
    sup.n = n;
    auto push = [&](Coefficient c, double x, double v, double finite, double lim, double& slot) {
      CoeffRow r{n, c, x, v, finite, lim};
      slot = std::max(slot, r.gap());
      rep.rows.push_back(r);
    };
    for (double v : grid.v2) {
      const auto lim = limit_coeffs(limit, limit.fundamental_value, v);
      push(Coefficient::kB, limit.fundamental_value, v, b_n(pop, v), lim.b, sup.b);
      push(Coefficient::kCSq, limit.fundamental_value, v, c_n_sq(pop, v), lim.c_sq, sup.c_sq);
    }
    for (double x : grid.x) {
      const auto lim = limit_coeffs(limit, x, 0.0);
      push(Coefficient::kZ, x, 0.0, z_n(pop, market, x), lim.z, sup.z);
      for (double v : grid.v2) {
        const auto l2 = limit_coeffs(limit, x, v);
        push(Coefficient::kSigmaSq, x, v, sigma_n_sq(pop, market, x, v), l2.sigma_sq, sup.sigma_sq);
      }
    }
    rep.sup_gaps.push_back(sup);
  }
  return rep;
}

}  // namespace exmarket
