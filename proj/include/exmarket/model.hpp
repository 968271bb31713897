#pragma once

// Parameters and closed-form primitives of the excitement market model:
// transition and selection probabilities, intensities, excess demand and the
// market-maker pricing rule.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "exmarket/rng.hpp"

namespace exmarket {

class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class DemandMode { kSquaredFeedback, kLimitConsistent };

// mean-0, variance sigma_xi^2 draws for noise-trader signals
enum class NoiseKind { kGaussian, kTwoPoint };

struct AgentParams {
  double gamma_sq = 1.0;
  double beta = 0.0;
  double p = 0.5;
  double eta = 0.0;
  double lambda_bar = 0.0;
  bool fundamentalist = false;

  static AgentParams fundamentalist_trader(double gamma_sq, double lambda_bar) {
    return AgentParams{gamma_sq, 0.0, 0.0, 0.0, lambda_bar, true};
  }

  friend bool operator==(const AgentParams&, const AgentParams&) = default;
};

// beta is only required to be nonnegative: the per-agent probabilities are
// what must stay in [0, 1], and that is checked against n in validate_population.
inline void validate(const AgentParams& a) {
  if (!(a.gamma_sq > 0.0) || !std::isfinite(a.gamma_sq))
    throw ValidationError("gamma_sq must be positive and finite");
  if (!(a.beta >= 0.0) || !std::isfinite(a.beta))
    throw ValidationError("beta must be nonnegative and finite");
  if (!(a.p >= 0.0 && a.p <= 1.0)) throw ValidationError("p must lie in [0,1]");
  if (!(a.eta >= 0.0 && a.eta <= 1.0)) throw ValidationError("eta must lie in [0,1]");
  if (!(a.lambda_bar >= 0.0) || !std::isfinite(a.lambda_bar))
    throw ValidationError("lambda_bar must be nonnegative and finite");
  if (a.fundamentalist && (a.beta != 0.0 || a.eta != 0.0))
    throw ValidationError("fundamentalists require beta = 0 and eta = 0");
}

struct MarketParams {
  std::size_t n = 1;
  double c_e = 0.0;
  double alpha = 1.0;
  double fundamental_value = 0.0;
  double sigma_xi = 1.0;
  DemandMode demand_mode = DemandMode::kLimitConsistent;
  NoiseKind noise = NoiseKind::kGaussian;
};

inline void validate(const MarketParams& m) {
  if (m.n < 1) throw ValidationError("market needs at least one agent");
  if (!(m.c_e >= 0.0) || !std::isfinite(m.c_e)) throw ValidationError("c_e must be >= 0");
  if (!(m.alpha > 0.0) || !std::isfinite(m.alpha)) throw ValidationError("alpha must be > 0");
  if (!std::isfinite(m.fundamental_value)) throw ValidationError("F must be finite");
  if (!(m.sigma_xi >= 0.0) || !std::isfinite(m.sigma_xi))
    throw ValidationError("sigma_xi must be >= 0");
}

/// A block of identical agents. Agents of one group occupy a contiguous index
/// range in the population.
struct AgentGroup {
  AgentParams params;
  std::size_t count = 0;
};

/// Agents stored as runs of identical parameters, so a homogeneous market of
/// any size costs O(1) memory here.
class Population {
 public:
  Population() = default;

  explicit Population(std::vector<AgentGroup> groups) {
    for (auto& g : groups) {
      if (g.count == 0) continue;
      validate(g.params);
      if (!groups_.empty() && groups_.back().params == g.params) {
        groups_.back().count += g.count;
        offsets_.back() += g.count;
      } else {
        groups_.push_back(g);
        offsets_.push_back((offsets_.empty() ? 0 : offsets_.back()) + g.count);
      }
    }
    if (offsets_.empty()) throw ValidationError("population is empty");
  }

  static Population homogeneous(const AgentParams& params, std::size_t n) {
    return Population({AgentGroup{params, n}});
  }

  static Population from_agents(std::span<const AgentParams> agents) {
    std::vector<AgentGroup> g;
    g.reserve(agents.size());
    for (const auto& a : agents) g.push_back({a, 1});
    return Population(std::move(g));
  }

  std::size_t size() const noexcept { return offsets_.empty() ? 0 : offsets_.back(); }
  std::size_t group_count() const noexcept { return groups_.size(); }
  const std::vector<AgentGroup>& groups() const noexcept { return groups_; }
  const AgentGroup& group(std::size_t g) const { return groups_.at(g); }

  // first agent index of group g
  std::size_t group_begin(std::size_t g) const noexcept { return g == 0 ? 0 : offsets_[g - 1]; }

  std::size_t group_of(std::size_t agent) const noexcept {
    if (groups_.size() == 1) return 0;
    return static_cast<std::size_t>(
        std::upper_bound(offsets_.begin(), offsets_.end(), agent) - offsets_.begin());
  }

  const AgentParams& agent(std::size_t a) const { return groups_[group_of(a)].params; }

  template <class F>
  double sum(F&& per_agent) const {
    double s = 0.0;
    for (const auto& g : groups_) s += static_cast<double>(g.count) * per_agent(g.params);
    return s;
  }

  double gamma_sq_total() const {
    return sum([](const AgentParams& a) { return a.gamma_sq; });
  }
  double lambda_bar_total() const {
    return sum([](const AgentParams& a) { return a.lambda_bar; });
  }
  std::size_t fundamentalist_count() const {
    std::size_t k = 0;
    for (const auto& g : groups_)
      if (g.params.fundamentalist) k += g.count;
    return k;
  }

 private:
  std::vector<AgentGroup> groups_;
  std::vector<std::size_t> offsets_;
};

// ---------------------------------------------------------------------------
// transition probabilities

inline double herd_factor(int i, int j, double y) {
  if (i == j) throw ValidationError("herd_factor requires i != j");
  if ((i != 1 && i != 2) || (j != 1 && j != 2))
    throw ValidationError("herd_factor indices must be 1 or 2");
  if (!(y >= 0.0 && y <= 1.0)) throw ValidationError("herd_factor requires y in [0,1]");
  const double u = 1.0 - y;
  return i == 1 ? u * y * y : u * u * y;
}

namespace detail {

inline double up_prob(const AgentParams& a, double m, double n) noexcept {
  return a.beta * a.p / (2.0 * a.gamma_sq * n) + a.eta * (1.0 - m) * m * m / 2.0;
}

inline double down_prob(const AgentParams& a, double m, double n) noexcept {
  return a.beta * (1.0 - a.p) / (2.0 * a.gamma_sq * n) + a.eta * (1.0 - m) * (1.0 - m) * m / 2.0;
}

inline void check_excitement(double m) {
  if (!(m >= 0.0 && m <= 1.0)) throw ValidationError("excitement must lie in [0,1]");
}

inline double checked_prob(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0))
    throw ValidationError(std::string(what) + " lies outside [0,1]; n * gamma_sq too small");
  return v;
}

}  // namespace detail

/// Probability that an unexcited agent becomes excited when it reconsiders.
inline double trans_prob_up(const AgentParams& a, double m, std::size_t n) {
  detail::check_excitement(m);
  return detail::checked_prob(detail::up_prob(a, m, static_cast<double>(n)), "up-transition probability");
}

/// Probability that an excited agent becomes unexcited when it reconsiders.
inline double trans_prob_down(const AgentParams& a, double m, std::size_t n) {
  detail::check_excitement(m);
  return detail::checked_prob(detail::down_prob(a, m, static_cast<double>(n)),
                              "down-transition probability");
}

// h^{1,2} peaks at 4/27 (m = 2/3), as does h^{2,1} (m = 1/3); the constant
// part plus eta * 2/27 bounds both probabilities over the whole unit interval.
inline void validate_population(const Population& pop, std::size_t n) {
  if (pop.size() != n) throw ValidationError("population size does not match market n");
  const double nd = static_cast<double>(n);
  for (const auto& g : pop.groups()) {
    const auto& a = g.params;
    const double herd_max = a.eta * (4.0 / 27.0) / 2.0;
    const double up = a.beta * a.p / (2.0 * a.gamma_sq * nd) + herd_max;
    const double down = a.beta * (1.0 - a.p) / (2.0 * a.gamma_sq * nd) + herd_max;
    if (up > 1.0 || down > 1.0)
      throw ValidationError("transition probability exceeds 1 for n = " + std::to_string(n));
  }
}

inline double selection_prob_transition(std::size_t agent, const Population& pop) {
  if (agent >= pop.size()) throw ValidationError("agent index out of range");
  return pop.agent(agent).gamma_sq / pop.gamma_sq_total();
}

inline double trading_intensity(const AgentParams& a, int state, double c_e) {
  return a.lambda_bar + (state != 0 ? c_e : 0.0);
}

struct Rates {
  double mu_total = 0.0;      // n * sum gamma_sq
  double lambda_total = 0.0;  // sum lambda_bar + c_e * excited
  double nu_total = 0.0;
};

inline Rates aggregate_rates(const Population& pop, std::size_t excited_count,
                             const MarketParams& market) {
  Rates r;
  r.mu_total = static_cast<double>(market.n) * pop.gamma_sq_total();
  r.lambda_total = pop.lambda_bar_total() + market.c_e * static_cast<double>(excited_count);
  r.nu_total = r.mu_total + r.lambda_total;
  return r;
}

inline Rates aggregate_rates(const Population& pop, std::span<const std::uint8_t> states,
                             const MarketParams& market) {
  const auto excited = static_cast<std::size_t>(std::count(states.begin(), states.end(), 1));
  return aggregate_rates(pop, excited, market);
}

// ---------------------------------------------------------------------------
// trading

inline double excess_demand(const AgentParams& a, double price, double m, double xi,
                            const MarketParams& market) {
  if (a.fundamentalist)
    return (market.fundamental_value - price) / std::sqrt(static_cast<double>(market.n));
  const double mm = m * (1.0 - m);
  if (market.demand_mode == DemandMode::kSquaredFeedback) return xi * a.gamma_sq * a.eta * mm * mm;
  return xi * std::sqrt(a.gamma_sq * a.eta) * mm;
}

inline double price_update(double demand, double price, const MarketParams& market) {
  return price + market.alpha * demand / std::sqrt(static_cast<double>(market.n));
}

template <class Rng>
double draw_noise(Rng& rng, const MarketParams& market) {
  if (market.noise == NoiseKind::kTwoPoint)
    return (rng() >> 63) != 0 ? market.sigma_xi : -market.sigma_xi;
  // Box-Muller; one draw per call keeps the stream position a pure function
  // of the trade count
  const double u1 = 1.0 - uniform01(rng);
  const double u2 = uniform01(rng);
  return market.sigma_xi * std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

// ---------------------------------------------------------------------------
// state

struct MarketState {
  std::vector<std::uint8_t> states;
  double price = 0.0;
  double excitement = 0.0;
  double time = 0.0;
  std::uint64_t event_count = 0;
  std::size_t excited_count = 0;

  std::size_t n() const noexcept { return states.size(); }

  void recount() {
    excited_count = static_cast<std::size_t>(std::count(states.begin(), states.end(), 1));
    excitement = states.empty() ? 0.0
                                : static_cast<double>(excited_count) / static_cast<double>(states.size());
  }
};

/// Law of the excitement change on the next action, given that it is a
/// transition (an agent reconsidering its state).
struct OneStepLaw {
  double down = 0.0;
  double stay = 1.0;
  double up = 0.0;
};

/// Exact one-step law for an arbitrary configuration: selection weight times
/// the state-appropriate flip probability, summed over agents.
inline OneStepLaw one_step_distribution(const MarketState& state, const Population& pop,
                                        const MarketParams& market) {
  if (state.n() != pop.size()) throw ValidationError("state and population sizes differ");
  detail::check_excitement(state.excitement);
  const double nd = static_cast<double>(market.n);
  const double m = state.excitement;
  double down = 0.0;
  double up = 0.0;
  for (std::size_t g = 0; g < pop.group_count(); ++g) {
    const auto& a = pop.group(g).params;
    const std::size_t begin = pop.group_begin(g);
    const std::size_t end = begin + pop.group(g).count;
    const auto excited = static_cast<double>(
        std::count(state.states.begin() + static_cast<std::ptrdiff_t>(begin),
                   state.states.begin() + static_cast<std::ptrdiff_t>(end), 1));
    const double unexcited = static_cast<double>(end - begin) - excited;
    down += a.gamma_sq * excited * detail::checked_prob(detail::down_prob(a, m, nd), "down");
    up += a.gamma_sq * unexcited * detail::checked_prob(detail::up_prob(a, m, nd), "up");
  }
  const double total = pop.gamma_sq_total();
  OneStepLaw law;
  law.down = down / total;
  law.up = up / total;
  law.stay = 1.0 - law.down - law.up;
  return law;
}

/// Mean-field closed form, which replaces each agent's own state by the market
/// excitement. Agrees with one_step_distribution whenever agent parameters are
/// homogeneous (or uncorrelated with states).
inline OneStepLaw one_step_distribution_mean_field(const Population& pop, double m,
                                                   std::size_t n) {
  detail::check_excitement(m);
  const double nd = static_cast<double>(n);
  const double mm = (1.0 - m) * (1.0 - m) * m * m;
  double down = 0.0;
  double up = 0.0;
  for (const auto& g : pop.groups()) {
    const auto& a = g.params;
    const double c = static_cast<double>(g.count);
    down += c * (a.beta * (1.0 - a.p) * m + nd * a.eta * a.gamma_sq * mm);
    up += c * (a.beta * a.p * (1.0 - m) + nd * a.eta * a.gamma_sq * mm);
  }
  const double denom = 2.0 * nd * pop.gamma_sq_total();
  OneStepLaw law;
  law.down = down / denom;
  law.up = up / denom;
  law.stay = 1.0 - law.down - law.up;
  return law;
}

// ---------------------------------------------------------------------------
// large-market parameters

class InitialDistribution {
 public:
  InitialDistribution() = default;
  static InitialDistribution point(double v) {
    InitialDistribution d;
    d.values_ = {v};
    return d;
  }
  static InitialDistribution empirical(std::vector<double> values) {
    if (values.empty()) throw ValidationError("empirical distribution needs samples");
    InitialDistribution d;
    d.values_ = std::move(values);
    return d;
  }

  bool is_point() const noexcept { return values_.size() == 1; }
  const std::vector<double>& values() const noexcept { return values_; }

  template <class Rng>
  double sample(Rng& rng) const {
    if (values_.size() == 1) return values_.front();
    return values_[uniform_index(rng, values_.size())];
  }

 private:
  std::vector<double> values_{0.0};
};

struct LimitParams {
  double beta = 1.0;
  double gamma = 1.0;
  double eta = 1.0;
  double p = 0.5;
  double lambda_f = 0.0;
  double lambda_n = 0.0;
  double phi = 0.0;
  double c_e = 0.0;
  double sigma_xi = 1.0;
  double fundamental_value = 0.0;
  double alpha = 1.0;
  InitialDistribution q0_dist = InitialDistribution::point(0.0);
  InitialDistribution x0_dist = InitialDistribution::point(0.0);

  double vol_q() const noexcept { return gamma * std::sqrt(eta); }
};

inline void validate(const LimitParams& l) {
  if (!(l.p >= 0.0 && l.p <= 1.0)) throw ValidationError("limit p must lie in [0,1]");
  if (!(l.beta >= 0.0 && l.gamma >= 0.0 && l.eta >= 0.0))
    throw ValidationError("limit beta, gamma, eta must be >= 0");
  if (!(l.phi >= 0.0 && l.phi <= 1.0)) throw ValidationError("phi must lie in [0,1]");
  if (!(l.lambda_f >= 0.0 && l.lambda_n >= 0.0 && l.c_e >= 0.0))
    throw ValidationError("trading intensities must be >= 0");
  if (!(l.sigma_xi >= 0.0)) throw ValidationError("sigma_xi must be >= 0");
  for (double q : l.q0_dist.values())
    if (!(q >= 0.0 && q <= 1.0)) throw ValidationError("initial excitement must lie in [0,1]");
}

/// Finite-n agent family whose aggregate excitement drift is exactly
/// beta (p - m) and whose averaged rates match the limit constants:
/// round(phi n) fundamentalists with lambda_bar = lambda_f n / k and the rest
/// noise traders with beta_a = 2 beta, p_a = p n / (n - k),
/// lambda_bar = lambda_n n / (n - k) and the limit gamma^2, eta.
inline Population population_for_limit(const LimitParams& l, std::size_t n) {
  validate(l);
  if (n == 0) throw ValidationError("n must be positive");
  const double nd = static_cast<double>(n);
  const auto k = static_cast<std::size_t>(std::llround(l.phi * nd));
  const double gamma_sq = l.gamma > 0.0 ? l.gamma * l.gamma : 1.0;
  std::vector<AgentGroup> groups;
  if (k > 0) {
    groups.push_back({AgentParams::fundamentalist_trader(gamma_sq, l.lambda_f * nd / static_cast<double>(k)), k});
  }
  if (k < n) {
    const double noise = static_cast<double>(n - k);
    AgentParams a;
    a.gamma_sq = gamma_sq;
    a.beta = 2.0 * l.beta;
    a.p = l.p * nd / noise;
    a.eta = l.gamma > 0.0 ? l.eta : 0.0;
    a.lambda_bar = l.lambda_n * nd / noise;
    if (a.p > 1.0)
      throw ValidationError("limit p exceeds the noise-trader share 1 - phi");
    groups.push_back({a, n - k});
  }
  return Population(std::move(groups));
}

inline MarketParams market_for_limit(const LimitParams& l, std::size_t n,
                                     DemandMode mode = DemandMode::kLimitConsistent) {
  MarketParams m;
  m.n = n;
  m.c_e = l.c_e;
  m.alpha = l.alpha;
  m.fundamental_value = l.fundamental_value;
  m.sigma_xi = l.sigma_xi;
  m.demand_mode = mode;
  return m;
}

}  // namespace exmarket
