#pragma once

// Exact event-driven simulation of the finite-n market: exponential action
// clocks, agent/action selection, state flips and trades.

#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "exmarket/alias_table.hpp"
#include "exmarket/model.hpp"
#include "exmarket/rng.hpp"

namespace exmarket {

class BudgetExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kNoAgent = std::numeric_limits<std::size_t>::max();

enum class EventKind { kTransition, kTrade };

struct Event {
  double time = 0.0;
  std::size_t agent = kNoAgent;  // kNoAgent for the collapsed engine
  std::size_t group = 0;
  EventKind kind = EventKind::kTransition;
  bool flipped = false;  // transitions only; false marks a consideration
  double demand = 0.0;   // trades only
  double excitement_after = 0.0;
  double price_after = 0.0;
};

struct Trajectory {
  std::vector<double> grid;
  std::vector<double> q_values;
  std::vector<double> x_values;
  std::vector<Event> event_log;
  std::uint64_t seed = 0;
  std::uint64_t replication = 0;
  std::uint64_t event_count = 0;
};

/// Draws the initial excitement vector. Fundamentalists always start (and
/// stay) unexcited.
class Initializer {
 public:
  enum class Kind { kUnexcited, kBernoulli, kFraction };

  static Initializer unexcited() { return Initializer(Kind::kUnexcited, InitialDistribution::point(0.0)); }

  /// i.i.d. Bernoulli(prob) per noise trader.
  static Initializer bernoulli(double prob) {
    if (!(prob >= 0.0 && prob <= 1.0)) throw ValidationError("Bernoulli probability outside [0,1]");
    return Initializer(Kind::kBernoulli, InitialDistribution::point(prob));
  }

  /// Exactly round(q0 * n) excited noise traders, chosen uniformly; q0 is drawn
  /// from the given distribution once per replication.
  static Initializer fraction(InitialDistribution q0) {
    for (double q : q0.values())
      if (!(q >= 0.0 && q <= 1.0)) throw ValidationError("initial excitement outside [0,1]");
    return Initializer(Kind::kFraction, std::move(q0));
  }

  Kind kind() const noexcept { return kind_; }
  const InitialDistribution& value() const noexcept { return value_; }

  void check(const Population& pop) const {
    if (kind_ != Kind::kFraction) return;
    const double n = static_cast<double>(pop.size());
    const auto eligible = pop.size() - pop.fundamentalist_count();
    for (double q : value_.values())
      if (static_cast<std::size_t>(std::llround(q * n)) > eligible)
        throw ValidationError("initial excitement exceeds the noise-trader share");
  }

  template <class Rng>
  std::vector<std::uint8_t> draw(const Population& pop, Rng& rng) const {
    std::vector<std::uint8_t> states(pop.size(), 0);
    const auto eligible = pop.size() - pop.fundamentalist_count();
    switch (kind_) {
      case Kind::kUnexcited:
        break;
      case Kind::kBernoulli: {
        const double prob = value_.values().front();
        for_each_noise_trader(pop, [&](std::size_t a) { states[a] = uniform01(rng) < prob ? 1 : 0; });
        break;
      }
      case Kind::kFraction: {
        const double q = value_.sample(rng);
        auto need = static_cast<std::size_t>(std::llround(q * static_cast<double>(pop.size())));
        if (need > eligible) throw ValidationError("initial excitement exceeds the noise-trader share");
        // selection sampling: each remaining candidate is kept with
        // probability need / remaining
        std::size_t remaining = eligible;
        for_each_noise_trader(pop, [&](std::size_t a) {
          if (need > 0 && uniform_index(rng, remaining) < need) {
            states[a] = 1;
            --need;
          }
          --remaining;
        });
        break;
      }
    }
    return states;
  }

 private:
  Initializer(Kind k, InitialDistribution v) : kind_(k), value_(std::move(v)) {}

  template <class F>
  static void for_each_noise_trader(const Population& pop, F&& f) {
    for (std::size_t g = 0; g < pop.group_count(); ++g) {
      if (pop.group(g).params.fundamentalist) continue;
      const std::size_t begin = pop.group_begin(g);
      for (std::size_t a = begin; a < begin + pop.group(g).count; ++a) f(a);
    }
  }

  Kind kind_;
  InitialDistribution value_;
};

struct SimulationSetup {
  Population population;
  MarketParams market;
  Initializer initial_states = Initializer::unexcited();
  InitialDistribution initial_price = InitialDistribution::point(0.0);

  void validate() const {
    exmarket::validate(market);
    validate_population(population, market.n);
    initial_states.check(population);
  }
};

inline constexpr std::uint64_t kDefaultEventBudget = 1'000'000'000ULL;

namespace detail {

// Per-group constants used on the hot path.
struct GroupConstants {
  double up_base = 0.0;    // beta p / (2 gamma^2 n)
  double down_base = 0.0;  // beta (1 - p) / (2 gamma^2 n)
  double half_eta = 0.0;
  double demand_scale = 0.0;  // mode dependent noise-demand factor
  double mu = 0.0;            // n gamma^2
  double lambda_bar = 0.0;
  std::size_t begin = 0;
  std::size_t count = 0;
  bool fundamentalist = false;
};

inline std::vector<GroupConstants> group_constants(const Population& pop, const MarketParams& market) {
  std::vector<GroupConstants> out;
  const double n = static_cast<double>(market.n);
  for (std::size_t g = 0; g < pop.group_count(); ++g) {
    const auto& a = pop.group(g).params;
    GroupConstants c;
    c.up_base = a.beta * a.p / (2.0 * a.gamma_sq * n);
    c.down_base = a.beta * (1.0 - a.p) / (2.0 * a.gamma_sq * n);
    c.half_eta = a.eta / 2.0;
    c.demand_scale = market.demand_mode == DemandMode::kSquaredFeedback ? a.gamma_sq * a.eta
                                                                     : std::sqrt(a.gamma_sq * a.eta);
    c.mu = n * a.gamma_sq;
    c.lambda_bar = a.lambda_bar;
    c.begin = pop.group_begin(g);
    c.count = pop.group(g).count;
    c.fundamentalist = a.fundamentalist;
    out.push_back(c);
  }
  return out;
}

inline double noise_demand(const GroupConstants& c, double m, double xi, DemandMode mode) noexcept {
  const double mm = m * (1.0 - m);
  return mode == DemandMode::kSquaredFeedback ? xi * c.demand_scale * mm * mm : xi * c.demand_scale * mm;
}

inline std::vector<double> make_grid(double t0, double horizon, double grid_step) {
  if (!(horizon > 0.0)) throw ValidationError("horizon must be positive");
  if (!(grid_step > 0.0)) throw ValidationError("grid_step must be positive");
  const auto steps = static_cast<std::size_t>(std::floor(horizon / grid_step + 1e-9));
  std::vector<double> grid;
  grid.reserve(steps + 2);
  for (std::size_t j = 0; j <= steps; ++j) grid.push_back(t0 + static_cast<double>(j) * grid_step);
  if (grid.back() < t0 + horizon - 1e-9 * grid_step) grid.push_back(t0 + horizon);
  return grid;
}

// Shared sampling loop. The first proposed event past the horizon is
// discarded; by memorylessness that leaves the law of the path unchanged.
template <class Engine>
Trajectory run_loop(Engine& engine, double horizon, double grid_step, bool log_events,
                    std::uint64_t event_budget) {
  const double t0 = engine.state().time;
  if (engine.max_rate() * horizon > static_cast<double>(event_budget))
    throw BudgetExceeded("expected event count " + std::to_string(engine.max_rate() * horizon) +
                         " exceeds the event budget");
  Trajectory traj;
  traj.grid = make_grid(t0, horizon, grid_step);
  traj.q_values.reserve(traj.grid.size());
  traj.x_values.reserve(traj.grid.size());
  traj.seed = engine.seed();
  traj.replication = engine.replication();
  const double end = traj.grid.back();
  std::size_t j = 0;
  auto record_until = [&](double t_exclusive) {
    while (j < traj.grid.size() && traj.grid[j] < t_exclusive) {
      traj.q_values.push_back(engine.state().excitement);
      traj.x_values.push_back(engine.state().price);
      ++j;
    }
  };
  const std::uint64_t hard_limit = 2 * event_budget;
  for (;;) {
    const Event e = engine.propose();
    if (!(e.time <= end)) {
      record_until(std::numeric_limits<double>::infinity());
      engine.set_time(end);
      break;
    }
    record_until(e.time);
    engine.apply(e);
    if (++traj.event_count > hard_limit) throw BudgetExceeded("event budget exhausted during run");
    if (log_events) traj.event_log.push_back(e);
  }
  return traj;
}

}  // namespace detail

/// Consideration-level engine: every transition-clock ring is an event,
/// whether or not the agent flips. Selection is O(1): alias tables over
/// groups (weights count * gamma^2 and count * lambda_bar) followed by a
/// uniform pick inside the group, plus a uniform pick from the excited set for
/// the c_e part of the trading rate.
class Simulation {
 public:
  Simulation(SimulationSetup setup, std::uint64_t seed, std::uint64_t replication = 0)
      : setup_(std::move(setup)),
        seed_(seed),
        replication_(replication),
        waiting_(make_stream(seed, replication, Purpose::kWaiting)),
        selection_(make_stream(seed, replication, Purpose::kSelection)),
        flip_(make_stream(seed, replication, Purpose::kFlip)),
        noise_(make_stream(seed, replication, Purpose::kNoise)) {
    setup_.validate();
    const auto& pop = setup_.population;
    const auto& market = setup_.market;
    groups_ = detail::group_constants(pop, market);
    std::vector<double> w_mu, w_lambda;
    for (const auto& g : pop.groups()) {
      w_mu.push_back(static_cast<double>(g.count) * g.params.gamma_sq);
      w_lambda.push_back(static_cast<double>(g.count) * g.params.lambda_bar);
    }
    transition_table_ = AliasTable(w_mu);
    trade_table_ = AliasTable(w_lambda);
    mu_total_ = static_cast<double>(market.n) * pop.gamma_sq_total();
    lambda_bar_total_ = pop.lambda_bar_total();
    noise_count_ = pop.size() - pop.fundamentalist_count();
    sqrt_n_ = std::sqrt(static_cast<double>(market.n));

    auto init_rng = make_stream(seed, replication, Purpose::kInitial);
    state_.states = setup_.initial_states.draw(pop, init_rng);
    state_.price = setup_.initial_price.sample(init_rng);
    state_.recount();
    track_excited_ = market.c_e > 0.0;
    if (track_excited_) {
      excited_ = IndexSet(pop.size());
      for (std::size_t a = 0; a < pop.size(); ++a)
        if (state_.states[a]) excited_.insert(a);
    }
  }

  const MarketState& state() const noexcept { return state_; }
  const SimulationSetup& setup() const noexcept { return setup_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t replication() const noexcept { return replication_; }

  Rates rates() const noexcept {
    Rates r;
    r.mu_total = mu_total_;
    r.lambda_total = lambda_bar_total_ + setup_.market.c_e * static_cast<double>(state_.excited_count);
    r.nu_total = r.mu_total + r.lambda_total;
    return r;
  }

  double max_rate() const noexcept {
    return mu_total_ + lambda_bar_total_ + setup_.market.c_e * static_cast<double>(noise_count_);
  }

  /// Draws the next action from the current state without applying it.
  Event propose() {
    const double c_e = setup_.market.c_e;
    const double lambda_excited = c_e * static_cast<double>(state_.excited_count);
    const double nu = mu_total_ + lambda_bar_total_ + lambda_excited;
    Event e;
    e.time = state_.time + standard_exponential(waiting_) / nu;
    e.excitement_after = state_.excitement;
    e.price_after = state_.price;
    const double u = uniform01(selection_) * nu;
    if (u < mu_total_) {
      e.kind = EventKind::kTransition;
      e.group = transition_table_.sample(selection_);
      const auto& g = groups_[e.group];
      e.agent = g.begin + uniform_index(selection_, g.count);
      const double m = state_.excitement;
      const double prob = state_.states[e.agent] ? g.down_base + g.half_eta * (1.0 - m) * (1.0 - m) * m
                                                 : g.up_base + g.half_eta * (1.0 - m) * m * m;
      e.flipped = uniform01(flip_) < prob;
      if (e.flipped) {
        const double k = static_cast<double>(state_.excited_count) + (state_.states[e.agent] ? -1.0 : 1.0);
        e.excitement_after = k / static_cast<double>(state_.n());
      }
      return e;
    }
    e.kind = EventKind::kTrade;
    if (u - mu_total_ < lambda_bar_total_ || state_.excited_count == 0) {
      e.group = trade_table_.sample(selection_);
      const auto& g = groups_[e.group];
      e.agent = g.begin + uniform_index(selection_, g.count);
    } else {
      e.agent = excited_.pick(selection_);
      e.group = setup_.population.group_of(e.agent);
    }
    const auto& g = groups_[e.group];
    if (g.fundamentalist) {
      e.demand = (setup_.market.fundamental_value - state_.price) / sqrt_n_;
    } else {
      const double xi = draw_noise(noise_, setup_.market);
      e.demand = detail::noise_demand(g, state_.excitement, xi, setup_.market.demand_mode);
    }
    e.price_after = state_.price + setup_.market.alpha * e.demand / sqrt_n_;
    return e;
  }

  void apply(const Event& e) {
    state_.time = e.time;
    ++state_.event_count;
    if (e.kind == EventKind::kTransition) {
      if (!e.flipped) return;
      auto& x = state_.states[e.agent];
      x ^= 1;
      if (x) {
        ++state_.excited_count;
        if (track_excited_) excited_.insert(e.agent);
      } else {
        --state_.excited_count;
        if (track_excited_) excited_.erase(e.agent);
      }
      state_.excitement = static_cast<double>(state_.excited_count) / static_cast<double>(state_.n());
    } else {
      state_.price = e.price_after;
    }
  }

  Event step() {
    Event e = propose();
    apply(e);
    return e;
  }

  Trajectory run(double horizon, double grid_step, bool log_events = false,
                 std::uint64_t event_budget = kDefaultEventBudget) {
    return detail::run_loop(*this, horizon, grid_step, log_events, event_budget);
  }

  void set_time(double t) noexcept { state_.time = t; }

  /// Cached totals against a brute-force recount of the configuration.
  bool totals_consistent() const {
    const Rates brute = aggregate_rates(setup_.population, std::span<const std::uint8_t>(state_.states),
                                        setup_.market);
    const Rates cached = rates();
    const auto excited = static_cast<std::size_t>(std::count(state_.states.begin(), state_.states.end(), 1));
    const bool set_ok = !track_excited_ || excited_.size() == excited;
    auto close = [](double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(b)); };
    return excited == state_.excited_count && set_ok && close(cached.mu_total, brute.mu_total) &&
           close(cached.lambda_total, brute.lambda_total) &&
           state_.excitement == static_cast<double>(excited) / static_cast<double>(state_.n());
  }

 private:
  SimulationSetup setup_;
  std::uint64_t seed_;
  std::uint64_t replication_;
  CounterRng waiting_, selection_, flip_, noise_;
  std::vector<detail::GroupConstants> groups_;
  AliasTable transition_table_;
  AliasTable trade_table_;
  IndexSet excited_;
  bool track_excited_ = false;
  double mu_total_ = 0.0;
  double lambda_bar_total_ = 0.0;
  double sqrt_n_ = 1.0;
  std::size_t noise_count_ = 0;
  MarketState state_;
};

/// Group-level engine that only realizes actions which change the market:
/// flips and trades. Unsuccessful considerations form an independent thinning
/// of the transition clock, so dropping them leaves the law of (Q, X)
/// unchanged, making this an exact simulation rather than an approximation.
/// Per-event cost is O(groups); meant for a few agent classes at large gamma.
class CollapsedSimulation {
 public:
  CollapsedSimulation(SimulationSetup setup, std::uint64_t seed, std::uint64_t replication = 0)
      : setup_(std::move(setup)),
        seed_(seed),
        replication_(replication),
        waiting_(make_stream(seed, replication, Purpose::kWaiting)),
        selection_(make_stream(seed, replication, Purpose::kSelection)),
        noise_(make_stream(seed, replication, Purpose::kNoise)) {
    setup_.validate();
    const auto& pop = setup_.population;
    groups_ = detail::group_constants(pop, setup_.market);
    sqrt_n_ = std::sqrt(static_cast<double>(setup_.market.n));
    auto init_rng = make_stream(seed, replication, Purpose::kInitial);
    const auto states = setup_.initial_states.draw(pop, init_rng);
    excited_.assign(groups_.size(), 0);
    for (std::size_t g = 0; g < groups_.size(); ++g)
      for (std::size_t a = groups_[g].begin; a < groups_[g].begin + groups_[g].count; ++a)
        excited_[g] += states[a];
    for (auto k : excited_) state_.excited_count += k;
    state_.excitement = static_cast<double>(state_.excited_count) / static_cast<double>(pop.size());
    state_.price = setup_.initial_price.sample(init_rng);
    rates_.resize(3 * groups_.size());
    noise_count_ = pop.size() - pop.fundamentalist_count();
  }

  // states is left empty: the engine tracks per-group counts only
  const MarketState& state() const noexcept { return state_; }
  const std::vector<std::size_t>& excited_per_group() const noexcept { return excited_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t replication() const noexcept { return replication_; }

  double max_rate() const noexcept {
    // per-agent flip probability is at most the larger base term plus
    // eta * (4/27) / 2, the peak of the herding part
    double r = 0.0;
    for (const auto& g : groups_) {
      const double flip = std::min(1.0, std::max(g.up_base, g.down_base) + g.half_eta * 4.0 / 27.0);
      r += static_cast<double>(g.count) *
           (g.mu * flip + g.lambda_bar + (g.fundamentalist ? 0.0 : setup_.market.c_e));
    }
    return r;
  }

  Event propose() {
    const double m = state_.excitement;
    const double c_e = setup_.market.c_e;
    double total = 0.0;
    for (std::size_t g = 0; g < groups_.size(); ++g) {
      const auto& c = groups_[g];
      const double ex = static_cast<double>(excited_[g]);
      const double un = static_cast<double>(c.count) - ex;
      rates_[3 * g] = un * c.mu * (c.up_base + c.half_eta * (1.0 - m) * m * m);
      rates_[3 * g + 1] = ex * c.mu * (c.down_base + c.half_eta * (1.0 - m) * (1.0 - m) * m);
      rates_[3 * g + 2] = static_cast<double>(c.count) * c.lambda_bar + c_e * ex;
      total += rates_[3 * g] + rates_[3 * g + 1] + rates_[3 * g + 2];
    }
    Event e;
    e.excitement_after = m;
    e.price_after = state_.price;
    if (!(total > 0.0)) {
      e.time = std::numeric_limits<double>::infinity();
      return e;
    }
    e.time = state_.time + standard_exponential(waiting_) / total;
    double u = uniform01(selection_) * total;
    std::size_t slot = rates_.size() - 1;
    for (std::size_t i = 0; i < rates_.size(); ++i) {
      if (u < rates_[i]) {
        slot = i;
        break;
      }
      u -= rates_[i];
    }
    while (rates_[slot] <= 0.0 && slot > 0) --slot;  // round-off past the end
    e.group = slot / 3;
    const auto& c = groups_[e.group];
    const double n = static_cast<double>(setup_.market.n);
    switch (slot % 3) {
      case 0:
        e.kind = EventKind::kTransition;
        e.flipped = true;
        e.excitement_after = static_cast<double>(state_.excited_count + 1) / n;
        break;
      case 1:
        e.kind = EventKind::kTransition;
        e.flipped = true;
        e.excitement_after = static_cast<double>(state_.excited_count - 1) / n;
        break;
      default: {
        e.kind = EventKind::kTrade;
        if (c.fundamentalist) {
          e.demand = (setup_.market.fundamental_value - state_.price) / sqrt_n_;
        } else {
          const double xi = draw_noise(noise_, setup_.market);
          e.demand = detail::noise_demand(c, m, xi, setup_.market.demand_mode);
        }
        e.price_after = state_.price + setup_.market.alpha * e.demand / sqrt_n_;
      }
    }
    return e;
  }

  void apply(const Event& e) {
    state_.time = e.time;
    ++state_.event_count;
    if (e.kind == EventKind::kTrade) {
      state_.price = e.price_after;
      return;
    }
    if (e.excitement_after > state_.excitement) {
      ++excited_[e.group];
      ++state_.excited_count;
    } else {
      --excited_[e.group];
      --state_.excited_count;
    }
    state_.excitement = static_cast<double>(state_.excited_count) / static_cast<double>(setup_.market.n);
  }

  Event step() {
    Event e = propose();
    apply(e);
    return e;
  }

  Trajectory run(double horizon, double grid_step, bool log_events = false,
                 std::uint64_t event_budget = kDefaultEventBudget) {
    return detail::run_loop(*this, horizon, grid_step, log_events, event_budget);
  }

  void set_time(double t) noexcept { state_.time = t; }

 private:
  SimulationSetup setup_;
  std::uint64_t seed_;
  std::uint64_t replication_;
  CounterRng waiting_, selection_, noise_;
  std::vector<detail::GroupConstants> groups_;
  std::vector<std::size_t> excited_;
  std::vector<double> rates_;
  double sqrt_n_ = 1.0;
  std::size_t noise_count_ = 0;
  MarketState state_;
};

enum class MicroEngine { kExact, kCollapsed };

/// Runs fn(r) for r in [0, count) on up to `threads` workers; results are
/// stored by index, so the output does not depend on scheduling.
template <class F>
auto parallel_map(std::size_t count, unsigned threads, F&& fn) {
  using Result = decltype(fn(std::size_t{0}));
  std::vector<Result> out(count);
  if (count == 0) return out;
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
  if (threads == 1) {
    for (std::size_t r = 0; r < count; ++r) out[r] = fn(r);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  for (unsigned t = 0; t < threads; ++t) {
    workers.emplace_back([&] {
      for (std::size_t r; (r = next.fetch_add(1)) < count;) {
        try {
          out[r] = fn(r);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  if (error) std::rethrow_exception(error);
  return out;
}

inline Trajectory run_single(const SimulationSetup& setup, MicroEngine engine, double horizon,
                             double grid_step, std::uint64_t seed, std::uint64_t replication,
                             bool log_events = false, std::uint64_t event_budget = kDefaultEventBudget) {
  if (engine == MicroEngine::kCollapsed) {
    CollapsedSimulation sim(setup, seed, replication);
    return sim.run(horizon, grid_step, log_events, event_budget);
  }
  Simulation sim(setup, seed, replication);
  return sim.run(horizon, grid_step, log_events, event_budget);
}

/// Replication r draws from the streams keyed by (base_seed, r).
inline std::vector<Trajectory> run_replications(const SimulationSetup& setup, double horizon,
                                                double grid_step, std::size_t replications,
                                                std::uint64_t base_seed, unsigned threads = 1,
                                                MicroEngine engine = MicroEngine::kExact,
                                                bool log_events = false,
                                                std::uint64_t event_budget = kDefaultEventBudget) {
  setup.validate();
  return parallel_map(replications, threads, [&](std::size_t r) {
    return run_single(setup, engine, horizon, grid_step, base_seed, r, log_events, event_budget);
  });
}

}  // namespace exmarket
