#pragma once

// JSON experiment configuration. Parsing resolves every default so that the
// resolved document (to_json) fully describes a run.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "exmarket/analysis.hpp"
#include "exmarket/coeffs.hpp"
#include "exmarket/diffusion.hpp"
#include "exmarket/microsim.hpp"
#include "exmarket/model.hpp"

namespace exmarket {

using json = nlohmann::json;

enum class EngineKind { kMicro, kSde, kCoeffs, kConverge, kSpikes };

inline const char* name(EngineKind e) {
  switch (e) {
    case EngineKind::kMicro: return "micro";
    case EngineKind::kSde: return "sde";
    case EngineKind::kCoeffs: return "coeffs";
    case EngineKind::kConverge: return "converge";
    case EngineKind::kSpikes: return "spikes";
  }
  return "?";
}

/// How the finite-n population is generated for a given n.
struct AgentSpec {
  enum class Kind { kFromLimit, kHomogeneous, kList, kGroups, kGammaRamp };
  Kind kind = Kind::kFromLimit;
  AgentParams params;               // homogeneous / gamma_ramp base
  std::vector<AgentParams> list;    // list
  std::vector<AgentGroup> groups;   // groups
  double gamma_sq_min = 1.0;        // gamma_ramp: gamma^2 spread linearly over agents
  double gamma_sq_max = 1.0;
  double fundamentalist_share = 0.0;  // homogeneous / gamma_ramp: leading fundamentalists
  double fundamentalist_lambda = 0.0;

  /// Fixed size for list/groups specs; nullopt when the spec scales with n.
  std::optional<std::size_t> fixed_size() const {
    if (kind == Kind::kList) return list.size();
    if (kind == Kind::kGroups) {
      std::size_t s = 0;
      for (const auto& g : groups) s += g.count;
      return s;
    }
    return std::nullopt;
  }
};

struct RunSpec {
  double horizon = 1.0;
  double grid_step = 0.01;
  double dt = 1e-4;
  std::size_t record_every = 100;
  std::size_t replications = 1;
  std::size_t sde_replications = 0;  // converge reference; 0 means `replications`
  std::uint64_t seed = 0;
  unsigned threads = 1;
  MicroEngine micro_engine = MicroEngine::kExact;
  std::uint64_t event_budget = kDefaultEventBudget;
  bool log_events = false;
  BoundaryPolicy boundary = BoundaryPolicy::kClamp;
  std::vector<std::size_t> n_list;   // converge / coeffs
  std::string source = "sde";        // spikes: "sde" or "micro"
  std::string observable = "q";      // converge: "q" or "x"
};

struct AnalysisSpec {
  Bands bands;
  std::vector<double> heights{0.5};
  double level = 0.95;
  double window = 0.1;  // realized-variance window, well below the mean residence times
  std::optional<double> ks_max;  // converge: flag when the last KS exceeds this
  bool enforce = false;          // turn false flags into exit code 4
  std::vector<double> probe_v2;  // coeffs grid; empty means defaults
  std::vector<double> probe_x;
};

struct OutputSpec {
  std::string dir = "out";
  bool write_paths = true;
};

struct ExperimentConfig {
  EngineKind engine = EngineKind::kMicro;
  LimitParams limit;
  AgentSpec agents;
  MarketParams market;  // n is the micro n; other fields default from limit
  std::optional<double> bernoulli_initial;
  RunSpec run;
  AnalysisSpec analysis;
  OutputSpec output;
};

namespace detail {

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline InitialDistribution read_distribution(const json& j) {
  if (j.is_number()) return InitialDistribution::point(j.get<double>());
  if (j.is_array()) return InitialDistribution::empirical(j.get<std::vector<double>>());
  throw ValidationError("initial value must be a number or an array of samples");
}

inline json write_distribution(const InitialDistribution& d) {
  if (d.is_point()) return d.values().front();
  return d.values();
}

inline AgentParams read_agent(const json& j) {
  AgentParams a;
  if (j.contains("gamma")) {
    const double g = j.at("gamma").get<double>();
    a.gamma_sq = g * g;
  }
  read_opt(j, "gamma_sq", a.gamma_sq);
  read_opt(j, "beta", a.beta);
  read_opt(j, "p", a.p);
  read_opt(j, "eta", a.eta);
  read_opt(j, "lambda_bar", a.lambda_bar);
  read_opt(j, "fundamentalist", a.fundamentalist);
  if (a.fundamentalist) {
    if (!j.contains("beta")) a.beta = 0.0;
    if (!j.contains("eta")) a.eta = 0.0;
    if (!j.contains("p")) a.p = 0.0;
  }
  validate(a);
  return a;
}

inline json write_agent(const AgentParams& a) {
  return {{"gamma_sq", a.gamma_sq}, {"beta", a.beta}, {"p", a.p},
          {"eta", a.eta}, {"lambda_bar", a.lambda_bar}, {"fundamentalist", a.fundamentalist}};
}

inline EngineKind parse_engine(const std::string& s) {
  for (auto e : {EngineKind::kMicro, EngineKind::kSde, EngineKind::kCoeffs, EngineKind::kConverge,
                 EngineKind::kSpikes})
    if (s == name(e)) return e;
  throw ValidationError("unknown engine '" + s + "'");
}

}  // namespace detail

inline LimitParams parse_limit(const json& j) {
  LimitParams l;
  using detail::read_opt;
  read_opt(j, "beta", l.beta);
  read_opt(j, "gamma", l.gamma);
  read_opt(j, "eta", l.eta);
  read_opt(j, "p", l.p);
  read_opt(j, "lambda_f", l.lambda_f);
  read_opt(j, "lambda_n", l.lambda_n);
  read_opt(j, "phi", l.phi);
  read_opt(j, "c_e", l.c_e);
  read_opt(j, "sigma_xi", l.sigma_xi);
  read_opt(j, "F", l.fundamental_value);
  read_opt(j, "alpha", l.alpha);
  if (j.contains("q0")) l.q0_dist = detail::read_distribution(j.at("q0"));
  if (j.contains("x0")) l.x0_dist = detail::read_distribution(j.at("x0"));
  validate(l);
  return l;
}

inline json to_json(const LimitParams& l) {
  return {{"beta", l.beta},     {"gamma", l.gamma},       {"eta", l.eta},
          {"p", l.p},           {"lambda_f", l.lambda_f}, {"lambda_n", l.lambda_n},
          {"phi", l.phi},       {"c_e", l.c_e},           {"sigma_xi", l.sigma_xi},
          {"F", l.fundamental_value}, {"alpha", l.alpha},
          {"q0", detail::write_distribution(l.q0_dist)}, {"x0", detail::write_distribution(l.x0_dist)}};
}

/// Population of size n described by `spec` (list/groups specs must match n).
inline Population make_population(const AgentSpec& spec, const LimitParams& limit, std::size_t n) {
  if (n == 0) throw ValidationError("n must be positive");
  using Kind = AgentSpec::Kind;
  if (auto fixed = spec.fixed_size(); fixed && *fixed != n)
    throw ValidationError("agent list has " + std::to_string(*fixed) + " agents but n = " + std::to_string(n));
  const auto fund = static_cast<std::size_t>(std::llround(spec.fundamentalist_share * static_cast<double>(n)));
  switch (spec.kind) {
    case Kind::kFromLimit:
      return population_for_limit(limit, n);
    case Kind::kHomogeneous: {
      std::vector<AgentGroup> groups;
      if (fund > 0)
        groups.push_back({AgentParams::fundamentalist_trader(spec.params.gamma_sq, spec.fundamentalist_lambda), fund});
      if (fund < n) groups.push_back({spec.params, n - fund});
      return Population(std::move(groups));
    }
    case Kind::kList:
      return Population::from_agents(spec.list);
    case Kind::kGroups:
      return Population(spec.groups);
    case Kind::kGammaRamp: {
      std::vector<AgentParams> agents;
      agents.reserve(n);
      for (std::size_t a = 0; a < fund; ++a)
        agents.push_back(AgentParams::fundamentalist_trader(spec.params.gamma_sq, spec.fundamentalist_lambda));
      const std::size_t noise = n - fund;
      for (std::size_t a = 0; a < noise; ++a) {
        AgentParams p = spec.params;
        const double t = noise > 1 ? static_cast<double>(a) / static_cast<double>(noise - 1) : 0.0;
        p.gamma_sq = spec.gamma_sq_min + t * (spec.gamma_sq_max - spec.gamma_sq_min);
        agents.push_back(p);
      }
      return Population::from_agents(agents);
    }
  }
  throw ValidationError("unknown agent spec");
}

inline AgentSpec parse_agents(const json& j) {
  AgentSpec s;
  const std::string kind = j.value("kind", std::string("from_limit"));
  using Kind = AgentSpec::Kind;
  if (kind == "from_limit") {
    s.kind = Kind::kFromLimit;
  } else if (kind == "homogeneous" || kind == "gamma_ramp") {
    s.kind = kind == "homogeneous" ? Kind::kHomogeneous : Kind::kGammaRamp;
    if (j.contains("params")) s.params = detail::read_agent(j.at("params"));
    detail::read_opt(j, "fundamentalist_share", s.fundamentalist_share);
    detail::read_opt(j, "fundamentalist_lambda", s.fundamentalist_lambda);
    if (!(s.fundamentalist_share >= 0.0 && s.fundamentalist_share <= 1.0))
      throw ValidationError("fundamentalist_share must lie in [0,1]");
    if (!(s.fundamentalist_lambda >= 0.0)) throw ValidationError("fundamentalist_lambda must be >= 0");
    if (s.kind == Kind::kGammaRamp) {
      detail::read_opt(j, "gamma_sq_min", s.gamma_sq_min);
      detail::read_opt(j, "gamma_sq_max", s.gamma_sq_max);
      if (!(s.gamma_sq_min > 0.0 && s.gamma_sq_max > 0.0))
        throw ValidationError("gamma_ramp bounds must be positive");
    }
  } else if (kind == "list") {
    for (const auto& a : j.at("agents")) s.list.push_back(detail::read_agent(a));
    s.kind = Kind::kList;
    if (s.list.empty()) throw ValidationError("agent list is empty");
  } else if (kind == "groups") {
    for (const auto& g : j.at("groups")) s.groups.push_back({detail::read_agent(g.at("params")), g.at("count").get<std::size_t>()});
    s.kind = Kind::kGroups;
    if (s.groups.empty()) throw ValidationError("agent groups are empty");
  } else {
    throw ValidationError("unknown agent kind '" + kind + "'");
  }
  return s;
}

inline json to_json(const AgentSpec& s) {
  using Kind = AgentSpec::Kind;
  json j;
  switch (s.kind) {
    case Kind::kFromLimit: j["kind"] = "from_limit"; break;
    case Kind::kHomogeneous:
    case Kind::kGammaRamp:
      j["kind"] = s.kind == Kind::kHomogeneous ? "homogeneous" : "gamma_ramp";
      j["params"] = detail::write_agent(s.params);
      j["fundamentalist_share"] = s.fundamentalist_share;
      j["fundamentalist_lambda"] = s.fundamentalist_lambda;
      if (s.kind == Kind::kGammaRamp) {
        j["gamma_sq_min"] = s.gamma_sq_min;
        j["gamma_sq_max"] = s.gamma_sq_max;
      }
      break;
    case Kind::kList: {
      j["kind"] = "list";
      json arr = json::array();
      for (const auto& a : s.list) arr.push_back(detail::write_agent(a));
      j["agents"] = arr;
      break;
    }
    case Kind::kGroups: {
      j["kind"] = "groups";
      json arr = json::array();
      for (const auto& g : s.groups) arr.push_back({{"params", detail::write_agent(g.params)}, {"count", g.count}});
      j["groups"] = arr;
      break;
    }
  }
  return j;
}

/// Parses and validates a full experiment document. Throws ValidationError
/// (or nlohmann type errors, which callers map to validation failures).
inline ExperimentConfig parse_config(const json& j) {
  ExperimentConfig c;
  using detail::read_opt;
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  if (!j.contains("engine")) throw ValidationError("config needs an 'engine'");
  c.engine = detail::parse_engine(j.at("engine").get<std::string>());
  c.limit = parse_limit(j.value("limit", json::object()));
  c.agents = parse_agents(j.value("agents", json::object()));

  const json m = j.value("market", json::object());
  c.market = market_for_limit(c.limit, 1);
  c.market.n = c.agents.fixed_size().value_or(1000);
  read_opt(m, "n", c.market.n);
  read_opt(m, "c_e", c.market.c_e);
  read_opt(m, "alpha", c.market.alpha);
  read_opt(m, "F", c.market.fundamental_value);
  read_opt(m, "sigma_xi", c.market.sigma_xi);
  if (m.contains("demand")) {
    const auto d = m.at("demand").get<std::string>();
    if (d == "limit_consistent") c.market.demand_mode = DemandMode::kLimitConsistent;
    else if (d == "squared_feedback") c.market.demand_mode = DemandMode::kSquaredFeedback;
    else throw ValidationError("unknown demand mode '" + d + "'");
  }
  if (m.contains("noise")) {
    const auto d = m.at("noise").get<std::string>();
    if (d == "gaussian") c.market.noise = NoiseKind::kGaussian;
    else if (d == "two_point") c.market.noise = NoiseKind::kTwoPoint;
    else throw ValidationError("unknown noise kind '" + d + "'");
  }
  validate(c.market);

  const json init = j.value("initial", json::object());
  if (init.contains("q0")) c.limit.q0_dist = detail::read_distribution(init.at("q0"));
  if (init.contains("x0")) c.limit.x0_dist = detail::read_distribution(init.at("x0"));
  if (init.contains("bernoulli")) c.bernoulli_initial = init.at("bernoulli").get<double>();
  validate(c.limit);

  const json r = j.value("run", json::object());
  read_opt(r, "horizon", c.run.horizon);
  read_opt(r, "grid_step", c.run.grid_step);
  read_opt(r, "dt", c.run.dt);
  read_opt(r, "record_every", c.run.record_every);
  read_opt(r, "replications", c.run.replications);
  read_opt(r, "sde_replications", c.run.sde_replications);
  read_opt(r, "seed", c.run.seed);
  read_opt(r, "threads", c.run.threads);
  read_opt(r, "event_budget", c.run.event_budget);
  read_opt(r, "log_events", c.run.log_events);
  read_opt(r, "n_list", c.run.n_list);
  read_opt(r, "source", c.run.source);
  read_opt(r, "observable", c.run.observable);
  if (r.contains("micro_engine")) {
    const auto e = r.at("micro_engine").get<std::string>();
    if (e == "exact") c.run.micro_engine = MicroEngine::kExact;
    else if (e == "collapsed") c.run.micro_engine = MicroEngine::kCollapsed;
    else throw ValidationError("unknown micro engine '" + e + "'");
  }
  if (r.contains("boundary")) {
    const auto b = r.at("boundary").get<std::string>();
    if (b == "clamp") c.run.boundary = BoundaryPolicy::kClamp;
    else if (b == "reflect") c.run.boundary = BoundaryPolicy::kReflect;
    else throw ValidationError("unknown boundary policy '" + b + "'");
  }

  const json a = j.value("analysis", json::object());
  if (a.contains("bands")) {
    const auto b = a.at("bands").get<std::vector<double>>();
    if (b.size() != 2) throw ValidationError("bands must be [q_lo, q_hi]");
    c.analysis.bands = {b[0], b[1]};
  }
  read_opt(a, "heights", c.analysis.heights);
  read_opt(a, "level", c.analysis.level);
  read_opt(a, "window", c.analysis.window);
  read_opt(a, "enforce", c.analysis.enforce);
  read_opt(a, "probe_v2", c.analysis.probe_v2);
  read_opt(a, "probe_x", c.analysis.probe_x);
  if (a.contains("ks_max")) c.analysis.ks_max = a.at("ks_max").get<double>();

  const json o = j.value("output", json::object());
  read_opt(o, "dir", c.output.dir);
  read_opt(o, "write_paths", c.output.write_paths);
  return c;
}

inline json to_json(const ExperimentConfig& c) {
  json j;
  j["engine"] = name(c.engine);
  j["limit"] = to_json(c.limit);
  j["agents"] = to_json(c.agents);
  j["market"] = {{"n", c.market.n},
                 {"c_e", c.market.c_e},
                 {"alpha", c.market.alpha},
                 {"F", c.market.fundamental_value},
                 {"sigma_xi", c.market.sigma_xi},
                 {"demand", c.market.demand_mode == DemandMode::kLimitConsistent ? "limit_consistent" : "squared_feedback"},
                 {"noise", c.market.noise == NoiseKind::kGaussian ? "gaussian" : "two_point"}};
  j["initial"] = {{"q0", detail::write_distribution(c.limit.q0_dist)},
                  {"x0", detail::write_distribution(c.limit.x0_dist)}};
  if (c.bernoulli_initial) j["initial"]["bernoulli"] = *c.bernoulli_initial;
  j["run"] = {{"horizon", c.run.horizon},
              {"grid_step", c.run.grid_step},
              {"dt", c.run.dt},
              {"record_every", c.run.record_every},
              {"replications", c.run.replications},
              {"sde_replications", c.run.sde_replications},
              {"seed", c.run.seed},
              {"threads", c.run.threads},
              {"micro_engine", c.run.micro_engine == MicroEngine::kExact ? "exact" : "collapsed"},
              {"event_budget", c.run.event_budget},
              {"log_events", c.run.log_events},
              {"boundary", c.run.boundary == BoundaryPolicy::kClamp ? "clamp" : "reflect"},
              {"n_list", c.run.n_list},
              {"source", c.run.source},
              {"observable", c.run.observable}};
  j["analysis"] = {{"bands", {c.analysis.bands.q_lo, c.analysis.bands.q_hi}},
                   {"heights", c.analysis.heights},
                   {"level", c.analysis.level},
                   {"window", c.analysis.window},
                   {"enforce", c.analysis.enforce},
                   {"probe_v2", c.analysis.probe_v2},
                   {"probe_x", c.analysis.probe_x}};
  if (c.analysis.ks_max) j["analysis"]["ks_max"] = *c.analysis.ks_max;
  j["output"] = {{"dir", c.output.dir}, {"write_paths", c.output.write_paths}};
  return j;
}

}  // namespace exmarket
