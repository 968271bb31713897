#pragma once

// Batch experiments behind the command-line front end. Every run validates
// the whole configuration first, computes all replications, and only then
// writes its files from a single thread.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "exmarket/analysis.hpp"
#include "exmarket/coeffs.hpp"
#include "exmarket/config.hpp"
#include "exmarket/diffusion.hpp"
#include "exmarket/io.hpp"
#include "exmarket/microsim.hpp"

namespace exmarket {

enum ExitCode : int { kExitOk = 0, kExitValidation = 2, kExitBudget = 3, kExitAnalysisFlag = 4 };

struct RunOutcome {
  int exit_code = kExitOk;
  json summary;
  std::vector<std::string> files;
};

/// Seed for an independent sub-experiment (one n of a convergence study, the
/// SDE reference, ...).
inline std::uint64_t derived_seed(std::uint64_t base, std::uint64_t tag) noexcept {
  return mix64(base ^ mix64(tag + 0x243F6A8885A308D3ULL));
}

inline SimulationSetup make_setup(const ExperimentConfig& c, std::size_t n) {
  SimulationSetup s{make_population(c.agents, c.limit, n), c.market};
  s.market.n = n;
  s.initial_states = c.bernoulli_initial ? Initializer::bernoulli(*c.bernoulli_initial)
                                         : Initializer::fraction(c.limit.q0_dist);
  s.initial_price = c.limit.x0_dist;
  s.validate();
  return s;
}

inline SdeConfig make_sde_config(const ExperimentConfig& c, std::uint64_t seed, std::uint64_t rep) {
  SdeConfig s;
  s.dt = c.run.dt;
  s.horizon = c.run.horizon;
  s.boundary = c.run.boundary;
  s.seed = seed;
  s.replication = rep;
  s.record_every = c.run.record_every;
  validate(s);
  return s;
}

inline std::vector<std::size_t> n_list_or(const ExperimentConfig& c, std::vector<std::size_t> fallback) {
  return c.run.n_list.empty() ? std::move(fallback) : c.run.n_list;
}

/// Checks everything a run of `c` depends on without simulating.
inline void validate_experiment(const ExperimentConfig& c) {
  if (c.run.threads == 0) throw ValidationError("threads must be positive");
  if (!(c.run.horizon > 0.0)) throw ValidationError("horizon must be positive");
  c.analysis.bands.validate();
  for (double h : c.analysis.heights)
    if (!(h > 0.0 && h <= 1.0)) throw ValidationError("spike heights must lie in (0,1]");
  if (!(c.analysis.level > 0.0 && c.analysis.level < 1.0)) throw ValidationError("level must lie in (0,1)");
  if (!(c.analysis.window > 0.0)) throw ValidationError("window must be positive");
  switch (c.engine) {
    case EngineKind::kMicro:
      detail::make_grid(0.0, c.run.horizon, c.run.grid_step);
      make_setup(c, c.market.n);
      break;
    case EngineKind::kSde:
      make_sde_config(c, c.run.seed, 0);
      break;
    case EngineKind::kCoeffs:
      for (std::size_t n : n_list_or(c, {10, 100, 1000})) validate_population(make_population(c.agents, c.limit, n), n);
      break;
    case EngineKind::kConverge:
      if (c.run.observable != "q" && c.run.observable != "x")
        throw ValidationError("observable must be 'q' or 'x'");
      detail::make_grid(0.0, c.run.horizon, c.run.grid_step);
      make_sde_config(c, c.run.seed, 0);
      for (std::size_t n : n_list_or(c, {50, 200, 800})) make_setup(c, n);
      break;
    case EngineKind::kSpikes:
      if (c.run.source == "sde") {
        make_sde_config(c, c.run.seed, 0);
      } else if (c.run.source == "micro") {
        detail::make_grid(0.0, c.run.horizon, c.run.grid_step);
        make_setup(c, c.market.n);
      } else {
        throw ValidationError("spikes source must be 'sde' or 'micro'");
      }
      break;
  }
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

class OutputDir {
 public:
  explicit OutputDir(const std::string& dir) : dir_(dir) {}

  template <class Writer>
  void write(RunOutcome& out, const std::string& file, Writer&& w) {
    std::filesystem::create_directories(dir_);
    const auto path = dir_ / file;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path.string());
    w(os);
    if (!os) throw std::runtime_error("failed writing " + path.string());
    out.files.push_back(path.string());
  }

  void summary(RunOutcome& out) {
    out.summary["files"] = out.files;
    write(out, "summary.json", [&](std::ostream& os) { os << out.summary.dump(2) << '\n'; });
  }

 private:
  std::filesystem::path dir_;
};

inline std::string rep_name(const std::string& stem, std::size_t r, const char* ext) {
  return stem + "_rep" + std::to_string(r) + ext;
}

// Resolved config for file headers. The worker count is left out: outputs
// are identical for any number of threads.
inline json file_config(const ExperimentConfig& c) {
  json j = to_json(c);
  j["run"].erase("threads");
  return j;
}

inline json final_moments(const std::vector<double>& v) { return to_json(moments(v)); }

}  // namespace detail

inline RunOutcome run_micro(const ExperimentConfig& c) {
  validate_experiment(c);
  const auto t0 = detail::Clock::now();
  const SimulationSetup setup = make_setup(c, c.market.n);
  const auto paths = run_replications(setup, c.run.horizon, c.run.grid_step, c.run.replications, c.run.seed,
                                      c.run.threads, c.run.micro_engine, c.run.log_events, c.run.event_budget);
  RunOutcome out;
  const json resolved = detail::file_config(c);
  std::vector<double> q_final, x_final;
  std::uint64_t events = 0;
  for (const auto& p : paths) {
    q_final.push_back(p.q_values.back());
    x_final.push_back(p.x_values.back());
    events += p.event_count;
  }
  out.summary = {{"engine", "micro"},
                 {"seed", c.run.seed},
                 {"n", c.market.n},
                 {"replications", paths.size()},
                 {"events", events},
                 {"wall_seconds", detail::seconds_since(t0)},
                 {"config", to_json(c)}};
  if (!paths.empty()) {
    out.summary["q_final"] = detail::final_moments(q_final);
    out.summary["x_final"] = detail::final_moments(x_final);
  }
  detail::OutputDir dir(c.output.dir);
  if (c.output.write_paths) {
    for (std::size_t r = 0; r < paths.size(); ++r) {
      dir.write(out, detail::rep_name("micro", r, ".csv"),
                [&](std::ostream& os) { write_trajectory_csv(os, paths[r], resolved); });
      if (c.run.log_events)
        dir.write(out, detail::rep_name("micro", r, "_events.jsonl"),
                  [&](std::ostream& os) { write_events_jsonl(os, paths[r].event_log); });
    }
  }
  dir.summary(out);
  return out;
}

inline std::vector<LimitPath> sde_replications(const ExperimentConfig& c, std::size_t count, std::uint64_t seed) {
  return parallel_map(count, c.run.threads, [&](std::size_t r) {
    const auto [q0, x0] = draw_initial(c.limit, seed, r);
    return simulate_xq(c.limit, q0, x0, make_sde_config(c, seed, r));
  });
}

inline RunOutcome run_sde(const ExperimentConfig& c) {
  validate_experiment(c);
  const auto t0 = detail::Clock::now();
  const auto paths = sde_replications(c, c.run.replications, c.run.seed);
  RunOutcome out;
  const json resolved = detail::file_config(c);
  std::vector<double> q_final, x_final;
  std::size_t unstable = 0;
  double worst_boundary = 0.0;
  for (const auto& p : paths) {
    q_final.push_back(p.q.back());
    x_final.push_back(p.x.back());
    unstable += p.unstable() ? 1 : 0;
    worst_boundary = std::max(worst_boundary, p.boundary_fraction());
  }
  out.summary = {{"engine", "sde"},
                 {"seed", c.run.seed},
                 {"replications", paths.size()},
                 {"dt", c.run.dt},
                 {"coarse_dt", c.run.dt > stability_dt_limit(c.limit)},
                 {"unstable_paths", unstable},
                 {"max_boundary_fraction", worst_boundary},
                 {"wall_seconds", detail::seconds_since(t0)},
                 {"config", to_json(c)}};
  if (!paths.empty()) {
    out.summary["q_final"] = detail::final_moments(q_final);
    out.summary["x_final"] = detail::final_moments(x_final);
  }
  detail::OutputDir dir(c.output.dir);
  if (c.output.write_paths)
    for (std::size_t r = 0; r < paths.size(); ++r)
      dir.write(out, detail::rep_name("sde", r, ".csv"),
                [&](std::ostream& os) { write_limit_path_csv(os, paths[r], resolved); });
  dir.summary(out);
  return out;
}

inline RunOutcome run_coeffs(const ExperimentConfig& c) {
  validate_experiment(c);
  const auto t0 = detail::Clock::now();
  ProbeGrid grid = ProbeGrid::defaults(c.market.fundamental_value);
  if (!c.analysis.probe_v2.empty()) grid.v2 = c.analysis.probe_v2;
  if (!c.analysis.probe_x.empty()) grid.x = c.analysis.probe_x;
  const auto report = convergence_report(
      [&](std::size_t n) { return make_population(c.agents, c.limit, n); }, c.market, c.limit, grid,
      n_list_or(c, {10, 100, 1000}));
  RunOutcome out;
  const json resolved = detail::file_config(c);
  out.summary = {{"engine", "coeffs"}, {"report", to_json(report)},
                 {"wall_seconds", detail::seconds_since(t0)}, {"config", to_json(c)}};
  if (c.analysis.enforce && !report.converging()) out.exit_code = kExitAnalysisFlag;
  detail::OutputDir dir(c.output.dir);
  dir.write(out, "coeffs.csv", [&](std::ostream& os) { write_coeff_report_csv(os, report, resolved); });
  dir.write(out, "coeffs.json", [&](std::ostream& os) { os << to_json(report).dump(2) << '\n'; });
  dir.summary(out);
  return out;
}

inline RunOutcome run_converge(const ExperimentConfig& c) {
  validate_experiment(c);
  const auto t0 = detail::Clock::now();
  const auto n_list = n_list_or(c, {50, 200, 800});
  const bool use_x = c.run.observable == "x";
  std::vector<std::vector<double>> micro;
  std::uint64_t events = 0;
  for (std::size_t n : n_list) {
    const auto paths = run_replications(make_setup(c, n), c.run.horizon, c.run.grid_step, c.run.replications,
                                        derived_seed(c.run.seed, n), c.run.threads, c.run.micro_engine, false,
                                        c.run.event_budget);
    std::vector<double> finals;
    for (const auto& p : paths) {
      finals.push_back(use_x ? p.x_values.back() : p.q_values.back());
      events += p.event_count;
    }
    micro.push_back(std::move(finals));
  }
  const std::size_t sde_count = c.run.sde_replications > 0 ? c.run.sde_replications : c.run.replications;
  std::vector<double> reference;
  for (const auto& p : sde_replications(c, sde_count, derived_seed(c.run.seed, 0)))
    reference.push_back(use_x ? p.x.back() : p.q.back());

  RunOutcome out;
  const json resolved = detail::file_config(c);
  json flags = json::object();
  json report_json;
  if (!reference.empty() && c.run.replications > 0) {
    const auto report = weak_convergence_report(n_list, micro, reference);
    report_json = to_json(report);
    flags["ks_strictly_decreasing"] = report.ks_strictly_decreasing();
    if (c.analysis.ks_max && !report.rows.empty())
      flags["ks_below_max"] = report.rows.back().ks < *c.analysis.ks_max;
  }
  bool all_ok = true;
  for (const auto& [k, v] : flags.items()) all_ok = all_ok && v.get<bool>();
  if (c.analysis.enforce && !all_ok) out.exit_code = kExitAnalysisFlag;
  out.summary = {{"engine", "converge"}, {"observable", c.run.observable}, {"report", report_json},
                 {"flags", flags}, {"events", events}, {"wall_seconds", detail::seconds_since(t0)},
                 {"config", to_json(c)}};
  detail::OutputDir dir(c.output.dir);
  if (!report_json.is_null())
    dir.write(out, "converge.json", [&](std::ostream& os) { os << report_json.dump(2) << '\n'; });
  if (c.output.write_paths && c.run.replications > 0) {
    dir.write(out, "converge_samples.csv", [&](std::ostream& os) {
      os << "# exmarket converge samples\n# seed=" << c.run.seed << "\n# config=" << resolved.dump() << '\n';
      os << "source,n,replication,value\n";
      for (std::size_t i = 0; i < n_list.size(); ++i)
        for (std::size_t r = 0; r < micro[i].size(); ++r)
          os << "micro," << n_list[i] << ',' << r << ',' << format_double(micro[i][r]) << '\n';
      for (std::size_t r = 0; r < reference.size(); ++r)
        os << "sde,0," << r << ',' << format_double(reference[r]) << '\n';
    });
  }
  dir.summary(out);
  return out;
}

struct SpikeRun {
  SpikeStats stats;
  Occupancy occupancy;
  std::optional<double> volatility_correlation;  // realized variance of X vs mean Q per window
  std::optional<Interval> volatility_correlation_ci;
  std::optional<PhaseVolatility> phase;
};

inline SpikeRun analyse_path(const ExperimentConfig& c, std::span<const double> grid, std::span<const double> q,
                             std::span<const double> x, std::uint64_t replication) {
  SpikeRun s;
  const auto scan = detect_excursions(grid, q, c.analysis.bands);
  s.stats = spike_statistics(scan, c.limit, grid.back() - grid.front(), c.analysis.heights, c.analysis.level);
  s.occupancy = occupancy(grid, q, c.analysis.bands);
  if (!x.empty()) {
    const auto rv = realized_variance(grid, x, c.analysis.window);
    const auto qm = window_means(grid, q, c.analysis.window);
    if (rv.size() >= 2) {
      std::vector<double> a, b;
      for (std::size_t i = 0; i < rv.size(); ++i) {
        a.push_back(rv[i].value);
        b.push_back(qm[i].value);
      }
      s.volatility_correlation = pearson_correlation(a, b);
      s.volatility_correlation_ci =
          bootstrap_correlation_ci(a, b, 1000, derived_seed(c.run.seed, replication), c.analysis.level);
      s.phase = phase_volatility(rv, qm, c.analysis.bands);
    }
  }
  return s;
}

inline RunOutcome run_spikes(const ExperimentConfig& c) {
  validate_experiment(c);
  const auto t0 = detail::Clock::now();
  std::vector<SpikeRun> runs;
  if (c.run.source == "sde") {
    runs = parallel_map(c.run.replications, c.run.threads, [&](std::size_t r) {
      const auto [q0, x0] = draw_initial(c.limit, c.run.seed, r);
      const auto p = simulate_xq(c.limit, q0, x0, make_sde_config(c, c.run.seed, r));
      return analyse_path(c, p.grid, p.q, p.x, r);
    });
  } else {
    const auto setup = make_setup(c, c.market.n);
    runs = parallel_map(c.run.replications, c.run.threads, [&](std::size_t r) {
      const auto p = run_single(setup, c.run.micro_engine, c.run.horizon, c.run.grid_step, c.run.seed, r, false,
                                c.run.event_budget);
      return analyse_path(c, p.grid, p.q_values, p.x_values, r);
    });
  }
  RunOutcome out;
  const json resolved = detail::file_config(c);
  json reps = json::array();
  bool all_ok = true;
  for (const auto& s : runs) {
    json j = to_json(s.stats);
    j["occupancy"] = {{"frac0", s.occupancy.frac0}, {"frac1", s.occupancy.frac1},
                      {"frac_transit", s.occupancy.frac_transit}, {"share1", s.occupancy.share1()}};
    if (s.volatility_correlation) {
      j["volatility_correlation"] = {{"r", *s.volatility_correlation},
                                     {"ci", {s.volatility_correlation_ci->lo, s.volatility_correlation_ci->hi}},
                                     {"positive", s.volatility_correlation_ci->lo > 0.0}};
      j["phase_volatility"] = {{"rv_low", s.phase->rv_low}, {"rv_high", s.phase->rv_high},
                               {"windows_low", s.phase->windows_low}, {"windows_high", s.phase->windows_high}};
    }
    for (const auto& h : s.stats.heights) all_ok = all_ok && h.within();
    all_ok = all_ok && j["pass"]["jump01_residence"].get<bool>() && j["pass"]["jump10_residence"].get<bool>();
    reps.push_back(std::move(j));
  }
  if (c.analysis.enforce && !all_ok) out.exit_code = kExitAnalysisFlag;
  out.summary = {{"engine", "spikes"}, {"source", c.run.source}, {"replications", runs.size()},
                 {"wall_seconds", detail::seconds_since(t0)}, {"config", to_json(c)}};
  detail::OutputDir dir(c.output.dir);
  if (!runs.empty()) {
    dir.write(out, "spikes.json", [&](std::ostream& os) { os << reps.dump(2) << '\n'; });
    for (std::size_t r = 0; r < runs.size(); ++r)
      dir.write(out, detail::rep_name("spike_heights", r, ".csv"),
                [&](std::ostream& os) { write_height_histogram_csv(os, runs[r].stats); });
  }
  dir.summary(out);
  return out;
}

inline RunOutcome run_experiment(const ExperimentConfig& c) {
  switch (c.engine) {
    case EngineKind::kMicro: return run_micro(c);
    case EngineKind::kSde: return run_sde(c);
    case EngineKind::kCoeffs: return run_coeffs(c);
    case EngineKind::kConverge: return run_converge(c);
    case EngineKind::kSpikes: return run_spikes(c);
  }
  throw ValidationError("unknown engine");
}

}  // namespace exmarket
