// Acceptance checks, one per criterion: `acceptance --criterion k` prints a
// PASS/FAIL line (plus indented detail lines) and exits nonzero on FAIL.
// Seeds are fixed constants 0x5eed0000 + k.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "exmarket/analysis.hpp"
#include "exmarket/coeffs.hpp"
#include "exmarket/diffusion.hpp"
#include "exmarket/experiments.hpp"
#include "exmarket/microsim.hpp"

using namespace exmarket;

namespace {

constexpr std::uint64_t seed_for(int k) { return 0x5eed0000ULL + static_cast<std::uint64_t>(k); }

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Report {
  explicit Report(int k) : criterion(k) {}

  int criterion;
  bool pass = true;
  std::vector<std::string> lines;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    lines.push_back(std::string(ok ? "ok    " : "FAIL  ") + what);
  }
  void info(const std::string& what) { lines.push_back("info  " + what); }

  int finish(const char* title) const {
    std::printf("criterion %d: %s  %s\n", criterion, pass ? "PASS" : "FAIL", title);
    for (const auto& l : lines) std::printf("    %s\n", l.c_str());
    return pass ? 0 : 1;
  }
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

LimitParams figure_limit(double gamma) {
  LimitParams l;
  l.beta = 1.0;
  l.gamma = gamma;
  l.eta = 1.0;
  l.p = 0.6;
  return l;
}

SimulationSetup micro_setup(const LimitParams& l, std::size_t n, double q0, double x0 = 0.0) {
  SimulationSetup s;
  s.population = population_for_limit(l, n);
  s.market = market_for_limit(l, n);
  s.initial_states = Initializer::fraction(InitialDistribution::point(q0));
  s.initial_price = InitialDistribution::point(x0);
  return s;
}

SdeConfig sde_config(double horizon, double dt, std::uint64_t seed, std::size_t record_every) {
  SdeConfig c;
  c.horizon = horizon;
  c.dt = dt;
  c.seed = seed;
  c.record_every = record_every;
  return c;
}

std::vector<double> sde_finals_q(const LimitParams& l, double q0, double horizon, std::size_t paths,
                                 std::uint64_t seed, double dt = 1e-4) {
  const auto steps = static_cast<std::size_t>(std::llround(horizon / dt));
  std::vector<double> out;
  out.reserve(paths);
  for (std::size_t r = 0; r < paths; ++r) {
    SdeConfig c = sde_config(horizon, dt, seed, steps);
    c.replication = r;
    out.push_back(simulate_q(l, q0, c).q.back());
  }
  return out;
}

// ---------------------------------------------------------------------------

int criterion1() {
  Report rep(1);
  const auto t0 = Clock::now();
  AgentParams a;
  a.gamma_sq = 1.0;
  a.beta = 1.0;
  a.p = 0.6;
  a.eta = 1.0;
  SimulationSetup s;
  s.population = Population::homogeneous(a, 10);
  s.market.n = 10;
  s.initial_states = Initializer::fraction(InitialDistribution::point(0.5));
  Simulation sim(s, seed_for(1));
  const double expect_down = 0.04125, expect_up = 0.04625;
  const std::uint64_t N = 1'000'000;
  std::uint64_t up = 0, down = 0;
  for (std::uint64_t i = 0; i < N; ++i) {
    const Event e = sim.propose();
    if (e.kind == EventKind::kTransition && e.flipped) (e.excitement_after > sim.state().excitement ? up : down)++;
  }
  const double fd = static_cast<double>(down) / N, fu = static_cast<double>(up) / N;
  const double se_d = std::sqrt(expect_down * (1 - expect_down) / N);
  const double se_u = std::sqrt(expect_up * (1 - expect_up) / N);
  rep.check(std::abs(fd - expect_down) <= 3 * se_d, fmt("p_down %.6f vs 0.04125 (3 SE = %.2e)", fd, 3 * se_d));
  rep.check(std::abs(fu - expect_up) <= 3 * se_u, fmt("p_up   %.6f vs 0.04625 (3 SE = %.2e)", fu, 3 * se_u));
  const double secs = since(t0);
  rep.check(secs < 10.0, fmt("runtime %.2f s < 10 s", secs));
  return rep.finish("one-step law from a frozen homogeneous state");
}

int criterion2() {
  Report rep(2);
  const auto t0 = Clock::now();
  const auto l = figure_limit(1.0);
  const std::vector<std::size_t> ns{50, 200, 800};
  const std::size_t paths = 2000;
  std::vector<std::vector<double>> micro;
  for (std::size_t n : ns) {
    const auto trajs = run_replications(micro_setup(l, n, 0.6), 1.0, 1.0, paths, derived_seed(seed_for(2), n), 1,
                                        MicroEngine::kExact);
    std::vector<double> q;
    for (const auto& t : trajs) q.push_back(t.q_values.back());
    micro.push_back(std::move(q));
  }
  const auto ref = sde_finals_q(l, 0.6, 1.0, paths, derived_seed(seed_for(2), 0));
  const auto report = weak_convergence_report(ns, micro, ref);
  for (const auto& row : report.rows)
    rep.info(fmt("n=%-4zu KS=%.4f  mean=%.4f (SDE %.4f)", row.n, row.ks, row.micro.mean, report.reference.mean));
  rep.check(report.ks_strictly_decreasing(), "KS strictly decreasing in n");
  rep.check(report.rows.back().ks < 0.08, fmt("KS at n=800 = %.4f < 0.08", report.rows.back().ks));
  const double secs = since(t0);
  rep.check(secs < 300.0, fmt("runtime %.1f s < 300 s", secs));
  return rep.finish("weak convergence of Q_T to the diffusion limit");
}

int criterion3() {
  Report rep(3);
  const double q0 = 0.2;
  const std::vector<double> times{0.5, 1.0, 2.0};
  const std::size_t sde_paths = 10'000, micro_paths = 2000, n = 1000;
  // both engines record on a 0.5 grid
  auto slot = [](double t) { return static_cast<std::size_t>(std::llround(t / 0.5)); };
  for (double gamma : {1.0, 10.0}) {
    const auto l = figure_limit(gamma);
    std::vector<std::vector<double>> sde(times.size());
    for (std::size_t r = 0; r < sde_paths; ++r) {
      SdeConfig c = sde_config(2.0, 1e-4, derived_seed(seed_for(3), static_cast<std::uint64_t>(gamma)), 5000);
      c.replication = r;
      const auto p = simulate_q(l, q0, c);
      for (std::size_t k = 0; k < times.size(); ++k) sde[k].push_back(p.q[slot(times[k])]);
    }
    // the flip-only engine: same law, without the n^2 gamma^2 idle considerations
    const auto trajs = run_replications(micro_setup(l, n, q0), 2.0, 0.5, micro_paths,
                                        derived_seed(seed_for(3), 100 + static_cast<std::uint64_t>(gamma)), 1,
                                        MicroEngine::kCollapsed);
    for (std::size_t k = 0; k < times.size(); ++k) {
      const double target = mean_ode(l, q0, times[k]);
      const auto ms = moments(sde[k]);
      rep.check(std::abs(ms.mean - target) <= 3 * ms.std_error(),
                fmt("gamma=%-2g T=%.1f SDE   mean %.5f vs %.5f (3 SE = %.5f)", gamma, times[k], ms.mean, target,
                    3 * ms.std_error()));
      std::vector<double> q;
      for (const auto& t : trajs) q.push_back(t.q_values[slot(times[k])]);
      const auto mm = moments(q);
      rep.check(std::abs(mm.mean - target) <= 3 * mm.std_error() + 0.002,
                fmt("gamma=%-2g T=%.1f micro mean %.5f vs %.5f (3 SE + 0.002 = %.5f)", gamma, times[k], mm.mean,
                    target, 3 * mm.std_error() + 0.002));
    }
  }
  return rep.finish("mean dynamics follow p + (q0 - p) exp(-beta T)");
}

int criterion4() {
  Report rep(4);
  auto l = figure_limit(5.0);
  l.beta = 0.0;
  const auto q = sde_finals_q(l, 0.3, 2.0, 10'000, seed_for(4));
  const auto m = moments(q);
  rep.check(std::abs(m.mean - 0.3) <= 3 * m.std_error(),
            fmt("mean %.5f vs 0.3 (3 SE = %.5f)", m.mean, 3 * m.std_error()));
  return rep.finish("martingale case beta = 0");
}

int criterion5() {
  Report rep(5);
  LimitParams l = figure_limit(1.0);
  l.phi = 0.2;
  l.lambda_f = 0.2;
  l.lambda_n = 0.8;
  l.c_e = 2.0;
  l.sigma_xi = 1.0;
  l.fundamental_value = 50.0;
  const double q0 = 0.6, x0 = 40.0, T = 5.0;
  const std::size_t n = 800, paths = 2000;
  const auto trajs = run_replications(micro_setup(l, n, q0, x0), T, T, paths, derived_seed(seed_for(5), n), 1,
                                      MicroEngine::kCollapsed);
  std::vector<double> micro_x, micro_q;
  for (const auto& t : trajs) {
    micro_x.push_back(t.x_values.back());
    micro_q.push_back(t.q_values.back());
  }
  std::vector<double> sde_x, sde_q;
  for (std::size_t r = 0; r < paths; ++r) {
    SdeConfig c = sde_config(T, 1e-4, derived_seed(seed_for(5), 0), 50'000);
    c.replication = r;
    const auto p = simulate_xq(l, q0, x0, c);
    sde_x.push_back(p.x.back());
    sde_q.push_back(p.q.back());
  }
  const double target = price_mean_ode(l, x0, T);
  const double ks = ks_distance(micro_x, sde_x);
  const auto mm = moments(micro_x), ms = moments(sde_x);
  rep.check(ks < 0.1, fmt("KS(micro X_T, SDE X_T) = %.4f < 0.1", ks));
  rep.check(std::abs(mm.mean - target) <= 3 * mm.std_error(),
            fmt("micro mean %.4f vs %.4f (3 SE = %.4f)", mm.mean, target, 3 * mm.std_error()));
  rep.check(std::abs(ms.mean - target) <= 3 * ms.std_error(),
            fmt("SDE   mean %.4f vs %.4f (3 SE = %.4f)", ms.mean, target, 3 * ms.std_error()));
  rep.info(fmt("X_T sd: micro %.4f, SDE %.4f", std::sqrt(mm.variance), std::sqrt(ms.variance)));
  rep.info(fmt("Q_T mean: micro %.4f, SDE %.4f", moments(micro_q).mean, moments(sde_q).mean));
  return rep.finish("price convergence with fundamentalists");
}

int criterion6() {
  Report rep(6);
  const auto t0 = Clock::now();
  const auto l = figure_limit(10.0);
  const double T = 200.0;
  const auto path = simulate_q(l, 0.6, sde_config(T, 1e-4, seed_for(6), 1));
  const auto scan = detect_excursions(path.grid, path.q, Bands{0.1, 0.9});
  const std::vector<double> heights{0.5};
  const auto s = spike_statistics(scan, l, T, heights);
  const auto j01 = poisson_interval(s.predicted_jump01);
  const auto j10 = poisson_interval(s.predicted_jump10);
  rep.check(j01.contains(s.jump01_count), fmt("jump01 %llu in Poisson(%.0f) 95%% [%llu, %llu]",
                                              (unsigned long long)s.jump01_count, s.predicted_jump01,
                                              (unsigned long long)j01.lo, (unsigned long long)j01.hi));
  rep.check(j10.contains(s.jump10_count), fmt("jump10 %llu in Poisson(%.0f) 95%% [%llu, %llu]",
                                              (unsigned long long)s.jump10_count, s.predicted_jump10,
                                              (unsigned long long)j10.lo, (unsigned long long)j10.hi));
  const auto& h = s.heights.front();
  rep.check(h.within(), fmt("spike0 > 0.5: %llu in Poisson(%.1f) 95%% [%llu, %llu] (T0 = %.1f)",
                            (unsigned long long)h.observed, h.predicted_residence,
                            (unsigned long long)h.interval.lo, (unsigned long long)h.interval.hi, s.residence0));
  const auto j01r = poisson_interval(s.predicted_jump01_residence);
  const auto j10r = poisson_interval(s.predicted_jump10_residence);
  rep.info(fmt("residence-adjusted jump01: %s, %llu in Poisson(%.1f) [%llu, %llu]",
               j01r.contains(s.jump01_count) ? "inside" : "outside", (unsigned long long)s.jump01_count,
               s.predicted_jump01_residence, (unsigned long long)j01r.lo, (unsigned long long)j01r.hi));
  rep.info(fmt("residence-adjusted jump10: %s, %llu in Poisson(%.1f) [%llu, %llu]",
               j10r.contains(s.jump10_count) ? "inside" : "outside", (unsigned long long)s.jump10_count,
               s.predicted_jump10_residence, (unsigned long long)j10r.lo, (unsigned long long)j10r.hi));
  rep.info(fmt("residence T0 = %.1f, T1 = %.1f, transit = %.1f; spikes dropped as too short: %zu", s.residence0,
               s.residence1, scan.time_transit, s.dropped_short));
  rep.info(fmt("boundary-corrected steps: %.4f%%", 100.0 * path.boundary_fraction()));
  const double secs = since(t0);
  rep.check(secs < 600.0, fmt("runtime %.1f s < 600 s", secs));
  return rep.finish("Poisson jump and spike counts");
}

int criterion7() {
  Report rep(7);
  LimitParams l;
  l.beta = 0.5;  // agent beta = 1
  l.gamma = 1.0;
  l.eta = 1.0;
  l.p = 0.6;
  l.lambda_n = 1.0;
  l.c_e = 2.0;
  l.sigma_xi = 1.0;
  l.fundamental_value = 50.0;
  AgentParams a;
  a.gamma_sq = 1.0;
  a.beta = 1.0;
  a.p = 0.6;
  a.eta = 1.0;
  a.lambda_bar = 1.0;
  const std::vector<std::size_t> ns{10, 100, 1000};
  const auto report = convergence_report([&](std::size_t n) { return Population::homogeneous(a, n); },
                                         market_for_limit(l, 10), l, ProbeGrid::defaults(50.0), ns);
  for (std::size_t n : ns) {
    const auto pop = Population::homogeneous(a, n);
    const double gap = c_n_sq(pop, 0.5) - limit_coeffs(l, 50.0, 0.5).c_sq;
    const double expected = a.beta * (a.p - 2 * 0.5 * a.p + 0.5) / (2.0 * static_cast<double>(n));
    rep.check(std::abs(gap - expected) <= 1e-12, fmt("n=%-4zu gap(c^2) at v2=0.5: %.3e vs %.3e", n, gap, expected));
  }
  for (const auto& g : report.sup_gaps)
    rep.info(fmt("n=%-4zu sup gaps: b %.2e  c^2 %.2e  z %.2e  sigma^2 %.2e", g.n, g.b, g.c_sq, g.z, g.sigma_sq));
  for (auto c : {Coefficient::kB, Coefficient::kZ, Coefficient::kSigmaSq})
    rep.check(report.monotone(c), fmt("sup gap of %s non-increasing in n (1e-12 roundoff slack)", name(c)));
  return rep.finish("finite-n coefficients approach their limits");
}

int criterion8() {
  Report rep(8);
  auto lq = figure_limit(0.0);
  const auto q = simulate_q(lq, 0.0, sde_config(1.0, 1e-4, seed_for(8), 10'000)).q.back();
  rep.check(std::abs(q - 0.37927) <= 5e-4, fmt("Q(1) = %.6f vs 0.37927 +- 5e-4", q));
  LimitParams lx = figure_limit(1.0);
  lx.sigma_xi = 0.0;
  lx.lambda_f = 0.2;
  lx.fundamental_value = 50.0;
  const auto x = simulate_xq(lx, 0.6, 40.0, sde_config(5.0, 1e-4, seed_for(8), 50'000)).x.back();
  rep.check(std::abs(x - 46.3212) <= 1e-3, fmt("X(5) = %.6f vs 46.3212 +- 1e-3", x));
  return rep.finish("noise-off closed forms");
}

int criterion9() {
  Report rep(9);
  const auto l = figure_limit(10.0);
  const auto path = simulate_q(l, 0.6, sde_config(500.0, 1e-4, seed_for(9), 1));
  const auto occ = occupancy(path.grid, path.q, Bands{0.1, 0.9});
  rep.check(std::abs(occ.share1() - 0.6) <= 0.05, fmt("share of residence at 1 = %.4f vs 0.6 +- 0.05", occ.share1()));
  rep.info(fmt("frac0 %.4f  frac1 %.4f  transit %.4f", occ.frac0, occ.frac1, occ.frac_transit));
  return rep.finish("equilibrium occupancy");
}

int criterion10() {
  Report rep(10);
  AgentParams a;
  a.gamma_sq = 1.0;
  a.beta = 1.0;
  a.p = 0.6;
  a.eta = 1.0;
  a.lambda_bar = 1.0;
  std::vector<double> ns_per_event;
  for (std::size_t n : {1'000u, 10'000u, 100'000u}) {
    SimulationSetup s;
    s.population = Population::homogeneous(a, n);
    s.market.n = n;
    s.market.c_e = 2.0;
    s.initial_states = Initializer::bernoulli(0.5);
    Simulation sim(s, seed_for(10), n);
    for (int i = 0; i < 200'000; ++i) sim.step();
    const std::uint64_t events = 5'000'000;
    const auto t0 = Clock::now();
    for (std::uint64_t i = 0; i < events; ++i) sim.step();
    const double secs = since(t0);
    const double rate = static_cast<double>(events) / secs;
    ns_per_event.push_back(1e9 / rate);
    rep.info(fmt("n=%-6zu %.3g events/s (%.1f ns/event)", n, rate, 1e9 / rate));
    if (n == 10'000) rep.check(rate >= 1e6, fmt("n=10^4: %.3g events/s >= 1e6", rate));
  }
  const auto [lo, hi] = std::minmax_element(ns_per_event.begin(), ns_per_event.end());
  rep.check(*hi <= 2.0 * *lo, fmt("per-event cost ratio max/min = %.2f <= 2", *hi / *lo));
  return rep.finish("micro engine throughput");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  int k = 0;
  app.add_option("--criterion", k, "criterion number (1-10)")->required()->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);
  switch (k) {
    case 1: return criterion1();
    case 2: return criterion2();
    case 3: return criterion3();
    case 4: return criterion4();
    case 5: return criterion5();
    case 6: return criterion6();
    case 7: return criterion7();
    case 8: return criterion8();
    case 9: return criterion9();
    case 10: return criterion10();
  }
  return 2;
}
