#pragma once

// Plain-text outputs: trajectory / path CSV with '#' comment headers carrying
// the seed and resolved config, JSON-lines event logs, coefficient CSV and
// JSON renderings of the analysis reports.

#include <charconv>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "exmarket/analysis.hpp"
#include "exmarket/coeffs.hpp"
#include "exmarket/diffusion.hpp"
#include "exmarket/microsim.hpp"

namespace exmarket {

using json = nlohmann::json;

/// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw std::runtime_error("malformed number '" + std::string(s) + "'");
  return v;
}

inline std::uint64_t parse_u64(std::string_view s) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw std::runtime_error("malformed integer '" + std::string(s) + "'");
  return v;
}

namespace detail {

inline void write_header(std::ostream& os, std::string_view kind, std::uint64_t seed,
                         std::uint64_t replication, const json& config) {
  os << "# exmarket " << kind << '\n';
  os << "# seed=" << seed << '\n';
  os << "# replication=" << replication << '\n';
  if (!config.is_null()) os << "# config=" << config.dump() << '\n';
}

}  // namespace detail

inline void write_trajectory_csv(std::ostream& os, const Trajectory& t, const json& config = {}) {
  detail::write_header(os, "trajectory", t.seed, t.replication, config);
  os << "# events=" << t.event_count << '\n';
  os << "t,q,x\n";
  for (std::size_t i = 0; i < t.grid.size(); ++i)
    os << format_double(t.grid[i]) << ',' << format_double(t.q_values[i]) << ','
       << format_double(t.x_values[i]) << '\n';
}

inline void write_limit_path_csv(std::ostream& os, const LimitPath& p, const json& config = {}) {
  detail::write_header(os, "sde-path", p.seed, p.replication, config);
  os << "# steps=" << p.steps << " boundary_steps=" << p.boundary_steps << '\n';
  const bool with_x = !p.x.empty();
  os << (with_x ? "t,q,x\n" : "t,q\n");
  for (std::size_t i = 0; i < p.grid.size(); ++i) {
    os << format_double(p.grid[i]) << ',' << format_double(p.q[i]);
    if (with_x) os << ',' << format_double(p.x[i]);
    os << '\n';
  }
}

/// Reads back write_trajectory_csv output (grid, q, x, seed, replication).
inline Trajectory read_trajectory_csv(std::istream& is) {
  Trajectory t;
  std::string line;
  bool header_seen = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line.front() == '#') {
      std::string_view v(line);
      auto value_of = [&](std::string_view key) -> std::string_view {
        const auto pos = v.find(key);
        if (pos == std::string_view::npos) return {};
        auto rest = v.substr(pos + key.size());
        return rest.substr(0, rest.find(' '));
      };
      if (auto s = value_of("# seed="); !s.empty()) t.seed = parse_u64(s);
      if (auto s = value_of("# replication="); !s.empty()) t.replication = parse_u64(s);
      if (auto s = value_of("# events="); !s.empty()) t.event_count = parse_u64(s);
      continue;
    }
    if (!header_seen) {
      if (line != "t,q,x") throw std::runtime_error("unexpected trajectory header: " + line);
      header_seen = true;
      continue;
    }
    std::string_view v(line);
    const auto c1 = v.find(',');
    const auto c2 = v.find(',', c1 + 1);
    if (c1 == std::string_view::npos || c2 == std::string_view::npos)
      throw std::runtime_error("malformed trajectory row: " + line);
    t.grid.push_back(parse_double(v.substr(0, c1)));
    t.q_values.push_back(parse_double(v.substr(c1 + 1, c2 - c1 - 1)));
    t.x_values.push_back(parse_double(v.substr(c2 + 1)));
  }
  return t;
}

inline json to_json(const Event& e) {
  json j;
  j["time"] = e.time;
  if (e.agent != kNoAgent) j["agent"] = e.agent;
  j["group"] = e.group;
  if (e.kind == EventKind::kTransition) {
    j["kind"] = "transition";
    j["flipped"] = e.flipped;
  } else {
    j["kind"] = "trade";
    j["demand"] = e.demand;
  }
  j["q"] = e.excitement_after;
  j["x"] = e.price_after;
  return j;
}

inline void write_events_jsonl(std::ostream& os, const std::vector<Event>& events) {
  for (const auto& e : events) os << to_json(e).dump() << '\n';
}

inline void write_coeff_report_csv(std::ostream& os, const CoeffReport& r, const json& config = {}) {
  os << "# exmarket coefficients\n";
  if (!config.is_null()) os << "# config=" << config.dump() << '\n';
  os << "n,coefficient,x,v2,finite,limit,gap\n";
  for (const auto& row : r.rows)
    os << row.n << ',' << name(row.coefficient) << ',' << format_double(row.x) << ','
       << format_double(row.v2) << ',' << format_double(row.finite) << ',' << format_double(row.limit)
       << ',' << format_double(row.gap()) << '\n';
}

inline json to_json(const CoeffReport& r) {
  json j;
  j["n_list"] = r.n_list;
  json gaps = json::array();
  for (const auto& g : r.sup_gaps)
    gaps.push_back({{"n", g.n}, {"b", g.b}, {"c_sq", g.c_sq}, {"z", g.z}, {"sigma_sq", g.sigma_sq}});
  j["sup_gaps"] = gaps;
  json flags;
  for (auto c : {Coefficient::kB, Coefficient::kCSq, Coefficient::kZ, Coefficient::kSigmaSq})
    flags[name(c)] = r.converging(c);
  j["converging"] = flags;
  j["all_converging"] = r.converging();
  return j;
}

inline json to_json(const SampleMoments& m) {
  return {{"size", m.size}, {"mean", m.mean}, {"variance", m.variance}, {"std_error", m.std_error()}};
}

inline json to_json(const WeakConvReport& r) {
  json j;
  j["n_list"] = r.n_list;
  j["reference"] = to_json(r.reference);
  json rows = json::array();
  for (const auto& row : r.rows) rows.push_back({{"n", row.n}, {"micro", to_json(row.micro)}, {"ks", row.ks}});
  j["rows"] = rows;
  j["ks_strictly_decreasing"] = r.ks_strictly_decreasing();
  return j;
}

inline json to_json(const PoissonInterval& iv) { return {{"mean", iv.mean}, {"lo", iv.lo}, {"hi", iv.hi}}; }

inline json to_json(const SpikeStats& s) {
  json j;
  j["horizon"] = s.horizon;
  j["jump01_count"] = s.jump01_count;
  j["jump10_count"] = s.jump10_count;
  j["spike0_count"] = s.spike0_heights.size();
  j["spike1_count"] = s.spike1_depths.size();
  j["dropped_short"] = s.dropped_short;
  j["residence0"] = s.residence0;
  j["residence1"] = s.residence1;
  j["predicted"] = {{"jump01", s.predicted_jump01}, {"jump10", s.predicted_jump10}};
  j["predicted_residence"] = {{"jump01", s.predicted_jump01_residence},
                              {"jump10", s.predicted_jump10_residence}};
  const auto j01 = poisson_interval(s.predicted_jump01);
  const auto j10 = poisson_interval(s.predicted_jump10);
  const auto j01r = poisson_interval(s.predicted_jump01_residence);
  const auto j10r = poisson_interval(s.predicted_jump10_residence);
  j["intervals"] = {{"jump01", to_json(j01)}, {"jump10", to_json(j10)},
                    {"jump01_residence", to_json(j01r)}, {"jump10_residence", to_json(j10r)}};
  j["pass"] = {{"jump01", j01.contains(s.jump01_count)},
               {"jump10", j10.contains(s.jump10_count)},
               {"jump01_residence", j01r.contains(s.jump01_count)},
               {"jump10_residence", j10r.contains(s.jump10_count)},
               {"jump_balance", (s.jump01_count > s.jump10_count ? s.jump01_count - s.jump10_count
                                                                 : s.jump10_count - s.jump01_count) <= 1}};
  json hs = json::array();
  for (const auto& h : s.heights)
    hs.push_back({{"h", h.h},
                  {"observed", h.observed},
                  {"predicted", h.predicted},
                  {"predicted_residence", h.predicted_residence},
                  {"interval", to_json(h.interval)},
                  {"pass", h.within()}});
  j["heights"] = hs;
  return j;
}

/// Histogram of spike heights (from 0) and depths (from 1) in equal bins.
inline void write_height_histogram_csv(std::ostream& os, const SpikeStats& s, std::size_t bins = 20) {
  os << "kind,bin_lo,bin_hi,count\n";
  auto emit = [&](const char* kind, const std::vector<double>& v) {
    std::vector<std::size_t> counts(bins, 0);
    for (double h : v) counts[std::min(bins - 1, static_cast<std::size_t>(h * static_cast<double>(bins)))]++;
    for (std::size_t b = 0; b < bins; ++b)
      os << kind << ',' << format_double(static_cast<double>(b) / static_cast<double>(bins)) << ','
         << format_double(static_cast<double>(b + 1) / static_cast<double>(bins)) << ',' << counts[b] << '\n';
  };
  emit("spike0", s.spike0_heights);
  emit("spike1", s.spike1_depths);
}

}  // namespace exmarket
