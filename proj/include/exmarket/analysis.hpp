#pragma once

// Path statistics: equilibrium-band excursions (jumps and spikes) with
// Poisson-rate predictions, occupancy, KS distances, realized variance and
// the moments used for weak-convergence checks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include <boost/math/distributions/poisson.hpp>

#include "exmarket/model.hpp"
#include "exmarket/rng.hpp"

namespace exmarket {

enum class ExcursionKind { kJump01, kJump10, kSpike0, kSpike1 };

inline const char* name(ExcursionKind k) {
  switch (k) {
    case ExcursionKind::kJump01: return "jump01";
    case ExcursionKind::kJump10: return "jump10";
    case ExcursionKind::kSpike0: return "spike0";
    case ExcursionKind::kSpike1: return "spike1";
  }
  return "?";
}

struct Excursion {
  ExcursionKind kind = ExcursionKind::kSpike0;
  double t_start = 0.0;
  double t_peak = 0.0;
  double t_end = 0.0;
  double peak = 0.0;  // max for excursions from 0, min for excursions from 1
};

struct Bands {
  double q_lo = 0.1;
  double q_hi = 0.9;

  void validate() const {
    if (!(0.0 < q_lo && q_lo < q_hi && q_hi < 1.0))
      throw ValidationError("bands require 0 < q_lo < q_hi < 1");
  }
};

struct ExcursionScan {
  std::vector<Excursion> excursions;
  std::size_t dropped_short = 0;  // spikes spanning fewer than 2 samples
  bool never_in_band = false;
  // time-weighted residence: each sample holds until the next grid point
  double time_band0 = 0.0;
  double time_band1 = 0.0;
  double time_transit = 0.0;
};

inline constexpr std::size_t kMinSpikeSamples = 2;

namespace detail {

inline void check_path(std::span<const double> grid, std::span<const double> values) {
  if (grid.size() != values.size()) throw ValidationError("grid and values differ in length");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw ValidationError("grid must be strictly increasing");
}

}  // namespace detail

/// Splits a sampled excitement path into residence near 0 (q <= q_lo), near 1
/// (q >= q_hi) and excursions. An excursion that returns to its origin band
/// is a spike, one that reaches the opposite band is a jump. Samples before
/// the first band visit have no origin and belong to no excursion.
inline ExcursionScan detect_excursions(std::span<const double> grid, std::span<const double> q,
                                       Bands bands = {}) {
  bands.validate();
  detail::check_path(grid, q);
  ExcursionScan scan;
  int origin = -1;
  bool open = false;
  Excursion cur;
  std::size_t samples_out = 0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const int band = q[i] <= bands.q_lo ? 0 : (q[i] >= bands.q_hi ? 1 : 2);
    const double hold = i + 1 < grid.size() ? grid[i + 1] - grid[i] : 0.0;
    (band == 0 ? scan.time_band0 : band == 1 ? scan.time_band1 : scan.time_transit) += hold;
    if (band != 2) {
      if (open) {
        cur.t_end = grid[i];
        if (band == origin) {
          cur.kind = origin == 0 ? ExcursionKind::kSpike0 : ExcursionKind::kSpike1;
          if (samples_out < kMinSpikeSamples)
            ++scan.dropped_short;
          else
            scan.excursions.push_back(cur);
        } else {
          cur.kind = origin == 0 ? ExcursionKind::kJump01 : ExcursionKind::kJump10;
          cur.peak = q[i];
          cur.t_peak = grid[i];
          scan.excursions.push_back(cur);
        }
        open = false;
      } else if (origin >= 0 && band != origin) {
        // band-to-band between two samples: a jump with no transit sample
        Excursion j;
        j.kind = origin == 0 ? ExcursionKind::kJump01 : ExcursionKind::kJump10;
        j.t_start = j.t_peak = j.t_end = grid[i];
        j.peak = q[i];
        scan.excursions.push_back(j);
      }
      origin = band;
      continue;
    }
    if (origin < 0) continue;
    if (!open) {
      open = true;
      samples_out = 0;
      cur = Excursion{};
      cur.t_start = grid[i];
      cur.t_peak = grid[i];
      cur.peak = q[i];
    }
    ++samples_out;
    if ((origin == 0 && q[i] > cur.peak) || (origin == 1 && q[i] < cur.peak)) {
      cur.peak = q[i];
      cur.t_peak = grid[i];
    }
  }
  scan.never_in_band = origin < 0;
  return scan;
}

struct Occupancy {
  double frac0 = 0.0;
  double frac1 = 0.0;
  double frac_transit = 0.0;

  // share of band-1 residence among all band residence
  double share1() const { return frac0 + frac1 > 0.0 ? frac1 / (frac0 + frac1) : 0.0; }
};

inline Occupancy occupancy(std::span<const double> grid, std::span<const double> q, Bands bands = {}) {
  bands.validate();
  detail::check_path(grid, q);
  double t0 = 0.0, t1 = 0.0, tt = 0.0;
  const bool single = grid.size() < 2;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double hold = single ? 1.0 : (i + 1 < grid.size() ? grid[i + 1] - grid[i] : 0.0);
    if (q[i] <= bands.q_lo)
      t0 += hold;
    else if (q[i] >= bands.q_hi)
      t1 += hold;
    else
      tt += hold;
  }
  const double total = t0 + t1 + tt;
  if (total <= 0.0) return {};
  return {t0 / total, t1 / total, tt / total};
}

// ---------------------------------------------------------------------------
// Poisson comparisons

struct PoissonInterval {
  double mean = 0.0;
  std::uint64_t lo = 0;
  std::uint64_t hi = 0;
  bool contains(std::uint64_t k) const { return lo <= k && k <= hi; }
};

/// Central acceptance region of Poisson(mean): each tail outside [lo, hi]
/// carries at most (1 - level) / 2.
inline PoissonInterval poisson_interval(double mean, double level = 0.95) {
  if (!(mean >= 0.0)) throw ValidationError("Poisson mean must be >= 0");
  PoissonInterval iv;
  iv.mean = mean;
  if (mean == 0.0) return iv;
  using namespace boost::math;
  using Policy = policies::policy<policies::discrete_quantile<policies::integer_round_outwards>>;
  poisson_distribution<double, Policy> dist(mean);
  const double tail = (1.0 - level) / 2.0;
  iv.lo = static_cast<std::uint64_t>(quantile(dist, tail));
  iv.hi = static_cast<std::uint64_t>(quantile(complement(dist, tail)));
  return iv;
}

struct HeightCheck {
  double h = 0.0;
  std::uint64_t observed = 0;         // Spike0 with peak > h
  double predicted = 0.0;             // beta p (1/h - 1) T
  double predicted_residence = 0.0;   // beta p (1/h - 1) T0
  PoissonInterval interval;           // around predicted_residence
  bool within() const { return interval.contains(observed); }
};

struct SpikeStats {
  double horizon = 0.0;
  std::uint64_t jump01_count = 0;
  std::uint64_t jump10_count = 0;
  std::vector<double> spike0_heights;
  std::vector<double> spike1_depths;
  std::size_t dropped_short = 0;
  // predictions from the limit parameters over the full horizon
  double predicted_jump01 = 0.0;  // beta p T
  double predicted_jump10 = 0.0;  // beta (1 - p) T
  // the same rates applied to the measured residence times
  double residence0 = 0.0;
  double residence1 = 0.0;
  double predicted_jump01_residence = 0.0;
  double predicted_jump10_residence = 0.0;
  std::vector<HeightCheck> heights;
};

/// Spike heights above h from 0 arrive at rate beta p (1/h - 1) while the path
/// sits at 0 (the 1/N^2 part of the intensity integrated over (h, 1]); jumps
/// to 1 at rate beta p, jumps back at rate beta (1 - p).
inline SpikeStats spike_statistics(const ExcursionScan& scan, const LimitParams& limit, double horizon,
                                   std::span<const double> heights, double level = 0.95) {
  if (!(horizon > 0.0)) throw ValidationError("horizon must be positive");
  SpikeStats s;
  s.horizon = horizon;
  s.dropped_short = scan.dropped_short;
  for (const auto& e : scan.excursions) {
    switch (e.kind) {
      case ExcursionKind::kJump01: ++s.jump01_count; break;
      case ExcursionKind::kJump10: ++s.jump10_count; break;
      case ExcursionKind::kSpike0: s.spike0_heights.push_back(e.peak); break;
      case ExcursionKind::kSpike1: s.spike1_depths.push_back(e.peak); break;
    }
  }
  std::sort(s.spike0_heights.begin(), s.spike0_heights.end());
  std::sort(s.spike1_depths.begin(), s.spike1_depths.end());
  const double up = limit.beta * limit.p;
  const double down = limit.beta * (1.0 - limit.p);
  s.predicted_jump01 = up * horizon;
  s.predicted_jump10 = down * horizon;
  s.residence0 = scan.time_band0;
  s.residence1 = scan.time_band1;
  s.predicted_jump01_residence = up * s.residence0;
  s.predicted_jump10_residence = down * s.residence1;
  for (double h : heights) {
    if (!(h > 0.0 && h <= 1.0)) throw ValidationError("spike heights must lie in (0,1]");
    HeightCheck c;
    c.h = h;
    c.observed = static_cast<std::uint64_t>(
        s.spike0_heights.end() - std::upper_bound(s.spike0_heights.begin(), s.spike0_heights.end(), h));
    c.predicted = up * (1.0 / h - 1.0) * horizon;
    c.predicted_residence = up * (1.0 / h - 1.0) * s.residence0;
    c.interval = poisson_interval(c.predicted_residence, level);
    s.heights.push_back(c);
  }
  return s;
}

// ---------------------------------------------------------------------------
// distribution distances

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b| (ties handled by
/// advancing both ECDFs past a shared value).
inline double ks_distance(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw ValidationError("KS distance needs non-empty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

/// One-sample KS statistic against a continuous CDF.
inline double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf) {
  if (sample.empty()) throw ValidationError("KS statistic needs a non-empty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

/// Asymptotic Kolmogorov tail P(D_n > d), with Stephens' small-sample
/// correction of the scaling.
inline double kolmogorov_pvalue(double d, std::size_t n) {
  const double sn = std::sqrt(static_cast<double>(n));
  const double lambda = (sn + 0.12 + 0.11 / sn) * d;
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(sum, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// volatility phases

struct WindowValue {
  double t_start = 0.0;
  double t_end = 0.0;
  double value = 0.0;
};

namespace detail {

// consecutive windows of `window` time units; the last partial window is
// dropped. Increment i -> i+1 belongs to the window containing grid[i].
template <class F>
std::vector<WindowValue> windowed(std::span<const double> grid, double window, F&& accumulate_window) {
  if (!(window > 0.0)) throw ValidationError("window must be positive");
  std::vector<WindowValue> out;
  if (grid.size() < 2) return out;
  const double t0 = grid.front();
  std::size_t begin = 0;
  for (std::size_t k = 1;; ++k) {
    const double t_end = t0 + static_cast<double>(k) * window;
    if (t_end > grid.back() + 1e-9 * window) break;
    std::size_t end = begin;
    while (end + 1 < grid.size() && grid[end + 1] <= t_end + 1e-9 * window) ++end;
    out.push_back({t_end - window, t_end, accumulate_window(begin, end)});
    begin = end;
  }
  return out;
}

}  // namespace detail

/// Sum of squared increments of x over consecutive windows.
inline std::vector<WindowValue> realized_variance(std::span<const double> grid, std::span<const double> x,
                                                  double window) {
  detail::check_path(grid, x);
  return detail::windowed(grid, window, [&](std::size_t begin, std::size_t end) {
    double rv = 0.0;
    for (std::size_t i = begin; i < end; ++i) rv += (x[i + 1] - x[i]) * (x[i + 1] - x[i]);
    return rv;
  });
}

/// Sample mean of q over the same windows as realized_variance.
inline std::vector<WindowValue> window_means(std::span<const double> grid, std::span<const double> q,
                                             double window) {
  detail::check_path(grid, q);
  return detail::windowed(grid, window, [&](std::size_t begin, std::size_t end) {
    double s = 0.0;
    for (std::size_t i = begin; i < end; ++i) s += q[i];
    return end > begin ? s / static_cast<double>(end - begin) : q[begin];
  });
}

inline double pearson_correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw ValidationError("correlation needs paired samples");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};
/// Mean realized variance over windows whose mean excitement lies in each
/// equilibrium band. Windows straddling a transit fall in neither.
struct PhaseVolatility {
  double rv_low = 0.0;   // windows with mean q <= q_lo
  double rv_high = 0.0;  // windows with mean q >= q_hi
  std::size_t windows_low = 0;
  std::size_t windows_high = 0;
};

inline PhaseVolatility phase_volatility(std::span<const WindowValue> rv, std::span<const WindowValue> q_mean,
                                        Bands bands = {}) {
  bands.validate();
  if (rv.size() != q_mean.size()) throw ValidationError("window series differ in length");
  PhaseVolatility p;
  for (std::size_t i = 0; i < rv.size(); ++i) {
    if (q_mean[i].value <= bands.q_lo) {
      p.rv_low += rv[i].value;
      ++p.windows_low;
    } else if (q_mean[i].value >= bands.q_hi) {
      p.rv_high += rv[i].value;
      ++p.windows_high;
    }
  }
  if (p.windows_low > 0) p.rv_low /= static_cast<double>(p.windows_low);
  if (p.windows_high > 0) p.rv_high /= static_cast<double>(p.windows_high);
  return p;
}


/// Percentile bootstrap interval for the Pearson correlation of pairs.
inline Interval bootstrap_correlation_ci(std::span<const double> a, std::span<const double> b,
                                         std::size_t resamples, std::uint64_t seed, double level = 0.95) {
  if (a.size() != b.size() || a.size() < 2) throw ValidationError("bootstrap needs paired samples");
  auto rng = make_stream(seed, 0, Purpose::kBootstrap);
  std::vector<double> stats;
  stats.reserve(resamples);
  std::vector<double> ra(a.size()), rb(b.size());
  for (std::size_t r = 0; r < resamples; ++r) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      const auto k = uniform_index(rng, a.size());
      ra[i] = a[k];
      rb[i] = b[k];
    }
    stats.push_back(pearson_correlation(ra, rb));
  }
  std::sort(stats.begin(), stats.end());
  const double tail = (1.0 - level) / 2.0;
  auto at = [&](double q) {
    const auto idx = static_cast<std::size_t>(std::floor(q * static_cast<double>(stats.size() - 1)));
    return stats[idx];
  };
  return {at(tail), at(1.0 - tail)};
}

// ---------------------------------------------------------------------------
// moments and weak convergence

struct SampleMoments {
  std::size_t size = 0;
  double mean = 0.0;
  double variance = 0.0;  // unbiased
  double std_error() const { return size > 0 ? std::sqrt(variance / static_cast<double>(size)) : 0.0; }
};

inline SampleMoments moments(std::span<const double> v) {
  SampleMoments m;
  m.size = v.size();
  if (v.empty()) return m;
  m.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double s = 0.0;
    for (double x : v) s += (x - m.mean) * (x - m.mean);
    m.variance = s / static_cast<double>(v.size() - 1);
  }
  return m;
}

struct WeakConvRow {
  std::size_t n = 0;
  SampleMoments micro;
  double ks = 0.0;
};

struct WeakConvReport {
  std::vector<std::size_t> n_list;
  std::vector<WeakConvRow> rows;
  SampleMoments reference;

  bool ks_strictly_decreasing() const {
    for (std::size_t i = 1; i < rows.size(); ++i)
      if (!(rows[i].ks < rows[i - 1].ks)) return false;
    return true;
  }
};

inline WeakConvReport weak_convergence_report(const std::vector<std::size_t>& n_list,
                                              const std::vector<std::vector<double>>& micro_samples,
                                              const std::vector<double>& reference) {
  if (n_list.size() != micro_samples.size()) throw ValidationError("one sample per n required");
  WeakConvReport rep;
  rep.n_list = n_list;
  rep.reference = moments(reference);
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    WeakConvRow row;
    row.n = n_list[i];
    row.micro = moments(micro_samples[i]);
    row.ks = ks_distance(micro_samples[i], reference);
    rep.rows.push_back(row);
  }
  return rep;
}

}  // namespace exmarket
