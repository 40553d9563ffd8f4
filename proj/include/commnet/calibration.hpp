#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "commnet/core.hpp"
#include "commnet/generator.hpp"
#include "commnet/validation.hpp"

namespace commnet {

/// Normalized per-commuter trip-length distribution over right-open bins
/// [edge_i, edge_{i+1}).
struct DistanceHistogram {
  std::vector<double> bin_edges;  // size bins + 1, meters
  std::vector<double> mass;       // probability per bin, sums to 1
  std::int64_t n_trips = 0;
};

inline DistanceHistogram distance_distribution(const FlowMatrix& flows,
                                               const Matrix<double>& distances,
                                               double bin_width_m) {
  if (!(bin_width_m > 0.0)) throw input_error("bin_width must be > 0");
  if (flows.flows.rows() != distances.rows() ||
      flows.flows.cols() != distances.cols())
    throw input_error("flow matrix and distance matrix are not conformable");

  std::int64_t n_trips = 0;
  double max_d = 0.0;
  for (std::size_t r = 0; r < flows.flows.rows(); ++r)
    for (std::size_t c = 0; c < flows.flows.cols(); ++c)
      if (flows.flows(r, c) > 0) {
        n_trips += flows.flows(r, c);
        max_d = std::max(max_d, distances(r, c));
      }
  if (n_trips == 0)
    throw input_error("distance_distribution: no trips in flow matrix");

  const std::size_t bins =
      static_cast<std::size_t>(std::floor(max_d / bin_width_m)) + 1;
  DistanceHistogram h;
  h.n_trips = n_trips;
  h.bin_edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b)
    h.bin_edges[b] = static_cast<double>(b) * bin_width_m;
  h.mass.assign(bins, 0.0);
  for (std::size_t r = 0; r < flows.flows.rows(); ++r)
    for (std::size_t c = 0; c < flows.flows.cols(); ++c)
      if (flows.flows(r, c) > 0) {
        auto b = static_cast<std::size_t>(distances(r, c) / bin_width_m);
        b = std::min(b, bins - 1);
        h.mass[b] += static_cast<double>(flows.flows(r, c)) /
                     static_cast<double>(n_trips);
      }
  return h;
}

enum class KsVariant { cdf, pmf };

namespace detail {

// Piecewise-linear CDF of a histogram evaluated at x.
inline double hist_cdf(const DistanceHistogram& h, double x) {
  if (x <= h.bin_edges.front()) return 0.0;
  if (x >= h.bin_edges.back()) return 1.0;
  double cum = 0.0;
  for (std::size_t b = 0; b < h.mass.size(); ++b) {
    const double lo = h.bin_edges[b], hi = h.bin_edges[b + 1];
    if (x < hi) return cum + h.mass[b] * (x - lo) / (hi - lo);
    cum += h.mass[b];
  }
  return 1.0;
}

inline std::vector<double> union_edges(const DistanceHistogram& a,
                                       const DistanceHistogram& b) {
  std::vector<double> e = a.bin_edges;
  e.insert(e.end(), b.bin_edges.begin(), b.bin_edges.end());
  std::sort(e.begin(), e.end());
  e.erase(std::unique(e.begin(), e.end()), e.end());
  return e;
}

}  // namespace detail

/// Kolmogorov-Smirnov statistic between two histograms: sup over the
/// union edge grid of |CDF_a - CDF_b| (default), or the sup of rebinned
/// pmf gaps behind the pmf variant.
inline double ks_distance(const DistanceHistogram& obs,
                          const DistanceHistogram& sim,
                          KsVariant variant = KsVariant::cdf) {
  const auto edges = detail::union_edges(obs, sim);
  double sup = 0.0;
  if (variant == KsVariant::cdf) {
    for (double e : edges)
      sup = std::max(sup,
                     std::abs(detail::hist_cdf(obs, e) - detail::hist_cdf(sim, e)));
  } else {
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
      const double m_obs =
          detail::hist_cdf(obs, edges[i + 1]) - detail::hist_cdf(obs, edges[i]);
      const double m_sim =
          detail::hist_cdf(sim, edges[i + 1]) - detail::hist_cdf(sim, edges[i]);
      sup = std::max(sup, std::abs(m_obs - m_sim));
    }
  }
  return sup;
}

enum class SearchStrategy { golden_section, grid };

struct CalibrationSearch {
  double beta_min = 1e-6;  // 1/m
  double beta_max = 1e-2;
  SearchStrategy strategy = SearchStrategy::golden_section;
  double tolerance = 1e-2;  // relative, on beta
  int grid_points = 32;
};

struct CalibrationTracePoint {
  double beta = 0.0;
  double mean_ks = 0.0;
  double mean_cpc = 0.0;
};

struct CalibrationResult {
  double beta_star = 0.0;
  double ks_at_star = 0.0;
  std::vector<CalibrationTracePoint> trace;  // sorted by beta
  int replicas = 0;
  bool fell_back_to_grid = false;
};

inline constexpr double kDefaultBinWidthM = 2000.0;

namespace detail {

struct BetaObjective {
  const StudyArea* area;
  const FlowMatrix* observed;
  DistanceHistogram obs_hist;
  FlowMatrix obs_table;
  std::vector<std::int64_t> s_in, s_out;
  double bin_width;
  int replicas;
  std::uint64_t seed;
  bool exclude_self;

  CalibrationTracePoint evaluate(double beta) const {
    std::vector<double> ks(static_cast<std::size_t>(replicas));
    std::vector<double> cp(static_cast<std::size_t>(replicas));
    auto run_one = [&](std::size_t r) {
      GenerationConfig cfg;
      cfg.beta = beta;
      // Common random numbers across beta candidates: replica seeds do
      // not depend on beta, which keeps the KS curve smooth.
      cfg.seed = derive_seed(seed, r);
      cfg.exclude_self = exclude_self;
      const FlowMatrix sim = generate_network(*area, cfg);
      const DistanceHistogram h =
          distance_distribution(sim, area->distances, bin_width);
      ks[r] = ks_distance(obs_hist, h);
      cp[r] = cpc(obs_table, build_comparison_table(sim, s_in, s_out));
    };
    unsigned threads =
        std::min<unsigned>(std::max(1u, std::thread::hardware_concurrency()),
                           static_cast<unsigned>(replicas));
    if (threads <= 1) {
      for (std::size_t r = 0; r < ks.size(); ++r) run_one(r);
    } else {
      std::vector<std::thread> pool;
      for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
          for (std::size_t r = t; r < ks.size(); r += threads) run_one(r);
        });
      for (auto& th : pool) th.join();
    }
    CalibrationTracePoint p;
    p.beta = beta;
    for (std::size_t r = 0; r < ks.size(); ++r) {
      p.mean_ks += ks[r];
      p.mean_cpc += cp[r];
    }
    p.mean_ks /= static_cast<double>(ks.size());
    p.mean_cpc /= static_cast<double>(ks.size());
    return p;
  }
};

inline std::vector<double> log_spaced(double lo, double hi, int count) {
  std::vector<double> v;
  if (count <= 1 || lo == hi) {
    v.push_back(lo);
    return v;
  }
  const double llo = std::log(lo), lhi = std::log(hi);
  for (int i = 0; i < count; ++i)
    v.push_back(std::exp(llo + (lhi - llo) * i / (count - 1)));
  return v;
}

// A trace is unimodal if it decreases to its minimum and increases after.
inline bool roughly_unimodal(const std::vector<CalibrationTracePoint>& pts) {
  std::size_t arg = 0;
  for (std::size_t i = 1; i < pts.size(); ++i)
    if (pts[i].mean_ks < pts[arg].mean_ks) arg = i;
  const double slack =
      0.05 * (pts.front().mean_ks + pts.back().mean_ks) / 2.0 + 1e-6;
  for (std::size_t i = 1; i <= arg; ++i)
    if (pts[i].mean_ks > pts[i - 1].mean_ks + slack) return false;
  for (std::size_t i = arg + 1; i < pts.size(); ++i)
    if (pts[i].mean_ks + slack < pts[i - 1].mean_ks) return false;
  return true;
}

}  // namespace detail

/// Calibrates the distance-decay parameter by minimizing the mean
/// KS distance over replicas between the observed and simulated
/// trip-length distributions. Golden-section search on log(beta) after a
/// coarse bracketing scan; falls back to a grid scan when the coarse
/// trace is not unimodal.
inline CalibrationResult calibrate_beta(
    const StudyArea& area, const FlowMatrix& observed,
    const CalibrationSearch& search = {}, int replicas = 100,
    std::uint64_t seed = 0, double bin_width_m = kDefaultBinWidthM,
    bool exclude_self = true,
    const std::function<void(const std::string&)>& warn = {}) {
  if (replicas < 1) throw input_error("replicas must be >= 1");
  if (!(search.beta_min >= 0.0) || !(search.beta_min <= search.beta_max))
    throw input_error("require 0 <= beta_min <= beta_max");
  const MarginReport rep = validate_margins(area);
  if (!rep.pass()) throw input_error("calibrate_beta: infeasible margins");

  detail::BetaObjective obj;
  obj.area = &area;
  obj.observed = &observed;
  obj.obs_hist = distance_distribution(observed, area.distances, bin_width_m);
  obj.s_in = area.s_in_vector();
  obj.s_out = area.s_out_vector();
  obj.obs_table = build_comparison_table(observed, obj.s_in, obj.s_out);
  obj.bin_width = bin_width_m;
  obj.replicas = replicas;
  obj.seed = seed;
  obj.exclude_self = exclude_self;

  CalibrationResult result;
  result.replicas = replicas;
  auto record = [&](double beta) -> const CalibrationTracePoint& {
    for (const auto& p : result.trace)
      if (p.beta == beta) return p;
    result.trace.push_back(obj.evaluate(beta));
    return result.trace.back();
  };

  if (search.beta_min == search.beta_max) {
    record(search.beta_min);
  } else {
    const double lo =
        search.beta_min > 0.0 ? search.beta_min : search.beta_max * 1e-8;
    constexpr int kCoarse = 9;
    std::vector<CalibrationTracePoint> coarse;
    for (double b : detail::log_spaced(lo, search.beta_max, kCoarse))
      coarse.push_back(record(b));
    if (search.beta_min == 0.0) record(0.0);

    std::size_t arg = 0;
    for (std::size_t i = 1; i < coarse.size(); ++i)
      if (coarse[i].mean_ks < coarse[arg].mean_ks) arg = i;

    const bool unimodal = detail::roughly_unimodal(coarse);
    if (search.strategy == SearchStrategy::grid || !unimodal) {
      if (search.strategy == SearchStrategy::golden_section && !unimodal) {
        result.fell_back_to_grid = true;
        if (warn)
          warn("KS trace not unimodal over the coarse scan; using grid scan");
      }
      for (double b :
           detail::log_spaced(lo, search.beta_max, search.grid_points))
        record(b);
    } else {
      double a = std::log(coarse[arg > 0 ? arg - 1 : 0].beta);
      double b = std::log(coarse[std::min(arg + 1, coarse.size() - 1)].beta);
      constexpr double phi = 0.6180339887498949;
      const double stop = std::log1p(search.tolerance);
      double x1 = b - phi * (b - a);
      double x2 = a + phi * (b - a);
      double f1 = record(std::exp(x1)).mean_ks;
      double f2 = record(std::exp(x2)).mean_ks;
      while (b - a > stop) {
        if (f1 <= f2) {
          b = x2;
          x2 = x1;
          f2 = f1;
          x1 = b - phi * (b - a);
          f1 = record(std::exp(x1)).mean_ks;
        } else {
          a = x1;
          x1 = x2;
          f1 = f2;
          x2 = a + phi * (b - a);
          f2 = record(std::exp(x2)).mean_ks;
        }
      }
    }
  }

  std::sort(result.trace.begin(), result.trace.end(),
            [](const auto& l, const auto& r) { return l.beta < r.beta; });
  const auto best = std::min_element(
      result.trace.begin(), result.trace.end(),
      [](const auto& l, const auto& r) { return l.mean_ks < r.mean_ks; });
  result.beta_star = best->beta;
  result.ks_at_star = best->mean_ks;
  return result;
}

}  // namespace commnet
