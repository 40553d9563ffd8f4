#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "commnet/calibration.hpp"
#include "commnet/core.hpp"
#include "commnet/validation.hpp"

namespace commnet {

struct RadiationInputs {
  std::vector<double> populations;  // m_i per unit
  double total_population = 0.0;    // N
  double total_commuters = 0.0;     // N_c
  Matrix<double> distances;         // square, all units
  std::vector<std::string> labels;
  // Per-unit out-commuter counts, only needed for the origin-commuter
  // prefactor variant.
  std::vector<double> out_commuters;
};

/// Population inside the closed circle of radius D_ij centred at unit i,
/// excluding the source and destination populations.
inline double circle_population(std::size_t i, std::size_t j,
                                const RadiationInputs& in) {
  if (i == j) throw input_error("circle_population: i == j");
  const double radius = in.distances(i, j);
  double s = 0.0;
  for (std::size_t k = 0; k < in.populations.size(); ++k) {
    if (k == i || k == j) continue;
    if (in.distances(i, k) <= radius) s += in.populations[k];
  }
  return s;
}

enum class RadiationPrefactor {
  paper_literal,     // m_i * N_c / N
  origin_commuters,  // per-unit out-commuter count T_i
};

/// Analytical radiation-model flows:
///   T_ij = prefactor_i * m_i n_j / ((m_i + s_ij)(m_i + n_j + s_ij)).
/// Diagonal is zero; entries with a vanishing denominator are zero by the
/// limit convention.
inline RealFlowMatrix radiation_flows(
    const RadiationInputs& in,
    RadiationPrefactor prefactor = RadiationPrefactor::paper_literal,
    const std::function<void(const std::string&)>& warn = {}) {
  const std::size_t count = in.populations.size();
  if (in.distances.rows() != count || in.distances.cols() != count)
    throw input_error("radiation_flows: distance matrix must be square over all units");
  if (prefactor == RadiationPrefactor::origin_commuters &&
      in.out_commuters.size() != count)
    throw input_error("radiation_flows: origin-commuter prefactor needs out_commuters");
  if (!(in.total_population > 0.0))
    throw input_error("radiation_flows: total population must be positive");

  RealFlowMatrix out;
  out.flows = Matrix<double>(count, count);
  out.row_labels = in.labels;
  out.col_labels = in.labels;

  bool warned_degenerate = false;
  for (std::size_t i = 0; i < count; ++i) {
    const double m_i = in.populations[i];
    const double pre = prefactor == RadiationPrefactor::paper_literal
                           ? m_i * in.total_commuters / in.total_population
                           : in.out_commuters[i];
    // Distance-sorted prefix sums make every s_ij for this origin O(log).
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return in.distances(i, a) < in.distances(i, b);
    });
    std::vector<double> sorted_d(count), prefix(count + 1, 0.0);
    for (std::size_t k = 0; k < count; ++k) {
      sorted_d[k] = in.distances(i, order[k]);
      prefix[k + 1] = prefix[k] + in.populations[order[k]];
    }
    for (std::size_t j = 0; j < count; ++j) {
      if (j == i) continue;
      const double radius = in.distances(i, j);
      const auto hi = std::upper_bound(sorted_d.begin(), sorted_d.end(), radius) -
                      sorted_d.begin();
      // Closed circle minus the source and destination themselves.
      const double s_ij = prefix[hi] - m_i - in.populations[j];
      const double n_j = in.populations[j];
      const double denom = (m_i + s_ij) * (m_i + n_j + s_ij);
      if (denom <= 0.0) {
        if (!warned_degenerate && warn) {
          warn("radiation_flows: zero denominator (m_i = 0, empty circle); entry set to 0");
          warned_degenerate = true;
        }
        continue;
      }
      out.flows(i, j) = pre * m_i * n_j / denom;
    }
  }
  return out;
}

/// Rounds a real-valued flow matrix to integers row by row with
/// largest-remainder apportionment, preserving each (rounded) row sum.
inline FlowMatrix round_flows_largest_remainder(const RealFlowMatrix& real,
                                                FlowShape shape = FlowShape::generated) {
  FlowMatrix out;
  out.shape = shape;
  out.row_labels = real.row_labels;
  out.col_labels = real.col_labels;
  out.flows = Matrix<std::int64_t>(real.flows.rows(), real.flows.cols());
  for (std::size_t r = 0; r < real.flows.rows(); ++r) {
    double row_sum = 0.0;
    for (std::size_t c = 0; c < real.flows.cols(); ++c)
      row_sum += real.flows(r, c);
    const auto target = static_cast<std::int64_t>(std::llround(row_sum));
    std::int64_t assigned = 0;
    std::vector<std::pair<double, std::size_t>> remainders;
    for (std::size_t c = 0; c < real.flows.cols(); ++c) {
      const double v = real.flows(r, c);
      const auto fl = static_cast<std::int64_t>(std::floor(v));
      out.flows(r, c) = fl;
      assigned += fl;
      remainders.emplace_back(v - std::floor(v), c);
    }
    std::sort(remainders.begin(), remainders.end(), [](auto& a, auto& b) {
      return a.first > b.first || (a.first == b.first && a.second < b.second);
    });
    for (std::int64_t k = 0; k < target - assigned &&
                             k < static_cast<std::int64_t>(remainders.size());
         ++k)
      out.flows(r, remainders[static_cast<std::size_t>(k)].second) += 1;
  }
  return out;
}

struct ModelComparison {
  struct ScatterPoint {
    double observed = 0.0;
    double model_a = 0.0;
    double model_b = 0.0;
  };
  struct FlowBin {
    double lo = 0.0;
    double hi = 0.0;
    std::int64_t count = 0;
    double mean_observed = 0.0;
    double mean_a = 0.0;
    double mean_b = 0.0;
  };
  std::vector<ScatterPoint> scatter;  // off-diagonal pairs, any model/observed > 0
  std::vector<FlowBin> bins;          // geometric bins on observed flow
  double cpc_a = 0.0;
  double cpc_b = 0.0;
  std::optional<DistanceHistogram> dist_observed;
  std::optional<DistanceHistogram> dist_a;
  std::optional<DistanceHistogram> dist_b;
};

/// Observed-vs-modeled comparison: scatter pairs, log-binned means of the
/// modeled flows per observed-flow magnitude, CPC for each model
/// (real-valued models rounded by largest remainder), and optionally the
/// three trip-length distributions.
inline ModelComparison compare_models(const FlowMatrix& observed,
                                      const RealFlowMatrix& model_a,
                                      const RealFlowMatrix& model_b,
                                      int log_bins = 16,
                                      const Matrix<double>* distances = nullptr,
                                      double bin_width_m = kDefaultBinWidthM) {
  if (model_a.flows.rows() != observed.flows.rows() ||
      model_a.flows.cols() != observed.flows.cols() ||
      model_b.flows.rows() != observed.flows.rows() ||
      model_b.flows.cols() != observed.flows.cols())
    throw input_error("compare_models: matrices are not conformable");
  if (log_bins < 1) throw input_error("compare_models: log_bins must be >= 1");

  ModelComparison cmp;
  double min_pos = std::numeric_limits<double>::infinity();
  double max_obs = 0.0;
  for (std::size_t r = 0; r < observed.flows.rows(); ++r)
    for (std::size_t c = 0; c < observed.flows.cols(); ++c) {
      if (r == c && observed.flows.rows() == observed.flows.cols()) continue;
      const double obs = static_cast<double>(observed.flows(r, c));
      const double a = model_a.flows(r, c);
      const double b = model_b.flows(r, c);
      if (obs > 0.0 || a > 0.0 || b > 0.0)
        cmp.scatter.push_back({obs, a, b});
      if (obs > 0.0) {
        min_pos = std::min(min_pos, obs);
        max_obs = std::max(max_obs, obs);
      }
    }

  if (max_obs > 0.0) {
    const double llo = std::log(min_pos);
    const double lhi = std::log(max_obs) + 1e-12;
    const double width = std::max((lhi - llo) / log_bins, 1e-12);
    cmp.bins.resize(static_cast<std::size_t>(log_bins));
    for (int b = 0; b < log_bins; ++b) {
      cmp.bins[static_cast<std::size_t>(b)].lo = std::exp(llo + b * width);
      cmp.bins[static_cast<std::size_t>(b)].hi = std::exp(llo + (b + 1) * width);
    }
    for (const auto& p : cmp.scatter) {
      if (p.observed <= 0.0) continue;
      auto b = static_cast<std::size_t>((std::log(p.observed) - llo) / width);
      b = std::min(b, cmp.bins.size() - 1);
      cmp.bins[b].count += 1;
      cmp.bins[b].mean_observed += p.observed;
      cmp.bins[b].mean_a += p.model_a;
      cmp.bins[b].mean_b += p.model_b;
    }
    for (auto& bin : cmp.bins)
      if (bin.count > 0) {
        bin.mean_observed /= static_cast<double>(bin.count);
        bin.mean_a /= static_cast<double>(bin.count);
        bin.mean_b /= static_cast<double>(bin.count);
      }
  }

  const FlowMatrix a_int = round_flows_largest_remainder(model_a, observed.shape);
  const FlowMatrix b_int = round_flows_largest_remainder(model_b, observed.shape);
  cmp.cpc_a = cpc(observed, a_int);
  cmp.cpc_b = cpc(observed, b_int);

  if (distances) {
    cmp.dist_observed = distance_distribution(observed, *distances, bin_width_m);
    if (a_int.total() > 0)
      cmp.dist_a = distance_distribution(a_int, *distances, bin_width_m);
    if (b_int.total() > 0)
      cmp.dist_b = distance_distribution(b_int, *distances, bin_width_m);
  }
  return cmp;
}

}  // namespace commnet
