#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "commnet/core.hpp"
#include "commnet/rng.hpp"

namespace commnet {

struct no_capacity_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GenerationConfig {
  double beta = 0.0;  // 1/m
  std::uint64_t seed = 0;
  bool exclude_self = true;
  int replicas = 1;
  // Warning sink; defaults to stderr.
  std::function<void(const std::string&)> warn;

  void emit_warning(const std::string& msg) const {
    if (warn)
      warn(msg);
    else
      std::cerr << "warning: " << msg << "\n";
  }
};

inline constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

/// exp(-beta * D) for one origin row, with the self column zeroed when
/// intra-unit flows are excluded.
inline std::vector<double> kernel_row(const Matrix<double>& distances,
                                      std::size_t origin, double beta,
                                      bool exclude_self) {
  std::vector<double> k(distances.cols());
  const double* d = distances.row_ptr(origin);
  for (std::size_t i = 0; i < k.size(); ++i) k[i] = std::exp(-beta * d[i]);
  if (exclude_self && origin < k.size()) k[origin] = 0.0;
  return k;
}

/// Choice probabilities for one origin given the current inbound margins:
/// entry i proportional to s_in[i] * exp(-beta * D[origin][i]).
inline std::vector<double> destination_probabilities(
    std::size_t origin, const std::vector<std::int64_t>& s_in_current,
    const Matrix<double>& distances, double beta, bool exclude_self = true) {
  if (!(beta >= 0.0) || !std::isfinite(beta))
    throw input_error("beta must be finite and >= 0");
  if (s_in_current.size() != distances.cols())
    throw input_error("s_in length does not match distance matrix");
  auto k = kernel_row(distances, origin, beta, exclude_self);
  double total = 0.0;
  for (std::size_t i = 0; i < k.size(); ++i) {
    k[i] = s_in_current[i] > 0 ? static_cast<double>(s_in_current[i]) * k[i]
                               : 0.0;
    total += k[i];
  }
  if (total <= 0.0)
    throw no_capacity_error("no destination with positive weight for origin " +
                            std::to_string(origin));
  for (auto& v : k) v /= total;
  return k;
}

/// One weighted draw over w[i] = s_in[i] * kernel[i]. Returns npos when
/// every weight is zero (exhausted or underflowed capacity).
inline std::size_t sample_destination(const std::int64_t* s_in,
                                      const double* kernel, std::size_t count,
                                      Rng& rng) {
  double total = 0.0;
  for (std::size_t i = 0; i < count; ++i)
    if (s_in[i] > 0) total += static_cast<double>(s_in[i]) * kernel[i];
  if (total <= 0.0) return npos;
  const double target =
      std::uniform_real_distribution<double>(0.0, 1.0)(rng) * total;
  double acc = 0.0;
  std::size_t last_positive = npos;
  for (std::size_t i = 0; i < count; ++i) {
    if (s_in[i] <= 0) continue;
    const double w = static_cast<double>(s_in[i]) * kernel[i];
    if (w <= 0.0) continue;
    acc += w;
    last_positive = i;
    if (acc > target) return i;
  }
  return last_positive;  // fp rounding at the top of the range
}

namespace detail {

inline std::size_t nearest_with_capacity(const Matrix<double>& distances,
                                         std::size_t origin,
                                         const std::vector<std::int64_t>& s_in,
                                         bool exclude_self) {
  std::size_t best = npos;
  double best_d = std::numeric_limits<double>::infinity();
  const double* d = distances.row_ptr(origin);
  for (std::size_t i = 0; i < s_in.size(); ++i) {
    if (s_in[i] <= 0) continue;
    if (exclude_self && i == origin) continue;
    if (d[i] < best_d) {
      best_d = d[i];
      best = i;
    }
  }
  return best;
}

}  // namespace detail

/// Commuter-by-commuter allocation: while out-commuters remain, pick a
/// residence unit uniformly among those with s_out > 0, draw its
/// destination from the gravity kernel over the current inbound margins,
/// then decrement both margins. Row sums of the result equal the original
/// s_out exactly.
inline FlowMatrix generate_network(const StudyArea& area,
                                   const GenerationConfig& config) {
  if (!(config.beta >= 0.0) || !std::isfinite(config.beta))
    throw input_error("beta must be finite and >= 0");
  const MarginReport report = validate_margins(area);
  if (!report.pass())
    throw input_error("infeasible margins: total s_out " +
                      std::to_string(report.total_out) + " > total s_in " +
                      std::to_string(report.total_in));

  const std::size_t n = area.n();
  const std::size_t n_tot = area.n_tot();
  std::vector<std::int64_t> s_in = area.s_in_vector();
  std::vector<std::int64_t> s_out = area.s_out_vector();

  // Kernel precomputed once; each draw only rescans it against the
  // decremented margins, O(N_TOT) per allocation.
  Matrix<double> kernel(n, n_tot);
  for (std::size_t r = 0; r < n; ++r) {
    auto row = kernel_row(area.distances, r, config.beta, config.exclude_self);
    std::copy(row.begin(), row.end(), kernel.row_ptr(r));
  }

  std::vector<std::size_t> active;
  for (std::size_t r = 0; r < n; ++r)
    if (s_out[r] > 0) active.push_back(r);

  FlowMatrix out;
  out.flows = Matrix<std::int64_t>(n, n_tot);
  out.row_labels = area.residence_ids();
  out.col_labels = area.ext_ids();
  out.shape = FlowShape::generated;

  Rng rng = make_rng(config.seed);
  bool warned_underflow = false;

  while (!active.empty()) {
    const std::size_t pick =
        std::uniform_int_distribution<std::size_t>(0, active.size() - 1)(rng);
    const std::size_t origin = active[pick];
    std::size_t dest =
        sample_destination(s_in.data(), kernel.row_ptr(origin), n_tot, rng);
    if (dest == npos) {
      // All weights underflowed (or only the self unit has capacity):
      // assign to the nearest unit that can still absorb a commuter.
      dest = detail::nearest_with_capacity(area.distances, origin, s_in,
                                           config.exclude_self);
      if (dest == npos)
        throw no_capacity_error(
            "generation deadlock: remaining capacity is unreachable from "
            "unit '" +
            area.residence_units[origin].id + "'");
      if (!warned_underflow) {
        config.emit_warning(
            "kernel weights underflowed for unit '" +
            area.residence_units[origin].id +
            "'; falling back to nearest-capacity assignment");
        warned_underflow = true;
      }
    }
    out.flows(origin, dest) += 1;
    --s_in[dest];
    if (--s_out[origin] == 0) {
      active[pick] = active.back();
      active.pop_back();
    }
  }
  return out;
}

struct ReplicaRun {
  std::vector<FlowMatrix> replicas;
  RealFlowMatrix mean;
};

/// Runs config.replicas independent generations with per-replica derived
/// seeds and averages them entrywise. Deterministic regardless of the
/// number of worker threads.
inline ReplicaRun run_replicas(const StudyArea& area,
                               const GenerationConfig& config,
                               unsigned max_threads = 0) {
  if (config.replicas < 1) throw input_error("replicas must be >= 1");
  const std::size_t r_count = static_cast<std::size_t>(config.replicas);
  std::vector<FlowMatrix> replicas(r_count);

  auto run_one = [&](std::size_t r) {
    GenerationConfig c = config;
    c.seed = derive_seed(config.seed, r);
    replicas[r] = generate_network(area, c);
  };

  unsigned threads = max_threads ? max_threads
                                 : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(r_count));
  if (threads <= 1) {
    for (std::size_t r = 0; r < r_count; ++r) run_one(r);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t r = t; r < r_count; r += threads) run_one(r);
      });
    for (auto& th : pool) th.join();
  }

  ReplicaRun result;
  result.mean.flows =
      Matrix<double>(replicas[0].flows.rows(), replicas[0].flows.cols());
  result.mean.row_labels = replicas[0].row_labels;
  result.mean.col_labels = replicas[0].col_labels;
  for (const auto& rep : replicas)
    for (std::size_t k = 0; k < rep.flows.data().size(); ++k)
      result.mean.flows.data()[k] += static_cast<double>(rep.flows.data()[k]);
  for (auto& v : result.mean.flows.data()) v /= static_cast<double>(r_count);
  result.replicas = std::move(replicas);
  return result;
}

}  // namespace commnet
