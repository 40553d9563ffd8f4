#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "commnet/calibration.hpp"
#include "commnet/core.hpp"
#include "commnet/generator.hpp"
#include "commnet/rng.hpp"
#include "commnet/validation.hpp"

namespace commnet {

struct CaseStudySummary {
  std::string case_id;
  double mean_area_km2 = 0.0;
  double beta_calibrated = 0.0;  // 1/m
  double cpc_calibrated = 0.0;
};

/// beta = alpha * mean_area^(-nu), fitted by OLS in log-log space.
struct PowerLawFit {
  double alpha = 0.0;  // 1/m at mean_area = 1 km^2
  double nu = 0.0;
  double adj_r2 = 0.0;
  int n_points = 0;
};

inline PowerLawFit fit_power_law(
    const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 3)
    throw input_error("fit_power_law needs at least 3 points");
  const auto n = static_cast<double>(points.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (auto [area, beta] : points) {
    if (!(area > 0.0) || !(beta > 0.0))
      throw input_error("fit_power_law: inputs must be positive");
    const double x = std::log(area), y = std::log(beta);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    syy += y * y;
  }
  const double sxx_c = sxx - sx * sx / n;
  const double sxy_c = sxy - sx * sy / n;
  const double syy_c = syy - sy * sy / n;
  if (sxx_c <= 0.0)
    throw input_error("fit_power_law: all mean areas are equal");

  const double slope = sxy_c / sxx_c;
  const double intercept = (sy - slope * sx) / n;
  PowerLawFit fit;
  fit.nu = -slope;
  fit.alpha = std::exp(intercept);
  fit.n_points = static_cast<int>(points.size());
  const double r2 = syy_c > 0.0 ? (sxy_c * sxy_c) / (sxx_c * syy_c) : 1.0;
  fit.adj_r2 = 1.0 - (1.0 - r2) * (n - 1.0) / (n - 2.0);
  return fit;
}

inline double predict_beta(double mean_area_km2, const PowerLawFit& fit) {
  if (!(mean_area_km2 > 0.0))
    throw input_error("predict_beta: mean area must be positive");
  return fit.alpha * std::pow(mean_area_km2, -fit.nu);
}

struct CaseCrossValidation {
  std::string case_id;
  std::vector<double> predicted_betas;  // sorted ascending
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};

struct CrossValidationResult {
  std::vector<CaseCrossValidation> cases;  // same order as the input
  int repeats = 0;
  int skipped_repeats = 0;
};

/// Repeated random train/test splits: fit the power law on the training
/// cases and predict beta for each test case. Per-case prediction
/// multisets are kept (sorted) so downstream CPC evaluation can sample
/// them.
inline CrossValidationResult cross_validate(
    const std::vector<CaseStudySummary>& summaries, int train_size = 53,
    int repeats = 10000, std::uint64_t seed = 0,
    const std::function<void(const std::string&)>& warn = {}) {
  const std::size_t count = summaries.size();
  if (train_size <= 0 || static_cast<std::size_t>(train_size) >= count)
    throw input_error("train_size must be in [1, cases)");
  if (repeats < 1) throw input_error("repeats must be >= 1");

  CrossValidationResult result;
  result.repeats = repeats;
  result.cases.resize(count);
  for (std::size_t i = 0; i < count; ++i)
    result.cases[i].case_id = summaries[i].case_id;

  std::vector<std::size_t> order(count);
  for (int rep = 0; rep < repeats; ++rep) {
    Rng rng = make_rng(derive_seed(seed, static_cast<std::uint64_t>(rep)));
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<std::pair<double, double>> train;
    train.reserve(static_cast<std::size_t>(train_size));
    for (int t = 0; t < train_size; ++t) {
      const auto& s = summaries[order[t]];
      train.emplace_back(s.mean_area_km2, s.beta_calibrated);
    }
    if (train.size() < 3) {
      ++result.skipped_repeats;
      if (warn) warn("cross_validate: repeat skipped, fewer than 3 training points");
      continue;
    }
    const PowerLawFit fit = fit_power_law(train);
    for (std::size_t t = static_cast<std::size_t>(train_size); t < count; ++t) {
      const std::size_t idx = order[t];
      result.cases[idx].predicted_betas.push_back(
          predict_beta(summaries[idx].mean_area_km2, fit));
    }
  }

  for (auto& c : result.cases) {
    std::sort(c.predicted_betas.begin(), c.predicted_betas.end());
    if (!c.predicted_betas.empty()) {
      c.min = c.predicted_betas.front();
      c.max = c.predicted_betas.back();
      c.mean = std::accumulate(c.predicted_betas.begin(),
                               c.predicted_betas.end(), 0.0) /
               static_cast<double>(c.predicted_betas.size());
    }
  }
  return result;
}

struct EstimateCpc {
  double beta = 0.0;
  double mean_cpc = 0.0;
  double min_cpc = 0.0;
  double max_cpc = 0.0;
};

/// CPC of networks generated with externally estimated beta values
/// against the observed network, aggregated over replicas per estimate.
inline std::vector<EstimateCpc> evaluate_estimated_beta(
    const StudyArea& area, const FlowMatrix& observed,
    const std::vector<double>& beta_estimates, int replicas = 10,
    std::uint64_t seed = 0, bool exclude_self = true) {
  if (beta_estimates.empty()) throw input_error("no beta estimates given");
  const auto s_in = area.s_in_vector();
  const auto s_out = area.s_out_vector();
  const FlowMatrix obs_table = build_comparison_table(observed, s_in, s_out);

  std::vector<EstimateCpc> out;
  out.reserve(beta_estimates.size());
  for (std::size_t e = 0; e < beta_estimates.size(); ++e) {
    GenerationConfig cfg;
    cfg.beta = beta_estimates[e];
    cfg.seed = derive_seed(seed, e);
    cfg.replicas = replicas;
    cfg.exclude_self = exclude_self;
    const ReplicaRun run = run_replicas(area, cfg);
    EstimateCpc agg;
    agg.beta = beta_estimates[e];
    agg.min_cpc = 1.0;
    for (const auto& rep : run.replicas) {
      const double c = cpc(obs_table, build_comparison_table(rep, s_in, s_out));
      agg.mean_cpc += c;
      agg.min_cpc = std::min(agg.min_cpc, c);
      agg.max_cpc = std::max(agg.max_cpc, c);
    }
    agg.mean_cpc /= static_cast<double>(run.replicas.size());
    out.push_back(agg);
  }
  return out;
}

}  // namespace commnet
