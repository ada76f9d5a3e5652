#include "ood/analysis.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "ood/error.hpp"

namespace ood {

namespace {

Estimate analytic_term(double value, std::size_t n) {
  Estimate e;
  e.value = value;
  e.std_error = 0.0;
  e.n = n;
  e.method = "analytic";
  e.support_violation = std::isinf(value);
  return e;
}

}  // namespace

double DecompositionLedger::bits_per_dim() const {
  return -avg_log_likelihood.value / (static_cast<double>(dim) * std::numbers::ln2);
}

DecompositionLedger decomposition_ledger(const Distribution& data_dist, const DensityModel& model, std::size_t n,
                                         std::uint64_t seed, const Exec& exec) {
  require(model.normalized(), "decomposition_ledger: " + model.id() + " is a proxy with no normalized density");
  require(data_dist.dim() == model.dim(), "decomposition_ledger: dimension mismatch (" +
                                              std::to_string(data_dist.dim()) + " vs " + std::to_string(model.dim()) + ")");
  require(data_dist.measure() == model.measure(), "decomposition_ledger: base measures differ");
  require(n >= 2, "decomposition_ledger requires n >= 2");

  DecompositionLedger ledger;
  ledger.data_dist_id = data_dist.describe();
  ledger.model_id = model.id();
  ledger.n = n;
  ledger.dim = data_dist.dim();

  const Dataset draws = sample(data_dist, n, derive_seed(seed, "ledger-avg-ll"), exec);
  ledger.avg_log_likelihood = mean_estimate(evaluate_log_density(model, draws, exec), "monte-carlo");

  std::optional<double> kl;
  if (const auto* law = model.distribution()) kl = try_analytic_kl(data_dist, *law);
  ledger.kl_term = kl ? analytic_term(*kl, n) : mc_kl(data_dist, model, n, derive_seed(seed, "ledger-kl"), exec);

  const auto entropy = try_analytic_entropy(data_dist);
  ledger.entropy_term =
      entropy ? analytic_term(*entropy, n) : mc_entropy(data_dist, n, derive_seed(seed, "ledger-entropy"), exec);

  ledger.support_violation = ledger.avg_log_likelihood.support_violation || ledger.kl_term->support_violation;
  const double sum = ledger.avg_log_likelihood.value + ledger.kl_term->value + ledger.entropy_term->value;
  if (!ledger.support_violation && std::isfinite(sum)) ledger.residual = sum;
  return ledger;
}

DecompositionLedger empirical_ledger(const Dataset& data, const DensityModel& model, const Exec& exec) {
  require(!data.empty(), "empirical_ledger: dataset is empty");
  DecompositionLedger ledger;
  ledger.data_dist_id = data.provenance().description;
  ledger.model_id = model.id();
  ledger.n = data.size();
  ledger.dim = data.dim();
  ledger.avg_log_likelihood = mean_estimate(evaluate_log_density(model, data, exec), "dataset-average");
  ledger.support_violation = ledger.avg_log_likelihood.support_violation;
  return ledger;
}

std::optional<double> chebyshev_bound(double mu, double sigma2) {
  require(std::isfinite(sigma2) && sigma2 > 0.0, "chebyshev_bound requires a finite sigma2 > 0");
  if (!(mu > 0.0)) return std::nullopt;
  return 1.0 - sigma2 / (mu * mu);
}

ContrastStats contrast_stats(const Distribution& p, const Distribution& q, const DensityModel& model,
                             std::size_t n_pairs, std::uint64_t seed, const Exec& exec) {
  require(p.dim() == q.dim(), "contrast_stats: P and Q dimensions differ");
  require(n_pairs >= 2, "contrast_stats requires n_pairs >= 2");
  const Dataset xs = sample(p, n_pairs, derive_seed(seed, "contrast-in"), exec);
  const Dataset ys = sample(q, n_pairs, derive_seed(seed, "contrast-out"), exec);
  return contrast_stats(xs, ys, model, exec);
}

ContrastStats contrast_stats(const Dataset& in_data, const Dataset& out_data, const DensityModel& model,
                             const Exec& exec) {
  require(in_data.dim() == out_data.dim(), "contrast_stats: dataset dimensions differ");
  const std::size_t pairs = std::min(in_data.size(), out_data.size());
  require(pairs >= 2, "contrast_stats requires at least 2 pairs");

  const auto lx = evaluate_log_density(model, in_data.slice(0, pairs), exec);
  const auto ly = evaluate_log_density(model, out_data.slice(0, pairs), exec);

  RunningMoments in_moments;
  RunningMoments out_moments;
  std::size_t positive = 0;
  ContrastStats stats;
  for (std::size_t i = 0; i < pairs; ++i) {
    if (!std::isfinite(lx[i]) || !std::isfinite(ly[i])) {
      ++stats.excluded;
      continue;
    }
    in_moments.push(lx[i]);
    out_moments.push(ly[i]);
    if (ly[i] - lx[i] > 0.0) ++positive;
  }
  stats.n_pairs = in_moments.count();
  if (stats.n_pairs < 2)
    fail(ErrorCode::numerical, "contrast_stats: fewer than 2 pairs with finite log-likelihoods");

  stats.mean_in = in_moments.mean();
  stats.mean_out = out_moments.mean();
  stats.var_in = in_moments.variance();
  stats.var_out = out_moments.variance();
  stats.mu = stats.mean_out - stats.mean_in;
  stats.sigma2 = stats.var_in + stats.var_out;
  if (stats.sigma2 > 0.0) stats.chebyshev_bound = chebyshev_bound(stats.mu, stats.sigma2);

  const double m = static_cast<double>(stats.n_pairs);
  const double p_hat = static_cast<double>(positive) / m;
  stats.empirical_p_z_gt_0.value = p_hat;
  stats.empirical_p_z_gt_0.std_error = std::sqrt(p_hat * (1.0 - p_hat) / m);
  stats.empirical_p_z_gt_0.n = stats.n_pairs;
  stats.empirical_p_z_gt_0.method = "binomial";
  return stats;
}

}  // namespace ood
