#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

#include "ood/dataset.hpp"
#include "ood/density_models.hpp"
#include "ood/distributions.hpp"
#include "ood/estimators.hpp"
#include "ood/parallel.hpp"

namespace ood {

/// Average log-likelihood of a model on a data law, split into
/// -KL(data || model) - H[data] plus a Monte Carlo residual:
///   residual = avg_log_likelihood + kl_term + entropy_term.
/// Analytic terms carry std_error 0 and method "analytic".
struct DecompositionLedger {
  Estimate avg_log_likelihood;
  std::optional<Estimate> kl_term;       // absent for empirical datasets
  std::optional<Estimate> entropy_term;  // absent for empirical datasets
  std::optional<double> residual;        // absent when a term is absent or infinite
  std::string data_dist_id;
  std::string model_id;
  std::size_t n = 0;
  std::size_t dim = 0;
  bool support_violation = false;

  bool terms_analytic() const noexcept {
    return kl_term && entropy_term && kl_term->method == "analytic" && entropy_term->method == "analytic";
  }
  /// -avg_log_likelihood / (dim ln 2).
  double bits_per_dim() const;
};

/// Fills the ledger from n fresh draws of data_dist; KL and entropy use closed
/// forms where available and independent Monte Carlo draws otherwise.
/// Throws invalid_argument for compressor proxies (no normalized density).
DecompositionLedger decomposition_ledger(const Distribution& data_dist, const DensityModel& model, std::size_t n,
                                         std::uint64_t seed, const Exec& exec = {});

/// Ledger with only the average log-likelihood, for data without a known law.
DecompositionLedger empirical_ledger(const Dataset& data, const DensityModel& model, const Exec& exec = {});

/// Statistics of Z = log p(Y) - log p(X) for independent X ~ P, Y ~ Q.
struct ContrastStats {
  double mu = 0.0;       // mean_out - mean_in
  double sigma2 = 0.0;   // var_in + var_out
  double mean_in = 0.0;
  double mean_out = 0.0;
  double var_in = 0.0;
  double var_out = 0.0;
  std::optional<double> chebyshev_bound;  // defined iff mu > 0 and sigma2 > 0
  Estimate empirical_p_z_gt_0;            // fraction of pairs with Z > 0, binomial SE
  std::size_t n_pairs = 0;                // pairs retained
  std::size_t excluded = 0;               // pairs dropped for a non-finite log-likelihood

  /// Bound defined but <= 0, so it says nothing.
  bool vacuous() const noexcept { return chebyshev_bound && *chebyshev_bound <= 0.0; }
};

/// 1 - sigma2 / mu^2 when mu > 0, otherwise undefined. Throws for sigma2 <= 0.
std::optional<double> chebyshev_bound(double mu, double sigma2);

/// Draws n_pairs independent pairs X ~ p, Y ~ q and evaluates the model on both.
ContrastStats contrast_stats(const Distribution& p, const Distribution& q, const DensityModel& model,
                             std::size_t n_pairs, std::uint64_t seed, const Exec& exec = {});

/// Pairs row i of `in_data` with row i of `out_data` for i < min(sizes).
ContrastStats contrast_stats(const Dataset& in_data, const Dataset& out_data, const DensityModel& model,
                             const Exec& exec = {});

}  // namespace ood
