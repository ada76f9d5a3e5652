#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ood/dataset.hpp"
#include "ood/density_models.hpp"
#include "ood/distributions.hpp"
#include "ood/parallel.hpp"

namespace ood {

/// Scalar estimate in nats. For Monte Carlo methods std_error is the sample
/// standard deviation over sqrt(n).
struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
  std::string method;
  bool support_violation = false;
};

/// Single-pass mean / variance accumulator (Welford).
class RunningMoments {
 public:
  void push(double x) noexcept {
    ++count_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_ += delta * (x - mean_);
  }
  std::size_t count() const noexcept { return count_; }
  double mean() const noexcept { return mean_; }
  /// Unbiased (n - 1) variance; 0 for fewer than two samples.
  double variance() const noexcept { return count_ > 1 ? m2_ / static_cast<double>(count_ - 1) : 0.0; }
  double std_error() const noexcept {
    return count_ > 0 ? std::sqrt(variance() / static_cast<double>(count_)) : 0.0;
  }

 private:
  std::size_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

/// Mean of `values` with its standard error. Any -inf entry makes the value
/// -inf and sets support_violation.
Estimate mean_estimate(std::span<const double> values, std::string method);

/// log p(x_i) for every row, evaluated block-parallel into index order.
std::vector<double> evaluate_log_density(const DensityModel& model, const Dataset& data, const Exec& exec = {});

/// Cross-entropy -E_Q[log p] = KL(Q || P) + H[Q] from n fresh draws of q.
Estimate mc_cross_entropy(const Distribution& q, const DensityModel& p, std::size_t n, std::uint64_t seed,
                          const Exec& exec = {});
Estimate mc_cross_entropy(const Distribution& q, const Distribution& p, std::size_t n, std::uint64_t seed,
                          const Exec& exec = {});
/// Cross-entropy over all points of a dataset.
Estimate mc_cross_entropy(const Dataset& q, const DensityModel& p, const Exec& exec = {});
Estimate mc_cross_entropy(const Dataset& q, const Distribution& p, const Exec& exec = {});

/// Plug-in entropy: mc_cross_entropy(dist, dist, n, seed).
Estimate mc_entropy(const Distribution& dist, std::size_t n, std::uint64_t seed, const Exec& exec = {});

/// KL(q || p) as the mean of log q(Y) - log p(Y) over n draws from q.
Estimate mc_kl(const Distribution& q, const DensityModel& p, std::size_t n, std::uint64_t seed,
               const Exec& exec = {});
Estimate mc_kl(const Distribution& q, const Distribution& p, std::size_t n, std::uint64_t seed,
               const Exec& exec = {});

struct KnnConfig {
  std::size_t k = 3;
  std::size_t bootstrap = 200;
  std::uint64_t seed = 0;
};

/// Kozachenko-Leonenko k-nearest-neighbour differential entropy with exact
/// brute-force neighbour search. std_error comes from a bootstrap over the
/// per-point log-distance terms. Duplicate points trigger a uniform jitter of
/// 1e-10 times the data scale, noted in the method string.
Estimate knn_entropy(const Dataset& data, const KnnConfig& cfg = {}, const Exec& exec = {});

}  // namespace ood
