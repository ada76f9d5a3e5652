#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ood/dataset.hpp"
#include "ood/parallel.hpp"
#include "ood/rng.hpp"

namespace ood {

/// Multivariate normal. Isotropic and diagonal shapes keep per-coordinate
/// standard deviations; the full shape keeps the lower Cholesky factor, and
/// log-determinants always come from the factor diagonal.
class Gaussian {
 public:
  enum class Shape { isotropic, diagonal, full };

  static Gaussian isotropic(std::vector<double> mean, double variance);
  static Gaussian diagonal(std::vector<double> mean, std::vector<double> variances);
  /// Throws invalid_argument unless `covariance` is symmetric positive definite.
  static Gaussian full(std::vector<double> mean, const Eigen::MatrixXd& covariance);

  std::size_t dim() const noexcept { return static_cast<std::size_t>(mean_.size()); }
  Shape shape() const noexcept { return shape_; }
  const Eigen::VectorXd& mean() const noexcept { return mean_; }
  /// Per-coordinate variances (the covariance diagonal for every shape).
  Eigen::VectorXd variances() const;
  Eigen::MatrixXd covariance() const;
  /// Dense lower-triangular L with covariance = L L^T.
  Eigen::MatrixXd cholesky_factor() const;
  double log_det() const noexcept { return log_det_; }

  /// Unchecked evaluation; callers validate dimension.
  double log_density(std::span<const double> x) const;
  void sample(Rng& rng, std::span<double> out) const;
  double entropy() const;

  bool operator==(const Gaussian& other) const;

 private:
  Gaussian() = default;

  Shape shape_ = Shape::isotropic;
  Eigen::VectorXd mean_;
  Eigen::VectorXd var_;     // isotropic / diagonal, as given
  Eigen::VectorXd stddev_;  // isotropic / diagonal
  Eigen::MatrixXd cov_;     // full, as given
  Eigen::MatrixXd chol_;    // full
  double log_det_ = 0.0;
};

struct GaussianMixture {
  std::vector<double> weights;
  std::vector<double> log_weights;
  std::vector<Gaussian> components;

  /// True when every component is identical, so the mixture is one Gaussian.
  bool single_distinct_component() const;
};

struct UniformBox {
  std::vector<double> lower;
  std::vector<double> upper;
  double log_volume = 0.0;
};

/// Independent categorical per site; site j takes codes [0, probs[j].size()).
struct CategoricalProduct {
  std::vector<std::vector<double>> probs;
};

enum class DistributionKind {
  isotropic_gaussian,
  diagonal_gaussian,
  full_gaussian,
  gaussian_mixture,
  uniform_box,
  categorical_product,
};

std::string_view to_string(DistributionKind kind);
DistributionKind distribution_kind_from_string(std::string_view text);

/// Immutable ground-truth law with exact sampling and log-density.
class Distribution {
 public:
  using Params = std::variant<Gaussian, GaussianMixture, UniformBox, CategoricalProduct>;

  static Distribution gaussian(Gaussian g);
  static Distribution isotropic_gaussian(std::vector<double> mean, double variance);
  static Distribution diagonal_gaussian(std::vector<double> mean, std::vector<double> variances);
  static Distribution full_gaussian(std::vector<double> mean, const Eigen::MatrixXd& covariance);
  static Distribution gaussian_mixture(std::vector<double> weights, std::vector<Gaussian> components);
  static Distribution uniform_box(std::vector<double> lower, std::vector<double> upper);
  static Distribution categorical_product(std::vector<std::vector<double>> probs);

  DistributionKind kind() const noexcept { return kind_; }
  std::size_t dim() const noexcept { return dim_; }
  Measure measure() const noexcept {
    return kind_ == DistributionKind::categorical_product ? Measure::counting : Measure::lebesgue;
  }
  /// Short human-readable identifier used in reports, e.g. "isotropic-gaussian[d=16]".
  std::string describe() const;

  const Params& params() const noexcept { return params_; }
  template <class T>
  const T* get_if() const noexcept {
    return std::get_if<T>(&params_);
  }

 private:
  Distribution(DistributionKind kind, std::size_t dim, Params params)
      : kind_(kind), dim_(dim), params_(std::move(params)) {}

  DistributionKind kind_;
  std::size_t dim_;
  Params params_;
};

/// Log-density in nats w.r.t. dist.measure(); -inf outside the support.
/// Throws invalid_argument on dimension mismatch or non-finite coordinates.
double log_density(const Distribution& dist, std::span<const double> x);

/// n i.i.d. draws. Rows are generated in blocks of kBlockSize, block b from
/// substream_seed(seed, b), so the output is independent of exec.workers.
Dataset sample(const Distribution& dist, std::size_t n, std::uint64_t seed, const Exec& exec = {});

/// Differential (Lebesgue) or Shannon (counting) entropy in nats.
/// Throws unavailable for mixtures with more than one distinct component.
double analytic_entropy(const Distribution& dist);

/// KL(p || q) in nats for Gaussian pairs, categorical-product pairs and
/// uniform boxes; +inf when supp(p) is not contained in supp(q).
/// Throws unavailable for other pairs, invalid_argument on dim/measure mismatch.
double analytic_kl(const Distribution& p, const Distribution& q);

std::optional<double> try_analytic_entropy(const Distribution& dist);
std::optional<double> try_analytic_kl(const Distribution& p, const Distribution& q);

}  // namespace ood
