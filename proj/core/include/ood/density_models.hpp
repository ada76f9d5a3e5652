#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ood/dataset.hpp"
#include "ood/distributions.hpp"

namespace ood {

enum class ModelKind { exact, gaussian_mle, gmm_em, histogram, pixel_categorical, compressor_proxy };

std::string_view to_string(ModelKind kind);
ModelKind model_kind_from_string(std::string_view text);

struct Interval {
  double lower = 0.0;
  double upper = 1.0;
};

/// Piecewise-constant density on a regular grid, bins stored row-major with
/// the last coordinate varying fastest.
struct HistogramParams {
  std::size_t bins_per_dim = 0;
  std::vector<Interval> range;
  std::vector<double> log_density;  // one entry per bin
  double pseudo_count = 0.5;
};

struct PixelCategoricalParams {
  std::size_t categories = 0;
  double alpha = 1.0;
  std::size_t n_train = 0;
  std::vector<double> log_probs;  // dim x categories, row-major
};

/// A lossless codec from the pinned whitelist: "zlib" (zlib container) or
/// "deflate" (raw deflate stream), level 0-9.
struct CodecSpec {
  std::string identifier = "zlib";
  int level = 9;
};

/// Version string of the linked codec library, pinned into serialized models.
std::string codec_library_version();
/// Compressed length in bytes of `bytes` under `codec`.
std::size_t compressed_length(const CodecSpec& codec, std::span<const std::uint8_t> bytes);

struct FitMeta {
  std::string training_provenance;
  std::uint64_t training_seed = 0;
  std::size_t n_train = 0;
  std::size_t iterations = 0;
  double final_train_log_likelihood = 0.0;
  std::vector<double> trajectory;          // average train log-likelihood per E-step
  std::vector<std::size_t> reseeded_at;    // iterations where an empty component was re-seeded
  bool converged = false;
};

/// A fitted or reference model exposing a single log-density contract.
/// Compressor proxies report pseudo log-densities and are not normalized.
class DensityModel {
 public:
  static DensityModel exact(Distribution dist);
  static DensityModel from_distribution(ModelKind kind, Distribution dist, FitMeta meta);
  static DensityModel from_histogram(std::size_t dim, HistogramParams params, FitMeta meta);
  static DensityModel from_pixel_categorical(std::size_t dim, PixelCategoricalParams params, FitMeta meta);
  /// dim == 0 accepts observations of any dimension.
  static DensityModel from_codec(CodecSpec codec, std::size_t dim);

  ModelKind kind() const noexcept { return kind_; }
  std::size_t dim() const noexcept { return dim_; }
  Measure measure() const noexcept { return measure_; }
  bool normalized() const noexcept { return kind_ != ModelKind::compressor_proxy; }
  const FitMeta& fit_meta() const noexcept { return meta_; }
  std::string id() const;

  /// The law this model defines, for exact, gaussian-mle, gmm-em and
  /// pixel-categorical kinds; null otherwise.
  const Distribution* distribution() const noexcept { return distribution_ ? &*distribution_ : nullptr; }
  const HistogramParams* histogram() const noexcept { return std::get_if<HistogramParams>(&params_); }
  const PixelCategoricalParams* pixel_categorical() const noexcept {
    return std::get_if<PixelCategoricalParams>(&params_);
  }
  const CodecSpec* codec() const noexcept { return std::get_if<CodecSpec>(&params_); }

  double log_density(std::span<const double> x) const;

 private:
  DensityModel(ModelKind kind, std::size_t dim, Measure measure) : kind_(kind), dim_(dim), measure_(measure) {}

  ModelKind kind_;
  std::size_t dim_;
  Measure measure_;
  std::optional<Distribution> distribution_;
  std::variant<std::monostate, HistogramParams, PixelCategoricalParams, CodecSpec> params_;
  FitMeta meta_;
};

/// Log-density (or pseudo log-density) in nats. Throws on dimension mismatch.
double model_log_density(const DensityModel& model, std::span<const double> x);

/// Closed-form entropy of the model's own law when one exists.
std::optional<double> model_entropy(const DensityModel& model);

/// Maximum-likelihood Gaussian: sample mean and population covariance plus
/// ridge * I. Requires n >= 2 and Lebesgue data.
DensityModel fit_gaussian(const Dataset& data, double ridge);

struct EmConfig {
  std::size_t max_iters = 200;
  double tol = 1e-7;
  std::uint64_t seed = 0;
  double ridge = 1e-6;
};

/// Full-covariance Gaussian mixture by EM with k-means++ seeding. Stops when
/// the average train log-likelihood improves by less than cfg.tol or after
/// cfg.max_iters M-steps. A component whose responsibilities vanish is
/// re-seeded at a random data point; k re-seeds in one fit is an error.
DensityModel fit_gmm_em(const Dataset& data, std::size_t k, const EmConfig& cfg);

/// Regular-grid histogram for d <= 3. Empty bins receive a pseudo-count of
/// 0.5; points outside `range` are counted in the nearest edge bin, and
/// evaluation outside the range uses the nearest edge bin as well.
DensityModel fit_histogram(const Dataset& data, std::size_t bins_per_dim, std::vector<Interval> range);

/// Independent per-site categorical with probabilities (count + alpha) / (n + K alpha).
DensityModel fit_pixel_categorical(const Dataset& data, double alpha, std::size_t categories);

/// Compression-based reference: log r(y) = -(compressed bits of y) * ln 2,
/// where y's coordinates are byte codes in [0, 255].
DensityModel compressor_model(const CodecSpec& codec, std::size_t dim = 0);

}  // namespace ood
