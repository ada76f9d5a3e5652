#include "ood/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "ood/error.hpp"

namespace ood {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSumTolerance = 1e-12;
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void require_finite(std::span<const double> values, const char* what) {
  for (double v : values) require(std::isfinite(v), std::string(what) + " must be finite");
}

double log_sum_exp(std::span<const double> terms) {
  const double m = *std::max_element(terms.begin(), terms.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double t : terms) s += std::exp(t - m);
  return m + std::log(s);
}

// Maps a mixture whose components are all identical onto its component.
const Gaussian* as_single_gaussian(const Distribution& d) {
  if (const auto* g = d.get_if<Gaussian>()) return g;
  if (const auto* m = d.get_if<GaussianMixture>())
    if (m->single_distinct_component()) return &m->components.front();
  return nullptr;
}

double gaussian_kl(const Gaussian& p, const Gaussian& q) {
  const auto d = static_cast<double>(p.dim());
  const Eigen::VectorXd diff = q.mean() - p.mean();
  double trace = 0.0;
  double mahal = 0.0;
  if (p.shape() != Gaussian::Shape::full && q.shape() != Gaussian::Shape::full) {
    const Eigen::VectorXd vp = p.variances();
    const Eigen::VectorXd vq = q.variances();
    trace = (vp.array() / vq.array()).sum();
    mahal = (diff.array().square() / vq.array()).sum();
  } else {
    const Eigen::MatrixXd lq = q.cholesky_factor();
    const auto lower = lq.triangularView<Eigen::Lower>();
    trace = lower.solve(p.cholesky_factor()).squaredNorm();
    mahal = lower.solve(diff).squaredNorm();
  }
  return std::max(0.0, 0.5 * (trace + mahal - d + q.log_det() - p.log_det()));
}

double categorical_kl(const CategoricalProduct& p, const CategoricalProduct& q) {
  double total = 0.0;
  for (std::size_t j = 0; j < p.probs.size(); ++j) {
    const auto& pj = p.probs[j];
    const auto& qj = q.probs[j];
    for (std::size_t c = 0; c < pj.size(); ++c) {
      if (pj[c] == 0.0) continue;
      const double qc = c < qj.size() ? qj[c] : 0.0;
      if (qc == 0.0) return kInf;
      total += pj[c] * std::log(pj[c] / qc);
    }
  }
  return std::max(0.0, total);
}

double uniform_kl(const UniformBox& p, const UniformBox& q) {
  for (std::size_t j = 0; j < p.lower.size(); ++j)
    if (p.lower[j] < q.lower[j] || p.upper[j] > q.upper[j]) return kInf;
  return q.log_volume - p.log_volume;
}

void sample_row(const Distribution::Params& params, Rng& rng, std::span<double> out) {
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Gaussian>) {
          p.sample(rng, out);
        } else if constexpr (std::is_same_v<T, GaussianMixture>) {
          const double u = rng.uniform();
          double cumulative = 0.0;
          std::size_t chosen = p.components.size() - 1;
          while (chosen > 0 && p.weights[chosen] == 0.0) --chosen;
          for (std::size_t k = 0; k < p.weights.size(); ++k) {
            cumulative += p.weights[k];
            if (u < cumulative && p.weights[k] > 0.0) {
              chosen = k;
              break;
            }
          }
          p.components[chosen].sample(rng, out);
        } else if constexpr (std::is_same_v<T, UniformBox>) {
          for (std::size_t j = 0; j < out.size(); ++j)
            out[j] = p.lower[j] + (p.upper[j] - p.lower[j]) * rng.uniform();
        } else {
          for (std::size_t j = 0; j < out.size(); ++j) {
            const auto& pj = p.probs[j];
            const double u = rng.uniform();
            double cumulative = 0.0;
            std::size_t code = pj.size() - 1;
            while (code > 0 && pj[code] == 0.0) --code;
            for (std::size_t c = 0; c < pj.size(); ++c) {
              cumulative += pj[c];
              if (u < cumulative && pj[c] > 0.0) {
                code = c;
                break;
              }
            }
            out[j] = static_cast<double>(code);
          }
        }
      },
      params);
}

}  // namespace

// ---------------------------------------------------------------------------
// Gaussian

Gaussian Gaussian::isotropic(std::vector<double> mean, double variance) {
  require(!mean.empty(), "gaussian dimension must be positive");
  require_finite(mean, "gaussian mean");
  require(std::isfinite(variance) && variance > 0.0, "isotropic variance must be positive and finite");
  Gaussian g;
  g.shape_ = Shape::isotropic;
  g.mean_ = to_vector(mean);
  g.var_ = Eigen::VectorXd::Constant(g.mean_.size(), variance);
  g.stddev_ = Eigen::VectorXd::Constant(g.mean_.size(), std::sqrt(variance));
  g.log_det_ = static_cast<double>(mean.size()) * std::log(variance);
  return g;
}

Gaussian Gaussian::diagonal(std::vector<double> mean, std::vector<double> variances) {
  require(!mean.empty(), "gaussian dimension must be positive");
  require(variances.size() == mean.size(), "diagonal gaussian: variance count must equal dim");
  require_finite(mean, "gaussian mean");
  Gaussian g;
  g.shape_ = Shape::diagonal;
  g.mean_ = to_vector(mean);
  g.var_ = to_vector(variances);
  g.stddev_.resize(g.mean_.size());
  g.log_det_ = 0.0;
  for (std::size_t j = 0; j < variances.size(); ++j) {
    require(std::isfinite(variances[j]) && variances[j] > 0.0, "diagonal variances must be positive and finite");
    g.stddev_[static_cast<Eigen::Index>(j)] = std::sqrt(variances[j]);
    g.log_det_ += std::log(variances[j]);
  }
  return g;
}

Gaussian Gaussian::full(std::vector<double> mean, const Eigen::MatrixXd& covariance) {
  require(!mean.empty(), "gaussian dimension must be positive");
  require_finite(mean, "gaussian mean");
  const auto d = static_cast<Eigen::Index>(mean.size());
  require(covariance.rows() == d && covariance.cols() == d, "full gaussian: covariance must be dim x dim");
  require(covariance.allFinite(), "covariance must be finite");
  const double scale = std::max(1.0, covariance.cwiseAbs().maxCoeff());
  require((covariance - covariance.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale,
          "covariance must be symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (llt.info() != Eigen::Success)
    fail(ErrorCode::invalid_argument, "covariance is not positive definite (Cholesky failed)");
  Gaussian g;
  g.shape_ = Shape::full;
  g.mean_ = to_vector(mean);
  g.cov_ = covariance;
  g.chol_ = llt.matrixL();
  g.log_det_ = 2.0 * g.chol_.diagonal().array().log().sum();
  if (!std::isfinite(g.log_det_) || (g.chol_.diagonal().array() <= 0.0).any())
    fail(ErrorCode::invalid_argument, "covariance is not positive definite (degenerate factor)");
  return g;
}

Eigen::VectorXd Gaussian::variances() const {
  if (shape_ == Shape::full) return cov_.diagonal();
  return var_;
}

Eigen::MatrixXd Gaussian::covariance() const {
  if (shape_ == Shape::full) return cov_;
  return var_.asDiagonal();
}

Eigen::MatrixXd Gaussian::cholesky_factor() const {
  if (shape_ == Shape::full) return chol_;
  return stddev_.asDiagonal();
}

double Gaussian::log_density(std::span<const double> x) const {
  const auto d = mean_.size();
  double quad = 0.0;
  if (shape_ == Shape::full) {
    Eigen::VectorXd diff(d);
    for (Eigen::Index j = 0; j < d; ++j) diff[j] = x[static_cast<std::size_t>(j)] - mean_[j];
    chol_.triangularView<Eigen::Lower>().solveInPlace(diff);
    quad = diff.squaredNorm();
  } else {
    for (Eigen::Index j = 0; j < d; ++j) {
      const double z = (x[static_cast<std::size_t>(j)] - mean_[j]) / stddev_[j];
      quad += z * z;
    }
  }
  return -0.5 * (static_cast<double>(d) * kLog2Pi + log_det_ + quad);
}

void Gaussian::sample(Rng& rng, std::span<double> out) const {
  const auto d = mean_.size();
  if (shape_ == Shape::full) {
    Eigen::VectorXd z(d);
    for (Eigen::Index j = 0; j < d; ++j) z[j] = rng.normal();
    const Eigen::VectorXd x = mean_ + chol_.triangularView<Eigen::Lower>() * z;
    for (Eigen::Index j = 0; j < d; ++j) out[static_cast<std::size_t>(j)] = x[j];
  } else {
    for (Eigen::Index j = 0; j < d; ++j) out[static_cast<std::size_t>(j)] = mean_[j] + stddev_[j] * rng.normal();
  }
}

double Gaussian::entropy() const {
  return 0.5 * (static_cast<double>(dim()) * (1.0 + kLog2Pi) + log_det_);
}

bool Gaussian::operator==(const Gaussian& other) const {
  if (dim() != other.dim() || mean_ != other.mean_) return false;
  if (shape_ != Shape::full && other.shape_ != Shape::full) return variances() == other.variances();
  return covariance() == other.covariance();
}

bool GaussianMixture::single_distinct_component() const {
  return std::all_of(components.begin(), components.end(),
                     [&](const Gaussian& g) { return g == components.front(); });
}

// ---------------------------------------------------------------------------
// Distribution

std::string_view to_string(DistributionKind kind) {
  switch (kind) {
    case DistributionKind::isotropic_gaussian: return "isotropic-gaussian";
    case DistributionKind::diagonal_gaussian: return "diagonal-gaussian";
    case DistributionKind::full_gaussian: return "full-gaussian";
    case DistributionKind::gaussian_mixture: return "gaussian-mixture";
    case DistributionKind::uniform_box: return "uniform-box";
    case DistributionKind::categorical_product: return "categorical-product";
  }
  return "unknown";
}

DistributionKind distribution_kind_from_string(std::string_view text) {
  for (auto kind : {DistributionKind::isotropic_gaussian, DistributionKind::diagonal_gaussian,
                    DistributionKind::full_gaussian, DistributionKind::gaussian_mixture,
                    DistributionKind::uniform_box, DistributionKind::categorical_product})
    if (to_string(kind) == text) return kind;
  fail(ErrorCode::invalid_argument, "unknown distribution kind '" + std::string(text) + "'");
}

Distribution Distribution::gaussian(Gaussian g) {
  DistributionKind kind = DistributionKind::full_gaussian;
  if (g.shape() == Gaussian::Shape::isotropic) kind = DistributionKind::isotropic_gaussian;
  if (g.shape() == Gaussian::Shape::diagonal) kind = DistributionKind::diagonal_gaussian;
  const auto d = g.dim();
  return Distribution(kind, d, std::move(g));
}

Distribution Distribution::isotropic_gaussian(std::vector<double> mean, double variance) {
  return gaussian(Gaussian::isotropic(std::move(mean), variance));
}

Distribution Distribution::diagonal_gaussian(std::vector<double> mean, std::vector<double> variances) {
  return gaussian(Gaussian::diagonal(std::move(mean), std::move(variances)));
}

Distribution Distribution::full_gaussian(std::vector<double> mean, const Eigen::MatrixXd& covariance) {
  return gaussian(Gaussian::full(std::move(mean), covariance));
}

Distribution Distribution::gaussian_mixture(std::vector<double> weights, std::vector<Gaussian> components) {
  require(!components.empty(), "mixture needs at least one component");
  require(weights.size() == components.size(), "mixture weight count must equal component count");
  double total = 0.0;
  for (double w : weights) {
    require(std::isfinite(w) && w >= 0.0, "mixture weights must be non-negative");
    total += w;
  }
  require(std::abs(total - 1.0) <= kSumTolerance, "mixture weights must sum to 1");
  const auto d = components.front().dim();
  for (const auto& c : components) require(c.dim() == d, "mixture components must share a dimension");
  GaussianMixture m;
  m.log_weights.reserve(weights.size());
  for (double w : weights) m.log_weights.push_back(w > 0.0 ? std::log(w) : -kInf);
  m.weights = std::move(weights);
  m.components = std::move(components);
  return Distribution(DistributionKind::gaussian_mixture, d, std::move(m));
}

Distribution Distribution::uniform_box(std::vector<double> lower, std::vector<double> upper) {
  require(!lower.empty(), "uniform box dimension must be positive");
  require(lower.size() == upper.size(), "uniform box bounds must have equal length");
  require_finite(lower, "uniform box bounds");
  require_finite(upper, "uniform box bounds");
  UniformBox box;
  for (std::size_t j = 0; j < lower.size(); ++j) {
    require(lower[j] < upper[j], "uniform box requires lower < upper in every coordinate");
    box.log_volume += std::log(upper[j] - lower[j]);
  }
  const auto d = lower.size();
  box.lower = std::move(lower);
  box.upper = std::move(upper);
  return Distribution(DistributionKind::uniform_box, d, std::move(box));
}

Distribution Distribution::categorical_product(std::vector<std::vector<double>> probs) {
  require(!probs.empty(), "categorical product needs at least one site");
  for (const auto& site : probs) {
    require(!site.empty(), "each categorical site needs at least one category");
    double total = 0.0;
    for (double p : site) {
      require(std::isfinite(p) && p >= 0.0, "categorical probabilities must be non-negative");
      total += p;
    }
    require(std::abs(total - 1.0) <= kSumTolerance, "categorical probabilities per site must sum to 1");
  }
  const auto d = probs.size();
  return Distribution(DistributionKind::categorical_product, d, CategoricalProduct{std::move(probs)});
}

std::string Distribution::describe() const {
  std::ostringstream os;
  os << to_string(kind_) << "[d=" << dim_;
  if (const auto* m = get_if<GaussianMixture>()) os << ",k=" << m->components.size();
  os << "]";
  return os.str();
}

// ---------------------------------------------------------------------------
// Operations

double log_density(const Distribution& dist, std::span<const double> x) {
  require(x.size() == dist.dim(), "log_density: observation has dimension " + std::to_string(x.size()) +
                                      ", distribution has " + std::to_string(dist.dim()));
  require_finite(x, "observation coordinates");
  return std::visit(
      [&](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Gaussian>) {
          return p.log_density(x);
        } else if constexpr (std::is_same_v<T, GaussianMixture>) {
          std::vector<double> terms(p.components.size());
          for (std::size_t k = 0; k < terms.size(); ++k)
            terms[k] = p.log_weights[k] + p.components[k].log_density(x);
          return log_sum_exp(terms);
        } else if constexpr (std::is_same_v<T, UniformBox>) {
          for (std::size_t j = 0; j < x.size(); ++j)
            if (x[j] < p.lower[j] || x[j] > p.upper[j]) return -kInf;
          return -p.log_volume;
        } else {
          double total = 0.0;
          for (std::size_t j = 0; j < x.size(); ++j) {
            const double v = x[j];
            if (v < 0.0 || v != std::floor(v) || v >= static_cast<double>(p.probs[j].size())) return -kInf;
            const double pj = p.probs[j][static_cast<std::size_t>(v)];
            if (pj == 0.0) return -kInf;
            total += std::log(pj);
          }
          return total;
        }
      },
      dist.params());
}

Dataset sample(const Distribution& dist, std::size_t n, std::uint64_t seed, const Exec& exec) {
  const std::size_t d = dist.dim();
  std::vector<double> values(n * d);
  for_each_block(block_count(n), exec, [&](std::size_t b) {
    Rng rng(substream_seed(seed, b));
    const std::size_t first = b * kBlockSize;
    const std::size_t last = std::min(n, first + kBlockSize);
    for (std::size_t i = first; i < last; ++i)
      sample_row(dist.params(), rng, std::span<double>(values.data() + i * d, d));
  });
  Provenance prov{"sample(" + dist.describe() + ", n=" + std::to_string(n) + ")", seed,
                  std::string(kGeneratorName)};
  return Dataset(d, dist.measure(), std::move(values), std::move(prov));
}

double analytic_entropy(const Distribution& dist) {
  if (const auto* g = as_single_gaussian(dist)) return g->entropy();
  if (dist.kind() == DistributionKind::gaussian_mixture)
    fail(ErrorCode::unavailable,
         "entropy of a gaussian mixture with several distinct components has no closed form; "
         "use mc_entropy or knn_entropy");
  if (const auto* box = dist.get_if<UniformBox>()) return box->log_volume;
  const auto& cat = *dist.get_if<CategoricalProduct>();
  double h = 0.0;
  for (const auto& site : cat.probs)
    for (double p : site)
      if (p > 0.0) h -= p * std::log(p);
  return h;
}

double analytic_kl(const Distribution& p, const Distribution& q) {
  require(p.dim() == q.dim(), "analytic_kl: dimension mismatch (" + std::to_string(p.dim()) + " vs " +
                                  std::to_string(q.dim()) + ")");
  require(p.measure() == q.measure(), "analytic_kl: base measures differ");
  const Gaussian* gp = as_single_gaussian(p);
  const Gaussian* gq = as_single_gaussian(q);
  if (gp && gq) return gaussian_kl(*gp, *gq);
  const auto* cp = p.get_if<CategoricalProduct>();
  const auto* cq = q.get_if<CategoricalProduct>();
  if (cp && cq) return categorical_kl(*cp, *cq);
  const auto* up = p.get_if<UniformBox>();
  const auto* uq = q.get_if<UniformBox>();
  if (up && uq) return uniform_kl(*up, *uq);
  fail(ErrorCode::unavailable, "no closed-form KL for (" + std::string(to_string(p.kind())) + ", " +
                                   std::string(to_string(q.kind())) + "); use mc_kl");
}

std::optional<double> try_analytic_entropy(const Distribution& dist) {
  try {
    return analytic_entropy(dist);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::unavailable) throw;
    return std::nullopt;
  }
}

std::optional<double> try_analytic_kl(const Distribution& p, const Distribution& q) {
  try {
    return analytic_kl(p, q);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::unavailable) throw;
    return std::nullopt;
  }
}

}  // namespace ood
