#include "ood/density_models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "ood/error.hpp"

namespace ood {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_dim(const DensityModel& model, std::size_t got) {
  if (model.dim() != 0)
    require(got == model.dim(), "model_log_density: observation has dimension " + std::to_string(got) +
                                    ", model " + model.id() + " expects " + std::to_string(model.dim()));
}

struct Moments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;  // population convention, before ridge
  double total_weight = 0.0;
};

// Weighted mean and covariance. fit_gaussian and the EM M-step share this so a
// one-component mixture reproduces the Gaussian fit bit for bit.
Moments weighted_moments(const Dataset& data, std::span<const double> weights) {
  const auto d = static_cast<Eigen::Index>(data.dim());
  Moments m;
  m.mean = Eigen::VectorXd::Zero(d);
  m.covariance = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = data.row(i);
    m.total_weight += weights[i];
    for (Eigen::Index a = 0; a < d; ++a) m.mean[a] += weights[i] * x[static_cast<std::size_t>(a)];
  }
  if (m.total_weight <= 0.0) return m;
  m.mean /= m.total_weight;
  Eigen::VectorXd diff(d);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = data.row(i);
    for (Eigen::Index a = 0; a < d; ++a) diff[a] = x[static_cast<std::size_t>(a)] - m.mean[a];
    for (Eigen::Index a = 0; a < d; ++a)
      for (Eigen::Index b = a; b < d; ++b) m.covariance(a, b) += weights[i] * diff[a] * diff[b];
  }
  for (Eigen::Index a = 0; a < d; ++a)
    for (Eigen::Index b = a; b < d; ++b) {
      m.covariance(a, b) /= m.total_weight;
      m.covariance(b, a) = m.covariance(a, b);
    }
  return m;
}

Gaussian gaussian_from_moments(const Moments& m, double ridge) {
  Eigen::MatrixXd cov = m.covariance;
  cov.diagonal().array() += ridge;
  std::vector<double> mean(m.mean.data(), m.mean.data() + m.mean.size());
  try {
    return Gaussian::full(std::move(mean), cov);
  } catch (const Error&) {
    std::ostringstream os;
    os << "fitted covariance is not positive definite with ridge=" << ridge << "; use a larger ridge";
    fail(ErrorCode::numerical, os.str());
  }
}

void require_lebesgue(const Dataset& data, const char* op) {
  require(data.measure() == Measure::lebesgue, std::string(op) + " requires Lebesgue (real-valued) data");
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double t = a[j] - b[j];
    s += t * t;
  }
  return s;
}

std::vector<std::size_t> kmeanspp_centers(const Dataset& data, std::size_t k, Rng& rng) {
  const std::size_t n = data.size();
  std::vector<std::size_t> centers{static_cast<std::size_t>(rng.below(n))};
  std::vector<double> nearest(n, kInf);
  while (centers.size() < k) {
    const auto newest = data.row(centers.back());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(data.row(i), newest));
      total += nearest[i];
    }
    std::size_t chosen = static_cast<std::size_t>(rng.below(n));
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double cumulative = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        cumulative += nearest[i];
        if (target < cumulative && nearest[i] > 0.0) {
          chosen = i;
          break;
        }
      }
    }
    centers.push_back(chosen);
  }
  return centers;
}

double log_sum_exp(std::span<const double> terms) {
  const double m = *std::max_element(terms.begin(), terms.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double t : terms) s += std::exp(t - m);
  return m + std::log(s);
}

std::size_t histogram_cell(const HistogramParams& h, std::span<const double> x) {
  std::size_t cell = 0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const auto& r = h.range[j];
    const double position = (x[j] - r.lower) / (r.upper - r.lower) * static_cast<double>(h.bins_per_dim);
    const double clamped = std::clamp(std::floor(position), 0.0, static_cast<double>(h.bins_per_dim - 1));
    cell = cell * h.bins_per_dim + static_cast<std::size_t>(clamped);
  }
  return cell;
}

std::string format_double(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::exact: return "exact";
    case ModelKind::gaussian_mle: return "gaussian-mle";
    case ModelKind::gmm_em: return "gmm-em";
    case ModelKind::histogram: return "histogram";
    case ModelKind::pixel_categorical: return "pixel-categorical";
    case ModelKind::compressor_proxy: return "compressor-proxy";
  }
  return "unknown";
}

ModelKind model_kind_from_string(std::string_view text) {
  for (auto kind : {ModelKind::exact, ModelKind::gaussian_mle, ModelKind::gmm_em, ModelKind::histogram,
                    ModelKind::pixel_categorical, ModelKind::compressor_proxy})
    if (to_string(kind) == text) return kind;
  fail(ErrorCode::invalid_argument, "unknown model kind '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// DensityModel

DensityModel DensityModel::exact(Distribution dist) {
  return from_distribution(ModelKind::exact, std::move(dist), FitMeta{});
}

DensityModel DensityModel::from_distribution(ModelKind kind, Distribution dist, FitMeta meta) {
  require(kind == ModelKind::exact || kind == ModelKind::gaussian_mle || kind == ModelKind::gmm_em,
          "from_distribution: kind must be exact, gaussian-mle or gmm-em");
  DensityModel model(kind, dist.dim(), dist.measure());
  model.distribution_ = std::move(dist);
  model.meta_ = std::move(meta);
  return model;
}

DensityModel DensityModel::from_histogram(std::size_t dim, HistogramParams params, FitMeta meta) {
  require(dim >= 1 && dim <= 3, "histogram models support 1 <= d <= 3");
  require(params.bins_per_dim > 0, "histogram bins_per_dim must be positive");
  require(params.range.size() == dim, "histogram range must have one interval per dimension");
  std::size_t cells = 1;
  for (std::size_t j = 0; j < dim; ++j) cells *= params.bins_per_dim;
  require(params.log_density.size() == cells, "histogram bin table has the wrong size");
  DensityModel model(ModelKind::histogram, dim, Measure::lebesgue);
  model.params_ = std::move(params);
  model.meta_ = std::move(meta);
  return model;
}

DensityModel DensityModel::from_pixel_categorical(std::size_t dim, PixelCategoricalParams params, FitMeta meta) {
  require(dim > 0 && params.categories > 0, "pixel-categorical needs positive dim and categories");
  require(params.log_probs.size() == dim * params.categories, "pixel-categorical table has the wrong size");
  std::vector<std::vector<double>> probs(dim, std::vector<double>(params.categories));
  for (std::size_t j = 0; j < dim; ++j) {
    double total = 0.0;
    for (std::size_t c = 0; c < params.categories; ++c) {
      probs[j][c] = std::exp(params.log_probs[j * params.categories + c]);
      total += probs[j][c];
    }
    // Renormalize away the rounding of exp(log p).
    for (auto& p : probs[j]) p /= total;
  }
  DensityModel model(ModelKind::pixel_categorical, dim, Measure::counting);
  model.distribution_ = Distribution::categorical_product(std::move(probs));
  model.params_ = std::move(params);
  model.meta_ = std::move(meta);
  return model;
}

DensityModel DensityModel::from_codec(CodecSpec codec, std::size_t dim) {
  // Validates the identifier and level.
  const std::uint8_t probe = 0;
  compressed_length(codec, std::span<const std::uint8_t>(&probe, 1));
  DensityModel model(ModelKind::compressor_proxy, dim, Measure::counting);
  model.params_ = std::move(codec);
  return model;
}

std::string DensityModel::id() const {
  std::ostringstream os;
  os << to_string(kind_);
  switch (kind_) {
    case ModelKind::exact:
      os << "(" << distribution_->describe() << ")";
      break;
    case ModelKind::gaussian_mle:
      os << "[d=" << dim_ << "]";
      break;
    case ModelKind::gmm_em:
      os << "[d=" << dim_ << ",k=" << distribution_->get_if<GaussianMixture>()->components.size() << "]";
      break;
    case ModelKind::histogram:
      os << "[d=" << dim_ << ",bins=" << histogram()->bins_per_dim << "]";
      break;
    case ModelKind::pixel_categorical:
      os << "[d=" << dim_ << ",K=" << pixel_categorical()->categories
         << ",alpha=" << format_double(pixel_categorical()->alpha) << "]";
      break;
    case ModelKind::compressor_proxy:
      os << "[" << codec()->identifier << ":" << codec()->level << "]";
      break;
  }
  return os.str();
}

double DensityModel::log_density(std::span<const double> x) const {
  require_dim(*this, x.size());
  for (double v : x) require(std::isfinite(v), "observation coordinates must be finite");
  switch (kind_) {
    case ModelKind::exact:
    case ModelKind::gaussian_mle:
    case ModelKind::gmm_em:
      return ood::log_density(*distribution_, x);
    case ModelKind::histogram:
      return histogram()->log_density[histogram_cell(*histogram(), x)];
    case ModelKind::pixel_categorical: {
      const auto& p = *pixel_categorical();
      double total = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) {
        const double v = x[j];
        if (v < 0.0 || v != std::floor(v) || v >= static_cast<double>(p.categories)) return -kInf;
        total += p.log_probs[j * p.categories + static_cast<std::size_t>(v)];
      }
      return total;
    }
    case ModelKind::compressor_proxy: {
      std::vector<std::uint8_t> bytes(x.size());
      for (std::size_t j = 0; j < x.size(); ++j) {
        require(x[j] >= 0.0 && x[j] <= 255.0 && x[j] == std::floor(x[j]),
                "compressor proxy requires byte-valued observations in [0, 255]");
        bytes[j] = static_cast<std::uint8_t>(x[j]);
      }
      const double bits = 8.0 * static_cast<double>(compressed_length(*codec(), bytes));
      return -bits * std::numbers::ln2;
    }
  }
  return -kInf;
}

double model_log_density(const DensityModel& model, std::span<const double> x) { return model.log_density(x); }

std::optional<double> model_entropy(const DensityModel& model) {
  if (const auto* dist = model.distribution()) return try_analytic_entropy(*dist);
  if (const auto* h = model.histogram()) {
    double cell_volume = 1.0;
    for (const auto& r : h->range) cell_volume *= (r.upper - r.lower) / static_cast<double>(h->bins_per_dim);
    double entropy = 0.0;
    for (double lp : h->log_density) entropy -= std::exp(lp) * cell_volume * lp;
    return entropy;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Fitting

DensityModel fit_gaussian(const Dataset& data, double ridge) {
  require_lebesgue(data, "fit_gaussian");
  require(data.size() >= 2, "fit_gaussian requires at least 2 points");
  require(std::isfinite(ridge) && ridge >= 0.0, "ridge must be a finite non-negative number");
  const std::vector<double> ones(data.size(), 1.0);
  const Moments m = weighted_moments(data, ones);
  FitMeta meta;
  meta.training_provenance = data.provenance().description;
  meta.training_seed = data.provenance().seed;
  meta.n_train = data.size();
  meta.iterations = 1;
  meta.converged = true;
  auto dist = Distribution::gaussian(gaussian_from_moments(m, ridge));
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) total += log_density(dist, data.row(i));
  meta.final_train_log_likelihood = total / static_cast<double>(data.size());
  meta.trajectory = {meta.final_train_log_likelihood};
  return DensityModel::from_distribution(ModelKind::gaussian_mle, std::move(dist), std::move(meta));
}

DensityModel fit_gmm_em(const Dataset& data, std::size_t k, const EmConfig& cfg) {
  require_lebesgue(data, "fit_gmm_em");
  require(k >= 1, "fit_gmm_em requires k >= 1");
  require(data.size() >= k, "fit_gmm_em requires n >= k (n=" + std::to_string(data.size()) +
                                ", k=" + std::to_string(k) + ")");
  require(std::isfinite(cfg.ridge) && cfg.ridge >= 0.0, "ridge must be a finite non-negative number");
  require(cfg.tol >= 0.0, "tol must be non-negative");

  const std::size_t n = data.size();
  Rng rng(cfg.seed);
  const std::vector<double> ones(n, 1.0);
  const Moments overall = weighted_moments(data, ones);

  auto seeded_component = [&](std::size_t index) {
    const auto r = data.row(index);
    Moments m = overall;
    m.mean = Eigen::Map<const Eigen::VectorXd>(r.data(), static_cast<Eigen::Index>(r.size()));
    return gaussian_from_moments(m, cfg.ridge > 0.0 ? cfg.ridge : 1e-12);
  };

  std::vector<Gaussian> components;
  for (std::size_t c : kmeanspp_centers(data, k, rng)) components.push_back(seeded_component(c));
  std::vector<double> weights(k, 1.0 / static_cast<double>(k));

  std::vector<double> resp(n * k);
  std::vector<double> terms(k);
  auto e_step = [&] {
    std::vector<double> log_w(k);
    for (std::size_t c = 0; c < k; ++c) log_w[c] = weights[c] > 0.0 ? std::log(weights[c]) : -kInf;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = data.row(i);
      for (std::size_t c = 0; c < k; ++c) terms[c] = log_w[c] + components[c].log_density(x);
      const double lse = log_sum_exp(terms);
      for (std::size_t c = 0; c < k; ++c) resp[i * k + c] = std::exp(terms[c] - lse);
      total += lse;
    }
    return total / static_cast<double>(n);
  };

  FitMeta meta;
  meta.training_provenance = data.provenance().description;
  meta.training_seed = data.provenance().seed;
  meta.n_train = n;

  double previous = e_step();
  meta.trajectory.push_back(previous);
  std::size_t reseeds = 0;
  std::vector<double> column(n);
  const double empty_threshold = 1e-10 * static_cast<double>(n);

  for (std::size_t iter = 1; iter <= cfg.max_iters; ++iter) {
    bool reseeded = false;
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t i = 0; i < n; ++i) column[i] = resp[i * k + c];
      const Moments m = weighted_moments(data, column);
      if (m.total_weight <= empty_threshold) {
        if (++reseeds >= k)
          fail(ErrorCode::numerical, "fit_gmm_em: components collapsed " + std::to_string(reseeds) +
                                         " times; reduce k or increase ridge");
        components[c] = seeded_component(static_cast<std::size_t>(rng.below(n)));
        weights[c] = 1.0 / static_cast<double>(k);
        reseeded = true;
        continue;
      }
      components[c] = gaussian_from_moments(m, cfg.ridge);
      weights[c] = m.total_weight / static_cast<double>(n);
    }
    if (reseeded) {
      double total = 0.0;
      for (double w : weights) total += w;
      for (double& w : weights) w /= total;
      meta.reseeded_at.push_back(iter);
    }

    const double current = e_step();
    meta.trajectory.push_back(current);
    meta.iterations = iter;
    if (!reseeded && current - previous < cfg.tol) {
      meta.converged = true;
      break;
    }
    previous = current;
  }
  meta.final_train_log_likelihood = meta.trajectory.back();

  // Weights must sum to 1 within the mixture tolerance.
  double total = 0.0;
  for (double w : weights) total += w;
  for (double& w : weights) w /= total;
  auto dist = Distribution::gaussian_mixture(std::move(weights), std::move(components));
  return DensityModel::from_distribution(ModelKind::gmm_em, std::move(dist), std::move(meta));
}

DensityModel fit_histogram(const Dataset& data, std::size_t bins_per_dim, std::vector<Interval> range) {
  require_lebesgue(data, "fit_histogram");
  require(data.dim() <= 3, "fit_histogram supports d <= 3 (got d=" + std::to_string(data.dim()) + ")");
  require(bins_per_dim > 0, "fit_histogram: bins_per_dim must be positive");
  require(range.size() == data.dim(), "fit_histogram: range must have one interval per dimension");
  for (const auto& r : range)
    require(std::isfinite(r.lower) && std::isfinite(r.upper) && r.lower < r.upper,
            "fit_histogram: each range needs lower < upper");

  const std::size_t d = data.dim();
  std::size_t cells = 1;
  for (std::size_t j = 0; j < d; ++j) cells *= bins_per_dim;

  HistogramParams params;
  params.bins_per_dim = bins_per_dim;
  params.range = std::move(range);
  params.log_density.assign(cells, 0.0);
  std::vector<double> counts(cells, 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) counts[histogram_cell(params, data.row(i))] += 1.0;

  double total = 0.0;
  for (double& c : counts) {
    if (c == 0.0) c = params.pseudo_count;
    total += c;
  }
  double cell_volume = 1.0;
  for (const auto& r : params.range) cell_volume *= (r.upper - r.lower) / static_cast<double>(bins_per_dim);
  for (std::size_t c = 0; c < cells; ++c) params.log_density[c] = std::log(counts[c] / (total * cell_volume));

  FitMeta meta;
  meta.training_provenance = data.provenance().description;
  meta.training_seed = data.provenance().seed;
  meta.n_train = data.size();
  meta.iterations = 1;
  meta.converged = true;
  if (!data.empty()) {
    double ll = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) ll += params.log_density[histogram_cell(params, data.row(i))];
    meta.final_train_log_likelihood = ll / static_cast<double>(data.size());
    meta.trajectory = {meta.final_train_log_likelihood};
  }
  return DensityModel::from_histogram(d, std::move(params), std::move(meta));
}

DensityModel fit_pixel_categorical(const Dataset& data, double alpha, std::size_t categories) {
  require(data.measure() == Measure::counting, "fit_pixel_categorical requires counting-measure data");
  require(std::isfinite(alpha) && alpha > 0.0, "fit_pixel_categorical: alpha must be positive");
  require(categories > 0, "fit_pixel_categorical: categories must be positive");
  const std::size_t d = data.dim();
  const std::size_t n = data.size();
  std::vector<double> counts(d * categories, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = data.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      require(x[j] < static_cast<double>(categories),
              "fit_pixel_categorical: value " + format_double(x[j]) + " outside [0, " +
                  std::to_string(categories - 1) + "]");
      counts[j * categories + static_cast<std::size_t>(x[j])] += 1.0;
    }
  }
  PixelCategoricalParams params;
  params.categories = categories;
  params.alpha = alpha;
  params.n_train = n;
  params.log_probs.resize(counts.size());
  const double denom = static_cast<double>(n) + static_cast<double>(categories) * alpha;
  for (std::size_t c = 0; c < counts.size(); ++c) params.log_probs[c] = std::log((counts[c] + alpha) / denom);

  FitMeta meta;
  meta.training_provenance = data.provenance().description;
  meta.training_seed = data.provenance().seed;
  meta.n_train = n;
  meta.iterations = 1;
  meta.converged = true;
  if (n > 0) {
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = data.row(i);
      for (std::size_t j = 0; j < d; ++j) ll += params.log_probs[j * categories + static_cast<std::size_t>(x[j])];
    }
    meta.final_train_log_likelihood = ll / static_cast<double>(n);
    meta.trajectory = {meta.final_train_log_likelihood};
  }
  return DensityModel::from_pixel_categorical(d, std::move(params), std::move(meta));
}

DensityModel compressor_model(const CodecSpec& codec, std::size_t dim) { return DensityModel::from_codec(codec, dim); }

}  // namespace ood
