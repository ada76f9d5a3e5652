#include "ood/estimators.hpp"

#include <algorithm>
#include <numeric>
#include <limits>
#include <sstream>

#include "ood/error.hpp"
#include "ood/special.hpp"

namespace ood {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_same_dim(std::size_t a, std::size_t b, const char* op) {
  require(a == b, std::string(op) + ": dimension mismatch (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
}

Estimate negate(Estimate e) {
  e.value = -e.value;
  return e;
}

// k smallest squared distances from row i to every other row.
double kth_neighbour_sq(const Dataset& data, std::size_t i, std::size_t k, std::vector<double>& best) {
  const std::size_t n = data.size();
  const std::size_t d = data.dim();
  const double* base = data.values().data();
  const double* xi = base + i * d;
  best.assign(k, kInf);
  for (std::size_t j = 0; j < n; ++j) {
    if (j == i) continue;
    const double* xj = base + j * d;
    double s = 0.0;
    for (std::size_t a = 0; a < d; ++a) {
      const double t = xi[a] - xj[a];
      s += t * t;
    }
    if (s < best[k - 1]) {
      std::size_t pos = k - 1;
      while (pos > 0 && best[pos - 1] > s) {
        best[pos] = best[pos - 1];
        --pos;
      }
      best[pos] = s;
    }
  }
  return best[k - 1];
}

std::vector<double> log_knn_distances(const Dataset& data, std::size_t k, const Exec& exec) {
  const std::size_t n = data.size();
  std::vector<double> log_eps(n);
  constexpr std::size_t kQueryBlock = 256;
  const std::size_t blocks = (n + kQueryBlock - 1) / kQueryBlock;
  for_each_block(blocks, exec, [&](std::size_t b) {
    std::vector<double> best;
    const std::size_t last = std::min(n, (b + 1) * kQueryBlock);
    for (std::size_t i = b * kQueryBlock; i < last; ++i)
      log_eps[i] = 0.5 * std::log(kth_neighbour_sq(data, i, k, best));
  });
  return log_eps;
}

}  // namespace

Estimate mean_estimate(std::span<const double> values, std::string method) {
  Estimate e;
  e.n = values.size();
  e.method = std::move(method);
  RunningMoments moments;
  for (double v : values) {
    if (v == -kInf) {
      e.support_violation = true;
      continue;
    }
    moments.push(v);
  }
  if (e.support_violation) {
    e.value = -kInf;
    e.std_error = kInf;
    return e;
  }
  e.value = moments.mean();
  e.std_error = moments.std_error();
  return e;
}

std::vector<double> evaluate_log_density(const DensityModel& model, const Dataset& data, const Exec& exec) {
  if (model.dim() != 0) require_same_dim(data.dim(), model.dim(), "evaluate_log_density");
  std::vector<double> out(data.size());
  for_each_block(block_count(data.size()), exec, [&](std::size_t b) {
    const std::size_t last = std::min(data.size(), (b + 1) * kBlockSize);
    for (std::size_t i = b * kBlockSize; i < last; ++i) out[i] = model.log_density(data.row(i));
  });
  return out;
}

Estimate mc_cross_entropy(const Distribution& q, const DensityModel& p, std::size_t n, std::uint64_t seed,
                          const Exec& exec) {
  require_same_dim(q.dim(), p.dim(), "mc_cross_entropy");
  require(n >= 2, "mc_cross_entropy requires n >= 2 draws");
  const Dataset draws = sample(q, n, seed, exec);
  return negate(mean_estimate(evaluate_log_density(p, draws, exec), "monte-carlo"));
}

Estimate mc_cross_entropy(const Distribution& q, const Distribution& p, std::size_t n, std::uint64_t seed,
                          const Exec& exec) {
  return mc_cross_entropy(q, DensityModel::exact(p), n, seed, exec);
}

Estimate mc_cross_entropy(const Dataset& q, const DensityModel& p, const Exec& exec) {
  require(!q.empty(), "mc_cross_entropy: dataset is empty");
  return negate(mean_estimate(evaluate_log_density(p, q, exec), "dataset-average"));
}

Estimate mc_cross_entropy(const Dataset& q, const Distribution& p, const Exec& exec) {
  return mc_cross_entropy(q, DensityModel::exact(p), exec);
}

Estimate mc_entropy(const Distribution& dist, std::size_t n, std::uint64_t seed, const Exec& exec) {
  Estimate e = mc_cross_entropy(dist, dist, n, seed, exec);
  e.method = "monte-carlo-plugin";
  return e;
}

Estimate mc_kl(const Distribution& q, const DensityModel& p, std::size_t n, std::uint64_t seed, const Exec& exec) {
  require_same_dim(q.dim(), p.dim(), "mc_kl");
  require(q.measure() == p.measure(), "mc_kl: base measures differ");
  require(n >= 2, "mc_kl requires n >= 2 draws");
  const Dataset draws = sample(q, n, seed, exec);
  const auto log_p = evaluate_log_density(p, draws, exec);
  const auto log_q = evaluate_log_density(DensityModel::exact(q), draws, exec);
  std::vector<double> terms(draws.size());
  for (std::size_t i = 0; i < terms.size(); ++i)
    terms[i] = log_p[i] == -kInf ? -kInf : log_p[i] - log_q[i];
  return negate(mean_estimate(terms, "monte-carlo"));
}

Estimate mc_kl(const Distribution& q, const Distribution& p, std::size_t n, std::uint64_t seed, const Exec& exec) {
  return mc_kl(q, DensityModel::exact(p), n, seed, exec);
}

namespace {

bool has_duplicate_rows(const Dataset& data) {
  const std::size_t d = data.dim();
  const auto values = data.values();
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto row = [&](std::size_t i) { return values.subspan(i * d, d); };
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto ra = row(a), rb = row(b);
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
  });
  for (std::size_t i = 1; i < order.size(); ++i) {
    const auto ra = row(order[i - 1]), rb = row(order[i]);
    if (std::equal(ra.begin(), ra.end(), rb.begin())) return true;
  }
  return false;
}

}  // namespace

Estimate knn_entropy(const Dataset& data, const KnnConfig& cfg, const Exec& exec) {
  require(data.measure() == Measure::lebesgue, "knn_entropy requires Lebesgue (real-valued) data");
  require(cfg.k >= 1, "knn_entropy requires k >= 1");
  const std::size_t n = data.size();
  require(n > cfg.k, "knn_entropy requires n > k (n=" + std::to_string(n) + ", k=" + std::to_string(cfg.k) + ")");
  const std::size_t d = data.dim();

  std::ostringstream method;
  method << "kozachenko-leonenko(k=" << cfg.k << ",bootstrap=" << cfg.bootstrap << ")";

  std::vector<double> log_eps;
  if (!has_duplicate_rows(data)) {
    log_eps = log_knn_distances(data, cfg.k, exec);
  } else {
    const auto values = data.values();
    double scale = 0.0;
    for (std::size_t a = 0; a < d; ++a) {
      double lo = kInf, hi = -kInf;
      for (std::size_t i = 0; i < n; ++i) {
        lo = std::min(lo, values[i * d + a]);
        hi = std::max(hi, values[i * d + a]);
      }
      scale = std::max(scale, hi - lo);
    }
    if (scale == 0.0) scale = 1.0;
    const double magnitude = 1e-10 * scale;
    Rng rng(derive_seed(cfg.seed, "knn-jitter"));
    std::vector<double> jittered(values.begin(), values.end());
    for (double& v : jittered) v += magnitude * (2.0 * rng.uniform() - 1.0);
    const Dataset perturbed(d, Measure::lebesgue, std::move(jittered), data.provenance());
    log_eps = log_knn_distances(perturbed, cfg.k, exec);
    if (std::any_of(log_eps.begin(), log_eps.end(), [](double v) { return v == -kInf; }))
      fail(ErrorCode::numerical, "knn_entropy: zero neighbour distance persists after jitter");
    method << "+jitter(" << magnitude << ")";
  }

  const double nd = static_cast<double>(n);
  const double offset = digamma(nd) - digamma(static_cast<double>(cfg.k)) + log_unit_ball_volume(d);
  const double dim_over_n = static_cast<double>(d) / nd;
  double sum = 0.0;
  for (double v : log_eps) sum += v;

  Estimate e;
  e.value = offset + dim_over_n * sum;
  e.n = n;
  e.method = method.str();

  if (cfg.bootstrap > 0) {
    Rng rng(derive_seed(cfg.seed, "knn-bootstrap"));
    RunningMoments spread;
    for (std::size_t b = 0; b < cfg.bootstrap; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += log_eps[static_cast<std::size_t>(rng.below(n))];
      spread.push(offset + dim_over_n * s);
    }
    e.std_error = std::sqrt(spread.variance());
  }
  return e;
}

}  // namespace ood
