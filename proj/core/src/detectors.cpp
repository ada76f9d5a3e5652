#include "ood/detectors.hpp"

#include <algorithm>
#include <cmath>

#include "ood/error.hpp"

namespace ood {

namespace {

std::size_t count_non_finite(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [](double x) { return !std::isfinite(x); }));
}

std::vector<double> sorted_scores(const ScoreSet& s, const char* which) {
  require(!s.scores.empty(), std::string("evaluate_detector: ") + which + " scores are empty");
  for (double x : s.scores) require(!std::isnan(x), std::string("evaluate_detector: ") + which + " scores contain NaN");
  std::vector<double> v = s.scores;
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

ScoreSet score_likelihood(const DensityModel& model, const Dataset& data, const Exec& exec) {
  ScoreSet set;
  set.scores = evaluate_log_density(model, data, exec);
  set.detector_id = "likelihood";
  set.model_ids = {model.id()};
  set.provenance = data.provenance();
  set.non_finite = count_non_finite(set.scores);
  return set;
}

ScoreSet score_likelihood_ratio(const DensityModel& model, const DensityModel& reference, const Dataset& data,
                                const Exec& exec) {
  const auto log_p = evaluate_log_density(model, data, exec);
  const auto log_r = evaluate_log_density(reference, data, exec);
  ScoreSet set;
  set.scores.resize(log_p.size());
  for (std::size_t i = 0; i < log_p.size(); ++i) set.scores[i] = log_p[i] - log_r[i];
  set.detector_id = "likelihood-ratio";
  set.model_ids = {model.id(), reference.id()};
  set.provenance = data.provenance();
  set.non_finite = count_non_finite(set.scores);
  return set;
}

Estimate typicality_train_entropy(const DensityModel& model, const Dataset& train, const Exec& exec) {
  Estimate e = mc_cross_entropy(train, model, exec);
  e.method = "plugin-train-entropy";
  return e;
}

TypicalityScore typicality_detail(const DensityModel& model, const Estimate& train_entropy, const Dataset& batch) {
  require(!batch.empty(), "score_typicality: batch is empty");
  RunningMoments moments;
  for (std::size_t i = 0; i < batch.size(); ++i) moments.push(model.log_density(batch.row(i)));
  TypicalityScore t;
  t.batch_size = batch.size();
  t.deviation = moments.mean() + train_entropy.value;
  t.score = -std::abs(t.deviation);
  t.std_error = std::hypot(moments.std_error(), train_entropy.std_error);
  return t;
}

double score_typicality(const DensityModel& model, const Estimate& train_entropy, const Dataset& batch) {
  return typicality_detail(model, train_entropy, batch).score;
}

ScoreSet score_typicality_batches(const DensityModel& model, const Estimate& train_entropy, const Dataset& data,
                                  std::size_t batch_size) {
  require(batch_size >= 1, "typicality batch size must be positive");
  ScoreSet set;
  set.detector_id = "typicality";
  set.model_ids = {model.id()};
  set.provenance = data.provenance();
  const std::size_t batches = data.size() / batch_size;
  set.scores.reserve(batches);
  for (std::size_t b = 0; b < batches; ++b)
    set.scores.push_back(score_typicality(model, train_entropy, data.slice(b * batch_size, batch_size)));
  set.non_finite = count_non_finite(set.scores);
  return set;
}

DetectorMetrics evaluate_detector(const ScoreSet& in_scores, const ScoreSet& out_scores) {
  const auto in = sorted_scores(in_scores, "in-distribution");
  const auto out = sorted_scores(out_scores, "out-of-distribution");

  // Pair counts are exact integers; only the final ratio rounds.
  unsigned long long greater = 0;
  unsigned long long ties = 0;
  for (double s : in) {
    const auto lo = std::lower_bound(out.begin(), out.end(), s);
    const auto hi = std::upper_bound(lo, out.end(), s);
    greater += static_cast<unsigned long long>(lo - out.begin());
    ties += static_cast<unsigned long long>(hi - lo);
  }
  DetectorMetrics m;
  m.n_in = in.size();
  m.n_out = out.size();
  const double pairs = static_cast<double>(m.n_in) * static_cast<double>(m.n_out);
  m.auroc = (static_cast<double>(greater) + 0.5 * static_cast<double>(ties)) / pairs;

  // Largest threshold t with #{in >= t} >= 0.95 n_in, i.e. the in-score ranked
  // ceil(0.95 n_in) from the top.
  const auto needed = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(m.n_in) - 1e-9));
  const double threshold = in[m.n_in - std::max<std::size_t>(needed, 1)];
  const auto at_or_above = out.end() - std::lower_bound(out.begin(), out.end(), threshold);
  m.fpr_at_95_tpr = static_cast<double>(at_or_above) / static_cast<double>(m.n_out);
  return m;
}

std::vector<RocPoint> roc_curve(const ScoreSet& in_scores, const ScoreSet& out_scores) {
  const auto in = sorted_scores(in_scores, "in-distribution");
  const auto out = sorted_scores(out_scores, "out-of-distribution");
  std::vector<double> thresholds;
  thresholds.reserve(in.size() + out.size());
  std::merge(in.begin(), in.end(), out.begin(), out.end(), std::back_inserter(thresholds));
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  std::vector<RocPoint> curve{{0.0, 0.0}};
  const double n_in = static_cast<double>(in.size());
  const double n_out = static_cast<double>(out.size());
  for (auto it = thresholds.rbegin(); it != thresholds.rend(); ++it) {
    const double t = *it;
    const auto tp = in.end() - std::lower_bound(in.begin(), in.end(), t);
    const auto fp = out.end() - std::lower_bound(out.begin(), out.end(), t);
    curve.push_back({static_cast<double>(fp) / n_out, static_cast<double>(tp) / n_in});
  }
  return curve;
}

}  // namespace ood
