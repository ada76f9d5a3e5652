#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ood/dataset.hpp"
#include "ood/density_models.hpp"
#include "ood/estimators.hpp"
#include "ood/parallel.hpp"

namespace ood {

/// Per-sample (or per-batch) scores, oriented so that higher means more
/// in-distribution for every detector.
struct ScoreSet {
  std::vector<double> scores;
  std::string detector_id;
  std::vector<std::string> model_ids;
  Provenance provenance;
  std::size_t non_finite = 0;
};

struct DetectorMetrics {
  double auroc = 0.5;
  double fpr_at_95_tpr = 1.0;
  std::size_t n_in = 0;
  std::size_t n_out = 0;
};

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

/// score_i = log p(x_i).
ScoreSet score_likelihood(const DensityModel& model, const Dataset& data, const Exec& exec = {});

/// score_i = log p(x_i) - log r(x_i). The reference may be a compressor proxy.
ScoreSet score_likelihood_ratio(const DensityModel& model, const DensityModel& reference, const Dataset& data,
                                const Exec& exec = {});

/// Plug-in training entropy, -mean log p over in-distribution training data.
Estimate typicality_train_entropy(const DensityModel& model, const Dataset& train, const Exec& exec = {});

struct TypicalityScore {
  double score = 0.0;      // -|mean batch log p + train entropy|
  double deviation = 0.0;  // mean batch log p + train entropy (signed)
  double std_error = 0.0;  // of the signed deviation, batch SE and entropy SE combined
  std::size_t batch_size = 0;
};

/// Negated absolute deviation of the batch's mean log-likelihood from the
/// negative training entropy. Throws for an empty batch.
double score_typicality(const DensityModel& model, const Estimate& train_entropy, const Dataset& batch);
TypicalityScore typicality_detail(const DensityModel& model, const Estimate& train_entropy, const Dataset& batch);

/// One typicality score per disjoint contiguous block of `batch_size` rows;
/// a trailing partial block is dropped.
ScoreSet score_typicality_batches(const DensityModel& model, const Estimate& train_entropy, const Dataset& data,
                                  std::size_t batch_size);

/// AUROC = P(in > out) + P(in == out) / 2 by exact pair counting, and the
/// false-positive rate at the largest threshold reaching 95% true positives
/// (a sample is called in-distribution when its score >= threshold).
DetectorMetrics evaluate_detector(const ScoreSet& in_scores, const ScoreSet& out_scores);

/// ROC curve over all distinct thresholds, from (0, 0) to (1, 1).
std::vector<RocPoint> roc_curve(const ScoreSet& in_scores, const ScoreSet& out_scores);

}  // namespace ood
