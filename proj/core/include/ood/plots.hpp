#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ood/experiment.hpp"

namespace ood {

struct BoundPoint {
  double dim = 0.0;
  std::optional<double> bound;
  double p_z_gt_0 = 0.0;
  double p_std_error = 0.0;
};

/// Self-contained SVG documents. Output depends only on the inputs, so a
/// re-run produces identical bytes. Empty series are errors naming the series.
std::string histogram_svg(const ScoreHistogram& hist, const std::string& title);
std::string roc_svg(const std::vector<DetectorResult>& detectors, const std::string& title);
std::string bound_svg(std::vector<BoundPoint> points, const std::string& title);

BoundPoint bound_point(const ExperimentReport& report);

/// Writes loglik_hist.svg, bound_vs_dim.svg and roc.svg into `dir`.
std::vector<std::filesystem::path> emit_plots(const ExperimentReport& report, const std::filesystem::path& dir);

/// Bound and empirical P(Z > 0) against dimension over a sweep.
std::filesystem::path emit_sweep_plot(const std::vector<ExperimentReport>& reports, const std::filesystem::path& dir);

}  // namespace ood
