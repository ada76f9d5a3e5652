#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ood/analysis.hpp"
#include "ood/density_models.hpp"
#include "ood/detectors.hpp"
#include "ood/distributions.hpp"
#include "ood/parallel.hpp"
#include "ood/serialization.hpp"

namespace ood {

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr int kReportSchemaVersion = 1;

/// Train/test pair of IDX image files.
struct IdxSource {
  std::filesystem::path train;
  std::filesystem::path test;
  std::size_t rows = 28;
  std::size_t cols = 28;
};

using DataSource = std::variant<IdxSource, Distribution>;

struct ModelSpec {
  ModelKind kind = ModelKind::exact;
  double ridge = 1e-6;          // gaussian-mle, gmm-em
  std::size_t components = 2;   // gmm-em
  std::size_t max_iters = 200;  // gmm-em
  double tol = 1e-7;            // gmm-em
  std::size_t bins = 32;        // histogram
  std::vector<Interval> range;  // histogram
  double alpha = 1.0;           // pixel-categorical
  std::size_t categories = 256; // pixel-categorical
};

struct ReferenceSpec {
  enum class Kind { exact, compressor };
  Kind kind = Kind::exact;
  std::optional<Distribution> distribution;
  CodecSpec codec;
};

struct DetectorSpec {
  std::string name;  // likelihood | likelihood-ratio | typicality
  std::size_t batch_size = 64;
};

struct SampleSizes {
  std::size_t n_train = 10000;
  std::size_t n_eval = 10000;  // 0 with an IDX source: the whole test split
  std::size_t n_pairs = 10000;
};

struct OutputSpec {
  std::filesystem::path dir = "out";
  std::vector<std::string> formats = {"json", "csv", "svg"};

  bool wants(std::string_view format) const;
};

struct ExperimentConfig {
  std::string id = "experiment";
  std::uint64_t seed = 0;
  DataSource in_source;
  DataSource out_source;
  ModelSpec model;
  std::optional<ReferenceSpec> reference;
  std::vector<DetectorSpec> detectors;
  SampleSizes samples;
  OutputSpec outputs;
};

/// Parses and validates a JSON config (schema_version 1). Every problem found
/// is reported in one config error, one per line. Relative IDX paths resolve
/// against `base_dir`.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig parse_config(const json& doc, const std::filesystem::path& base_dir = {});
/// All validation messages; empty when the config is valid.
std::vector<std::string> validate_config(const json& doc, const std::filesystem::path& base_dir = {});

/// Canonical form; parse_config(config_to_json(c)) reproduces c.
json config_to_json(const ExperimentConfig& cfg);

/// Generates one config per value of `param`. "dim" sets the dimension of
/// every distribution in the config; any other name is a dotted path into
/// the document ("in_dist.variance"). Ids and output dirs get a suffix.
std::vector<json> expand_sweep(const json& templ, const std::string& param, const std::vector<json>& values);

struct ScoreHistogram {
  double lower = 0.0;
  double upper = 0.0;
  std::vector<std::size_t> in_counts;
  std::vector<std::size_t> out_counts;
  std::size_t excluded_in = 0;   // non-finite scores left out
  std::size_t excluded_out = 0;
};

struct DetectorResult {
  DetectorSpec spec;
  std::vector<std::string> model_ids;
  DetectorMetrics metrics;
  std::vector<RocPoint> roc;  // at most kRocPoints, endpoints kept
  std::size_t non_finite_in = 0;
  std::size_t non_finite_out = 0;
  std::optional<Estimate> train_entropy;  // typicality only
  ScoreSet in_scores;                     // not part of report.json
  ScoreSet out_scores;
};

inline constexpr std::size_t kRocPoints = 257;
inline constexpr std::size_t kHistogramBins = 40;

struct ExperimentReport {
  json config;
  std::string library_version;
  std::string codec_version;
  std::string generator;
  std::size_t dim = 0;
  Measure measure = Measure::lebesgue;
  std::string model_id;
  FitMeta fit;
  std::optional<std::string> reference_id;
  DecompositionLedger ledger_in;
  DecompositionLedger ledger_out;
  ContrastStats contrast;
  std::vector<DetectorResult> detectors;
  ScoreHistogram log_likelihood;
  double wall_clock_seconds = 0.0;  // written to timing.json, not report.json
};

/// Runs the full pipeline: load/sample, fit, ledgers, contrast, detectors.
/// Sub-seeds are derive_seed(cfg.seed, label) with labels "train",
/// "em", "eval-in", "eval-out", "ledger-in", "ledger-out", "contrast" and
/// "typicality-train". Errors name the stage that failed.
ExperimentReport run_experiment(const ExperimentConfig& cfg, const Exec& exec = {});

json report_to_json(const ExperimentReport& report);
ExperimentReport report_from_json(const json& doc);

/// Writes report.json, CSVs (ledger, contrast, metrics, per-detector scores)
/// and SVGs according to cfg.outputs.formats, plus timing.json. Returns the
/// files written, in order.
std::vector<std::filesystem::path> write_outputs(const ExperimentReport& report, const OutputSpec& outputs);

}  // namespace ood
