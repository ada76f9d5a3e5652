#include "ood/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <set>
#include <sstream>

#include "ood/data_io.hpp"
#include "ood/error.hpp"
#include "ood/plots.hpp"
#include "ood/rng.hpp"
#include "ood/version.hpp"

namespace ood {

namespace {

const std::set<std::string> kDetectorNames = {"likelihood", "likelihood-ratio", "typicality"};
const std::set<std::string> kFormats = {"json", "csv", "svg"};

struct Issues {
  std::vector<std::string> list;
  void add(std::string msg) { list.push_back(std::move(msg)); }
};

void unknown_fields(const json& obj, const std::set<std::string>& allowed, const std::string& where, Issues& issues) {
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key)) issues.add((where.empty() ? "" : where + ": ") + "unknown field '" + key + "'");
}

bool is_non_negative_integer(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

template <class T>
std::optional<T> get_opt(const json& obj, const char* key, const std::string& where, Issues& issues) {
  const auto it = obj.find(key);
  if (it == obj.end()) return std::nullopt;
  try {
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      if (!is_non_negative_integer(*it)) throw std::invalid_argument("expected a non-negative integer");
    } else if constexpr (std::is_same_v<T, double>) {
      if (!it->is_number()) throw std::invalid_argument("expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) throw std::invalid_argument("expected a string");
    } else if constexpr (std::is_same_v<T, int>) {
      if (!it->is_number_integer()) throw std::invalid_argument("expected an integer");
    }
    return it->get<T>();
  } catch (const std::exception& e) {
    issues.add(where + "." + key + ": " + e.what());
    return std::nullopt;
  }
}

std::filesystem::path resolve(const std::string& p, const std::filesystem::path& base) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) return base / path;
  return path;
}

std::optional<DataSource> parse_source(const json& v, const std::string& where, const std::filesystem::path& base,
                                       Issues& issues) {
  if (!v.is_object()) {
    issues.add(where + ": expected an object");
    return std::nullopt;
  }
  if (v.value("kind", std::string{}) == "idx") {
    unknown_fields(v, {"kind", "train", "test", "rows", "cols"}, where, issues);
    IdxSource s;
    const auto train = get_opt<std::string>(v, "train", where, issues);
    const auto test = get_opt<std::string>(v, "test", where, issues);
    if (!test) issues.add(where + ": missing field 'test'");
    if (train) s.train = resolve(*train, base);
    if (test) s.test = resolve(*test, base);
    s.rows = get_opt<std::size_t>(v, "rows", where, issues).value_or(28);
    s.cols = get_opt<std::size_t>(v, "cols", where, issues).value_or(28);
    if (s.rows == 0 || s.cols == 0) issues.add(where + ": rows and cols must be positive");
    return s;
  }
  try {
    return distribution_from_json(v);
  } catch (const Error& e) {
    issues.add(where + ": " + e.what());
    return std::nullopt;
  }
}

std::size_t source_dim(const DataSource& s) {
  if (const auto* d = std::get_if<Distribution>(&s)) return d->dim();
  const auto& idx = std::get<IdxSource>(s);
  return idx.rows * idx.cols;
}

Measure source_measure(const DataSource& s) {
  if (const auto* d = std::get_if<Distribution>(&s)) return d->measure();
  return Measure::counting;
}

ModelSpec parse_model(const json& v, Issues& issues) {
  ModelSpec m;
  const std::string where = "model";
  json obj = v.is_string() ? json{{"kind", v}} : v;
  if (!obj.is_object()) {
    issues.add("model: expected an object or a kind name");
    return m;
  }
  const auto kind = get_opt<std::string>(obj, "kind", where, issues);
  if (!kind) {
    issues.add("model: missing field 'kind'");
    return m;
  }
  try {
    m.kind = model_kind_from_string(*kind);
  } catch (const Error&) {
    issues.add("model.kind: unknown model kind '" + *kind + "'");
    return m;
  }
  switch (m.kind) {
    case ModelKind::exact:
      unknown_fields(obj, {"kind"}, where, issues);
      break;
    case ModelKind::gaussian_mle:
      unknown_fields(obj, {"kind", "ridge"}, where, issues);
      m.ridge = get_opt<double>(obj, "ridge", where, issues).value_or(m.ridge);
      break;
    case ModelKind::gmm_em:
      unknown_fields(obj, {"kind", "components", "max_iters", "tol", "ridge"}, where, issues);
      m.components = get_opt<std::size_t>(obj, "components", where, issues).value_or(m.components);
      m.max_iters = get_opt<std::size_t>(obj, "max_iters", where, issues).value_or(m.max_iters);
      m.tol = get_opt<double>(obj, "tol", where, issues).value_or(m.tol);
      m.ridge = get_opt<double>(obj, "ridge", where, issues).value_or(m.ridge);
      if (m.components == 0) issues.add("model.components: must be positive");
      break;
    case ModelKind::histogram: {
      unknown_fields(obj, {"kind", "bins", "range"}, where, issues);
      m.bins = get_opt<std::size_t>(obj, "bins", where, issues).value_or(m.bins);
      const auto it = obj.find("range");
      if (it == obj.end() || !it->is_array()) {
        issues.add("model.range: required list of [lower, upper] intervals");
        break;
      }
      for (const auto& r : *it) {
        if (!r.is_array() || r.size() != 2 || !r[0].is_number() || !r[1].is_number()) {
          issues.add("model.range: each interval needs [lower, upper]");
          continue;
        }
        m.range.push_back({r[0].get<double>(), r[1].get<double>()});
      }
      break;
    }
    case ModelKind::pixel_categorical:
      unknown_fields(obj, {"kind", "alpha", "categories"}, where, issues);
      m.alpha = get_opt<double>(obj, "alpha", where, issues).value_or(m.alpha);
      m.categories = get_opt<std::size_t>(obj, "categories", where, issues).value_or(m.categories);
      if (!(m.alpha > 0.0)) issues.add("model.alpha: must be positive");
      break;
    case ModelKind::compressor_proxy:
      issues.add("model.kind: a compressor proxy is not normalized and can only be a reference");
      break;
  }
  return m;
}

std::optional<ReferenceSpec> parse_reference(const json& v, Issues& issues) {
  const std::string where = "reference";
  if (!v.is_object()) {
    issues.add("reference: expected an object");
    return std::nullopt;
  }
  const auto kind = get_opt<std::string>(v, "kind", where, issues);
  ReferenceSpec r;
  if (kind == "exact") {
    unknown_fields(v, {"kind", "distribution"}, where, issues);
    const auto it = v.find("distribution");
    if (it == v.end()) {
      issues.add("reference: missing field 'distribution'");
      return std::nullopt;
    }
    try {
      r.distribution = distribution_from_json(*it);
    } catch (const Error& e) {
      issues.add(std::string("reference.distribution: ") + e.what());
      return std::nullopt;
    }
    return r;
  }
  if (kind == "compressor") {
    unknown_fields(v, {"kind", "codec", "level"}, where, issues);
    r.kind = ReferenceSpec::Kind::compressor;
    r.codec.identifier = get_opt<std::string>(v, "codec", where, issues).value_or("zlib");
    r.codec.level = get_opt<int>(v, "level", where, issues).value_or(9);
    if (r.codec.identifier != "zlib" && r.codec.identifier != "deflate")
      issues.add("reference.codec: unknown codec '" + r.codec.identifier + "' (expected zlib or deflate)");
    if (r.codec.level < 0 || r.codec.level > 9) issues.add("reference.level: must be in 0..9");
    return r;
  }
  issues.add("reference.kind: expected 'exact' or 'compressor'");
  return std::nullopt;
}

std::vector<DetectorSpec> parse_detectors(const json& v, Issues& issues) {
  std::vector<DetectorSpec> out;
  if (!v.is_array()) {
    issues.add("detectors: expected a list");
    return out;
  }
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::string where = "detectors[" + std::to_string(i) + "]";
    DetectorSpec d;
    if (v[i].is_string()) {
      d.name = v[i].get<std::string>();
    } else if (v[i].is_object()) {
      d.name = get_opt<std::string>(v[i], "name", where, issues).value_or("");
      if (d.name == "typicality") {
        unknown_fields(v[i], {"name", "batch_size"}, where, issues);
        d.batch_size = get_opt<std::size_t>(v[i], "batch_size", where, issues).value_or(d.batch_size);
        if (d.batch_size == 0) issues.add(where + ".batch_size: must be positive");
      } else {
        unknown_fields(v[i], {"name"}, where, issues);
      }
    } else {
      issues.add(where + ": expected a detector name or object");
      continue;
    }
    if (!kDetectorNames.count(d.name)) {
      issues.add(where + ": unknown detector '" + d.name + "'");
      continue;
    }
    for (const auto& prev : out)
      if (prev.name == d.name) issues.add(where + ": detector '" + d.name + "' listed twice");
    out.push_back(std::move(d));
  }
  return out;
}

void cross_check(const ExperimentConfig& cfg, bool have_in, bool have_out, Issues& issues) {
  if (have_in && have_out) {
    if (source_dim(cfg.in_source) != source_dim(cfg.out_source))
      issues.add("out_dist: dimension " + std::to_string(source_dim(cfg.out_source)) + " differs from in_dist " +
                 std::to_string(source_dim(cfg.in_source)));
    if (source_measure(cfg.in_source) != source_measure(cfg.out_source))
      issues.add("out_dist: measure differs from in_dist");
  }
  if (!have_in) return;
  const std::size_t dim = source_dim(cfg.in_source);
  const bool in_is_dist = std::holds_alternative<Distribution>(cfg.in_source);
  const Measure measure = source_measure(cfg.in_source);
  switch (cfg.model.kind) {
    case ModelKind::exact:
      if (!in_is_dist) issues.add("model: 'exact' needs in_dist to be a distribution");
      break;
    case ModelKind::gaussian_mle:
    case ModelKind::gmm_em:
      if (measure != Measure::lebesgue) issues.add("model: Gaussian models need real-valued data");
      break;
    case ModelKind::histogram:
      if (measure != Measure::lebesgue) issues.add("model: histogram needs real-valued data");
      if (dim > 3) issues.add("model: histogram supports d <= 3");
      if (!cfg.model.range.empty() && cfg.model.range.size() != dim)
        issues.add("model.range: expected " + std::to_string(dim) + " intervals");
      for (const auto& r : cfg.model.range)
        if (!(r.lower < r.upper)) issues.add("model.range: lower must be below upper");
      break;
    case ModelKind::pixel_categorical:
      if (measure != Measure::counting) issues.add("model: pixel-categorical needs discrete data");
      break;
    case ModelKind::compressor_proxy:
      break;
  }
  if (cfg.reference && cfg.reference->distribution && cfg.reference->distribution->dim() != dim)
    issues.add("reference.distribution: dimension differs from in_dist");
  const bool fitted = cfg.model.kind != ModelKind::exact;
  for (const auto& d : cfg.detectors) {
    if (d.name == "likelihood-ratio" && !cfg.reference)
      issues.add("detector 'likelihood-ratio' requires a reference");
    if (d.name == "typicality" && in_is_dist && d.batch_size > cfg.samples.n_eval)
      issues.add("detector 'typicality': batch_size exceeds samples.n_eval");
  }
  const bool needs_train = fitted || std::any_of(cfg.detectors.begin(), cfg.detectors.end(),
                                                 [](const DetectorSpec& d) { return d.name == "typicality"; });
  if (needs_train && in_is_dist && cfg.samples.n_train < 2) issues.add("samples.n_train: must be at least 2");
  if (needs_train && !in_is_dist && std::get<IdxSource>(cfg.in_source).train.empty())
    issues.add("in_dist: missing field 'train'");
  const bool any_dist = in_is_dist || (have_out && std::holds_alternative<Distribution>(cfg.out_source));
  if (any_dist && cfg.samples.n_eval < 2) issues.add("samples.n_eval: must be at least 2");
  if (in_is_dist && have_out && std::holds_alternative<Distribution>(cfg.out_source) && cfg.samples.n_pairs < 2)
    issues.add("samples.n_pairs: must be at least 2");
}

ExperimentConfig build_config(const json& doc, const std::filesystem::path& base, Issues& issues) {
  ExperimentConfig cfg;
  if (!doc.is_object()) {
    issues.add("config: expected a JSON object");
    return cfg;
  }
  const std::string top;
  unknown_fields(doc, {"schema_version", "id", "seed", "in_dist", "out_dist", "model", "reference", "detectors",
                       "samples", "outputs"},
                 top, issues);
  if (const auto v = doc.find("schema_version"); v != doc.end() && *v != kConfigSchemaVersion)
    issues.add("schema_version: unsupported version " + v->dump() + " (expected " +
               std::to_string(kConfigSchemaVersion) + ")");
  if (const auto v = doc.find("id"); v != doc.end()) {
    if (!v->is_string() || v->get<std::string>().empty()) {
      issues.add("id: expected a non-empty string");
    } else {
      cfg.id = v->get<std::string>();
      if (cfg.id.find_first_of("/\\") != std::string::npos) issues.add("id: must not contain path separators");
    }
  }
  if (const auto v = doc.find("seed"); v == doc.end()) {
    issues.add("seed required");
  } else if (!is_non_negative_integer(*v)) {
    issues.add("seed: expected a non-negative 64-bit integer");
  } else {
    cfg.seed = v->get<std::uint64_t>();
  }

  bool have_in = false;
  bool have_out = false;
  if (const auto v = doc.find("in_dist"); v == doc.end()) {
    issues.add("in_dist required");
  } else if (auto s = parse_source(*v, "in_dist", base, issues)) {
    cfg.in_source = std::move(*s);
    have_in = true;
  }
  if (const auto v = doc.find("out_dist"); v == doc.end()) {
    if (have_in) {
      cfg.out_source = cfg.in_source;
      have_out = true;
    }
  } else if (auto s = parse_source(*v, "out_dist", base, issues)) {
    cfg.out_source = std::move(*s);
    have_out = true;
  }

  if (const auto v = doc.find("model"); v == doc.end())
    issues.add("model required");
  else
    cfg.model = parse_model(*v, issues);
  if (const auto v = doc.find("reference"); v != doc.end() && !v->is_null()) cfg.reference = parse_reference(*v, issues);
  if (const auto v = doc.find("detectors"); v != doc.end())
    cfg.detectors = parse_detectors(*v, issues);
  else
    cfg.detectors = {DetectorSpec{"likelihood"}};

  if (const auto v = doc.find("samples"); v != doc.end()) {
    if (!v->is_object()) {
      issues.add("samples: expected an object");
    } else {
      unknown_fields(*v, {"n_train", "n_eval", "n_pairs"}, "samples", issues);
      cfg.samples.n_train = get_opt<std::size_t>(*v, "n_train", "samples", issues).value_or(cfg.samples.n_train);
      cfg.samples.n_eval = get_opt<std::size_t>(*v, "n_eval", "samples", issues).value_or(cfg.samples.n_eval);
      cfg.samples.n_pairs = get_opt<std::size_t>(*v, "n_pairs", "samples", issues).value_or(cfg.samples.n_pairs);
    }
  }
  if (const auto v = doc.find("outputs"); v != doc.end()) {
    if (!v->is_object()) {
      issues.add("outputs: expected an object");
    } else {
      unknown_fields(*v, {"dir", "formats"}, "outputs", issues);
      if (const auto dir = get_opt<std::string>(*v, "dir", "outputs", issues)) cfg.outputs.dir = *dir;
      if (const auto f = v->find("formats"); f != v->end()) {
        cfg.outputs.formats.clear();
        if (!f->is_array()) issues.add("outputs.formats: expected a list");
        for (const auto& x : *f) {
          if (!x.is_string() || !kFormats.count(x.get<std::string>()))
            issues.add("outputs.formats: unknown format " + x.dump() + " (expected json, csv or svg)");
          else
            cfg.outputs.formats.push_back(x.get<std::string>());
        }
      }
    }
  }
  cross_check(cfg, have_in, have_out, issues);
  return cfg;
}

json source_to_json(const DataSource& s) {
  if (const auto* d = std::get_if<Distribution>(&s)) return to_json(*d);
  const auto& idx = std::get<IdxSource>(s);
  json j{{"kind", "idx"}, {"test", idx.test.string()}, {"rows", idx.rows}, {"cols", idx.cols}};
  if (!idx.train.empty()) j["train"] = idx.train.string();
  return j;
}

// Rethrows any failure with the stage name prefixed, keeping its code.
template <class F>
auto stage(const std::string& name, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    fail(e.code(), "stage '" + name + "': " + e.what());
  } catch (const std::bad_alloc&) {
    fail(ErrorCode::numerical, "stage '" + name + "': out of memory");
  }
}

Dataset load_split(const IdxSource& s, bool train) {
  ImageDatasetSpec spec;
  spec.path = train ? s.train : s.test;
  spec.rows = s.rows;
  spec.cols = s.cols;
  spec.split = train ? Split::train : Split::test;
  return load_idx(spec);
}

Dataset draw(const DataSource& src, bool train, std::size_t n, std::uint64_t seed, const Exec& exec) {
  if (const auto* d = std::get_if<Distribution>(&src)) return sample(*d, n, seed, exec);
  Dataset data = load_split(std::get<IdxSource>(src), train);
  if (n > 0 && n < data.size()) return subsample(data, n, seed);
  return data;
}

std::vector<RocPoint> decimate(const std::vector<RocPoint>& curve) {
  if (curve.size() <= kRocPoints) return curve;
  std::vector<RocPoint> out;
  out.reserve(kRocPoints);
  const std::size_t last = curve.size() - 1;
  for (std::size_t i = 0; i < kRocPoints; ++i) out.push_back(curve[(i * last) / (kRocPoints - 1)]);
  return out;
}

ScoreHistogram histogram_of(const ScoreSet& in, const ScoreSet& out) {
  ScoreHistogram h;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto* set : {&in, &out})
    for (double s : set->scores)
      if (std::isfinite(s)) {
        lo = std::min(lo, s);
        hi = std::max(hi, s);
      }
  h.in_counts.assign(kHistogramBins, 0);
  h.out_counts.assign(kHistogramBins, 0);
  if (!(lo <= hi)) {
    h.excluded_in = in.scores.size();
    h.excluded_out = out.scores.size();
    return h;
  }
  if (lo == hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  h.lower = lo;
  h.upper = hi;
  const double width = (hi - lo) / static_cast<double>(kHistogramBins);
  auto fill = [&](const ScoreSet& set, std::vector<std::size_t>& counts, std::size_t& excluded) {
    for (double s : set.scores) {
      if (!std::isfinite(s)) {
        ++excluded;
        continue;
      }
      auto b = static_cast<std::size_t>((s - lo) / width);
      counts[std::min(b, kHistogramBins - 1)]++;
    }
  };
  fill(in, h.in_counts, h.excluded_in);
  fill(out, h.out_counts, h.excluded_out);
  return h;
}

DetectorResult finish_detector(const DetectorSpec& spec, ScoreSet in, ScoreSet out) {
  DetectorResult r;
  r.spec = spec;
  r.model_ids = in.model_ids;
  r.non_finite_in = in.non_finite;
  r.non_finite_out = out.non_finite;
  r.metrics = evaluate_detector(in, out);
  r.roc = decimate(roc_curve(in, out));
  r.in_scores = std::move(in);
  r.out_scores = std::move(out);
  return r;
}

// Report JSON pieces.

json opt_estimate(const std::optional<Estimate>& e) { return e ? to_json(*e) : json(nullptr); }

std::optional<Estimate> opt_estimate_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return estimate_from_json(j);
}

json ledger_json(const DecompositionLedger& l) {
  json j;
  j["data_dist_id"] = l.data_dist_id;
  j["model_id"] = l.model_id;
  j["n"] = l.n;
  j["dim"] = l.dim;
  j["support_violation"] = l.support_violation;
  j["avg_log_likelihood"] = to_json(l.avg_log_likelihood);
  j["kl_term"] = opt_estimate(l.kl_term);
  j["entropy_term"] = opt_estimate(l.entropy_term);
  if (l.residual)
    put_number(j, "residual", *l.residual);
  else
    j["residual"] = nullptr;
  put_number(j, "bits_per_dim", l.bits_per_dim());
  return j;
}

DecompositionLedger ledger_from(const json& j) {
  DecompositionLedger l;
  l.data_dist_id = j.at("data_dist_id").get<std::string>();
  l.model_id = j.at("model_id").get<std::string>();
  l.n = j.at("n").get<std::size_t>();
  l.dim = j.at("dim").get<std::size_t>();
  l.support_violation = j.at("support_violation").get<bool>();
  l.avg_log_likelihood = estimate_from_json(j.at("avg_log_likelihood"));
  l.kl_term = opt_estimate_from(j.at("kl_term"));
  l.entropy_term = opt_estimate_from(j.at("entropy_term"));
  if (!j.at("residual").is_null() || j.contains("residual_non_finite")) l.residual = get_number(j, "residual");
  return l;
}

json contrast_json(const ContrastStats& c) {
  json j;
  put_number(j, "mu", c.mu);
  put_number(j, "sigma2", c.sigma2);
  put_number(j, "mean_in", c.mean_in);
  put_number(j, "mean_out", c.mean_out);
  put_number(j, "var_in", c.var_in);
  put_number(j, "var_out", c.var_out);
  j["chebyshev_bound"] = c.chebyshev_bound ? json(*c.chebyshev_bound) : json(nullptr);
  j["vacuous"] = c.vacuous();
  j["empirical_p_z_gt_0"] = to_json(c.empirical_p_z_gt_0);
  j["n_pairs"] = c.n_pairs;
  j["excluded"] = c.excluded;
  return j;
}

ContrastStats contrast_from(const json& j) {
  ContrastStats c;
  c.mu = get_number(j, "mu");
  c.sigma2 = get_number(j, "sigma2");
  c.mean_in = get_number(j, "mean_in");
  c.mean_out = get_number(j, "mean_out");
  c.var_in = get_number(j, "var_in");
  c.var_out = get_number(j, "var_out");
  if (!j.at("chebyshev_bound").is_null()) c.chebyshev_bound = j.at("chebyshev_bound").get<double>();
  c.empirical_p_z_gt_0 = estimate_from_json(j.at("empirical_p_z_gt_0"));
  c.n_pairs = j.at("n_pairs").get<std::size_t>();
  c.excluded = j.at("excluded").get<std::size_t>();
  return c;
}

json detector_json(const DetectorResult& d) {
  json j;
  j["name"] = d.spec.name;
  if (d.spec.name == "typicality") j["batch_size"] = d.spec.batch_size;
  j["model_ids"] = d.model_ids;
  j["auroc"] = d.metrics.auroc;
  j["fpr_at_95_tpr"] = d.metrics.fpr_at_95_tpr;
  j["n_in"] = d.metrics.n_in;
  j["n_out"] = d.metrics.n_out;
  j["non_finite_in"] = d.non_finite_in;
  j["non_finite_out"] = d.non_finite_out;
  j["train_entropy"] = opt_estimate(d.train_entropy);
  std::vector<double> fpr, tpr;
  for (const auto& p : d.roc) {
    fpr.push_back(p.fpr);
    tpr.push_back(p.tpr);
  }
  j["roc"] = {{"fpr", fpr}, {"tpr", tpr}};
  return j;
}

DetectorResult detector_from(const json& j) {
  DetectorResult d;
  d.spec.name = j.at("name").get<std::string>();
  if (j.contains("batch_size")) d.spec.batch_size = j.at("batch_size").get<std::size_t>();
  d.model_ids = j.at("model_ids").get<std::vector<std::string>>();
  d.metrics.auroc = j.at("auroc").get<double>();
  d.metrics.fpr_at_95_tpr = j.at("fpr_at_95_tpr").get<double>();
  d.metrics.n_in = j.at("n_in").get<std::size_t>();
  d.metrics.n_out = j.at("n_out").get<std::size_t>();
  d.non_finite_in = j.at("non_finite_in").get<std::size_t>();
  d.non_finite_out = j.at("non_finite_out").get<std::size_t>();
  d.train_entropy = opt_estimate_from(j.at("train_entropy"));
  const auto fpr = j.at("roc").at("fpr").get<std::vector<double>>();
  const auto tpr = j.at("roc").at("tpr").get<std::vector<double>>();
  if (fpr.size() != tpr.size()) fail(ErrorCode::data, "report: ROC arrays differ in length");
  for (std::size_t i = 0; i < fpr.size(); ++i) d.roc.push_back({fpr[i], tpr[i]});
  return d;
}

std::string ledger_csv(const ExperimentReport& r) {
  CsvTable t;
  t.header = {"side", "term", "value", "std_error", "n", "method"};
  auto add = [&](const char* side, const char* term, const Estimate& e) {
    t.rows.push_back({side, term, format_csv_number(e.value), format_csv_number(e.std_error), std::to_string(e.n),
                      e.method});
  };
  for (const auto& [side, l] : {std::pair<const char*, const DecompositionLedger*>{"in", &r.ledger_in},
                                {"out", &r.ledger_out}}) {
    add(side, "avg_log_likelihood", l->avg_log_likelihood);
    if (l->kl_term) add(side, "kl", *l->kl_term);
    if (l->entropy_term) add(side, "entropy", *l->entropy_term);
    if (l->residual) t.rows.push_back({side, "residual", format_csv_number(*l->residual), "", "", ""});
    t.rows.push_back({side, "bits_per_dim", format_csv_number(l->bits_per_dim()), "", "", ""});
  }
  return to_csv(t);
}

std::string contrast_csv(const ContrastStats& c) {
  CsvTable t;
  t.header = {"statistic", "value"};
  auto add = [&](const char* k, double v) { t.rows.push_back({k, format_csv_number(v)}); };
  add("mu", c.mu);
  add("sigma2", c.sigma2);
  add("mean_in", c.mean_in);
  add("mean_out", c.mean_out);
  add("var_in", c.var_in);
  add("var_out", c.var_out);
  t.rows.push_back({"chebyshev_bound", c.chebyshev_bound ? format_csv_number(*c.chebyshev_bound) : ""});
  add("empirical_p_z_gt_0", c.empirical_p_z_gt_0.value);
  add("empirical_p_z_gt_0_se", c.empirical_p_z_gt_0.std_error);
  t.rows.push_back({"n_pairs", std::to_string(c.n_pairs)});
  t.rows.push_back({"excluded", std::to_string(c.excluded)});
  return to_csv(t);
}

std::string metrics_csv(const ExperimentReport& r) {
  CsvTable t;
  t.header = {"detector", "auroc", "fpr_at_95_tpr", "n_in", "n_out"};
  for (const auto& d : r.detectors)
    t.rows.push_back({d.spec.name, format_csv_number(d.metrics.auroc), format_csv_number(d.metrics.fpr_at_95_tpr),
                      std::to_string(d.metrics.n_in), std::to_string(d.metrics.n_out)});
  return to_csv(t);
}

json* walk_path(json& doc, const std::string& path) {
  json* node = &doc;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  if (parts.empty()) fail(ErrorCode::config, "sweep: empty parameter path");
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto& p = parts[i];
    const bool last = i + 1 == parts.size();
    if (node->is_array()) {
      std::size_t idx = 0;
      try {
        idx = std::stoul(p);
      } catch (const std::exception&) {
        fail(ErrorCode::config, "sweep: '" + path + "': '" + p + "' is not an array index");
      }
      if (idx >= node->size()) fail(ErrorCode::config, "sweep: '" + path + "': index " + p + " out of range");
      node = &(*node)[idx];
    } else if (node->is_object()) {
      if (!last && !node->contains(p)) fail(ErrorCode::config, "sweep: '" + path + "': no field '" + p + "'");
      node = &(*node)[p];
    } else {
      fail(ErrorCode::config, "sweep: '" + path + "': cannot descend into '" + p + "'");
    }
  }
  return node;
}

void set_dims(json& node, const json& value) {
  if (node.is_object()) {
    if (node.contains("dim") && node.contains("kind") && node["kind"] != "idx") node["dim"] = value;
    for (auto& [k, v] : node.items()) set_dims(v, value);
  } else if (node.is_array()) {
    for (auto& v : node) set_dims(v, value);
  }
}

std::string value_tag(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

}  // namespace

bool OutputSpec::wants(std::string_view format) const {
  return std::find(formats.begin(), formats.end(), format) != formats.end();
}

std::vector<std::string> validate_config(const json& doc, const std::filesystem::path& base_dir) {
  Issues issues;
  build_config(doc, base_dir, issues);
  return issues.list;
}

ExperimentConfig parse_config(const json& doc, const std::filesystem::path& base_dir) {
  Issues issues;
  ExperimentConfig cfg = build_config(doc, base_dir, issues);
  if (!issues.list.empty()) {
    std::string msg;
    for (const auto& m : issues.list) msg += (msg.empty() ? "" : "\n") + m;
    fail(ErrorCode::config, msg);
  }
  return cfg;
}

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::config, std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(doc, base_dir);
}

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["id"] = cfg.id;
  j["seed"] = cfg.seed;
  j["in_dist"] = source_to_json(cfg.in_source);
  j["out_dist"] = source_to_json(cfg.out_source);
  json m{{"kind", std::string(to_string(cfg.model.kind))}};
  switch (cfg.model.kind) {
    case ModelKind::gaussian_mle:
      m["ridge"] = cfg.model.ridge;
      break;
    case ModelKind::gmm_em:
      m["components"] = cfg.model.components;
      m["max_iters"] = cfg.model.max_iters;
      m["tol"] = cfg.model.tol;
      m["ridge"] = cfg.model.ridge;
      break;
    case ModelKind::histogram: {
      m["bins"] = cfg.model.bins;
      json range = json::array();
      for (const auto& r : cfg.model.range) range.push_back({r.lower, r.upper});
      m["range"] = range;
      break;
    }
    case ModelKind::pixel_categorical:
      m["alpha"] = cfg.model.alpha;
      m["categories"] = cfg.model.categories;
      break;
    default:
      break;
  }
  j["model"] = m;
  if (cfg.reference) {
    if (cfg.reference->kind == ReferenceSpec::Kind::exact)
      j["reference"] = {{"kind", "exact"}, {"distribution", to_json(*cfg.reference->distribution)}};
    else
      j["reference"] = {{"kind", "compressor"}, {"codec", cfg.reference->codec.identifier},
                        {"level", cfg.reference->codec.level}};
  }
  json dets = json::array();
  for (const auto& d : cfg.detectors) {
    json dj{{"name", d.name}};
    if (d.name == "typicality") dj["batch_size"] = d.batch_size;
    dets.push_back(dj);
  }
  j["detectors"] = dets;
  j["samples"] = {{"n_train", cfg.samples.n_train}, {"n_eval", cfg.samples.n_eval}, {"n_pairs", cfg.samples.n_pairs}};
  j["outputs"] = {{"dir", cfg.outputs.dir.generic_string()}, {"formats", cfg.outputs.formats}};
  return j;
}

std::vector<json> expand_sweep(const json& templ, const std::string& param, const std::vector<json>& values) {
  if (values.empty()) fail(ErrorCode::config, "sweep: no values given for '" + param + "'");
  std::vector<json> out;
  const std::string base_id = templ.value("id", std::string("experiment"));
  const std::string tag = param.substr(param.find_last_of('.') + 1);
  std::filesystem::path base_dir = "out";
  if (const auto o = templ.find("outputs"); o != templ.end() && o->is_object() && o->contains("dir"))
    base_dir = o->at("dir").get<std::string>();
  for (const auto& v : values) {
    json doc = templ;
    if (param == "dim")
      set_dims(doc, v);
    else
      *walk_path(doc, param) = v;
    const std::string id = base_id + "-" + tag + value_tag(v);
    doc["id"] = id;
    doc["outputs"]["dir"] = (base_dir / id).generic_string();
    out.push_back(std::move(doc));
  }
  return out;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg, const Exec& exec) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t seed = cfg.seed;
  const auto* in_dist = std::get_if<Distribution>(&cfg.in_source);
  const auto* out_dist = std::get_if<Distribution>(&cfg.out_source);
  const std::size_t n_eval = cfg.samples.n_eval;
  const bool fitted = cfg.model.kind != ModelKind::exact;
  const bool wants_typicality = std::any_of(cfg.detectors.begin(), cfg.detectors.end(),
                                            [](const DetectorSpec& d) { return d.name == "typicality"; });

  std::optional<Dataset> train;
  if (fitted || (wants_typicality && !in_dist))
    train = stage("load-train", [&] { return draw(cfg.in_source, true, cfg.samples.n_train, derive_seed(seed, "train"), exec); });

  const DensityModel model = stage("fit", [&] {
    switch (cfg.model.kind) {
      case ModelKind::exact:
        if (!in_dist) fail(ErrorCode::config, "exact model needs a distribution");
        return DensityModel::exact(*in_dist);
      case ModelKind::gaussian_mle:
        return fit_gaussian(*train, cfg.model.ridge);
      case ModelKind::gmm_em:
        return fit_gmm_em(*train, cfg.model.components,
                          EmConfig{cfg.model.max_iters, cfg.model.tol, derive_seed(seed, "em"), cfg.model.ridge});
      case ModelKind::histogram:
        return fit_histogram(*train, cfg.model.bins, cfg.model.range);
      case ModelKind::pixel_categorical:
        return fit_pixel_categorical(*train, cfg.model.alpha, cfg.model.categories);
      case ModelKind::compressor_proxy:
        break;
    }
    fail(ErrorCode::config, "model kind cannot be fitted");
  });

  std::optional<DensityModel> reference;
  if (cfg.reference)
    reference = stage("reference", [&] {
      if (cfg.reference->kind == ReferenceSpec::Kind::exact) return DensityModel::exact(*cfg.reference->distribution);
      return compressor_model(cfg.reference->codec, model.dim());
    });

  const Dataset eval_in =
      stage("load-eval-in", [&] { return draw(cfg.in_source, false, n_eval, derive_seed(seed, "eval-in"), exec); });
  const Dataset eval_out =
      stage("load-eval-out", [&] { return draw(cfg.out_source, false, n_eval, derive_seed(seed, "eval-out"), exec); });

  ExperimentReport r;
  r.config = config_to_json(cfg);
  r.library_version = std::string(library_version());
  r.codec_version = codec_library_version();
  r.generator = std::string(kGeneratorName);
  r.dim = model.dim();
  r.measure = model.measure();
  r.model_id = model.id();
  r.fit = model.fit_meta();
  if (reference) r.reference_id = reference->id();

  r.ledger_in = stage("ledger-in", [&] {
    if (in_dist) return decomposition_ledger(*in_dist, model, n_eval, derive_seed(seed, "ledger-in"), exec);
    return empirical_ledger(eval_in, model, exec);
  });
  r.ledger_out = stage("ledger-out", [&] {
    if (out_dist) return decomposition_ledger(*out_dist, model, n_eval, derive_seed(seed, "ledger-out"), exec);
    return empirical_ledger(eval_out, model, exec);
  });
  r.contrast = stage("contrast", [&] {
    if (in_dist && out_dist)
      return contrast_stats(*in_dist, *out_dist, model, cfg.samples.n_pairs, derive_seed(seed, "contrast"), exec);
    return contrast_stats(eval_in, eval_out, model, exec);
  });

  const ScoreSet ll_in = stage("score", [&] { return score_likelihood(model, eval_in, exec); });
  const ScoreSet ll_out = stage("score", [&] { return score_likelihood(model, eval_out, exec); });
  r.log_likelihood = histogram_of(ll_in, ll_out);

  for (const auto& d : cfg.detectors) {
    r.detectors.push_back(stage("detector " + d.name, [&] {
      if (d.name == "likelihood") return finish_detector(d, ll_in, ll_out);
      if (d.name == "likelihood-ratio") {
        if (!reference) fail(ErrorCode::config, "no reference model configured");
        return finish_detector(d, score_likelihood_ratio(model, *reference, eval_in, exec),
                               score_likelihood_ratio(model, *reference, eval_out, exec));
      }
      const Dataset typ_train = train ? *train
                                      : sample(*in_dist, cfg.samples.n_train, derive_seed(seed, "typicality-train"),
                                               exec);
      const Estimate h = typicality_train_entropy(model, typ_train, exec);
      DetectorResult res = finish_detector(d, score_typicality_batches(model, h, eval_in, d.batch_size),
                                           score_typicality_batches(model, h, eval_out, d.batch_size));
      res.train_entropy = h;
      return res;
    }));
  }
  r.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

json report_to_json(const ExperimentReport& r) {
  json j;
  j["format"] = "ooddiag-report";
  j["schema_version"] = kReportSchemaVersion;
  j["config"] = r.config;
  j["library"] = {{"version", r.library_version}, {"codec", r.codec_version}, {"generator", r.generator}};
  j["dim"] = r.dim;
  j["measure"] = std::string(to_string(r.measure));
  j["model"] = {{"id", r.model_id}, {"fit_meta", to_json(r.fit)}};
  j["reference_id"] = r.reference_id ? json(*r.reference_id) : json(nullptr);
  j["ledger_in"] = ledger_json(r.ledger_in);
  j["ledger_out"] = ledger_json(r.ledger_out);
  j["contrast"] = contrast_json(r.contrast);
  json dets = json::array();
  for (const auto& d : r.detectors) dets.push_back(detector_json(d));
  j["detectors"] = dets;
  const auto& h = r.log_likelihood;
  j["log_likelihood_histogram"] = {{"lower", h.lower},         {"upper", h.upper},
                                   {"in_counts", h.in_counts}, {"out_counts", h.out_counts},
                                   {"excluded_in", h.excluded_in}, {"excluded_out", h.excluded_out}};
  return j;
}

ExperimentReport report_from_json(const json& j) {
  try {
    if (j.value("format", std::string{}) != "ooddiag-report") fail(ErrorCode::data, "not an ooddiag report");
    if (j.at("schema_version") != kReportSchemaVersion)
      fail(ErrorCode::data, "unsupported report schema version " + j.at("schema_version").dump());
    ExperimentReport r;
    r.config = j.at("config");
    r.library_version = j.at("library").at("version").get<std::string>();
    r.codec_version = j.at("library").at("codec").get<std::string>();
    r.generator = j.at("library").at("generator").get<std::string>();
    r.dim = j.at("dim").get<std::size_t>();
    r.measure = measure_from_string(j.at("measure").get<std::string>());
    r.model_id = j.at("model").at("id").get<std::string>();
    r.fit = fit_meta_from_json(j.at("model").at("fit_meta"));
    if (!j.at("reference_id").is_null()) r.reference_id = j.at("reference_id").get<std::string>();
    r.ledger_in = ledger_from(j.at("ledger_in"));
    r.ledger_out = ledger_from(j.at("ledger_out"));
    r.contrast = contrast_from(j.at("contrast"));
    for (const auto& d : j.at("detectors")) r.detectors.push_back(detector_from(d));
    const auto& h = j.at("log_likelihood_histogram");
    r.log_likelihood.lower = h.at("lower").get<double>();
    r.log_likelihood.upper = h.at("upper").get<double>();
    r.log_likelihood.in_counts = h.at("in_counts").get<std::vector<std::size_t>>();
    r.log_likelihood.out_counts = h.at("out_counts").get<std::vector<std::size_t>>();
    r.log_likelihood.excluded_in = h.at("excluded_in").get<std::size_t>();
    r.log_likelihood.excluded_out = h.at("excluded_out").get<std::size_t>();
    return r;
  } catch (const json::exception& e) {
    fail(ErrorCode::data, std::string("malformed report: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::data) throw;
    fail(ErrorCode::data, std::string("malformed report: ") + e.what());
  }
}

std::vector<std::filesystem::path> write_outputs(const ExperimentReport& report, const OutputSpec& outputs) {
  return stage("output", [&] {
    std::vector<std::filesystem::path> written;
    std::error_code ec;
    std::filesystem::create_directories(outputs.dir, ec);
    if (ec) fail(ErrorCode::data, "cannot create output directory '" + outputs.dir.string() + "': " + ec.message());
    auto put = [&](const std::string& name, const std::string& text) {
      const auto path = outputs.dir / name;
      write_text_file(path, text);
      written.push_back(path);
    };
    if (outputs.wants("json")) put("report.json", report_to_json(report).dump(2) + "\n");
    if (outputs.wants("csv")) {
      put("ledger.csv", ledger_csv(report));
      put("contrast.csv", contrast_csv(report.contrast));
      put("metrics.csv", metrics_csv(report));
      for (const auto& d : report.detectors) {
        if (d.in_scores.detector_id.empty()) continue;
        put("scores_" + d.spec.name + "_in.csv", to_csv(score_table(d.in_scores)));
        put("scores_" + d.spec.name + "_out.csv", to_csv(score_table(d.out_scores)));
      }
    }
    if (outputs.wants("svg")) {
      const auto svgs = emit_plots(report, outputs.dir);
      written.insert(written.end(), svgs.begin(), svgs.end());
    }
    json timing{{"id", report.config.value("id", std::string{})}, {"wall_clock_seconds", report.wall_clock_seconds}};
    put("timing.json", timing.dump(2) + "\n");
    return written;
  });
}

}  // namespace ood
