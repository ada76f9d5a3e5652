#include "ood/serialization.hpp"

#include <cmath>
#include <initializer_list>
#include <limits>

#include "ood/error.hpp"

namespace ood {

namespace {

[[noreturn]] void bad(ErrorCode code, const std::string& where, const std::string& what) {
  fail(code, where + ": " + what);
}

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const std::string& where,
                    ErrorCode code) {
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) bad(code, where, "unknown field '" + key + "'");
  }
}

const json& field(const json& obj, const char* key, const std::string& where, ErrorCode code) {
  if (!obj.is_object()) bad(code, where, "expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) bad(code, where, "missing field '" + std::string(key) + "'");
  return *it;
}

double as_double(const json& v, const std::string& where, ErrorCode code) {
  if (!v.is_number()) bad(code, where, "expected a number");
  return v.get<double>();
}

std::size_t as_size(const json& v, const std::string& where, ErrorCode code) {
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0))
    bad(code, where, "expected a non-negative integer");
  return v.get<std::size_t>();
}

// Scalar broadcast to dim, or an array of exactly dim numbers.
std::vector<double> vector_field(const json& obj, const char* key, std::size_t dim, const std::string& where,
                                 ErrorCode code) {
  const json& v = field(obj, key, where, code);
  const std::string here = where + "." + key;
  if (v.is_number()) return std::vector<double>(dim, v.get<double>());
  if (!v.is_array()) bad(code, here, "expected a number or an array");
  if (v.size() != dim)
    bad(code, here, "expected " + std::to_string(dim) + " entries, found " + std::to_string(v.size()));
  std::vector<double> out;
  out.reserve(dim);
  for (const auto& x : v) out.push_back(as_double(x, here, code));
  return out;
}

std::vector<double> number_array(const json& v, const std::string& where, ErrorCode code) {
  if (!v.is_array()) bad(code, where, "expected an array");
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& x : v) out.push_back(as_double(x, where, code));
  return out;
}

json vec_json(const Eigen::VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

json gaussian_json(const Gaussian& g) {
  json j;
  j["dim"] = g.dim();
  j["mean"] = vec_json(g.mean());
  switch (g.shape()) {
    case Gaussian::Shape::isotropic:
      j["kind"] = "isotropic-gaussian";
      j["variance"] = g.variances()[0];
      break;
    case Gaussian::Shape::diagonal:
      j["kind"] = "diagonal-gaussian";
      j["variances"] = vec_json(g.variances());
      break;
    case Gaussian::Shape::full: {
      j["kind"] = "full-gaussian";
      const Eigen::MatrixXd c = g.covariance();
      json rows = json::array();
      for (Eigen::Index r = 0; r < c.rows(); ++r) {
        std::vector<double> row(static_cast<std::size_t>(c.cols()));
        for (Eigen::Index k = 0; k < c.cols(); ++k) row[static_cast<std::size_t>(k)] = c(r, k);
        rows.push_back(row);
      }
      j["covariance"] = std::move(rows);
      break;
    }
  }
  return j;
}

Gaussian gaussian_from_json(const json& spec, const std::string& where, ErrorCode code) {
  const std::string kind = field(spec, "kind", where, code).get<std::string>();
  const std::size_t dim = as_size(field(spec, "dim", where, code), where + ".dim", code);
  if (dim == 0) bad(code, where + ".dim", "must be positive");
  auto mean = vector_field(spec, "mean", dim, where, code);
  if (kind == "isotropic-gaussian") {
    reject_unknown(spec, {"kind", "dim", "mean", "variance"}, where, code);
    return Gaussian::isotropic(std::move(mean), as_double(field(spec, "variance", where, code), where + ".variance",
                                                          code));
  }
  if (kind == "diagonal-gaussian") {
    reject_unknown(spec, {"kind", "dim", "mean", "variances"}, where, code);
    return Gaussian::diagonal(std::move(mean), vector_field(spec, "variances", dim, where, code));
  }
  if (kind == "full-gaussian") {
    reject_unknown(spec, {"kind", "dim", "mean", "covariance"}, where, code);
    const json& c = field(spec, "covariance", where, code);
    const std::string here = where + ".covariance";
    if (!c.is_array() || c.size() != dim) bad(code, here, "expected " + std::to_string(dim) + " rows");
    Eigen::MatrixXd cov(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    for (std::size_t r = 0; r < dim; ++r) {
      const auto row = number_array(c[r], here, code);
      if (row.size() != dim) bad(code, here, "row " + std::to_string(r) + " must have " + std::to_string(dim) +
                                                   " entries");
      for (std::size_t k = 0; k < dim; ++k) cov(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = row[k];
    }
    return Gaussian::full(std::move(mean), cov);
  }
  bad(code, where + ".kind", "'" + kind + "' is not a Gaussian kind");
}

Distribution distribution_from_json_impl(const json& spec, const std::string& where, ErrorCode code) {
  const json& kind_v = field(spec, "kind", where, code);
  if (!kind_v.is_string()) bad(code, where + ".kind", "expected a string");
  const std::string kind = kind_v.get<std::string>();
  try {
    if (kind == "isotropic-gaussian" || kind == "diagonal-gaussian" || kind == "full-gaussian")
      return Distribution::gaussian(gaussian_from_json(spec, where, code));

    const std::size_t dim = as_size(field(spec, "dim", where, code), where + ".dim", code);
    if (dim == 0) bad(code, where + ".dim", "must be positive");

    if (kind == "gaussian-mixture") {
      reject_unknown(spec, {"kind", "dim", "weights", "components"}, where, code);
      auto weights = number_array(field(spec, "weights", where, code), where + ".weights", code);
      const json& comps = field(spec, "components", where, code);
      if (!comps.is_array()) bad(code, where + ".components", "expected an array");
      std::vector<Gaussian> components;
      for (std::size_t i = 0; i < comps.size(); ++i) {
        const std::string here = where + ".components[" + std::to_string(i) + "]";
        Gaussian g = gaussian_from_json(comps[i], here, code);
        if (g.dim() != dim) bad(code, here, "dimension differs from the mixture's");
        components.push_back(std::move(g));
      }
      return Distribution::gaussian_mixture(std::move(weights), std::move(components));
    }
    if (kind == "uniform-box") {
      reject_unknown(spec, {"kind", "dim", "lower", "upper"}, where, code);
      return Distribution::uniform_box(vector_field(spec, "lower", dim, where, code),
                                       vector_field(spec, "upper", dim, where, code));
    }
    if (kind == "categorical-product") {
      reject_unknown(spec, {"kind", "dim", "probs"}, where, code);
      const json& p = field(spec, "probs", where, code);
      const std::string here = where + ".probs";
      if (!p.is_array() || p.empty()) bad(code, here, "expected a non-empty array");
      std::vector<std::vector<double>> probs;
      if (p.front().is_number()) {
        probs.assign(dim, number_array(p, here, code));
      } else {
        if (p.size() != dim) bad(code, here, "expected " + std::to_string(dim) + " per-site tables");
        for (const auto& site : p) probs.push_back(number_array(site, here, code));
      }
      return Distribution::categorical_product(std::move(probs));
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::invalid_argument) bad(code, where, e.what());
    throw;
  } catch (const json::exception& e) {
    bad(code, where, e.what());
  }
  bad(code, where + ".kind", "unknown distribution kind '" + kind + "'");
}

}  // namespace

json to_json(const FitMeta& m) {
  json j;
  j["training_provenance"] = m.training_provenance;
  j["training_seed"] = m.training_seed;
  j["n_train"] = m.n_train;
  j["iterations"] = m.iterations;
  put_number(j, "final_train_log_likelihood", m.final_train_log_likelihood);
  j["trajectory"] = m.trajectory;
  j["reseeded_at"] = m.reseeded_at;
  j["converged"] = m.converged;
  return j;
}

FitMeta fit_meta_from_json(const json& j) {
  constexpr auto code = ErrorCode::data;
  const std::string where = "model.fit_meta";
  FitMeta m;
  m.training_provenance = field(j, "training_provenance", where, code).get<std::string>();
  m.training_seed = field(j, "training_seed", where, code).get<std::uint64_t>();
  m.n_train = as_size(field(j, "n_train", where, code), where + ".n_train", code);
  m.iterations = as_size(field(j, "iterations", where, code), where + ".iterations", code);
  m.final_train_log_likelihood = get_number(j, "final_train_log_likelihood");
  m.trajectory = number_array(field(j, "trajectory", where, code), where + ".trajectory", code);
  m.reseeded_at = field(j, "reseeded_at", where, code).get<std::vector<std::size_t>>();
  m.converged = field(j, "converged", where, code).get<bool>();
  return m;
}

void put_number(json& obj, const std::string& key, double value) {
  if (std::isfinite(value)) {
    obj[key] = value;
    return;
  }
  obj[key] = nullptr;
  obj[key + "_non_finite"] = std::isnan(value) ? "nan" : (value > 0 ? "inf" : "-inf");
}

double get_number(const json& obj, const std::string& key) {
  const auto it = obj.find(key);
  if (it == obj.end()) fail(ErrorCode::data, "missing numeric field '" + key + "'");
  if (it->is_number()) return it->get<double>();
  if (!it->is_null()) fail(ErrorCode::data, "field '" + key + "' is not a number");
  const auto flag = obj.find(key + "_non_finite");
  if (flag == obj.end() || !flag->is_string()) fail(ErrorCode::data, "field '" + key + "' is null without a flag");
  const std::string f = flag->get<std::string>();
  if (f == "inf") return std::numeric_limits<double>::infinity();
  if (f == "-inf") return -std::numeric_limits<double>::infinity();
  if (f == "nan") return std::numeric_limits<double>::quiet_NaN();
  fail(ErrorCode::data, "field '" + key + "_non_finite' has unknown value '" + f + "'");
}

Distribution distribution_from_json(const json& spec) {
  return distribution_from_json_impl(spec, "distribution", ErrorCode::config);
}

json to_json(const Distribution& dist) {
  return std::visit(
      [&](const auto& p) -> json {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Gaussian>) {
          return gaussian_json(p);
        } else if constexpr (std::is_same_v<T, GaussianMixture>) {
          json comps = json::array();
          for (const auto& g : p.components) comps.push_back(gaussian_json(g));
          return {{"kind", "gaussian-mixture"}, {"dim", dist.dim()}, {"weights", p.weights}, {"components", comps}};
        } else if constexpr (std::is_same_v<T, UniformBox>) {
          return {{"kind", "uniform-box"}, {"dim", dist.dim()}, {"lower", p.lower}, {"upper", p.upper}};
        } else {
          return {{"kind", "categorical-product"}, {"dim", dist.dim()}, {"probs", p.probs}};
        }
      },
      dist.params());
}

json to_json(const DensityModel& model) {
  json doc;
  doc["format"] = "ooddiag-model";
  doc["version"] = kModelFormatVersion;
  doc["kind"] = std::string(to_string(model.kind()));
  doc["dim"] = model.dim();
  doc["measure"] = std::string(to_string(model.measure()));
  json params;
  switch (model.kind()) {
    case ModelKind::exact:
    case ModelKind::gaussian_mle:
    case ModelKind::gmm_em:
      params["distribution"] = to_json(*model.distribution());
      break;
    case ModelKind::histogram: {
      const auto& h = *model.histogram();
      params["bins_per_dim"] = h.bins_per_dim;
      json range = json::array();
      for (const auto& r : h.range) range.push_back({r.lower, r.upper});
      params["range"] = std::move(range);
      params["log_density"] = h.log_density;
      params["pseudo_count"] = h.pseudo_count;
      break;
    }
    case ModelKind::pixel_categorical: {
      const auto& pc = *model.pixel_categorical();
      params["categories"] = pc.categories;
      params["alpha"] = pc.alpha;
      params["n_train"] = pc.n_train;
      params["log_probs"] = pc.log_probs;
      break;
    }
    case ModelKind::compressor_proxy: {
      const auto& c = *model.codec();
      params["codec"] = c.identifier;
      params["level"] = c.level;
      params["library_version"] = codec_library_version();
      break;
    }
  }
  doc["params"] = std::move(params);
  doc["fit_meta"] = to_json(model.fit_meta());
  return doc;
}

DensityModel model_from_json(const json& doc) {
  constexpr auto code = ErrorCode::data;
  const std::string where = "model";
  try {
    if (!doc.is_object()) bad(code, where, "expected an object");
    reject_unknown(doc, {"format", "version", "kind", "dim", "measure", "params", "fit_meta"}, where, code);
    if (field(doc, "format", where, code) != "ooddiag-model") bad(code, where, "format is not 'ooddiag-model'");
    const json& version = field(doc, "version", where, code);
    if (version != kModelFormatVersion)
      bad(code, where, "unsupported model format version " + version.dump() + " (this build reads version " +
                           std::to_string(kModelFormatVersion) + ")");
    const ModelKind kind = model_kind_from_string(field(doc, "kind", where, code).get<std::string>());
    const std::size_t dim = as_size(field(doc, "dim", where, code), where + ".dim", code);
    const Measure measure = measure_from_string(field(doc, "measure", where, code).get<std::string>());
    const json& params = field(doc, "params", where, code);
    const std::string pw = where + ".params";
    FitMeta meta = fit_meta_from_json(field(doc, "fit_meta", where, code));

    DensityModel model = [&]() {
      switch (kind) {
        case ModelKind::exact:
        case ModelKind::gaussian_mle:
        case ModelKind::gmm_em: {
          reject_unknown(params, {"distribution"}, pw, code);
          Distribution dist = distribution_from_json_impl(field(params, "distribution", pw, code),
                                                          pw + ".distribution", code);
          return DensityModel::from_distribution(kind, std::move(dist), std::move(meta));
        }
        case ModelKind::histogram: {
          reject_unknown(params, {"bins_per_dim", "range", "log_density", "pseudo_count"}, pw, code);
          HistogramParams h;
          h.bins_per_dim = as_size(field(params, "bins_per_dim", pw, code), pw + ".bins_per_dim", code);
          for (const auto& r : field(params, "range", pw, code)) {
            const auto lu = number_array(r, pw + ".range", code);
            if (lu.size() != 2) bad(code, pw + ".range", "each interval needs [lower, upper]");
            h.range.push_back({lu[0], lu[1]});
          }
          h.log_density = number_array(field(params, "log_density", pw, code), pw + ".log_density", code);
          h.pseudo_count = as_double(field(params, "pseudo_count", pw, code), pw + ".pseudo_count", code);
          return DensityModel::from_histogram(dim, std::move(h), std::move(meta));
        }
        case ModelKind::pixel_categorical: {
          reject_unknown(params, {"categories", "alpha", "n_train", "log_probs"}, pw, code);
          PixelCategoricalParams pc;
          pc.categories = as_size(field(params, "categories", pw, code), pw + ".categories", code);
          pc.alpha = as_double(field(params, "alpha", pw, code), pw + ".alpha", code);
          pc.n_train = as_size(field(params, "n_train", pw, code), pw + ".n_train", code);
          pc.log_probs = number_array(field(params, "log_probs", pw, code), pw + ".log_probs", code);
          return DensityModel::from_pixel_categorical(dim, std::move(pc), std::move(meta));
        }
        case ModelKind::compressor_proxy: {
          reject_unknown(params, {"codec", "level", "library_version"}, pw, code);
          const std::string lib = field(params, "library_version", pw, code).get<std::string>();
          if (lib != codec_library_version())
            bad(code, pw, "model was written with " + lib + " but this build links " + codec_library_version());
          CodecSpec c;
          c.identifier = field(params, "codec", pw, code).get<std::string>();
          c.level = field(params, "level", pw, code).get<int>();
          return DensityModel::from_codec(std::move(c), dim);
        }
      }
      bad(code, where, "unhandled model kind");
    }();
    if (model.dim() != dim) bad(code, where, "dim does not match the parameters");
    if (model.measure() != measure) bad(code, where, "measure does not match the parameters");
    return model;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::invalid_argument) bad(code, where, e.what());
    throw;
  } catch (const json::exception& e) {
    bad(code, where, e.what());
  }
}

json to_json(const Estimate& e) {
  json j;
  put_number(j, "value", e.value);
  put_number(j, "std_error", e.std_error);
  j["n"] = e.n;
  j["method"] = e.method;
  j["support_violation"] = e.support_violation;
  return j;
}

Estimate estimate_from_json(const json& j) {
  Estimate e;
  e.value = get_number(j, "value");
  e.std_error = get_number(j, "std_error");
  e.n = as_size(field(j, "n", "estimate", ErrorCode::data), "estimate.n", ErrorCode::data);
  e.method = field(j, "method", "estimate", ErrorCode::data).get<std::string>();
  e.support_violation = field(j, "support_violation", "estimate", ErrorCode::data).get<bool>();
  return e;
}

}  // namespace ood
