#pragma once

#include <nlohmann/json.hpp>
#include <string>

#include "ood/density_models.hpp"
#include "ood/distributions.hpp"
#include "ood/estimators.hpp"

namespace ood {

using json = nlohmann::json;

inline constexpr int kModelFormatVersion = 1;

/// Distribution spec as used in experiment configs. Vector fields (mean,
/// variances, lower, upper) accept a scalar, broadcast to `dim`; categorical
/// `probs` accepts a single site's table, broadcast to every site.
/// Unknown fields are rejected by name.
Distribution distribution_from_json(const json& spec);
json to_json(const Distribution& dist);

/// Versioned model document: {"format": "ooddiag-model", "version": 1,
/// "kind", "dim", "measure", "params", "fit_meta"}. Compressor models pin
/// the codec identifier, level and codec library version.
json to_json(const DensityModel& model);
DensityModel model_from_json(const json& doc);

/// obj[key] = value; a non-finite value is stored as null together with
/// obj[key + "_non_finite"] = "inf" | "-inf" | "nan".
void put_number(json& obj, const std::string& key, double value);
/// Inverse of put_number. Throws a data error naming the key when absent.
double get_number(const json& obj, const std::string& key);

json to_json(const FitMeta& meta);
FitMeta fit_meta_from_json(const json& j);

json to_json(const Estimate& e);
Estimate estimate_from_json(const json& j);

}  // namespace ood
