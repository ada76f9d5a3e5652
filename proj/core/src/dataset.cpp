#include "ood/dataset.hpp"

#include <cmath>

#include "ood/error.hpp"

namespace ood {

std::string_view to_string(Measure measure) {
  return measure == Measure::lebesgue ? "lebesgue" : "counting";
}

Measure measure_from_string(std::string_view text) {
  if (text == "lebesgue") return Measure::lebesgue;
  if (text == "counting") return Measure::counting;
  fail(ErrorCode::invalid_argument, "unknown measure '" + std::string(text) + "'");
}

Dataset::Dataset(std::size_t dim, Measure measure, std::vector<double> values, Provenance provenance)
    : dim_(dim), measure_(measure), values_(std::move(values)), provenance_(std::move(provenance)) {
  require(dim_ > 0, "dataset dimension must be positive");
  require(values_.size() % dim_ == 0,
          "dataset value count " + std::to_string(values_.size()) + " is not a multiple of dim " +
              std::to_string(dim_));
  for (double v : values_) {
    require(std::isfinite(v), "dataset contains a non-finite value");
    if (measure_ == Measure::counting)
      require(v >= 0.0 && v == std::floor(v), "counting-measure data must be non-negative integer codes");
  }
}

Dataset Dataset::empty(std::size_t dim, Measure measure, Provenance provenance) {
  return Dataset(dim, measure, {}, std::move(provenance));
}

Dataset Dataset::slice(std::size_t first, std::size_t count) const {
  require(first + count <= size(), "dataset slice out of range");
  std::vector<double> out(values_.begin() + static_cast<std::ptrdiff_t>(first * dim_),
                          values_.begin() + static_cast<std::ptrdiff_t>((first + count) * dim_));
  return Dataset(dim_, measure_, std::move(out), provenance_);
}

Dataset Dataset::gather(std::span<const std::size_t> indices, Provenance provenance) const {
  std::vector<double> out;
  out.reserve(indices.size() * dim_);
  for (std::size_t i : indices) {
    require(i < size(), "dataset gather index out of range");
    const auto r = row(i);
    out.insert(out.end(), r.begin(), r.end());
  }
  return Dataset(dim_, measure_, std::move(out), std::move(provenance));
}

}  // namespace ood
