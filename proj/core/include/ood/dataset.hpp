#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ood {

/// Base measure of a density: Lebesgue for real-valued data, counting for
/// integer-coded discrete data.
enum class Measure { lebesgue, counting };

std::string_view to_string(Measure measure);
Measure measure_from_string(std::string_view text);

struct Provenance {
  std::string description;
  std::uint64_t seed = 0;
  std::string generator;
};

/// Immutable n x dim table of observations, row-major. Discrete data is stored
/// as integer-valued doubles in [0, K-1].
class Dataset {
 public:
  Dataset(std::size_t dim, Measure measure, std::vector<double> values, Provenance provenance);

  static Dataset empty(std::size_t dim, Measure measure, Provenance provenance = {});

  std::size_t size() const noexcept { return dim_ == 0 ? 0 : values_.size() / dim_; }
  bool empty() const noexcept { return values_.empty(); }
  std::size_t dim() const noexcept { return dim_; }
  Measure measure() const noexcept { return measure_; }
  const Provenance& provenance() const noexcept { return provenance_; }

  std::span<const double> row(std::size_t i) const noexcept {
    return {values_.data() + i * dim_, dim_};
  }
  std::span<const double> values() const noexcept { return values_; }

  /// Rows [first, first + count) as a new dataset sharing this provenance.
  Dataset slice(std::size_t first, std::size_t count) const;
  /// Rows selected by index, in the given order.
  Dataset gather(std::span<const std::size_t> indices, Provenance provenance) const;

 private:
  std::size_t dim_;
  Measure measure_;
  std::vector<double> values_;
  Provenance provenance_;
};

}  // namespace ood
