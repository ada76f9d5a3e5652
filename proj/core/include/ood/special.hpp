#pragma once

#include <cstddef>

namespace ood {

/// Digamma for x > 0: recurrence up to x >= 10, then the Bernoulli-series
/// asymptotic expansion through x^-14.
double digamma(double x);

/// ln of the volume of the Euclidean unit ball in d dimensions.
double log_unit_ball_volume(std::size_t d);

}  // namespace ood
