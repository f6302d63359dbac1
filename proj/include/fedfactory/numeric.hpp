#pragma once

#include <span>
#include <vector>

#include "fedfactory/core.hpp"

namespace fedfactory {

double log_sum_exp(std::span<const double> values);

// log N(x; mean, diag(var)).
double diag_gaussian_log_pdf(std::span<const double> x, std::span<const double> mean,
                             std::span<const double> var);

// Index drawn with probability proportional to weights.
std::size_t pick_weighted(std::span<const double> weights, Rng& rng);

// Integer apportionment of `total` proportional to `weights`: floors first,
// leftover units go to the largest fractional parts, ties to the lower index.
// The integer overload computes remainders exactly.
std::vector<std::size_t> largest_remainder(std::span<const double> weights, std::size_t total);
std::vector<std::size_t> largest_remainder(std::span<const std::size_t> weights, std::size_t total);

double mean_of(std::span<const double> values);
// Sample standard deviation (n - 1); 0 for fewer than two values.
double stddev_of(std::span<const double> values);

}  // namespace fedfactory
