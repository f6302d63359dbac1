#include "fedfactory/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace fedfactory {

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  double hi = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

double diag_gaussian_log_pdf(std::span<const double> x, std::span<const double> mean,
                             std::span<const double> var) {
  constexpr double kLog2Pi = 1.8378770664093454836;
  double acc = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    double diff = x[j] - mean[j];
    acc += kLog2Pi + std::log(var[j]) + diff * diff / var[j];
  }
  return -0.5 * acc;
}

std::size_t pick_weighted(std::span<const double> weights, Rng& rng) {
  double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  double u = rng.uniform() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return i;
  }
  // Rounding left u at the top edge: return the last positive weight.
  for (std::size_t i = weights.size(); i-- > 0;) {
    if (weights[i] > 0.0) return i;
  }
  return 0;
}

namespace {

template <typename Frac>
std::vector<std::size_t> distribute_leftover(std::vector<std::size_t> base, std::size_t total,
                                             const std::vector<Frac>& frac) {
  std::size_t assigned = std::accumulate(base.begin(), base.end(), std::size_t{0});
  std::vector<std::size_t> order(base.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t i = 0; assigned < total; i = (i + 1) % order.size(), ++assigned) ++base[order[i]];
  return base;
}

}  // namespace

std::vector<std::size_t> largest_remainder(std::span<const double> weights, std::size_t total) {
  if (weights.empty()) return {};
  double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::size_t> base(weights.size(), 0);
  std::vector<double> frac(weights.size(), 0.0);
  if (!(sum > 0.0)) {
    base[0] = total;
    return base;
  }
  for (std::size_t i = 0; i < weights.size(); ++i) {
    double exact = static_cast<double>(total) * weights[i] / sum;
    double fl = std::floor(exact);
    base[i] = static_cast<std::size_t>(fl);
    frac[i] = exact - fl;
  }
  std::size_t assigned = std::accumulate(base.begin(), base.end(), std::size_t{0});
  // Rounding can overshoot by a unit; trim from the smallest fractions.
  while (assigned > total) {
    std::size_t worst = 0;
    for (std::size_t i = 1; i < base.size(); ++i) {
      if (base[i] > 0 && (base[worst] == 0 || frac[i] < frac[worst])) worst = i;
    }
    --base[worst];
    --assigned;
  }
  return distribute_leftover(std::move(base), total, frac);
}

std::vector<std::size_t> largest_remainder(std::span<const std::size_t> weights, std::size_t total) {
  if (weights.empty()) return {};
  std::size_t sum = std::accumulate(weights.begin(), weights.end(), std::size_t{0});
  std::vector<std::size_t> base(weights.size(), 0);
  if (sum == 0) {
    base[0] = total;
    return base;
  }
  std::vector<std::size_t> rem(weights.size(), 0);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    unsigned __int128 num = static_cast<unsigned __int128>(total) * weights[i];
    base[i] = static_cast<std::size_t>(num / sum);
    rem[i] = static_cast<std::size_t>(num % sum);
  }
  return distribute_leftover(std::move(base), total, rem);
}

double mean_of(std::span<const double> values) {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double stddev_of(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  double m = mean_of(values);
  double acc = 0.0;
  for (double v : values) acc += (v - m) * (v - m);
  return std::sqrt(acc / static_cast<double>(values.size() - 1));
}

}  // namespace fedfactory
