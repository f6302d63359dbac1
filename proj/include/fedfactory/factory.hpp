#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fedfactory/core.hpp"
#include "fedfactory/data.hpp"

namespace fedfactory {

struct GmmComponent {
  double weight = 1.0;
  std::vector<double> mean;
  std::vector<double> var;  // diagonal covariance

  bool operator==(const GmmComponent&) const = default;
};

// Parameters of one class-conditional generative prior trained by a single
// client. This is the whole uplink payload; it never carries raw samples.
struct FactoryParams {
  ClientId client;
  ClassId cls;
  std::size_t dim = 0;
  std::vector<GmmComponent> components;
  std::uint32_t n_local = 0;

  void validate() const;
  double log_density(std::span<const double> x) const;
  std::vector<double> mixture_mean() const;

  bool operator==(const FactoryParams&) const = default;
};

struct GmmConfig {
  std::size_t n_components = 3;
  std::size_t max_iters = 200;
  double rel_tol = 1e-6;
  double covariance_floor = 1e-6;

  void validate() const;
};

struct FactoryFit {
  FactoryParams params;
  // Training log-likelihood after initialization and after every EM step.
  std::vector<double> log_likelihood;
  std::size_t iterations = 0;
  std::uint64_t flops = 0;
};

// EM for a diagonal-covariance Gaussian mixture, k-means++ initialized.
// `data` must hold samples of one class from one client. Duplicate points
// collapse the mixture to as many components as there are distinct seeds.
FactoryFit fit_factory(const LabeledDataset& data, const GmmConfig& cfg, Rng& rng);
FactoryParams train_factory(const LabeledDataset& data, const GmmConfig& cfg, Rng& rng);

// n draws G(z): pick a component by weight, then mean + sqrt(var) * z.
// Samples are tagged Synthetic(client, class). num_classes defaults to
// params.cls + 1.
LabeledDataset sample_factory(const FactoryParams& params, std::size_t n, Rng& rng,
                              std::size_t num_classes = 0);

// Monte-Carlo KL(p_c || p_theta) with x ~ p_c from the exact blob density,
// clamped at 0. Throws UnsupportedOperation when no exact density exists.
double estimate_local_kl(const std::optional<BlobMixture>& truth, const FactoryParams& params,
                         std::size_t n_mc, Rng& rng);
// Unclamped estimate, for diagnostics.
double estimate_local_kl_raw(const BlobMixture& truth, const FactoryParams& params, std::size_t n_mc,
                             Rng& rng);

// Little-endian payload:
//   "FFAC" | version u16 = 1 | client u16 | class u16 | d u16 |
//   n_components u16 | n_local u32 | 14 zero bytes      (32-byte header)
//   then per component: weight f64, mean d x f64, var d x f64.
inline constexpr std::size_t kFactoryHeaderBytes = 32;
inline constexpr std::uint16_t kFactoryFormatVersion = 1;

std::vector<std::uint8_t> serialize_factory(const FactoryParams& params);
FactoryParams deserialize_factory(std::span<const std::uint8_t> bytes);
std::size_t factory_payload_size(std::size_t dim, std::size_t n_components);

}  // namespace fedfactory
