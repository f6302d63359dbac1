#include "fedfactory/factory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fedfactory/bytes.hpp"
#include "fedfactory/numeric.hpp"

namespace fedfactory {

namespace {

// Multiply-adds per (sample, component, dimension) for one E+M pass.
constexpr std::uint64_t kEmOpsPerElement = 6;
constexpr double kDeadComponentWeight = 1e-12;

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) acc += (a[j] - b[j]) * (a[j] - b[j]);
  return acc;
}

// k-means++ seeding. Stops early when every remaining point coincides with a
// chosen center.
std::vector<std::size_t> kmeanspp_seeds(const LabeledDataset& data, std::size_t k, Rng& rng) {
  const std::size_t n = data.size();
  std::vector<std::size_t> seeds{rng.index(n)};
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(data.row(i), data.row(seeds[0]));
  while (seeds.size() < k) {
    double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    if (!(total > 0.0)) break;
    std::size_t next = pick_weighted(d2, rng);
    seeds.push_back(next);
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(data.row(i), data.row(next)));
  }
  return seeds;
}

// Hard-assignment moments around the seeds.
std::vector<GmmComponent> init_components(const LabeledDataset& data, const std::vector<std::size_t>& seeds,
                                          double floor) {
  const std::size_t n = data.size(), d = data.dim(), m = seeds.size();
  std::vector<std::size_t> owner(n, 0), count(m, 0);
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < m; ++s) {
      double dist = sq_dist(data.row(i), data.row(seeds[s]));
      if (dist < best) {
        best = dist;
        owner[i] = s;
      }
    }
    ++count[owner[i]];
  }

  std::vector<double> global_mean(d, 0.0), global_var(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) global_mean[j] += data.row(i)[j] / static_cast<double>(n);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      double diff = data.row(i)[j] - global_mean[j];
      global_var[j] += diff * diff / static_cast<double>(n);
    }
  }

  std::vector<GmmComponent> comps(m);
  for (std::size_t s = 0; s < m; ++s) {
    comps[s].weight = static_cast<double>(count[s]) / static_cast<double>(n);
    comps[s].mean.assign(data.row(seeds[s]).begin(), data.row(seeds[s]).end());
    comps[s].var.assign(d, 0.0);
  }
  for (std::size_t i = 0; i < n; ++i) {
    auto& c = comps[owner[i]];
    for (std::size_t j = 0; j < d; ++j) {
      double diff = data.row(i)[j] - c.mean[j];
      c.var[j] += diff * diff;
    }
  }
  for (std::size_t s = 0; s < m; ++s) {
    for (std::size_t j = 0; j < d; ++j) {
      double v = count[s] > 1 ? comps[s].var[j] / static_cast<double>(count[s]) : global_var[j];
      comps[s].var[j] = std::max(v, floor);
    }
  }
  return comps;
}

// Fills resp (n x m, row-major) with posterior responsibilities and returns
// the total log-likelihood.
double e_step(const LabeledDataset& data, const std::vector<GmmComponent>& comps, std::vector<double>& resp) {
  const std::size_t n = data.size(), m = comps.size();
  resp.assign(n * m, 0.0);
  std::vector<double> terms(m);
  double ll = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t s = 0; s < m; ++s) {
      terms[s] = std::log(comps[s].weight) + diag_gaussian_log_pdf(data.row(i), comps[s].mean, comps[s].var);
    }
    double lse = log_sum_exp(terms);
    ll += lse;
    for (std::size_t s = 0; s < m; ++s) resp[i * m + s] = std::exp(terms[s] - lse);
  }
  return ll;
}

void m_step(const LabeledDataset& data, const std::vector<double>& resp, double floor,
            std::vector<GmmComponent>& comps) {
  const std::size_t n = data.size(), d = data.dim(), m = comps.size();
  for (std::size_t s = 0; s < m; ++s) {
    double nk = 0.0;
    for (std::size_t i = 0; i < n; ++i) nk += resp[i * m + s];
    auto& c = comps[s];
    c.weight = nk / static_cast<double>(n);
    if (nk <= 0.0) continue;
    std::fill(c.mean.begin(), c.mean.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double r = resp[i * m + s];
      for (std::size_t j = 0; j < d; ++j) c.mean[j] += r * data.row(i)[j];
    }
    for (auto& v : c.mean) v /= nk;
    std::fill(c.var.begin(), c.var.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double r = resp[i * m + s];
      for (std::size_t j = 0; j < d; ++j) {
        double diff = data.row(i)[j] - c.mean[j];
        c.var[j] += r * diff * diff;
      }
    }
    // The floored variance is the exact constrained maximizer per coordinate,
    // so the EM ascent property still holds.
    for (auto& v : c.var) v = std::max(v / nk, floor);
  }
  std::erase_if(comps, [](const GmmComponent& c) { return c.weight < kDeadComponentWeight; });
  double total = 0.0;
  for (const auto& c : comps) total += c.weight;
  for (auto& c : comps) c.weight /= total;
}

}  // namespace

void FactoryParams::validate() const {
  if (components.empty()) throw InvalidInput("factory has no components");
  if (n_local < 1) throw InvalidInput("factory n_local must be >= 1");
  double total = 0.0;
  for (const auto& c : components) {
    if (c.mean.size() != dim || c.var.size() != dim) throw InvalidInput("factory component has wrong dimension");
    if (!(c.weight > 0.0)) throw InvalidInput("factory weights must be positive");
    for (double v : c.var) {
      if (!(v > 0.0) || !std::isfinite(v)) throw InvalidInput("factory variance must be positive");
    }
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidInput("factory weights do not sum to 1");
}

double FactoryParams::log_density(std::span<const double> x) const {
  if (x.size() != dim) throw InvalidInput("point has wrong dimension");
  std::vector<double> terms;
  terms.reserve(components.size());
  for (const auto& c : components) terms.push_back(std::log(c.weight) + diag_gaussian_log_pdf(x, c.mean, c.var));
  return log_sum_exp(terms);
}

std::vector<double> FactoryParams::mixture_mean() const {
  std::vector<double> mu(dim, 0.0);
  for (const auto& c : components) {
    for (std::size_t j = 0; j < dim; ++j) mu[j] += c.weight * c.mean[j];
  }
  return mu;
}

void GmmConfig::validate() const {
  if (n_components < 1) throw InvalidInput("n_components must be >= 1");
  if (max_iters < 1) throw InvalidInput("max_iters must be >= 1");
  if (!(rel_tol > 0.0)) throw InvalidInput("rel_tol must be > 0");
  if (!(covariance_floor > 0.0)) throw InvalidInput("covariance_floor must be > 0");
}

FactoryFit fit_factory(const LabeledDataset& data, const GmmConfig& cfg, Rng& rng) {
  cfg.validate();
  if (data.size() < cfg.n_components) {
    throw InvalidInput("factory needs at least " + std::to_string(cfg.n_components) + " samples, got " +
                       std::to_string(data.size()));
  }
  const ClassId cls = data.label(0);
  const ClientId client = data.provenance(0).client;
  if (client == kUnassignedClient) throw InvalidInput("factory data must belong to a client");
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.label(i) != cls) throw InvalidInput("factory data mixes classes");
    if (data.provenance(i).client != client) throw InvalidInput("factory data mixes clients");
  }

  FactoryFit fit;
  auto comps = init_components(data, kmeanspp_seeds(data, cfg.n_components, rng), cfg.covariance_floor);
  std::vector<double> resp;
  double ll = e_step(data, comps, resp);
  fit.log_likelihood.push_back(ll);
  std::uint64_t per_iter = static_cast<std::uint64_t>(data.size()) * data.dim() * kEmOpsPerElement;
  for (std::size_t it = 0; it < cfg.max_iters; ++it) {
    fit.flops += per_iter * comps.size();
    m_step(data, resp, cfg.covariance_floor, comps);
    double next = e_step(data, comps, resp);
    fit.log_likelihood.push_back(next);
    ++fit.iterations;
    bool converged = std::abs(next - ll) <= cfg.rel_tol * std::max(std::abs(ll), 1e-300);
    ll = next;
    if (converged) break;
  }

  fit.params.client = client;
  fit.params.cls = cls;
  fit.params.dim = data.dim();
  fit.params.components = std::move(comps);
  fit.params.n_local = static_cast<std::uint32_t>(data.size());
  return fit;
}

FactoryParams train_factory(const LabeledDataset& data, const GmmConfig& cfg, Rng& rng) {
  return fit_factory(data, cfg, rng).params;
}

LabeledDataset sample_factory(const FactoryParams& params, std::size_t n, Rng& rng, std::size_t num_classes) {
  if (num_classes == 0) num_classes = params.cls.value + 1;
  LabeledDataset out(params.dim, num_classes);
  if (n == 0) return out;
  out.reserve(n);
  std::vector<double> weights;
  for (const auto& c : params.components) weights.push_back(c.weight);
  std::vector<double> sqrt_var(params.dim);
  std::vector<double> x(params.dim);
  const auto tag = Provenance::synthetic(params.client, params.cls);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = params.components[pick_weighted(weights, rng)];
    for (std::size_t j = 0; j < params.dim; ++j) x[j] = c.mean[j] + std::sqrt(c.var[j]) * rng.normal();
    out.add(x, params.cls, tag);
  }
  return out;
}

double estimate_local_kl_raw(const BlobMixture& truth, const FactoryParams& params, std::size_t n_mc, Rng& rng) {
  if (n_mc < 1000) throw InvalidInput("n_mc must be >= 1000");
  if (params.dim != truth.dim()) throw InvalidInput("factory and density dimensions differ");
  auto xs = truth.sample(params.cls, n_mc, rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < n_mc; ++i) {
    std::span<const double> x(xs.data() + i * params.dim, params.dim);
    acc += truth.log_density(params.cls, x) - params.log_density(x);
  }
  return acc / static_cast<double>(n_mc);
}

double estimate_local_kl(const std::optional<BlobMixture>& truth, const FactoryParams& params, std::size_t n_mc,
                         Rng& rng) {
  if (!truth) throw UnsupportedOperation("local KL needs an exact data density (blob datasets only)");
  return std::max(0.0, estimate_local_kl_raw(*truth, params, n_mc, rng));
}

std::size_t factory_payload_size(std::size_t dim, std::size_t n_components) {
  return kFactoryHeaderBytes + n_components * (8 + 16 * dim);
}

std::vector<std::uint8_t> serialize_factory(const FactoryParams& params) {
  params.validate();
  auto fits_u16 = [](std::size_t v) { return v <= 0xFFFF; };
  if (!fits_u16(params.client.value) || !fits_u16(params.cls.value) || !fits_u16(params.dim) ||
      !fits_u16(params.components.size())) {
    throw InvalidInput("factory field exceeds the u16 range of the payload format");
  }
  ByteWriter w;
  const std::uint8_t magic[4] = {'F', 'F', 'A', 'C'};
  w.raw(magic);
  w.u16(kFactoryFormatVersion);
  w.u16(static_cast<std::uint16_t>(params.client.value));
  w.u16(static_cast<std::uint16_t>(params.cls.value));
  w.u16(static_cast<std::uint16_t>(params.dim));
  w.u16(static_cast<std::uint16_t>(params.components.size()));
  w.u32(params.n_local);
  w.zeros(kFactoryHeaderBytes - w.size());
  for (const auto& c : params.components) {
    w.f64(c.weight);
    for (double v : c.mean) w.f64(v);
    for (double v : c.var) w.f64(v);
  }
  return w.take();
}

FactoryParams deserialize_factory(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  auto magic = r.raw(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), "FFAC")) throw FormatError("bad magic, expected FFAC", 0);
  std::size_t at = r.offset();
  std::uint16_t version = r.u16("version");
  if (version != kFactoryFormatVersion) {
    throw FormatError("unsupported factory format version " + std::to_string(version), at);
  }
  FactoryParams p;
  p.client = ClientId{r.u16("client")};
  p.cls = ClassId{r.u16("class")};
  p.dim = r.u16("dim");
  std::size_t n_comp = r.u16("n_components");
  p.n_local = r.u32("n_local");
  at = r.offset();
  auto reserved = r.raw(kFactoryHeaderBytes - at, "reserved");
  if (std::any_of(reserved.begin(), reserved.end(), [](std::uint8_t b) { return b != 0; })) {
    throw FormatError("reserved header bytes must be zero", at);
  }
  p.components.resize(n_comp);
  for (auto& c : p.components) {
    c.weight = r.f64("component weight");
    c.mean.resize(p.dim);
    c.var.resize(p.dim);
    for (auto& v : c.mean) v = r.f64("component mean");
    for (auto& v : c.var) v = r.f64("component variance");
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after factory payload", r.offset());
  try {
    p.validate();
  } catch (const InvalidInput& e) {
    throw FormatError(std::string("decoded factory is invalid: ") + e.what(), kFactoryHeaderBytes);
  }
  return p;
}

}  // namespace fedfactory
