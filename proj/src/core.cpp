#include "fedfactory/core.hpp"

#include <cmath>

namespace fedfactory {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

void LabeledDataset::add(std::span<const double> x, ClassId label, Provenance prov) {
  if (x.size() != dim_) {
    throw InvalidInput("sample has dimension " + std::to_string(x.size()) + ", dataset expects " +
                       std::to_string(dim_));
  }
  if (label.value >= num_classes_) {
    throw InvalidInput("label " + std::to_string(label.value) + " outside [0, " +
                       std::to_string(num_classes_) + ")");
  }
  features_.insert(features_.end(), x.begin(), x.end());
  labels_.push_back(label);
  provenance_.push_back(prov);
}

void LabeledDataset::append(const LabeledDataset& other) {
  if (other.empty()) return;
  if (empty() && dim_ == 0) dim_ = other.dim_;
  if (other.dim_ != dim_) throw InvalidInput("cannot append datasets of different dimension");
  if (other.num_classes_ > num_classes_) num_classes_ = other.num_classes_;
  features_.insert(features_.end(), other.features_.begin(), other.features_.end());
  labels_.insert(labels_.end(), other.labels_.begin(), other.labels_.end());
  provenance_.insert(provenance_.end(), other.provenance_.begin(), other.provenance_.end());
}

void LabeledDataset::reserve(std::size_t n) {
  features_.reserve(n * dim_);
  labels_.reserve(n);
  provenance_.reserve(n);
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  LabeledDataset out(dim_, num_classes_);
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= size()) throw InvalidInput("subset index out of range");
    out.features_.insert(out.features_.end(), features_.begin() + i * dim_,
                         features_.begin() + (i + 1) * dim_);
    out.labels_.push_back(labels_[i]);
    out.provenance_.push_back(provenance_[i]);
  }
  return out;
}

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes_, 0);
  for (ClassId c : labels_) ++counts[c.value];
  return counts;
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), engine_(splitmix64(seed ^ splitmix64(stream + 1))) {}

double Rng::uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

double Rng::normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }

double Rng::gamma(double shape) { return std::gamma_distribution<double>(shape, 1.0)(engine_); }

std::size_t Rng::index(std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
}

Rng spawn_stream(const Rng& rng, std::string_view purpose, std::uint64_t id) {
  std::uint64_t s = splitmix64(rng.stream() ^ fnv1a(purpose));
  s = splitmix64(s ^ splitmix64(id));
  return Rng(rng.seed(), s);
}

BoundedLoss::BoundedLoss(double floor) : p_min(floor) {
  if (!(floor > 0.0 && floor < 1.0)) throw InvalidInput("p_min must lie in (0, 1)");
}

double BoundedLoss::bound() const { return -std::log(p_min); }

double clipped_cross_entropy(std::span<const double> probs, ClassId label, const BoundedLoss& loss) {
  if (label.value >= probs.size()) {
    throw InvalidInput("label " + std::to_string(label.value) + " outside probability vector of length " +
                       std::to_string(probs.size()));
  }
  // Clamping above at 1 keeps the result in [0, M] under rounding noise.
  double p = std::min(1.0, std::max(probs[label.value], loss.p_min));
  return -std::log(p) + 0.0;
}

}  // namespace fedfactory
