#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "fedfactory/core.hpp"

namespace fedfactory {

struct BlobComponent {
  double weight = 1.0;
  std::vector<double> mean;
  std::vector<double> var;  // diagonal covariance
};

// A known Gaussian mixture per class.
struct BlobSpec {
  std::size_t dim = 2;
  std::vector<std::vector<BlobComponent>> classes;
  std::size_t samples_per_class = 500;
  std::size_t test_samples_per_class = 200;

  std::size_t num_classes() const { return classes.size(); }
  // Throws InvalidInput on shape errors, non-positive variance or weights
  // that do not sum to 1.
  void validate() const;
};

// C classes with means evenly spaced on a circle of `radius` in the first two
// coordinates. With components_per_class > 1 each class is an equal-weight
// mixture whose components sit `spread` apart along the tangent.
BlobSpec ring_blob_spec(std::size_t num_classes, std::size_t dim, double radius, double sigma,
                        std::size_t components_per_class = 1, double spread = 1.0,
                        std::size_t samples_per_class = 500, std::size_t test_samples_per_class = 200);

// Exact class-conditional log-density of a blob specification.
class BlobMixture {
 public:
  explicit BlobMixture(BlobSpec spec);

  const BlobSpec& spec() const { return spec_; }
  std::size_t num_classes() const { return spec_.num_classes(); }
  std::size_t dim() const { return spec_.dim; }

  double log_density(ClassId cls, std::span<const double> x) const;
  // n draws from class `cls`, row-major n x d.
  std::vector<double> sample(ClassId cls, std::size_t n, Rng& rng) const;

 private:
  BlobSpec spec_;
};

struct BlobData {
  LabeledDataset train;
  LabeledDataset test;
  BlobMixture truth;
};

BlobData generate_blobs(const BlobSpec& spec, Rng& rng);

// Header `label,f0,...,f{d-1}`. C is max label + 1 and every label in [0, C)
// must occur. Samples are tagged Real(kUnassignedClient).
LabeledDataset load_csv(const std::filesystem::path& path);
void write_csv(const LabeledDataset& data, const std::filesystem::path& path);

enum class PartitionMode { kUniform, kDirichlet, kSingleClassSilo };

struct PartitionSpec {
  PartitionMode mode = PartitionMode::kUniform;
  double alpha = 1.0;  // Dirichlet concentration
  std::size_t num_clients = 1;

  void validate(std::size_t num_classes) const;
  // "uniform", "dirichlet:<alpha>" or "silo".
  std::string label() const;
};

struct Partition {
  std::size_t num_classes = 0;
  std::size_t num_clients = 0;
  std::vector<ClientId> assignment;  // per sample
  std::vector<std::size_t> counts;   // n_{c,k}, row-major C x K

  std::size_t count(ClassId c, ClientId k) const { return counts[c.value * num_clients + k.value]; }
  std::size_t client_size(ClientId k) const;
  // Samples assigned to client k, re-tagged Real(k).
  LabeledDataset client_data(const LabeledDataset& data, ClientId k) const;
  // Samples of class c held by client k.
  LabeledDataset cell_data(const LabeledDataset& data, ClassId c, ClientId k) const;
};

Partition partition(const LabeledDataset& data, const PartitionSpec& spec, Rng& rng);

// K independent Gamma(alpha, 1) draws, normalized. Small alpha is handled in
// log space so the result never degenerates to 0/0.
std::vector<double> dirichlet_sample(double alpha, std::size_t k, Rng& rng);

}  // namespace fedfactory
