#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fedfactory/core.hpp"
#include "fedfactory/factory.hpp"

namespace fedfactory {

struct CellKey {
  ClassId cls;
  ClientId client;
  auto operator<=>(const CellKey&) const = default;
};

// Sparse C x K grid of factories. Immutable once built; unlearning returns a
// new matrix.
class GenerativeMatrix {
 public:
  GenerativeMatrix(std::size_t num_classes, std::size_t num_clients)
      : num_classes_(num_classes), num_clients_(num_clients) {}

  std::size_t num_classes() const { return num_classes_; }
  std::size_t num_clients() const { return num_clients_; }
  std::size_t occupied_count() const { return cells_.size(); }

  bool occupied(ClassId c, ClientId k) const { return cells_.contains({c, k}); }
  const FactoryParams& cell(ClassId c, ClientId k) const;
  std::size_t count(ClassId c, ClientId k) const;
  // Clients holding a factory for class c, ascending.
  std::vector<ClientId> providers(ClassId c) const;
  // Ordered by (class, client).
  const std::map<CellKey, FactoryParams>& cells() const { return cells_; }

  bool operator==(const GenerativeMatrix&) const = default;

 private:
  friend GenerativeMatrix build_matrix(const std::vector<FactoryParams>&, std::size_t, std::size_t);

  std::size_t num_classes_;
  std::size_t num_clients_;
  std::map<CellKey, FactoryParams> cells_;
};

// Throws InvalidInput on duplicate cells or indices outside C x K.
GenerativeMatrix build_matrix(const std::vector<FactoryParams>& factories, std::size_t num_classes,
                              std::size_t num_clients);

struct QuotaPlan {
  std::size_t n_target = 0;
  std::map<CellKey, std::size_t> quotas;
  std::vector<ClassId> empty_classes;  // no provider, no synthetic samples
  std::vector<std::string> warnings;

  std::size_t class_total(ClassId c) const;
  std::size_t total() const;
};

// Q_{c,k} = N_target * n_{c,k} / sum_j n_{c,j}, rounded by largest remainder
// with ties to the lower client id, so each provided class sums to N_target.
QuotaPlan allocate_quotas(const GenerativeMatrix& matrix, std::size_t n_target);

// Draws every quota from its cell with a per-cell stream and concatenates in
// (class, client) order. Throws InvalidInput if the plan names an empty cell.
LabeledDataset synthesize_global(const GenerativeMatrix& matrix, const QuotaPlan& plan, Rng& rng);

enum class UnlearnMode { kVertical, kHorizontal, kTargeted };

struct UnlearnRequest {
  UnlearnMode mode = UnlearnMode::kTargeted;
  ClassId cls;
  ClientId client;

  static UnlearnRequest vertical(ClientId k) { return {UnlearnMode::kVertical, ClassId{}, k}; }
  static UnlearnRequest horizontal(ClassId c) { return {UnlearnMode::kHorizontal, c, ClientId{}}; }
  static UnlearnRequest targeted(ClassId c, ClientId k) { return {UnlearnMode::kTargeted, c, k}; }

  // "vertical:<client>", "horizontal:<class>" or "targeted:<class>,<client>".
  static UnlearnRequest parse(const std::string& text);
  std::string to_string() const;
  // Every coordinate the request covers, occupied or not.
  std::vector<CellKey> covered_cells(std::size_t num_classes, std::size_t num_clients) const;
};

struct UnlearnResult {
  GenerativeMatrix matrix;
  std::vector<CellKey> removed;  // cells that were occupied and are now empty
  std::optional<std::string> warning;
};

// Cells outside the request are copied unchanged. Idempotent. Throws
// InvalidInput when an index is out of range.
UnlearnResult unlearn(const GenerativeMatrix& matrix, const UnlearnRequest& request);

// Fresh quota plan and synthesis from the post-deletion matrix.
LabeledDataset flush_and_resynthesize(const GenerativeMatrix& matrix_after, std::size_t n_target, Rng& rng);

// Writes one payload file per cell plus matrix_manifest.json into `dir`.
// Returns the manifest path.
std::filesystem::path write_matrix_manifest(const GenerativeMatrix& matrix, const std::filesystem::path& dir);
// Loads payloads and checks their sha256 against the manifest.
GenerativeMatrix read_matrix_manifest(const std::filesystem::path& manifest);

}  // namespace fedfactory
