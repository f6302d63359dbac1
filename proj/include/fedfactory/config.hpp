#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "fedfactory/baselines.hpp"
#include "fedfactory/data.hpp"
#include "fedfactory/factory.hpp"
#include "fedfactory/learner.hpp"
#include "fedfactory/protocols.hpp"

namespace fedfactory {

// Invalid configuration; `field` is a dotted path such as "partition.alpha".
class ConfigError : public InvalidInput {
 public:
  ConfigError(std::string field, const std::string& message)
      : InvalidInput(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

enum class ProtocolKind { kA, kB, kFedAvg, kFedProx, kCentralized };

std::string to_string(ProtocolKind p);
ProtocolKind parse_protocol(const std::string& name);

struct BlobsSource {
  std::size_t classes = 5;
  std::size_t dim = 2;
  double radius = 4.0;
  double sigma = 1.0;
  std::size_t components_per_class = 1;
  double spread = 1.0;
  std::size_t samples_per_class = 500;
  std::size_t test_samples_per_class = 200;
};

struct CsvSource {
  std::filesystem::path train;
  std::filesystem::path test;
};

struct RunConfig {
  std::optional<BlobsSource> blobs;  // exactly one of blobs / csv is set
  std::optional<CsvSource> csv;
  PartitionSpec partition;
  ProtocolKind protocol = ProtocolKind::kA;
  GmmConfig factory;
  std::size_t n_target = 500;
  TrainConfig train;
  FedConfig fed;
  PoEConfig poe;
  double p_min = 1e-6;
  bool estimate_kl = false;
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "results";

  // Internal consistency; throws ConfigError. `num_classes` is known up
  // front for blobs and after loading for CSV data.
  void validate(std::optional<std::size_t> num_classes = std::nullopt) const;
};

// Unknown keys, wrong types and out-of-range values raise ConfigError.
// Missing keys take their defaults. Relative CSV paths resolve against
// `base_dir`.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

// Fully resolved config with every default written out.
nlohmann::json to_json(const RunConfig& cfg);
// sha256 of the canonical (key-sorted) dump, excluding seed and output_dir.
std::string config_hash(const RunConfig& cfg);

ProtocolOptions protocol_options(const RunConfig& cfg, std::size_t jobs);

}  // namespace fedfactory
