#pragma once

#include <compare>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fedfactory {

// Error taxonomy shared by every module.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

class UnsupportedOperation : public Error {
 public:
  using Error::Error;
};

class UndefinedMetric : public Error {
 public:
  using Error::Error;
};

// Binary payload could not be decoded. `offset` is the byte position where
// decoding stopped.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// Text input could not be parsed. `line` is 1-based.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

template <typename Tag>
struct StrongIndex {
  std::uint32_t value = 0;

  constexpr StrongIndex() = default;
  constexpr explicit StrongIndex(std::uint32_t v) : value(v) {}
  constexpr auto operator<=>(const StrongIndex&) const = default;
};

struct ClassTag {};
struct ClientTag {};
using ClassId = StrongIndex<ClassTag>;
using ClientId = StrongIndex<ClientTag>;

// Pseudo-client for samples that have not been partitioned yet.
inline constexpr ClientId kUnassignedClient{std::numeric_limits<std::uint32_t>::max()};

enum class Origin : std::uint8_t { kReal, kSynthetic };

// Where a sample came from. Synthetic samples record the (client, class)
// coordinate of the factory that generated them.
struct Provenance {
  Origin origin = Origin::kReal;
  ClientId client = kUnassignedClient;
  ClassId cls{};

  static Provenance real(ClientId client) { return {Origin::kReal, client, ClassId{}}; }
  static Provenance synthetic(ClientId client, ClassId cls) {
    return {Origin::kSynthetic, client, cls};
  }
  bool operator==(const Provenance&) const = default;
};

// Dense N x d features with one label and one provenance tag per row.
class LabeledDataset {
 public:
  LabeledDataset() = default;
  LabeledDataset(std::size_t dim, std::size_t num_classes)
      : dim_(dim), num_classes_(num_classes) {}

  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  std::size_t dim() const { return dim_; }
  std::size_t num_classes() const { return num_classes_; }
  void set_num_classes(std::size_t c) { num_classes_ = c; }

  std::span<const double> row(std::size_t i) const {
    return {features_.data() + i * dim_, dim_};
  }
  ClassId label(std::size_t i) const { return labels_[i]; }
  const Provenance& provenance(std::size_t i) const { return provenance_[i]; }

  const std::vector<double>& features() const { return features_; }
  const std::vector<ClassId>& labels() const { return labels_; }
  const std::vector<Provenance>& provenances() const { return provenance_; }

  // Throws InvalidInput on dimension mismatch or label >= num_classes.
  void add(std::span<const double> x, ClassId label, Provenance prov);
  void append(const LabeledDataset& other);
  void reserve(std::size_t n);

  // Rows selected by `indices`, in that order.
  LabeledDataset subset(std::span<const std::size_t> indices) const;
  // Number of samples per class, length num_classes().
  std::vector<std::size_t> class_counts() const;

  bool operator==(const LabeledDataset&) const = default;

 private:
  std::size_t dim_ = 0;
  std::size_t num_classes_ = 0;
  std::vector<double> features_;
  std::vector<ClassId> labels_;
  std::vector<Provenance> provenance_;
};

// Seeded pseudo-random stream. Identical (seed, stream) pairs produce
// identical draw sequences. Single owner: derive children with spawn_stream
// instead of sharing one instance across tasks.
class Rng {
 public:
  using Engine = std::mt19937_64;

  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  double uniform();  // [0, 1)
  double normal();   // N(0, 1)
  double gamma(double shape);
  std::size_t index(std::size_t n);  // uniform in [0, n)
  Engine& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  Engine engine_;
};

// Child stream keyed by (parent seed, parent stream, purpose, id). Does not
// depend on, or advance, the parent's draw position.
Rng spawn_stream(const Rng& rng, std::string_view purpose, std::uint64_t id);

struct BoundedLoss {
  double p_min = 1e-6;

  explicit BoundedLoss(double floor = 1e-6);
  // Upper bound M = -log(p_min).
  double bound() const;
};

// -log(max(probs[label], p_min)). Throws InvalidInput when label is out of
// range for probs.
double clipped_cross_entropy(std::span<const double> probs, ClassId label, const BoundedLoss& loss);

}  // namespace fedfactory
