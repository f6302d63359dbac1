#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedfactory/core.hpp"
#include "fedfactory/ledger.hpp"

namespace fedfactory {

// Multinomial linear classifier: softmax(W x + b).
struct ClassifierModel {
  std::size_t num_classes = 0;
  std::size_t dim = 0;
  std::vector<double> weights;  // row-major C x d
  std::vector<double> bias;     // C

  ClassifierModel() = default;
  ClassifierModel(std::size_t c, std::size_t d) : num_classes(c), dim(d), weights(c * d, 0.0), bias(c, 0.0) {}

  std::size_t num_params() const { return weights.size() + bias.size(); }
  bool operator==(const ClassifierModel&) const = default;
};

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  double lr0 = 0.1;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;

  void validate() const;
  // Cosine annealing: lr0 * (1 + cos(pi * epoch / total)) / 2.
  double learning_rate(std::size_t epoch, std::size_t total_epochs) const;
};

std::vector<double> predict_proba(const ClassifierModel& model, std::span<const double> x);

// Mean clipped cross-entropy in [0, M]. Throws InvalidInput when empty.
double evaluate_risk(const ClassifierModel& model, const LabeledDataset& data, const BoundedLoss& loss);

struct Gradient {
  double objective = 0.0;
  std::vector<double> weights;
  std::vector<double> bias;
};

// Gradient of mean clipped cross-entropy over the selected rows plus
// (weight_decay / 2) * ||W||^2. Clipped samples contribute zero gradient. An
// empty selection leaves only the decay term.
Gradient objective_gradient(const ClassifierModel& model, const LabeledDataset& data,
                            std::span<const std::size_t> rows, const BoundedLoss& loss, double weight_decay);
Gradient objective_gradient(const ClassifierModel& model, const LabeledDataset& data, const BoundedLoss& loss,
                            double weight_decay);

// Pull toward an anchor model, applied as an implicit step so that large
// strengths stay stable: w <- (w - lr*g + lr*mu*anchor) / (1 + lr*mu).
struct ProximalTerm {
  const ClassifierModel* anchor = nullptr;
  double mu = 0.0;
};

// Runs epochs [first_epoch, last_epoch) of a `total_epochs` cosine schedule.
// Epoch e shuffles with spawn_stream(base, "epoch", e), so a run split
// across calls matches one uninterrupted run. Returns multiply-add count.
std::uint64_t sgd_epochs(ClassifierModel& model, const LabeledDataset& data, const TrainConfig& cfg,
                         const BoundedLoss& loss, const Rng& base, std::size_t first_epoch, std::size_t last_epoch,
                         std::size_t total_epochs, const ProximalTerm& prox = {});

// Zero-initialized SGD for cfg.epochs epochs. The first overload seeds from
// cfg.seed.
ClassifierModel train_classifier(const LabeledDataset& data, const TrainConfig& cfg, const BoundedLoss& loss,
                                 CostLedger* ledger = nullptr);
ClassifierModel train_classifier(const LabeledDataset& data, const TrainConfig& cfg, const BoundedLoss& loss,
                                 const Rng& base, CostLedger* ledger = nullptr);

// Central differences (step h) against objective_gradient on n_coords random
// parameters; returns the max of |a - n| / max(|a|, |n|, 1e-6). Throws
// InvalidInput if a sample sits near the p_min clipping point.
double finite_difference_grad_check(const ClassifierModel& model, const LabeledDataset& batch,
                                    const BoundedLoss& loss, double weight_decay, Rng& rng, double h = 1e-5,
                                    std::size_t n_coords = 20);

// Checkpoint: "FFCM" | version u16 = 1 | C u16 | d u16 | 6 zero bytes,
// then weights (row-major) and bias as little-endian f64.
inline constexpr std::size_t kModelHeaderBytes = 16;
std::vector<std::uint8_t> serialize_model(const ClassifierModel& model);
ClassifierModel deserialize_model(std::span<const std::uint8_t> bytes);
std::size_t model_payload_size(std::size_t num_classes, std::size_t dim);

}  // namespace fedfactory
