#pragma once

#include <span>

#include "fedfactory/learner.hpp"
#include "fedfactory/protocols.hpp"

namespace fedfactory {

struct FedConfig {
  std::size_t rounds = 200;
  std::size_t local_epochs = 5;
  double client_fraction = 1.0;
  double mu_prox = 0.01;  // FedProx only
  TrainConfig train;      // its `epochs` field is unused here
  std::size_t jobs = 0;

  void validate() const;
};

struct FederatedOutcome {
  ClassifierModel model;
  ExperimentResult result;
};

// Weighted parameter average; weights must be non-negative and sum to 1.
ClassifierModel aggregate_models(std::span<const ClassifierModel> models, std::span<const double> weights);

// Iterative parameter averaging. Each round broadcasts the global model,
// runs local_epochs of SGD per selected client (stream spawn(rng, "client",
// k), epochs indexed globally along a rounds * local_epochs cosine schedule)
// and replaces the global model with the size-weighted mean.
FederatedOutcome run_fedavg(const Federation& fed, const FedConfig& cfg, const BoundedLoss& loss, const Rng& rng);
// FedAvg plus the proximal pull mu_prox * (w_local - w_global).
FederatedOutcome run_fedprox(const Federation& fed, const FedConfig& cfg, const BoundedLoss& loss, const Rng& rng);

}  // namespace fedfactory
