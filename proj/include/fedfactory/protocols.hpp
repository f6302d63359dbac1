#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedfactory/core.hpp"
#include "fedfactory/data.hpp"
#include "fedfactory/factory.hpp"
#include "fedfactory/genmatrix.hpp"
#include "fedfactory/learner.hpp"
#include "fedfactory/ledger.hpp"

namespace fedfactory {

// Pooled real training data, its split across clients, and the held-out
// real test set. `truth` is set for blob datasets only.
struct Federation {
  LabeledDataset train;
  Partition partition;
  LabeledDataset test;
  std::optional<BlobMixture> truth;

  std::size_t num_classes() const { return train.num_classes(); }
  std::size_t num_clients() const { return partition.num_clients; }
};

struct PoEConfig {
  double p_floor = 1e-6;

  void validate(std::size_t num_classes) const;
};

struct ProtocolOptions {
  GmmConfig gmm;
  std::size_t n_target = 500;  // synthetic samples per class
  TrainConfig train;
  BoundedLoss loss;
  PoEConfig poe;
  // Monte-Carlo KL per cell (blob data only) to report epsilon-bar.
  bool estimate_kl = false;
  std::size_t kl_samples = 2000;
  std::size_t jobs = 0;  // 0: hardware concurrency
};

struct ExperimentResult {
  std::string protocol;
  std::string partition;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double auroc = 0.0;
  std::vector<double> per_class_accuracy;
  CostLedger ledger;
  std::string config_hash;
  std::optional<double> epsilon_bar;
  std::size_t train_size = 0;
  std::vector<std::string> warnings;
};

// Fills accuracy, AUROC and per-class accuracy from an N x C score matrix.
void score_result(ExperimentResult& result, std::span<const double> scores, std::size_t num_classes,
                  const LabeledDataset& test);

struct ProtocolAOutcome {
  ClassifierModel model;
  ExperimentResult result;
  GenerativeMatrix matrix;
  LabeledDataset synthetic;
};

// sqrt(0.5 * sum_k pi_k KL_k) with Monte-Carlo KL per factory and pi_k taken
// from the factories' n_local, so a reduced set renormalizes over survivors.
double aggregate_epsilon(const BlobMixture& truth, std::span<const FactoryParams> factories, std::size_t samples,
                         const Rng& rng);

// Centralized synthesis: one factory per occupied (class, client), a single
// uplink per client, quota-proportional synthesis on the server and a global
// classifier trained on synthetic data only.
ProtocolAOutcome run_protocol_a(const Federation& fed, const ProtocolOptions& opts, const Rng& rng);

struct ProtocolBOutcome {
  std::vector<ClassifierModel> experts;
  ExperimentResult result;
  GenerativeMatrix matrix;
  std::vector<LabeledDataset> mixes;  // D_k^mix per client
};

// Peer-to-peer synthesis: every client broadcasts its factories to K - 1
// peers, trains an expert on its real data plus synthetic complements, and
// inference is the product of experts.
ProtocolBOutcome run_protocol_b(const Federation& fed, const ProtocolOptions& opts, const Rng& rng);

// Per-expert probabilities are clamped at p_floor, summed in log space,
// shifted by the max and renormalized.
std::vector<double> poe_inference(std::span<const ClassifierModel> experts, std::span<const double> x,
                                  const PoEConfig& poe);
// Same combination rule applied to precomputed per-expert probability rows.
std::vector<double> poe_combine(std::span<const std::vector<double>> expert_probs, const PoEConfig& poe);

struct CentralizedOutcome {
  ClassifierModel model;
  ExperimentResult result;
};

// Plain training on pooled real data; no communication.
CentralizedOutcome run_centralized_baseline(const LabeledDataset& train, const LabeledDataset& test,
                                            const TrainConfig& cfg, const BoundedLoss& loss, const Rng& rng);

// Factories for every occupied cell, trained in parallel with per-cell
// streams. Cells with fewer samples than cfg.n_components are fitted with
// one component per sample.
struct LocalFactories {
  std::vector<FactoryParams> factories;  // (class, client) order
  std::uint64_t flops = 0;
};
LocalFactories train_local_factories(const Federation& fed, const GmmConfig& cfg, const Rng& rng,
                                     std::size_t jobs = 0);

}  // namespace fedfactory
