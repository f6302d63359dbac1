#include "fedfactory/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedfactory/metrics.hpp"
#include "fedfactory/parallel.hpp"

namespace fedfactory {

void FedConfig::validate() const {
  if (rounds < 1) throw InvalidInput("rounds must be >= 1");
  if (!(client_fraction > 0.0 && client_fraction <= 1.0)) throw InvalidInput("client_fraction must be in (0, 1]");
  if (mu_prox < 0.0) throw InvalidInput("mu_prox must be non-negative");
  train.validate();
}

ClassifierModel aggregate_models(std::span<const ClassifierModel> models, std::span<const double> weights) {
  if (models.empty() || models.size() != weights.size()) throw InvalidInput("aggregation needs one weight per model");
  ClassifierModel out(models.front().num_classes, models.front().dim);
  for (std::size_t m = 0; m < models.size(); ++m) {
    const auto& model = models[m];
    if (model.num_params() != out.num_params()) throw InvalidInput("cannot average models of different shapes");
    for (std::size_t i = 0; i < out.weights.size(); ++i) out.weights[i] += weights[m] * model.weights[i];
    for (std::size_t c = 0; c < out.bias.size(); ++c) out.bias[c] += weights[m] * model.bias[c];
  }
  return out;
}

namespace {

FederatedOutcome run_federated(const Federation& fed, const FedConfig& cfg, const BoundedLoss& loss, const Rng& rng,
                               double mu, const char* name) {
  cfg.validate();
  const std::size_t k_count = fed.num_clients(), c_count = fed.num_classes();
  std::vector<LabeledDataset> client_data(k_count);
  std::vector<std::size_t> active;
  ExperimentResult result;
  result.protocol = name;
  for (std::size_t k = 0; k < k_count; ++k) {
    client_data[k] = fed.partition.client_data(fed.train, ClientId{static_cast<std::uint32_t>(k)});
    if (client_data[k].empty()) {
      result.warnings.push_back("client " + std::to_string(k) + " holds no data and is skipped");
    } else {
      active.push_back(k);
    }
  }
  if (active.empty()) throw InvalidInput("no client holds data");

  CostLedger ledger(k_count);
  const std::uint64_t payload = model_payload_size(c_count, fed.train.dim());
  const std::size_t total_epochs = cfg.rounds * cfg.local_epochs;
  std::vector<Rng> client_rng;
  for (std::size_t k = 0; k < k_count; ++k) client_rng.push_back(spawn_stream(rng, "client", k));

  ClassifierModel global(c_count, fed.train.dim());
  for (std::size_t round = 0; round < cfg.rounds; ++round) {
    std::vector<std::size_t> selected = active;
    if (cfg.client_fraction < 1.0) {
      Rng pick = spawn_stream(rng, "select", round);
      std::shuffle(selected.begin(), selected.end(), pick.engine());
      auto m = static_cast<std::size_t>(std::ceil(cfg.client_fraction * static_cast<double>(selected.size())));
      selected.resize(std::max<std::size_t>(1, m));
      std::sort(selected.begin(), selected.end());
    }

    std::vector<ClassifierModel> locals(selected.size(), global);
    std::vector<std::uint64_t> flops(selected.size(), 0);
    ProximalTerm prox{&global, mu};
    parallel_for(
        selected.size(),
        [&](std::size_t i) {
          std::size_t k = selected[i];
          flops[i] = sgd_epochs(locals[i], client_data[k], cfg.train, loss, client_rng[k],
                                round * cfg.local_epochs, (round + 1) * cfg.local_epochs, total_epochs, prox);
        },
        cfg.jobs == 0 ? default_jobs() : cfg.jobs);

    double total = 0.0;
    for (std::size_t k : selected) total += static_cast<double>(client_data[k].size());
    std::vector<double> weights;
    for (std::size_t k : selected) weights.push_back(static_cast<double>(client_data[k].size()) / total);
    global = aggregate_models(locals, weights);

    for (std::size_t i = 0; i < selected.size(); ++i) {
      ledger.record_downlink(payload);
      ledger.record_uplink(selected[i], payload);
      ledger.record_flops(flops[i]);
    }
    ledger.record_flops(selected.size() * global.num_params());
  }

  score_result(result, score_matrix(global, fed.test), c_count, fed.test);
  result.train_size = fed.train.size();
  result.ledger = ledger;
  return {std::move(global), std::move(result)};
}

}  // namespace

FederatedOutcome run_fedavg(const Federation& fed, const FedConfig& cfg, const BoundedLoss& loss, const Rng& rng) {
  return run_federated(fed, cfg, loss, rng, 0.0, "fedavg");
}

FederatedOutcome run_fedprox(const Federation& fed, const FedConfig& cfg, const BoundedLoss& loss, const Rng& rng) {
  return run_federated(fed, cfg, loss, rng, cfg.mu_prox, "fedprox");
}

}  // namespace fedfactory
