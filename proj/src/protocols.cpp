#include "fedfactory/protocols.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedfactory/metrics.hpp"
#include "fedfactory/parallel.hpp"

namespace fedfactory {

namespace {

std::size_t resolve_jobs(std::size_t jobs) { return jobs == 0 ? default_jobs() : jobs; }

std::vector<CellKey> occupied_cells(const Partition& part) {
  std::vector<CellKey> cells;
  for (std::uint32_t c = 0; c < part.num_classes; ++c) {
    for (std::uint32_t k = 0; k < part.num_clients; ++k) {
      if (part.count(ClassId{c}, ClientId{k}) > 0) cells.push_back({ClassId{c}, ClientId{k}});
    }
  }
  return cells;
}

// Bytes each client transmits: all its factories, decoded again by receivers.
struct Transmission {
  std::vector<std::uint64_t> bytes_per_client;
  std::vector<FactoryParams> received;
};

Transmission transmit(const std::vector<FactoryParams>& factories, std::size_t num_clients) {
  Transmission t;
  t.bytes_per_client.assign(num_clients, 0);
  for (const auto& f : factories) {
    auto payload = serialize_factory(f);
    t.bytes_per_client[f.client.value] += payload.size();
    t.received.push_back(deserialize_factory(payload));
  }
  return t;
}

std::optional<double> epsilon_bar(const Federation& fed, const std::vector<FactoryParams>& factories,
                                  const ProtocolOptions& opts, const Rng& rng) {
  if (!opts.estimate_kl || !fed.truth) return std::nullopt;
  return aggregate_epsilon(*fed.truth, factories, opts.kl_samples, rng);
}

}  // namespace

double aggregate_epsilon(const BlobMixture& truth, std::span<const FactoryParams> factories, std::size_t samples,
                         const Rng& rng) {
  double n_total = 0.0;
  for (const auto& f : factories) n_total += static_cast<double>(f.n_local);
  if (!(n_total > 0.0)) throw InvalidInput("epsilon-bar needs at least one factory with local samples");
  double acc = 0.0;
  for (std::size_t i = 0; i < factories.size(); ++i) {
    Rng kl_rng = spawn_stream(rng, "kl", i);
    double eps = estimate_local_kl(truth, factories[i], samples, kl_rng);
    acc += static_cast<double>(factories[i].n_local) / n_total * eps;
  }
  return std::sqrt(0.5 * acc);
}

void PoEConfig::validate(std::size_t num_classes) const {
  if (!(p_floor > 0.0) || !(p_floor * static_cast<double>(num_classes) < 1.0)) {
    throw InvalidInput("PoE floor must satisfy 0 < p_floor < 1/C");
  }
}

void score_result(ExperimentResult& result, std::span<const double> scores, std::size_t num_classes,
                  const LabeledDataset& test) {
  result.accuracy = accuracy(scores, num_classes, test.labels());
  result.per_class_accuracy = per_class_accuracy(scores, num_classes, test.labels());
  auto auroc = macro_ovr_auroc(scores, num_classes, test.labels());
  result.auroc = auroc.macro;
  result.warnings.insert(result.warnings.end(), auroc.warnings.begin(), auroc.warnings.end());
}

LocalFactories train_local_factories(const Federation& fed, const GmmConfig& cfg, const Rng& rng, std::size_t jobs) {
  auto cells = occupied_cells(fed.partition);
  std::vector<FactoryFit> fits(cells.size());
  parallel_for(
      cells.size(),
      [&](std::size_t i) {
        auto [cls, client] = cells[i];
        auto data = fed.partition.cell_data(fed.train, cls, client);
        GmmConfig local = cfg;
        local.n_components = std::min(cfg.n_components, data.size());
        Rng cell_rng = spawn_stream(rng, "factory", cls.value * fed.num_clients() + client.value);
        fits[i] = fit_factory(data, local, cell_rng);
      },
      resolve_jobs(jobs));
  LocalFactories out;
  for (auto& fit : fits) {
    out.flops += fit.flops;
    out.factories.push_back(std::move(fit.params));
  }
  return out;
}

ProtocolAOutcome run_protocol_a(const Federation& fed, const ProtocolOptions& opts, const Rng& rng) {
  const std::size_t c_count = fed.num_classes(), k_count = fed.num_clients();
  CostLedger ledger(k_count);

  // Phase I: local generative priors.
  auto local = train_local_factories(fed, opts.gmm, spawn_stream(rng, "phase1", 0), opts.jobs);
  ledger.record_flops(local.flops);

  // Phase II: exactly one uplink per client, then server-side synthesis.
  auto tx = transmit(local.factories, k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    if (tx.bytes_per_client[k] > 0) ledger.record_uplink(k, tx.bytes_per_client[k]);
  }
  auto matrix = build_matrix(tx.received, c_count, k_count);
  auto plan = allocate_quotas(matrix, opts.n_target);
  Rng synth_rng = spawn_stream(rng, "synthesize", 0);
  auto synthetic = synthesize_global(matrix, plan, synth_rng);
  if (synthetic.empty()) throw InvalidInput("no factories were trained; nothing to synthesize");
  ledger.record_flops(synthetic.size() * synthetic.dim());
  auto model = train_classifier(synthetic, opts.train, opts.loss, spawn_stream(rng, "classifier", 0), &ledger);

  // Phase III: evaluation on real held-out data.
  ExperimentResult result;
  result.protocol = "A";
  result.train_size = synthetic.size();
  result.warnings = plan.warnings;
  score_result(result, score_matrix(model, fed.test), model.num_classes, fed.test);
  result.epsilon_bar = epsilon_bar(fed, tx.received, opts, spawn_stream(rng, "kl", 0));
  result.ledger = ledger;
  return {std::move(model), std::move(result), std::move(matrix), std::move(synthetic)};
}

ProtocolBOutcome run_protocol_b(const Federation& fed, const ProtocolOptions& opts, const Rng& rng) {
  const std::size_t c_count = fed.num_classes(), k_count = fed.num_clients();
  opts.poe.validate(c_count);
  CostLedger ledger(k_count);

  auto local = train_local_factories(fed, opts.gmm, spawn_stream(rng, "phase1", 0), opts.jobs);
  ledger.record_flops(local.flops);

  auto tx = transmit(local.factories, k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    if (tx.bytes_per_client[k] > 0) ledger.record_broadcast(k, tx.bytes_per_client[k], k_count - 1);
  }
  auto matrix = build_matrix(tx.received, c_count, k_count);
  auto plan = allocate_quotas(matrix, opts.n_target);

  std::vector<LabeledDataset> mixes(k_count);
  std::vector<ClassifierModel> experts(k_count);
  std::vector<CostLedger> expert_ledgers(k_count);
  parallel_for(
      k_count,
      [&](std::size_t k) {
        ClientId me{static_cast<std::uint32_t>(k)};
        QuotaPlan complement;
        complement.n_target = plan.n_target;
        for (const auto& [key, q] : plan.quotas) {
          if (key.client != me) complement.quotas[key] = q;
        }
        Rng mix_rng = spawn_stream(rng, "mix", k);
        LabeledDataset mix = fed.partition.client_data(fed.train, me);
        mix.append(synthesize_global(matrix, complement, mix_rng));
        mix.set_num_classes(c_count);
        if (mix.empty()) throw InvalidInput("client " + std::to_string(k) + " has no data to train an expert");
        experts[k] = train_classifier(mix, opts.train, opts.loss, spawn_stream(rng, "expert", k), &expert_ledgers[k]);
        mixes[k] = std::move(mix);
      },
      resolve_jobs(opts.jobs));
  for (const auto& l : expert_ledgers) ledger.record_flops(l.flops_proxy);

  std::vector<double> scores;
  scores.reserve(fed.test.size() * c_count);
  for (std::size_t i = 0; i < fed.test.size(); ++i) {
    auto p = poe_inference(experts, fed.test.row(i), opts.poe);
    scores.insert(scores.end(), p.begin(), p.end());
  }
  ledger.record_flops(fed.test.size() * k_count * c_count * fed.test.dim());

  ExperimentResult result;
  result.protocol = "B";
  for (const auto& m : mixes) result.train_size += m.size();
  result.warnings = plan.warnings;
  score_result(result, scores, c_count, fed.test);
  result.epsilon_bar = epsilon_bar(fed, tx.received, opts, spawn_stream(rng, "kl", 0));
  result.ledger = ledger;
  return {std::move(experts), std::move(result), std::move(matrix), std::move(mixes)};
}

std::vector<double> poe_combine(std::span<const std::vector<double>> expert_probs, const PoEConfig& poe) {
  if (expert_probs.empty()) throw InvalidInput("product of experts needs at least one expert");
  const std::size_t c_count = expert_probs.front().size();
  poe.validate(c_count);
  const double log_floor = std::log(poe.p_floor);
  std::vector<double> logp(c_count, 0.0);
  for (const auto& probs : expert_probs) {
    if (probs.size() != c_count) throw InvalidInput("experts disagree on the number of classes");
    for (std::size_t c = 0; c < c_count; ++c) {
      logp[c] += probs[c] > poe.p_floor ? std::log(probs[c]) : log_floor;
    }
  }
  double hi = *std::max_element(logp.begin(), logp.end());
  double z = 0.0;
  for (auto& v : logp) {
    v = std::exp(v - hi);
    z += v;
  }
  for (auto& v : logp) v /= z;
  return logp;
}

std::vector<double> poe_inference(std::span<const ClassifierModel> experts, std::span<const double> x,
                                  const PoEConfig& poe) {
  if (experts.empty()) throw InvalidInput("product of experts needs at least one expert");
  for (const auto& e : experts) {
    if (e.num_classes != experts.front().num_classes || e.dim != experts.front().dim) {
      throw InvalidInput("experts have inconsistent shapes");
    }
  }
  std::vector<std::vector<double>> probs;
  probs.reserve(experts.size());
  for (const auto& e : experts) probs.push_back(predict_proba(e, x));
  return poe_combine(probs, poe);
}

CentralizedOutcome run_centralized_baseline(const LabeledDataset& train, const LabeledDataset& test,
                                            const TrainConfig& cfg, const BoundedLoss& loss, const Rng& rng) {
  CostLedger ledger(0);
  auto model = train_classifier(train, cfg, loss, rng, &ledger);
  ExperimentResult result;
  result.protocol = "centralized";
  result.train_size = train.size();
  score_result(result, score_matrix(model, test), model.num_classes, test);
  result.ledger = ledger;
  return {std::move(model), std::move(result)};
}

}  // namespace fedfactory
