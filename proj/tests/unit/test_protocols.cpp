#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "fedfactory/metrics.hpp"
#include "fedfactory/protocols.hpp"
#include "fedfactory/runner.hpp"

using namespace fedfactory;

namespace {

RunConfig small_config(PartitionMode mode, std::size_t clients, std::size_t classes = 5) {
  RunConfig cfg;
  cfg.blobs = BlobsSource{};
  cfg.blobs->classes = classes;
  cfg.blobs->samples_per_class = 120;
  cfg.blobs->test_samples_per_class = 60;
  cfg.partition = {mode, 1.0, clients};
  cfg.n_target = 150;
  cfg.train.epochs = 30;
  return cfg;
}

ClassifierModel biased(std::vector<double> bias) {
  ClassifierModel m(bias.size(), 1);
  m.bias = std::move(bias);
  return m;
}

}  // namespace

TEST(PoE, SymmetricExperts) {
  std::vector<std::vector<double>> probs{{0.9, 0.1}, {0.1, 0.9}};
  auto out = poe_combine(probs, PoEConfig{});
  EXPECT_NEAR(out[0], 0.5, 1e-15);
  EXPECT_NEAR(out[1], 0.5, 1e-15);
}

TEST(PoE, UniformExperts) {
  std::vector<ClassifierModel> experts(3, ClassifierModel(4, 2));
  std::vector<double> x{0.5, -1.0};
  for (double p : poe_inference(experts, x, PoEConfig{})) EXPECT_NEAR(p, 0.25, 1e-15);
}

TEST(PoE, FloorVeto) {
  PoEConfig poe;
  std::vector<std::vector<double>> probs{{0.0, 1.0}, {0.5, 0.5}, {0.5, 0.5}};
  auto out = poe_combine(probs, poe);
  // Unnormalized masses are p_floor * 0.25 and 1 * 0.25.
  EXPECT_NEAR(out[0], 1e-6 / (1.0 + 1e-6), 1e-18);
  EXPECT_NEAR(out[0] / out[1], 1e-6, 1e-15);
}

TEST(PoE, ScaleInvariance) {
  std::vector<std::vector<double>> a{{0.2, 0.3, 0.5}, {0.6, 0.3, 0.1}};
  std::vector<std::vector<double>> b{{0.2 * 0.5, 0.3 * 0.5, 0.5 * 0.5}, {0.6, 0.3, 0.1}};
  auto pa = poe_combine(a, PoEConfig{});
  auto pb = poe_combine(b, PoEConfig{});
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(pa[i], pb[i], 1e-15);
}

TEST(PoE, SingleExpertIsSoftmax) {
  auto m = biased({1.0, -0.5, 2.0});
  std::vector<ClassifierModel> experts{m};
  std::vector<double> x{0.0};
  auto p = poe_inference(experts, x, PoEConfig{});
  auto s = predict_proba(m, x);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(p[i], s[i], 1e-15);
}

TEST(PoE, NormalizedOverRandomExperts) {
  Rng rng(1);
  for (int t = 0; t < 10000; ++t) {
    std::size_t c = 2 + rng.index(6), e = 1 + rng.index(5);
    std::vector<ClassifierModel> experts;
    for (std::size_t i = 0; i < e; ++i) {
      std::vector<double> b(c);
      for (auto& v : b) v = rng.normal() * 8;
      experts.push_back(biased(b));
    }
    std::vector<double> x{rng.normal()};
    auto p = poe_inference(experts, x, PoEConfig{});
    double s = 0.0;
    for (double v : p) s += v;
    ASSERT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(PoE, Errors) {
  std::vector<ClassifierModel> none;
  std::vector<double> x{0.0};
  EXPECT_THROW(poe_inference(none, x, PoEConfig{}), InvalidInput);
  std::vector<ClassifierModel> mixed{ClassifierModel(2, 1), ClassifierModel(3, 1)};
  EXPECT_THROW(poe_inference(mixed, x, PoEConfig{}), InvalidInput);
  std::vector<ClassifierModel> ok{ClassifierModel(4, 1)};
  EXPECT_THROW(poe_inference(ok, x, PoEConfig{0.3}), InvalidInput);
}

TEST(ProtocolA, SiloOneShotAndBalanced) {
  auto cfg = small_config(PartitionMode::kSingleClassSilo, 5);
  auto fed = build_federation(cfg);
  auto a = run_protocol_a(fed, protocol_options(cfg, 1), Rng(3));
  EXPECT_EQ(a.result.ledger.uplink_rounds, std::vector<std::uint32_t>(5, 1));
  EXPECT_EQ(a.result.ledger.downlink_bytes, 0u);
  EXPECT_EQ(a.synthetic.class_counts(), std::vector<std::size_t>(5, 150));
  for (const auto& prov : a.synthetic.provenances()) EXPECT_EQ(prov.origin, Origin::kSynthetic);
  EXPECT_GT(a.result.accuracy, 0.9);
}

TEST(ProtocolA, DeterministicAcrossJobs) {
  auto cfg = small_config(PartitionMode::kDirichlet, 4);
  auto fed = build_federation(cfg);
  auto one = run_protocol_a(fed, protocol_options(cfg, 1), Rng(5));
  auto many = run_protocol_a(fed, protocol_options(cfg, 4), Rng(5));
  EXPECT_EQ(one.model, many.model);
  EXPECT_EQ(one.synthetic, many.synthetic);
}

TEST(ProtocolA, SingleClient) {
  auto cfg = small_config(PartitionMode::kUniform, 1);
  auto fed = build_federation(cfg);
  auto opts = protocol_options(cfg, 1);
  auto a = run_protocol_a(fed, opts, Rng(6));
  EXPECT_EQ(a.result.ledger.uplink_rounds, std::vector<std::uint32_t>{1});
  EXPECT_EQ(a.model, train_classifier(a.synthetic, opts.train, opts.loss, spawn_stream(Rng(6), "classifier", 0)));
}

TEST(ProtocolB, BroadcastIsPeersTimesUplink) {
  auto cfg = small_config(PartitionMode::kSingleClassSilo, 5);
  auto fed = build_federation(cfg);
  auto opts = protocol_options(cfg, 1);
  auto a = run_protocol_a(fed, opts, Rng(7));
  auto b = run_protocol_b(fed, opts, Rng(7));
  EXPECT_EQ(b.result.ledger.broadcast_bytes, 4 * a.result.ledger.uplink_bytes);
  EXPECT_EQ(b.result.ledger.uplink_bytes, 0u);
  EXPECT_EQ(b.experts.size(), 5u);
  EXPECT_EQ(b.result.ledger.uplink_rounds, std::vector<std::uint32_t>(5, 1));
  EXPECT_GT(b.result.accuracy, 0.9);
}

TEST(ProtocolB, TwoSilosMixOneRealOneSynthetic) {
  auto cfg = small_config(PartitionMode::kSingleClassSilo, 2, 2);
  auto fed = build_federation(cfg);
  auto b = run_protocol_b(fed, protocol_options(cfg, 1), Rng(8));
  for (std::uint32_t k = 0; k < 2; ++k) {
    std::size_t real = 0, syn = 0;
    for (const auto& p : b.mixes[k].provenances()) (p.origin == Origin::kSynthetic ? syn : real) += 1;
    EXPECT_EQ(real, 120u);
    EXPECT_EQ(syn, 150u);
  }
}

TEST(ProtocolB, SingleClientPoEIsExpert) {
  auto cfg = small_config(PartitionMode::kUniform, 1);
  auto fed = build_federation(cfg);
  auto b = run_protocol_b(fed, protocol_options(cfg, 1), Rng(9));
  ASSERT_EQ(b.experts.size(), 1u);
  EXPECT_EQ(b.result.ledger.broadcast_bytes, 0u);
  EXPECT_DOUBLE_EQ(b.result.accuracy, accuracy(b.experts[0], fed.test));
}

TEST(Centralized, WrapsTrainClassifier) {
  auto cfg = small_config(PartitionMode::kSingleClassSilo, 5);
  auto fed = build_federation(cfg);
  auto c = run_centralized_baseline(fed.train, fed.test, cfg.train, BoundedLoss(), Rng(10));
  EXPECT_EQ(c.model, train_classifier(fed.train, cfg.train, BoundedLoss(), Rng(10)));
  EXPECT_EQ(c.result.ledger.total_bytes(), 0u);
  EXPECT_GT(c.result.accuracy, 0.9);
}

// Default configuration, seed 1: frozen end-to-end outputs.
TEST(Golden, DefaultSiloRuns) {
  RunConfig cfg;
  cfg.blobs = BlobsSource{};
  cfg.partition = {PartitionMode::kSingleClassSilo, 1.0, 5};
  cfg.protocol = ProtocolKind::kA;
  cfg.output_dir = std::filesystem::temp_directory_path() / "fedfactory_golden";
  auto a = execute_run(cfg, 1).result;
  EXPECT_DOUBLE_EQ(a.accuracy, 0.985);
  EXPECT_EQ(a.ledger.uplink_bytes, 760u);
  EXPECT_EQ(a.ledger.flops_proxy, 23921000u);
  cfg.protocol = ProtocolKind::kB;
  auto b = execute_run(cfg, 1).result;
  EXPECT_DOUBLE_EQ(b.accuracy, 0.983);
  EXPECT_EQ(b.ledger.broadcast_bytes, 3040u);
  cfg.protocol = ProtocolKind::kCentralized;
  auto c = execute_run(cfg, 1).result;
  EXPECT_DOUBLE_EQ(c.accuracy, 0.983);
  EXPECT_EQ(c.ledger.flops_proxy, 7500000u);
  std::filesystem::remove_all(cfg.output_dir);
}

TEST(AggregateEpsilon, WeightsRenormalizeOverSurvivors) {
  BlobMixture truth(ring_blob_spec(2, 2, 4.0, 1.0));
  auto factory_for = [&](std::uint32_t c, std::uint32_t k, std::uint32_t n, double shift) {
    FactoryParams f;
    f.cls = ClassId{c};
    f.client = ClientId{k};
    f.dim = 2;
    f.n_local = n;
    auto comp = truth.spec().classes[c].front();
    comp.mean[0] += shift;
    f.components = {{1.0, comp.mean, comp.var}};
    return f;
  };
  // Exact factories: epsilon-bar is 0.
  std::vector<FactoryParams> exact{factory_for(0, 0, 100, 0.0), factory_for(1, 1, 300, 0.0)};
  EXPECT_EQ(aggregate_epsilon(truth, exact, 1000, Rng(1)), 0.0);
  // A mean shift of 1 under unit variance has KL 0.5, so a lone survivor gives sqrt(0.25).
  std::vector<FactoryParams> lone{factory_for(1, 1, 300, 1.0)};
  EXPECT_NEAR(aggregate_epsilon(truth, lone, 20000, Rng(2)), 0.5, 0.02);
  std::vector<FactoryParams> doubled{factory_for(1, 1, 600, 1.0)};
  EXPECT_EQ(aggregate_epsilon(truth, lone, 2000, Rng(3)), aggregate_epsilon(truth, doubled, 2000, Rng(3)));
}
