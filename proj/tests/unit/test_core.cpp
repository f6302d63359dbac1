#include <gtest/gtest.h>

#include <cmath>

#include "fedfactory/core.hpp"

using namespace fedfactory;

TEST(ClippedCrossEntropy, CertainCorrectPrediction) {
  std::vector<double> p{1.0, 0.0, 0.0};
  EXPECT_EQ(clipped_cross_entropy(p, ClassId{0}, BoundedLoss()), 0.0);
}

TEST(ClippedCrossEntropy, FloorEngaged) {
  std::vector<double> p{0.0, 1.0, 0.0};
  EXPECT_NEAR(clipped_cross_entropy(p, ClassId{0}, BoundedLoss(1e-6)), 13.815510557964274, 1e-12);
}

TEST(ClippedCrossEntropy, HalfHalf) {
  std::vector<double> p{0.5, 0.5};
  EXPECT_NEAR(clipped_cross_entropy(p, ClassId{1}, BoundedLoss()), 0.69314718055994531, 1e-15);
}

TEST(ClippedCrossEntropy, LabelOutOfRange) {
  std::vector<double> p{0.5, 0.5};
  EXPECT_THROW(clipped_cross_entropy(p, ClassId{2}, BoundedLoss()), InvalidInput);
}

TEST(ClippedCrossEntropy, BoundedOverRandomVectors) {
  BoundedLoss loss;
  const double m = loss.bound();
  Rng rng(11);
  std::size_t violations = 0;
  for (int t = 0; t < 100000; ++t) {
    std::size_t c = 2 + rng.index(8);
    std::vector<double> p(c);
    double z = 0.0;
    for (auto& v : p) {
      v = rng.uniform() < 0.2 ? 0.0 : rng.gamma(0.3);
      z += v;
    }
    if (z == 0.0) p[0] = z = 1.0;
    for (auto& v : p) v /= z;
    double l = clipped_cross_entropy(p, ClassId{static_cast<std::uint32_t>(rng.index(c))}, loss);
    if (!(l >= 0.0 && l <= m)) ++violations;
  }
  EXPECT_EQ(violations, 0u);
}

TEST(BoundedLoss, RejectsBadFloor) {
  EXPECT_THROW(BoundedLoss(0.0), InvalidInput);
  EXPECT_THROW(BoundedLoss(1.0), InvalidInput);
  EXPECT_NEAR(BoundedLoss(1e-6).bound(), 13.815510557964274, 1e-12);
}

TEST(Rng, FrozenDraws) {
  Rng r(1);
  EXPECT_DOUBLE_EQ(r.uniform(), 0.85002921542301368);
  EXPECT_DOUBLE_EQ(r.normal(), 1.0632061333777816);
  Rng c = spawn_stream(Rng(1), "client", 0);
  EXPECT_DOUBLE_EQ(c.uniform(), 0.19252240756270159);
}

TEST(SpawnStream, Determinism) {
  Rng a = spawn_stream(Rng(1), "client", 0), b = spawn_stream(Rng(1), "client", 0);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.engine()(), b.engine()());
}

TEST(SpawnStream, IdAndSeedSeparation) {
  Rng base = spawn_stream(Rng(1), "client", 0);
  Rng other_id = spawn_stream(Rng(1), "client", 1);
  Rng other_seed = spawn_stream(Rng(2), "client", 0);
  Rng other_purpose = spawn_stream(Rng(1), "factory", 0);
  auto first = base.engine()();
  EXPECT_NE(first, other_id.engine()());
  EXPECT_NE(first, other_seed.engine()());
  EXPECT_NE(first, other_purpose.engine()());
}

TEST(SpawnStream, DoesNotAdvanceParent) {
  Rng a(5), b(5);
  (void)spawn_stream(a, "x", 3);
  EXPECT_EQ(a.engine()(), b.engine()());
}

TEST(Rng, GammaMoments) {
  Rng r(9);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) sum += r.gamma(0.5);
  EXPECT_NEAR(sum / n, 0.5, 0.01);
}

TEST(LabeledDataset, AddSubsetCounts) {
  LabeledDataset d(2, 3);
  std::vector<double> x{1.0, 2.0};
  d.add(x, ClassId{0}, Provenance::real(ClientId{0}));
  d.add(x, ClassId{2}, Provenance::synthetic(ClientId{1}, ClassId{2}));
  d.add(x, ClassId{2}, Provenance::real(ClientId{1}));
  EXPECT_EQ(d.class_counts(), (std::vector<std::size_t>{1, 0, 2}));
  std::vector<std::size_t> idx{2, 0};
  auto s = d.subset(idx);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s.label(0).value, 2u);
  EXPECT_EQ(s.provenance(1), Provenance::real(ClientId{0}));
  std::vector<double> bad{1.0};
  EXPECT_THROW(d.add(bad, ClassId{0}, Provenance::real(ClientId{0})), InvalidInput);
  EXPECT_THROW(d.add(x, ClassId{3}, Provenance::real(ClientId{0})), InvalidInput);
}
