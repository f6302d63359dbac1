#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "fedfactory/data.hpp"
#include "fedfactory/learner.hpp"
#include "fedfactory/metrics.hpp"

using namespace fedfactory;
namespace fs = std::filesystem;

namespace {

BlobSpec two_blobs() {
  BlobSpec s;
  s.dim = 2;
  s.classes = {{{1.0, {-3.0, 0.0}, {1.0, 1.0}}}, {{1.0, {3.0, 0.0}, {1.0, 1.0}}}};
  s.samples_per_class = 500;
  s.test_samples_per_class = 200;
  return s;
}

fs::path temp_file(const std::string& name, const std::string& text) {
  auto dir = fs::temp_directory_path() / "fedfactory_data_test";
  fs::create_directories(dir);
  auto p = dir / name;
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST(GenerateBlobs, SeparableTwoBlobs) {
  Rng rng(3);
  auto blobs = generate_blobs(two_blobs(), rng);
  EXPECT_EQ(blobs.train.size(), 1000u);
  EXPECT_EQ(blobs.test.size(), 400u);
  TrainConfig cfg;
  auto model = train_classifier(blobs.train, cfg, BoundedLoss());
  EXPECT_GE(accuracy(model, blobs.test), 0.99);
}

TEST(GenerateBlobs, SingleClass) {
  Rng rng(1);
  auto blobs = generate_blobs(ring_blob_spec(1, 2, 3.0, 1.0, 1, 1.0, 50, 10), rng);
  for (auto y : blobs.train.labels()) EXPECT_EQ(y.value, 0u);
}

TEST(GenerateBlobs, Deterministic) {
  Rng a(42), b(42);
  auto x = generate_blobs(two_blobs(), a), y = generate_blobs(two_blobs(), b);
  EXPECT_EQ(x.train, y.train);
  EXPECT_EQ(x.test, y.test);
}

TEST(GenerateBlobs, DegenerateCovariance) {
  auto s = two_blobs();
  s.classes[0][0].var[1] = 0.0;
  Rng rng(1);
  EXPECT_THROW(generate_blobs(s, rng), InvalidInput);
}

TEST(BlobMixture, ExactLogDensity) {
  BlobMixture m(two_blobs());
  std::vector<double> x{-3.0, 0.0};
  EXPECT_NEAR(m.log_density(ClassId{0}, x), -std::log(2.0 * M_PI), 1e-12);
}

TEST(LoadCsv, ThreeRows) {
  auto p = temp_file("three.csv", "label,f0,f1\n0,1.5,2\n1,0,0\n0,-1,3e-1\n");
  auto d = load_csv(p);
  EXPECT_EQ(d.size(), 3u);
  EXPECT_EQ(d.num_classes(), 2u);
  EXPECT_EQ(d.dim(), 2u);
  EXPECT_DOUBLE_EQ(d.row(2)[1], 0.3);
  EXPECT_EQ(d.provenance(0).client, kUnassignedClient);
}

TEST(LoadCsv, EmptyFile) {
  auto p = temp_file("empty.csv", "");
  EXPECT_THROW(load_csv(p), ParseError);
}

TEST(LoadCsv, MalformedRowReportsLine) {
  auto p = temp_file("bad.csv", "label,f0\n0,1\n1,abc\n");
  try {
    load_csv(p);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(LoadCsv, NonContiguousLabels) {
  auto p = temp_file("gap.csv", "label,f0\n0,1\n2,1\n");
  EXPECT_THROW(load_csv(p), InvalidInput);
}

TEST(LoadCsv, MaxLabelDefinesClassCount) {
  auto p = temp_file("six.csv", "label,f0\n0,1\n1,1\n2,1\n3,1\n4,1\n5,1\n5,2\n");
  EXPECT_EQ(load_csv(p).num_classes(), 6u);
}

TEST(LoadCsv, RoundTrip) {
  Rng rng(5);
  auto blobs = generate_blobs(two_blobs(), rng);
  auto dir = fs::temp_directory_path() / "fedfactory_data_test";
  fs::create_directories(dir);
  write_csv(blobs.test, dir / "rt.csv");
  auto back = load_csv(dir / "rt.csv");
  ASSERT_EQ(back.size(), blobs.test.size());
  EXPECT_EQ(back.features(), blobs.test.features());
  EXPECT_EQ(back.labels(), blobs.test.labels());
}

TEST(Partition, SiloIsDiagonalAndDisjoint) {
  Rng rng(2);
  auto blobs = generate_blobs(ring_blob_spec(3, 2, 4.0, 1.0, 1, 1.0, 100, 10), rng);
  PartitionSpec spec{PartitionMode::kSingleClassSilo, 1.0, 3};
  auto part = partition(blobs.train, spec, rng);
  for (std::uint32_t c = 0; c < 3; ++c) {
    for (std::uint32_t k = 0; k < 3; ++k) {
      EXPECT_EQ(part.count(ClassId{c}, ClientId{k}), c == k ? 100u : 0u);
    }
  }
}

TEST(Partition, SiloRequiresKEqualsC) {
  Rng rng(2);
  auto blobs = generate_blobs(ring_blob_spec(3, 2, 4.0, 1.0, 1, 1.0, 10, 10), rng);
  PartitionSpec spec{PartitionMode::kSingleClassSilo, 1.0, 4};
  EXPECT_THROW(partition(blobs.train, spec, rng), InvalidInput);
}

TEST(Partition, UniformEvenSplit) {
  Rng rng(4);
  auto blobs = generate_blobs(ring_blob_spec(3, 2, 4.0, 1.0, 1, 1.0, 300, 10), rng);
  auto part = partition(blobs.train, {PartitionMode::kUniform, 1.0, 3}, rng);
  for (std::uint32_t c = 0; c < 3; ++c) {
    for (std::uint32_t k = 0; k < 3; ++k) EXPECT_EQ(part.count(ClassId{c}, ClientId{k}), 100u);
  }
  auto odd = partition(blobs.train, {PartitionMode::kUniform, 1.0, 7}, rng);
  for (std::uint32_t c = 0; c < 3; ++c) {
    std::size_t lo = 1000, hi = 0;
    for (std::uint32_t k = 0; k < 7; ++k) {
      lo = std::min(lo, odd.count(ClassId{c}, ClientId{k}));
      hi = std::max(hi, odd.count(ClassId{c}, ClientId{k}));
    }
    EXPECT_LE(hi - lo, 1u);
  }
}

TEST(Partition, ConservationAndClientData) {
  Rng rng(6);
  auto blobs = generate_blobs(ring_blob_spec(4, 3, 4.0, 1.0, 1, 1.0, 137, 10), rng);
  auto part = partition(blobs.train, {PartitionMode::kDirichlet, 0.3, 5}, rng);
  ASSERT_EQ(part.assignment.size(), blobs.train.size());
  std::size_t total = 0;
  for (std::uint32_t c = 0; c < 4; ++c) {
    std::size_t row = 0;
    for (std::uint32_t k = 0; k < 5; ++k) row += part.count(ClassId{c}, ClientId{k});
    EXPECT_EQ(row, 137u);
    total += row;
  }
  EXPECT_EQ(total, blobs.train.size());
  std::size_t sizes = 0;
  for (std::uint32_t k = 0; k < 5; ++k) {
    auto d = part.client_data(blobs.train, ClientId{k});
    EXPECT_EQ(d.size(), part.client_size(ClientId{k}));
    for (const auto& p : d.provenances()) EXPECT_EQ(p, Provenance::real(ClientId{k}));
    sizes += d.size();
  }
  EXPECT_EQ(sizes, blobs.train.size());
}

TEST(Partition, LargeAlphaNearUniform) {
  int ok = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    auto blobs = generate_blobs(ring_blob_spec(5, 2, 4.0, 1.0, 1, 1.0, 500, 1), rng);
    auto part = partition(blobs.train, {PartitionMode::kDirichlet, 1e6, 5}, rng);
    double worst = 0.0;
    for (std::uint32_t k = 0; k < 5; ++k) {
      double n = static_cast<double>(part.client_size(ClientId{k}));
      for (std::uint32_t c = 0; c < 5; ++c) {
        worst = std::max(worst, std::abs(part.count(ClassId{c}, ClientId{k}) / n - 0.2));
      }
    }
    if (worst <= 0.05) ++ok;
  }
  EXPECT_GE(ok, 95);
}

TEST(Partition, SkewDecreasesWithAlpha) {
  std::vector<double> alphas{0.01, 0.1, 1.0, 10.0, 1e6};
  std::vector<double> tv;
  for (double a : alphas) {
    double acc = 0.0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      Rng rng(seed);
      auto blobs = generate_blobs(ring_blob_spec(5, 2, 4.0, 1.0, 1, 1.0, 200, 1), rng);
      auto part = partition(blobs.train, {PartitionMode::kDirichlet, a, 5}, rng);
      for (std::uint32_t k = 0; k < 5; ++k) {
        double n = static_cast<double>(part.client_size(ClientId{k}));
        if (n == 0) continue;
        double d = 0.0;
        for (std::uint32_t c = 0; c < 5; ++c) d += std::abs(part.count(ClassId{c}, ClientId{k}) / n - 0.2);
        acc += 0.5 * d * n / static_cast<double>(blobs.train.size());
      }
    }
    tv.push_back(acc);
  }
  for (std::size_t i = 1; i < tv.size(); ++i) EXPECT_LE(tv[i], tv[i - 1]);
}

TEST(DirichletSample, SingleClient) {
  Rng rng(1);
  EXPECT_EQ(dirichlet_sample(0.5, 1, rng), std::vector<double>{1.0});
}

TEST(DirichletSample, FrozenDraw) {
  Rng rng(7);
  auto d = dirichlet_sample(0.5, 4, rng);
  EXPECT_DOUBLE_EQ(d[0], 0.14366857659123541);
  EXPECT_DOUBLE_EQ(d[3], 0.41888296073374065);
}

TEST(DirichletSample, Concentration) {
  Rng rng(8);
  int ok = 0;
  for (int t = 0; t < 1000; ++t) {
    auto d = dirichlet_sample(1e9, 4, rng);
    bool close = std::all_of(d.begin(), d.end(), [](double v) { return std::abs(v - 0.25) <= 1e-3; });
    ok += close;
  }
  EXPECT_GE(ok, 990);
}

TEST(DirichletSample, Sparsity) {
  Rng rng(9);
  int ok = 0;
  for (int t = 0; t < 1000; ++t) {
    auto d = dirichlet_sample(1e-3, 4, rng);
    double s = 0.0;
    for (double v : d) {
      EXPECT_TRUE(std::isfinite(v));
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
    ok += *std::max_element(d.begin(), d.end()) >= 0.99;
  }
  EXPECT_GE(ok, 950);
}

TEST(DirichletSample, RejectsNonPositiveAlpha) {
  Rng rng(1);
  EXPECT_THROW(dirichlet_sample(0.0, 3, rng), InvalidInput);
}

TEST(PartitionSpec, Labels) {
  EXPECT_EQ((PartitionSpec{PartitionMode::kUniform, 1.0, 2}).label(), "uniform");
  EXPECT_EQ((PartitionSpec{PartitionMode::kSingleClassSilo, 1.0, 2}).label(), "silo");
  EXPECT_EQ((PartitionSpec{PartitionMode::kDirichlet, 0.1, 2}).label(), "dirichlet:0.1");
}
