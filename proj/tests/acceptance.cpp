// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "fedfactory/genmatrix.hpp"
#include "fedfactory/learner.hpp"
#include "fedfactory/metrics.hpp"
#include "fedfactory/protocols.hpp"
#include "fedfactory/runner.hpp"
#include "fedfactory/theory.hpp"

using namespace fedfactory;
namespace fs = std::filesystem;

namespace {

constexpr std::size_t kSeeds = 5;
const fs::path kScratch = fs::temp_directory_path() / "fedfactory_acceptance";

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

RunConfig default_silo(ProtocolKind protocol) {
  RunConfig cfg;
  cfg.blobs = BlobsSource{};
  cfg.partition = {PartitionMode::kSingleClassSilo, 1.0, 5};
  cfg.protocol = protocol;
  cfg.output_dir = kScratch;
  return cfg;
}

std::vector<ExperimentResult> run_seeds(RunConfig cfg) {
  std::vector<ExperimentResult> out;
  for (std::uint64_t s = 1; s <= kSeeds; ++s) {
    cfg.seed = s;
    out.push_back(execute_run(cfg, 1).result);
  }
  return out;
}

std::vector<double> accuracies(const std::vector<ExperimentResult>& runs) {
  std::vector<double> v;
  for (const auto& r : runs) v.push_back(r.accuracy);
  return v;
}

// Shared between criteria 1, 2, 3 and 10.
struct SiloRuns {
  std::vector<ExperimentResult> fedavg, fedprox, a, b, centralized;
  double fedavg_seconds = 0.0, a_seconds = 0.0, b_seconds = 0.0;
};

SiloRuns& silo_runs() {
  static SiloRuns runs = [] {
    SiloRuns r;
    Timer t1;
    r.fedavg = run_seeds(default_silo(ProtocolKind::kFedAvg));
    r.fedavg_seconds = t1.seconds();
    r.fedprox = run_seeds(default_silo(ProtocolKind::kFedProx));
    Timer t2;
    r.a = run_seeds(default_silo(ProtocolKind::kA));
    r.a_seconds = t2.seconds();
    Timer t3;
    r.b = run_seeds(default_silo(ProtocolKind::kB));
    r.b_seconds = t3.seconds();
    r.centralized = run_seeds(default_silo(ProtocolKind::kCentralized));
    return r;
  }();
  return runs;
}

Outcome collapse() {
  auto& r = silo_runs();
  double avg = mean(accuracies(r.fedavg)), prox = mean(accuracies(r.fedprox));
  bool pass = avg <= 0.35 && std::abs(prox - avg) <= 0.10 && r.fedavg_seconds < 120.0;
  return {pass, "fedavg mean acc " + fmt("%.4f", avg) + " (need <= 0.35), fedprox " + fmt("%.4f", prox) +
                    ", fedavg runtime " + fmt("%.1f", r.fedavg_seconds) + " s"};
}

Outcome recovery() {
  auto& r = silo_runs();
  double central = mean(accuracies(r.centralized));
  double a = mean(accuracies(r.a)), b = mean(accuracies(r.b));
  bool pass = a >= 0.9 * central && b >= 0.9 * central && r.a_seconds < 120.0 && r.b_seconds < 120.0;
  return {pass, "A " + fmt("%.4f", a) + ", B " + fmt("%.4f", b) + ", bar 0.9 x centralized " + fmt("%.4f", central) +
                    " = " + fmt("%.4f", 0.9 * central) + ", runtime A " + fmt("%.1f", r.a_seconds) + " s, B " +
                    fmt("%.1f", r.b_seconds) + " s"};
}

Outcome communication() {
  auto& r = silo_runs();
  bool one_shot = true;
  for (const auto& run : r.a) {
    for (auto rounds : run.ledger.uplink_rounds) one_shot = one_shot && rounds == 1;
  }
  const auto a_up = static_cast<double>(r.a.front().ledger.uplink_bytes);
  const auto avg_total = static_cast<double>(r.fedavg.front().ledger.total_bytes());
  double ratio = avg_total / a_up;
  return {one_shot && ratio >= 100.0, std::string("A uplink rounds all 1: ") + (one_shot ? "yes" : "no") +
                                          ", fedavg bytes " + fmt("%.0f", avg_total) + " / A uplink " +
                                          fmt("%.0f", a_up) + " = " + fmt("%.1f", ratio) + " (need >= 100)"};
}

Outcome lemma1() {
  Timer t;
  Rng master(2024);
  double worst = 0.0;
  std::size_t bad = 0;
  for (std::size_t i = 0; i < 1000; ++i) {
    Rng rng = spawn_stream(master, "lemma1", i);
    std::size_t s = 2 + rng.index(9), k = 1 + rng.index(5);
    auto r = verify_lemma1(random_instance(s, k, rng));
    double gap = std::abs(r.lhs - r.rhs);
    worst = std::max(worst, gap);
    bad += gap > 1e-9 || !r.holds;
  }
  double sec = t.seconds();
  return {bad == 0 && sec < 10.0, "1000 instances, max |lhs - rhs| " + fmt("%.3g", worst) + ", failures " +
                                      std::to_string(bad) + ", runtime " + fmt("%.2f", sec) + " s"};
}

Outcome theorem1() {
  Timer t;
  Rng master(2025);
  BoundedLoss loss;
  std::size_t bad = 0;
  std::vector<double> ratios;
  for (std::size_t i = 0; i < 500; ++i) {
    Rng rng = spawn_stream(master, "theorem1", i);
    auto r = verify_theorem1(random_instance(6, 3, rng), loss);
    bad += !(r.excess <= r.bound + 1e-9);
    if (r.bound > 0.0) ratios.push_back(r.excess / r.bound);
  }
  double sec = t.seconds();
  std::sort(ratios.begin(), ratios.end());
  double median = ratios.empty() ? 0.0 : ratios[ratios.size() / 2];
  double worst = ratios.empty() ? 0.0 : ratios.back();
  return {bad == 0 && sec < 60.0, "500 instances (S=6, K=3), violations " + std::to_string(bad) +
                                      ", excess/bound max " + fmt("%.3f", worst) + " median " + fmt("%.3f", median) +
                                      ", runtime " + fmt("%.2f", sec) + " s"};
}

Outcome pinsker() {
  Rng master(2026);
  std::size_t bad = 0;
  for (std::size_t i = 0; i < 10000; ++i) {
    Rng rng = spawn_stream(master, "pinsker", i);
    auto p = random_dist(2 + rng.index(9), rng, 0.3);
    auto q = random_dist(p.support(), rng);
    double kl = kl_divergence(p, q);
    if (std::isinf(kl)) continue;
    bad += !(tv_distance(p, q) <= std::sqrt(kl / 2.0) + 1e-12);
  }
  return {bad == 0, "10000 pairs, violations " + std::to_string(bad)};
}

Outcome unlearning() {
  RunConfig cfg = default_silo(ProtocolKind::kA);
  cfg.partition = {PartitionMode::kUniform, 1.0, 5};
  Federation fed = build_federation(cfg);
  auto local = train_local_factories(fed, cfg.factory, Rng(77), 1);
  GenerativeMatrix m = build_matrix(local.factories, 5, 5);
  if (m.occupied_count() != 25) return {false, "matrix not fully populated"};

  std::vector<UnlearnRequest> requests{UnlearnRequest::vertical(ClientId{1}), UnlearnRequest::horizontal(ClassId{3}),
                                       UnlearnRequest::targeted(ClassId{2}, ClientId{4})};
  bool pass = true;
  std::string detail;
  for (const auto& req : requests) {
    auto res = unlearn(m, req);
    Rng synth(78);
    auto buffer = flush_and_resynthesize(res.matrix, cfg.n_target, synth);
    std::set<CellKey> prov;
    for (const auto& p : buffer.provenances()) prov.insert({p.cls, p.client});
    std::size_t leaked = 0;
    for (const auto& cell : res.removed) leaked += prov.count(cell);
    std::size_t changed = 0;
    for (const auto& [key, params] : res.matrix.cells()) {
      changed += serialize_factory(params) != serialize_factory(m.cell(key.cls, key.client));
    }
    bool ok = leaked == 0 && changed == 0 && !res.removed.empty();
    pass = pass && ok;
    detail += (detail.empty() ? "" : "; ") + req.to_string() + " removed " + std::to_string(res.removed.size()) +
              " leaked " + std::to_string(leaked) + " altered " + std::to_string(changed);
  }
  return {pass, detail};
}

Outcome quotas() {
  Rng master(2027);
  std::size_t bad = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i < 1000; ++i) {
    Rng rng = spawn_stream(master, "quota", i);
    std::size_t c_count = 1 + rng.index(6), k_count = 1 + rng.index(6);
    std::vector<FactoryParams> factories;
    for (std::uint32_t c = 0; c < c_count; ++c) {
      for (std::uint32_t k = 0; k < k_count; ++k) {
        if (k != 0 && rng.uniform() < 0.3) continue;
        FactoryParams p;
        p.cls = ClassId{c};
        p.client = ClientId{k};
        p.dim = 1;
        p.n_local = static_cast<std::uint32_t>(1 + rng.index(5000));
        p.components = {{1.0, {0.0}, {1.0}}};
        factories.push_back(p);
      }
    }
    auto m = build_matrix(factories, c_count, k_count);
    std::size_t n_target = 1 + rng.index(3000);
    auto plan = allocate_quotas(m, n_target);
    for (std::uint32_t c = 0; c < c_count; ++c) {
      bad += plan.class_total(ClassId{c}) != n_target;
      double total = 0.0;
      for (const auto& f : factories) total += f.cls.value == c ? f.n_local : 0.0;
      for (const auto& f : factories) {
        if (f.cls.value != c) continue;
        double err = std::abs(static_cast<double>(plan.quotas.at({f.cls, f.client})) / n_target - f.n_local / total);
        worst = std::max(worst, err * n_target);
        bad += err > 1.0 / n_target;
      }
    }
  }
  return {bad == 0, "1000 instances, violations " + std::to_string(bad) + ", max error x N_target " +
                        fmt("%.4f", worst) + " (need <= 1)"};
}

Outcome hygiene() {
  Rng master(2028);
  double grad = 0.0;
  for (std::size_t i = 0; i < 50; ++i) {
    Rng rng = spawn_stream(master, "grad", i);
    std::size_t c = 2 + rng.index(5), d = 1 + rng.index(6);
    ClassifierModel m(c, d);
    for (auto& w : m.weights) w = 0.5 * rng.normal();
    for (auto& b : m.bias) b = 0.5 * rng.normal();
    LabeledDataset batch(d, c);
    std::vector<double> x(d);
    for (std::size_t n = 1 + rng.index(30); n > 0; --n) {
      for (auto& v : x) v = rng.normal();
      batch.add(x, ClassId{static_cast<std::uint32_t>(rng.index(c))}, Provenance::real(ClientId{0}));
    }
    grad = std::max(grad, finite_difference_grad_check(m, batch, BoundedLoss(), 1e-3, rng));
  }

  double poe = 0.0;
  for (std::size_t i = 0; i < 10000; ++i) {
    Rng rng = spawn_stream(master, "poe", i);
    std::size_t c = 2 + rng.index(8), e = 1 + rng.index(6);
    std::vector<ClassifierModel> experts;
    for (std::size_t j = 0; j < e; ++j) {
      ClassifierModel m(c, 2);
      for (auto& w : m.weights) w = 4.0 * rng.normal();
      for (auto& b : m.bias) b = 4.0 * rng.normal();
      experts.push_back(m);
    }
    std::vector<double> x{rng.normal(), rng.normal()};
    double s = 0.0;
    for (double p : poe_inference(experts, x, PoEConfig{})) s += p;
    poe = std::max(poe, std::abs(s - 1.0));
  }

  double auroc = 0.0;
  for (std::size_t i = 0; i < 100; ++i) {
    Rng rng = spawn_stream(master, "auroc", i);
    std::size_t c = 2 + rng.index(4), n = 10 + rng.index(40);
    std::vector<double> s(n * c);
    for (auto& v : s) v = std::round(rng.uniform() * 20.0) / 20.0;
    std::vector<ClassId> y;
    for (std::size_t j = 0; j < n; ++j) y.push_back(ClassId{static_cast<std::uint32_t>(j < c ? j : rng.index(c))});
    double oracle = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      double wins = 0.0, pairs = 0.0;
      for (std::size_t a = 0; a < n; ++a) {
        if (y[a].value != k) continue;
        for (std::size_t b = 0; b < n; ++b) {
          if (y[b].value == k) continue;
          double sa = s[a * c + k], sb = s[b * c + k];
          wins += sa > sb ? 1.0 : (sa == sb ? 0.5 : 0.0);
          pairs += 1.0;
        }
      }
      oracle += wins / pairs;
    }
    oracle /= static_cast<double>(c);
    auroc = std::max(auroc, std::abs(macro_ovr_auroc(s, c, y).macro - oracle));
  }
  bool pass = grad < 1e-4 && poe <= 1e-12 && auroc <= 1e-12;
  return {pass, "grad rel err " + fmt("%.3g", grad) + " (< 1e-4), PoE |sum - 1| " + fmt("%.3g", poe) +
                    " (<= 1e-12), AUROC vs pairwise " + fmt("%.3g", auroc) + " (<= 1e-12)"};
}

Outcome dirichlet_spectrum() {
  auto& r = silo_runs();
  std::vector<double> means;
  std::string detail;
  for (double alpha : {1e6, 1.0, 0.1}) {
    RunConfig cfg = default_silo(ProtocolKind::kFedAvg);
    cfg.partition = {PartitionMode::kDirichlet, alpha, 5};
    means.push_back(mean(accuracies(run_seeds(cfg))));
    detail += "alpha " + fmt("%g", alpha) + " " + fmt("%.4f", means.back()) + ", ";
  }
  means.push_back(mean(accuracies(r.fedavg)));
  detail += "silo " + fmt("%.4f", means.back());
  bool monotone = true;
  for (std::size_t i = 1; i < means.size(); ++i) monotone = monotone && means[i] <= means[i - 1];
  return {monotone, detail + " (need non-increasing)"};
}

}  // namespace

int main() {
  fs::remove_all(kScratch);
  struct Criterion {
    const char* name;
    std::function<Outcome()> check;
  };
  std::vector<Criterion> criteria{
      {"silo collapse of fedavg and fedprox", collapse},
      {"recovery by protocols A and B", recovery},
      {"one-shot uplink and communication ratio", communication},
      {"joint-mixture KL decomposition", lemma1},
      {"excess risk bound", theorem1},
      {"Pinsker inequality", pinsker},
      {"exact unlearning", unlearning},
      {"quota correctness", quotas},
      {"numerical hygiene", hygiene},
      {"Dirichlet spectrum monotone", dirichlet_spectrum},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Timer t;
    Outcome o;
    try {
      o = criteria[i].check();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2zu %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].name, o.detail.c_str(),
                t.seconds());
    std::fflush(stdout);
  }
  fs::remove_all(kScratch);
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
