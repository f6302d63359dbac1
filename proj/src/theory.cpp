#include "fedfactory/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <string>

namespace fedfactory {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_same_support(const DiscreteDist& p, const DiscreteDist& q) {
  if (p.support() != q.support()) {
    throw InvalidInput("distributions have different supports (" + std::to_string(p.support()) + " vs " +
                       std::to_string(q.support()) + ")");
  }
}

void require_distinct_labels(const DiscreteInstance& inst) {
  std::set<std::uint32_t> seen(inst.labels.begin(), inst.labels.end());
  if (seen.size() != inst.labels.size()) throw InvalidInput("client labels must be pairwise distinct");
}

double kl_raw(std::span<const double> p, std::span<const double> q) {
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) return kInf;
    acc += p[i] * std::log(p[i] / q[i]);
  }
  return std::max(acc, 0.0);
}

bool pinsker_scaled(const DiscreteDist& p, const DiscreteDist& q, double scale) {
  return tv_distance(p, q) <= std::sqrt(scale * kl_divergence(p, q) / 2.0) + 1e-12;
}

Lemma1Check lemma1_scaled(const DiscreteInstance& inst, double scale) {
  inst.validate();
  require_distinct_labels(inst);
  const std::size_t s_count = inst.support();

  // Joint over (x, y) with y ranging over the labels that occur.
  std::map<std::uint32_t, std::size_t> slot;
  for (auto y : inst.labels) slot.emplace(y, 0);
  std::size_t next = 0;
  for (auto& [y, idx] : slot) idx = next++;
  std::vector<double> joint_p(s_count * slot.size(), 0.0), joint_q(joint_p.size(), 0.0);
  for (std::size_t k = 0; k < inst.num_clients(); ++k) {
    std::size_t col = slot.at(inst.labels[k]);
    for (std::size_t x = 0; x < s_count; ++x) {
      joint_p[x * slot.size() + col] += inst.pi[k] * inst.p[k][x];
      joint_q[x * slot.size() + col] += inst.pi[k] * inst.q[k][x];
    }
  }

  Lemma1Check out;
  out.lhs = kl_raw(joint_p, joint_q);
  for (std::size_t k = 0; k < inst.num_clients(); ++k) out.rhs += inst.pi[k] * kl_divergence(inst.p[k], inst.q[k]);
  out.rhs *= scale;
  out.holds = out.lhs <= out.rhs + 1e-9;
  return out;
}

// Risk of hypothesis h under per-(x, label index) joint masses.
double hypothesis_risk(const std::vector<std::uint32_t>& h, const std::vector<double>& mass, std::size_t labels,
                       double hit, double miss) {
  double risk = 0.0;
  for (std::size_t x = 0; x < h.size(); ++x) {
    for (std::size_t j = 0; j < labels; ++j) risk += mass[x * labels + j] * (h[x] == j ? hit : miss);
  }
  return risk;
}

Theorem1Check theorem1_scaled(const DiscreteInstance& inst, const BoundedLoss& loss, double scale) {
  inst.validate();
  require_distinct_labels(inst);
  const std::size_t s_count = inst.support(), k_count = inst.num_clients();
  if (s_count > kMaxTheoremSupport || k_count > kMaxTheoremClients) {
    throw UnsupportedOperation("hypothesis enumeration limited to support <= " + std::to_string(kMaxTheoremSupport) +
                               " and clients <= " + std::to_string(kMaxTheoremClients));
  }
  const double m = loss.bound();
  const double hit_prob = 1.0 - static_cast<double>(k_count - 1) * loss.p_min;
  if (!(hit_prob > loss.p_min)) throw InvalidInput("p_min too large for the label count");
  const double hit = -std::log(hit_prob);

  std::vector<double> mass_p(s_count * k_count), mass_q(s_count * k_count);
  for (std::size_t x = 0; x < s_count; ++x) {
    for (std::size_t k = 0; k < k_count; ++k) {
      mass_p[x * k_count + k] = inst.pi[k] * inst.p[k][x];
      mass_q[x * k_count + k] = inst.pi[k] * inst.q[k][x];
    }
  }

  Theorem1Check out;
  double best_true = kInf, best_syn = kInf;
  std::vector<std::uint32_t> h(s_count, 0);
  // Lexicographic order, last coordinate fastest; strict < keeps the first minimiser.
  while (true) {
    double lt = hypothesis_risk(h, mass_p, k_count, hit, m);
    double ls = hypothesis_risk(h, mass_q, k_count, hit, m);
    if (lt < best_true) {
      best_true = lt;
      out.w_star = h;
    }
    if (ls < best_syn) {
      best_syn = ls;
      out.w_syn = h;
    }
    std::size_t pos = s_count;
    while (pos > 0 && h[pos - 1] + 1 == k_count) h[--pos] = 0;
    if (pos == 0) break;
    ++h[pos - 1];
  }

  out.excess = hypothesis_risk(out.w_syn, mass_p, k_count, hit, m) - best_true;
  double weighted = 0.0;
  for (std::size_t k = 0; k < k_count; ++k) weighted += inst.pi[k] * kl_divergence(inst.p[k], inst.q[k]);
  out.epsilon_bar = std::sqrt(0.5 * scale * weighted);
  out.bound = 2.0 * m * out.epsilon_bar;
  out.holds = out.excess <= out.bound + 1e-9;
  return out;
}

}  // namespace

DiscreteDist::DiscreteDist(std::vector<double> p) : probs(std::move(p)) { validate(); }

void DiscreteDist::validate() const {
  if (probs.empty()) throw InvalidInput("distribution has empty support");
  double total = 0.0;
  for (double v : probs) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidInput("probabilities must be finite and non-negative");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-12) throw InvalidInput("probabilities must sum to 1");
}

void DiscreteInstance::validate() const {
  const std::size_t k_count = pi.size();
  if (k_count == 0) throw InvalidInput("instance needs at least one client");
  if (p.size() != k_count || q.size() != k_count || labels.size() != k_count) {
    throw InvalidInput("instance needs one weight, p, q and label per client");
  }
  double total = 0.0;
  for (double w : pi) {
    if (!(w > 0.0)) throw InvalidInput("client weights must be positive");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw InvalidInput("client weights must sum to 1");
  for (std::size_t k = 0; k < k_count; ++k) {
    p[k].validate();
    q[k].validate();
    if (p[k].support() != support() || q[k].support() != support()) throw InvalidInput("clients must share one support");
  }
}

double kl_divergence(const DiscreteDist& p, const DiscreteDist& q) {
  require_same_support(p, q);
  return kl_raw(p.probs, q.probs);
}

double tv_distance(const DiscreteDist& p, const DiscreteDist& q) {
  require_same_support(p, q);
  double acc = 0.0;
  for (std::size_t i = 0; i < p.support(); ++i) acc += std::abs(p[i] - q[i]);
  return std::min(0.5 * acc, 1.0);
}

bool verify_pinsker(const DiscreteDist& p, const DiscreteDist& q) { return pinsker_scaled(p, q, 1.0); }

Lemma1Check verify_lemma1(const DiscreteInstance& inst) { return lemma1_scaled(inst, 1.0); }

Theorem1Check verify_theorem1(const DiscreteInstance& inst, const BoundedLoss& loss) {
  return theorem1_scaled(inst, loss, 1.0);
}

DiscreteDist random_dist(std::size_t support, Rng& rng, double sparsity) {
  if (support == 0) throw InvalidInput("support must be >= 1");
  std::vector<double> g(support);
  for (auto& v : g) v = rng.gamma(1.0);
  if (sparsity > 0.0) {
    std::size_t keep = rng.index(support);
    for (std::size_t i = 0; i < support; ++i) {
      if (i != keep && rng.uniform() < sparsity) g[i] = 0.0;
    }
  }
  double total = std::accumulate(g.begin(), g.end(), 0.0);
  if (!(total > 0.0)) {
    g.assign(support, 0.0);
    g[rng.index(support)] = 1.0;
    total = 1.0;
  }
  for (auto& v : g) v /= total;
  // Push the rounding residue into the largest entry so the sum is 1 to 1e-12.
  auto it = std::max_element(g.begin(), g.end());
  *it += 1.0 - std::accumulate(g.begin(), g.end(), 0.0);
  return DiscreteDist(std::move(g));
}

DiscreteInstance random_instance(std::size_t support, std::size_t clients, Rng& rng) {
  if (clients == 0) throw InvalidInput("clients must be >= 1");
  DiscreteInstance inst;
  inst.pi = random_dist(clients, rng).probs;
  for (auto& w : inst.pi) {
    if (w < 1e-6) w = 1e-6;
  }
  double total = std::accumulate(inst.pi.begin(), inst.pi.end(), 0.0);
  for (auto& w : inst.pi) w /= total;
  *std::max_element(inst.pi.begin(), inst.pi.end()) += 1.0 - std::accumulate(inst.pi.begin(), inst.pi.end(), 0.0);

  std::vector<std::uint32_t> pool(2 * clients);
  std::iota(pool.begin(), pool.end(), 0u);
  std::shuffle(pool.begin(), pool.end(), rng.engine());
  inst.labels.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(clients));

  for (std::size_t k = 0; k < clients; ++k) {
    auto p = random_dist(support, rng, 0.3);
    // q mixes p with an independent draw: positive on supp(p), possibly beyond it.
    auto noise = random_dist(support, rng, 0.3);
    double t = rng.uniform();
    std::vector<double> q(support);
    for (std::size_t i = 0; i < support; ++i) q[i] = (1.0 - t) * p[i] + t * noise[i];
    *std::max_element(q.begin(), q.end()) += 1.0 - std::accumulate(q.begin(), q.end(), 0.0);
    inst.p.push_back(std::move(p));
    inst.q.emplace_back(std::move(q));
  }
  return inst;
}

TheoryReport run_theory_sweeps(const TheorySweepConfig& cfg, const Rng& rng) {
  if (cfg.pinsker_pairs == 0 || cfg.lemma1_instances == 0 || cfg.theorem1_instances == 0) {
    throw InvalidInput("sweep counts must be >= 1");
  }
  TheoryReport rep;
  BoundedLoss loss(cfg.p_min);

  for (std::size_t i = 0; i < cfg.pinsker_pairs; ++i) {
    Rng r = spawn_stream(rng, "pinsker", i);
    std::size_t s = 2 + r.index(9);
    auto p = random_dist(s, r, 0.3);
    auto q = random_dist(s, r, 0.02);
    ++rep.pinsker_pairs;
    if (std::isinf(kl_divergence(p, q))) ++rep.pinsker_infinite;
    if (!pinsker_scaled(p, q, cfg.kl_scale)) ++rep.pinsker_violations;
  }

  for (std::size_t i = 0; i < cfg.lemma1_instances; ++i) {
    Rng r = spawn_stream(rng, "lemma1", i);
    std::size_t s = 2 + r.index(9), k = 1 + r.index(5);
    auto check = lemma1_scaled(random_instance(s, k, r), cfg.kl_scale);
    ++rep.lemma1_instances;
    double gap = std::isinf(check.lhs) && std::isinf(check.rhs) ? 0.0 : std::abs(check.lhs - check.rhs);
    rep.lemma1_max_gap = std::max(rep.lemma1_max_gap, gap);
    if (!check.holds || !(gap <= 1e-9)) ++rep.lemma1_violations;
  }

  for (std::size_t i = 0; i < cfg.theorem1_instances; ++i) {
    Rng r = spawn_stream(rng, "theorem1", i);
    auto check = theorem1_scaled(random_instance(cfg.theorem1_support, cfg.theorem1_clients, r), loss, cfg.kl_scale);
    ++rep.theorem1_instances;
    if (!check.holds) ++rep.theorem1_violations;
    if (check.excess > 0.0) ++rep.theorem1_positive_excess;
    if (check.bound > 0.0 && std::isfinite(check.bound)) rep.theorem1_ratios.push_back(check.excess / check.bound);
  }
  if (!rep.theorem1_ratios.empty()) {
    auto sorted = rep.theorem1_ratios;
    std::sort(sorted.begin(), sorted.end());
    rep.theorem1_max_ratio = sorted.back();
    std::size_t n = sorted.size();
    rep.theorem1_median_ratio = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  }
  return rep;
}

}  // namespace fedfactory
