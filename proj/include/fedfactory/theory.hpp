#pragma once

#include <cstdint>
#include <vector>

#include "fedfactory/core.hpp"

namespace fedfactory {

struct DiscreteDist {
  std::vector<double> probs;

  DiscreteDist() = default;
  explicit DiscreteDist(std::vector<double> p);

  std::size_t support() const { return probs.size(); }
  double operator[](std::size_t i) const { return probs[i]; }
  // Entries >= 0 summing to 1 within 1e-12.
  void validate() const;
};

// K clients sharing a finite feature support; client k holds label y_k.
struct DiscreteInstance {
  std::vector<double> pi;
  std::vector<DiscreteDist> p;  // true local marginals
  std::vector<DiscreteDist> q;  // model marginals
  std::vector<std::uint32_t> labels;

  std::size_t num_clients() const { return pi.size(); }
  std::size_t support() const { return p.empty() ? 0 : p.front().support(); }
  // Shapes, pi > 0 summing to 1, valid distributions. Label distinctness is
  // checked by the verifiers that depend on it.
  void validate() const;
};

// Returns +infinity when q_i = 0 < p_i.
double kl_divergence(const DiscreteDist& p, const DiscreteDist& q);
double tv_distance(const DiscreteDist& p, const DiscreteDist& q);
bool verify_pinsker(const DiscreteDist& p, const DiscreteDist& q);

struct Lemma1Check {
  double lhs = 0.0;  // KL between joint (x, y) mixtures
  double rhs = 0.0;  // sum_k pi_k KL(p_k || q_k)
  bool holds = false;
};
Lemma1Check verify_lemma1(const DiscreteInstance& inst);

struct Theorem1Check {
  double excess = 0.0;
  double bound = 0.0;
  double epsilon_bar = 0.0;
  bool holds = false;
  std::vector<std::uint32_t> w_star;  // label index per support point
  std::vector<std::uint32_t> w_syn;
};

inline constexpr std::size_t kMaxTheoremSupport = 8;
inline constexpr std::size_t kMaxTheoremClients = 4;

// Brute force over every map support -> labels.
Theorem1Check verify_theorem1(const DiscreteInstance& inst, const BoundedLoss& loss);

// Dirichlet(1) draw; each entry is zeroed with probability `sparsity`
// (at least one entry survives).
DiscreteDist random_dist(std::size_t support, Rng& rng, double sparsity = 0.0);
// q_k is positive wherever p_k is, and sometimes carries mass where p_k has none.
DiscreteInstance random_instance(std::size_t support, std::size_t clients, Rng& rng);

struct TheorySweepConfig {
  std::size_t pinsker_pairs = 10000;
  std::size_t lemma1_instances = 1000;
  std::size_t theorem1_instances = 500;
  std::size_t theorem1_support = 6;
  std::size_t theorem1_clients = 3;
  double p_min = 1e-6;
  // Multiplies every KL before it enters a check. Anything but 1 corrupts
  // the sweep; used to exercise the failure path.
  double kl_scale = 1.0;
};

struct TheoryReport {
  std::size_t pinsker_pairs = 0;
  std::size_t pinsker_violations = 0;
  std::size_t pinsker_infinite = 0;
  std::size_t lemma1_instances = 0;
  std::size_t lemma1_violations = 0;
  double lemma1_max_gap = 0.0;
  std::size_t theorem1_instances = 0;
  std::size_t theorem1_violations = 0;
  double theorem1_max_ratio = 0.0;
  double theorem1_median_ratio = 0.0;
  std::size_t theorem1_positive_excess = 0;
  std::vector<double> theorem1_ratios;  // excess / bound, instances with bound > 0

  bool ok() const { return pinsker_violations == 0 && lemma1_violations == 0 && theorem1_violations == 0; }
};

TheoryReport run_theory_sweeps(const TheorySweepConfig& cfg, const Rng& rng);

}  // namespace fedfactory
