#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <tuple>
#include <vector>

#include "fedfactory/config.hpp"
#include "fedfactory/genmatrix.hpp"
#include "fedfactory/metrics.hpp"
#include "fedfactory/protocols.hpp"
#include "fedfactory/runner.hpp"
#include "fedfactory/theory.hpp"

namespace py = pybind11;
using namespace fedfactory;

namespace {

DiscreteInstance make_instance(std::vector<double> pi, const std::vector<std::vector<double>>& p,
                               const std::vector<std::vector<double>>& q, std::vector<std::uint32_t> labels) {
  DiscreteInstance inst;
  inst.pi = std::move(pi);
  for (const auto& v : p) inst.p.emplace_back(v);
  for (const auto& v : q) inst.q.emplace_back(v);
  inst.labels = std::move(labels);
  return inst;
}

// Config and result documents cross the boundary as JSON text.
std::string run_json(const std::string& config, std::size_t jobs) {
  RunConfig cfg = parse_run_config(nlohmann::json::parse(config));
  RunRecord rec = execute_run(cfg, jobs);
  return rec.line.dump();
}

std::string config_hash_json(const std::string& config) {
  return config_hash(parse_run_config(nlohmann::json::parse(config)));
}

std::string verify_theory_json(std::size_t pinsker, std::size_t lemma, std::size_t theorem, std::uint64_t seed,
                               double kl_scale) {
  TheorySweepConfig cfg;
  cfg.pinsker_pairs = pinsker;
  cfg.lemma1_instances = lemma;
  cfg.theorem1_instances = theorem;
  cfg.kl_scale = kl_scale;
  return theory_report_json(run_theory_sweeps(cfg, Rng(seed)), cfg, seed).dump();
}

std::vector<std::vector<std::size_t>> quotas(const std::vector<std::vector<std::uint32_t>>& counts,
                                             std::size_t n_target) {
  const std::size_t c_count = counts.size(), k_count = c_count == 0 ? 0 : counts.front().size();
  std::vector<FactoryParams> factories;
  for (std::uint32_t c = 0; c < c_count; ++c) {
    if (counts[c].size() != k_count) throw InvalidInput("counts must be a rectangular C x K table");
    for (std::uint32_t k = 0; k < k_count; ++k) {
      if (counts[c][k] == 0) continue;
      FactoryParams p;
      p.cls = ClassId{c};
      p.client = ClientId{k};
      p.dim = 1;
      p.n_local = counts[c][k];
      p.components = {{1.0, {0.0}, {1.0}}};
      factories.push_back(std::move(p));
    }
  }
  auto plan = allocate_quotas(build_matrix(factories, c_count, k_count), n_target);
  std::vector<std::vector<std::size_t>> out(c_count, std::vector<std::size_t>(k_count, 0));
  for (const auto& [key, q] : plan.quotas) out[key.cls.value][key.client.value] = q;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Federated generative synthesis: protocols, baselines and theory checks";

  // Translators registered later are tried first.
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);

  m.def("run_json", &run_json, py::arg("config"), py::arg("jobs") = 1,
        py::call_guard<py::gil_scoped_release>());
  m.def("config_hash_json", &config_hash_json, py::arg("config"));
  m.def("verify_theory_json", &verify_theory_json, py::arg("pinsker") = 10000, py::arg("lemma") = 1000,
        py::arg("theorem") = 500, py::arg("seed") = 1, py::arg("kl_scale") = 1.0,
        py::call_guard<py::gil_scoped_release>());

  m.def(
      "kl_divergence",
      [](std::vector<double> p, std::vector<double> q) {
        return kl_divergence(DiscreteDist(std::move(p)), DiscreteDist(std::move(q)));
      },
      py::arg("p"), py::arg("q"));
  m.def(
      "tv_distance",
      [](std::vector<double> p, std::vector<double> q) {
        return tv_distance(DiscreteDist(std::move(p)), DiscreteDist(std::move(q)));
      },
      py::arg("p"), py::arg("q"));
  m.def(
      "verify_pinsker",
      [](std::vector<double> p, std::vector<double> q) {
        return verify_pinsker(DiscreteDist(std::move(p)), DiscreteDist(std::move(q)));
      },
      py::arg("p"), py::arg("q"));
  m.def(
      "verify_lemma1",
      [](std::vector<double> pi, const std::vector<std::vector<double>>& p, const std::vector<std::vector<double>>& q,
         std::vector<std::uint32_t> labels) {
        auto r = verify_lemma1(make_instance(std::move(pi), p, q, std::move(labels)));
        return std::make_tuple(r.lhs, r.rhs, r.holds);
      },
      py::arg("pi"), py::arg("p"), py::arg("q"), py::arg("labels"));
  m.def(
      "verify_theorem1",
      [](std::vector<double> pi, const std::vector<std::vector<double>>& p, const std::vector<std::vector<double>>& q,
         std::vector<std::uint32_t> labels, double p_min) {
        auto r = verify_theorem1(make_instance(std::move(pi), p, q, std::move(labels)), BoundedLoss(p_min));
        py::dict d;
        d["excess"] = r.excess;
        d["bound"] = r.bound;
        d["epsilon_bar"] = r.epsilon_bar;
        d["holds"] = r.holds;
        d["w_star"] = r.w_star;
        d["w_syn"] = r.w_syn;
        return d;
      },
      py::arg("pi"), py::arg("p"), py::arg("q"), py::arg("labels"), py::arg("p_min") = 1e-6);

  m.def(
      "poe_combine",
      [](const std::vector<std::vector<double>>& probs, double p_floor) {
        return poe_combine(probs, PoEConfig{p_floor});
      },
      py::arg("expert_probs"), py::arg("p_floor") = 1e-6);
  m.def(
      "clipped_cross_entropy",
      [](const std::vector<double>& probs, std::uint32_t label, double p_min) {
        return clipped_cross_entropy(probs, ClassId{label}, BoundedLoss(p_min));
      },
      py::arg("probs"), py::arg("label"), py::arg("p_min") = 1e-6);
  m.def(
      "macro_ovr_auroc",
      [](const std::vector<std::vector<double>>& scores, const std::vector<std::uint32_t>& labels) {
        if (scores.size() != labels.size()) throw InvalidInput("one score row per label is required");
        const std::size_t c_count = scores.empty() ? 0 : scores.front().size();
        std::vector<double> flat;
        for (const auto& row : scores) {
          if (row.size() != c_count) throw InvalidInput("score rows differ in length");
          flat.insert(flat.end(), row.begin(), row.end());
        }
        std::vector<ClassId> y;
        for (auto l : labels) y.push_back(ClassId{l});
        auto r = macro_ovr_auroc(flat, c_count, y);
        return std::make_tuple(r.macro, r.per_class);
      },
      py::arg("scores"), py::arg("labels"));
  m.def("allocate_quotas", &quotas, py::arg("counts"), py::arg("n_target"));
}
