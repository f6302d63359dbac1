#include <iostream>

#include <CLI11.hpp>

#include "fedfactory/runner.hpp"

int main(int argc, char** argv) {
  using namespace fedfactory;
  CLI::App app{"FederatedFactory simulator: one-shot federated learning with generative factories"};
  app.require_subcommand(1);

  GlobalOptions g;
  std::uint64_t seed = 0;
  std::string out_dir;
  auto* seed_opt = app.add_option("--seed", seed, "Master seed (overrides the config)");
  auto* out_opt = app.add_option("--out", out_dir, "Output directory (overrides the config)");
  app.add_option("--jobs", g.jobs, "Concurrent tasks; 0 uses every hardware thread")->capture_default_str();

  std::string config;
  auto* run = app.add_subcommand("run", "Run one experiment from a config file");
  run->add_option("config", config, "Config JSON")->required();

  std::string alphas, seeds;
  auto* sweep = app.add_subcommand("sweep", "Run a config over a Dirichlet-alpha and/or seed axis");
  sweep->add_option("config", config, "Base config JSON")->required();
  sweep->add_option("--alphas", alphas, "Comma-separated alphas; 'silo' selects single-class silos");
  sweep->add_option("--seeds", seeds, "Comma-separated seeds");

  std::string manifest, request;
  auto* unl = app.add_subcommand("unlearn", "Delete factories from a saved matrix, resynthesize and retrain");
  unl->add_option("manifest", manifest, "matrix_manifest.json from a Protocol A run")->required();
  unl->add_option("request", request, "vertical:<client> | horizontal:<class> | targeted:<class>,<client>")
      ->required();
  unl->add_option("--config", config, "Config JSON of the original run")->required();

  TheorySweepConfig theory;
  auto* vt = app.add_subcommand("verify-theory", "Pinsker, mixture-KL and excess-risk sweeps");
  vt->add_option("--pinsker", theory.pinsker_pairs, "Random distribution pairs")->capture_default_str();
  vt->add_option("--lemma", theory.lemma1_instances, "Random mixture instances")->capture_default_str();
  vt->add_option("--theorem", theory.theorem1_instances, "Random excess-risk instances")->capture_default_str();
  vt->add_option("--corrupt-kl", theory.kl_scale, "Scale every KL before checking (test hook)")
      ->capture_default_str();

  std::string results;
  auto* rep = app.add_subcommand("report", "Pivot a results file into table1.csv and table2.csv");
  rep->add_option("results", results, "results.jsonl")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  if (*seed_opt) g.seed = seed;
  if (*out_opt) g.out = out_dir;

  auto split = [](const std::string& s) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (start <= s.size() && !s.empty()) {
      auto comma = s.find(',', start);
      auto item = s.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      if (!item.empty()) parts.push_back(item);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    return parts;
  };

  if (*run) return cmd_run(config, g, std::cout, std::cerr);
  if (*sweep) {
    SweepAxis axis;
    axis.alphas = split(alphas);
    for (const auto& s : split(seeds)) {
      try {
        axis.seeds.push_back(std::stoull(s));
      } catch (const std::exception&) {
        std::cerr << "config error: axis.seeds: bad seed '" << s << "'\n";
        return kExitConfig;
      }
    }
    return cmd_sweep(config, axis, g, std::cout, std::cerr);
  }
  if (*unl) return cmd_unlearn(manifest, request, config, g, std::cout, std::cerr);
  if (*vt) return cmd_verify_theory(theory, g, std::cout, std::cerr);
  if (*rep) return cmd_report(results, g, std::cout, std::cerr);
  return kExitConfig;
}
