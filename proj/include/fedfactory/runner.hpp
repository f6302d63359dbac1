#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedfactory/config.hpp"
#include "fedfactory/protocols.hpp"
#include "fedfactory/theory.hpp"

namespace fedfactory {

enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitConfig = 2 };

struct GlobalOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::size_t jobs = 0;  // 0: hardware concurrency

  // Applies --seed / --out on top of the config file.
  void apply(RunConfig& cfg) const;
};

// Dataset, partition and test set, all derived from cfg.seed.
Federation build_federation(const RunConfig& cfg);

struct RunRecord {
  ExperimentResult result;
  nlohmann::json line;  // one results-file entry
  std::filesystem::path run_dir;
};

// Runs the configured protocol and writes its artifacts under
// <output_dir>/runs/<run id>/ together with a hashed run manifest. Does not
// touch the results file.
RunRecord execute_run(const RunConfig& cfg, std::size_t jobs);
std::string run_id(const RunConfig& cfg);

void append_result_line(const std::filesystem::path& results, const nlohmann::json& line);
// Throws ParseError naming the 1-based line on malformed input; blank lines
// are ignored.
std::vector<nlohmann::json> read_result_lines(const std::filesystem::path& results);

struct SweepAxis {
  std::vector<std::string> alphas;  // numbers, or "silo"
  std::vector<std::uint64_t> seeds;
};

// One config per (alpha, seed) pair, alpha-major. Missing axes fall back to
// the base config. Throws ConfigError when both axes are empty.
std::vector<RunConfig> expand_sweep(const RunConfig& base, const SweepAxis& axis);

int cmd_run(const std::filesystem::path& config, const GlobalOptions& g, std::ostream& out, std::ostream& err);
int cmd_sweep(const std::filesystem::path& config, const SweepAxis& axis, const GlobalOptions& g, std::ostream& out,
              std::ostream& err);
int cmd_unlearn(const std::filesystem::path& manifest, const std::string& request,
                const std::filesystem::path& config, const GlobalOptions& g, std::ostream& out, std::ostream& err);
int cmd_verify_theory(const TheorySweepConfig& sweep, const GlobalOptions& g, std::ostream& out, std::ostream& err);
int cmd_report(const std::filesystem::path& results, const GlobalOptions& g, std::ostream& out, std::ostream& err);

nlohmann::json theory_report_json(const TheoryReport& rep, const TheorySweepConfig& cfg, std::uint64_t seed);

}  // namespace fedfactory
