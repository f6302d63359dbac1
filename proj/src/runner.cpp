#include "fedfactory/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "fedfactory/baselines.hpp"
#include "fedfactory/hash.hpp"
#include "fedfactory/metrics.hpp"
#include "fedfactory/numeric.hpp"
#include "fedfactory/parallel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace fedfactory {

namespace {

constexpr std::size_t kEcdfSubsample = 200;

std::string utc_timestamp() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

json nullable(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json ledger_json(const CostLedger& l) {
  return {{"uplink_bytes", l.uplink_bytes},   {"downlink_bytes", l.downlink_bytes},
          {"broadcast_bytes", l.broadcast_bytes}, {"total_bytes", l.total_bytes()},
          {"rounds", l.max_rounds()},          {"uplink_rounds", l.uplink_rounds},
          {"flops_proxy", l.flops_proxy}};
}

json result_line(const RunConfig& cfg, const ExperimentResult& r, const std::string& id) {
  json pca = json::array();
  for (double v : r.per_class_accuracy) pca.push_back(nullable(v));
  json line = {{"run_id", id},
               {"timestamp", utc_timestamp()},
               {"protocol", r.protocol},
               {"partition", r.partition},
               {"alpha", cfg.partition.mode == PartitionMode::kDirichlet ? json(cfg.partition.alpha) : json(nullptr)},
               {"clients", cfg.partition.num_clients},
               {"seed", r.seed},
               {"accuracy", r.accuracy},
               {"auroc", nullable(r.auroc)},
               {"per_class_accuracy", pca},
               {"config_hash", r.config_hash},
               {"train_size", r.train_size},
               {"epsilon_bar", r.epsilon_bar ? json(*r.epsilon_bar) : json(nullptr)},
               {"warnings", r.warnings}};
  line.update(ledger_json(r.ledger));
  return line;
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// Every file under `dir` with its sha256, written as run_manifest.json.
void write_run_manifest(const fs::path& dir, const json& header) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() != "run_manifest.json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  json entries = json::array();
  for (const auto& f : files) {
    entries.push_back({{"path", fs::relative(f, dir).generic_string()},
                       {"bytes", fs::file_size(f)},
                       {"sha256", sha256_file(f)}});
  }
  json manifest = header;
  manifest["files"] = entries;
  write_json(dir / "run_manifest.json", manifest);
}

LabeledDataset deterministic_subsample(const LabeledDataset& data, std::size_t cap, Rng rng) {
  if (data.size() <= cap) return data;
  std::vector<std::size_t> idx(data.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), rng.engine());
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  return data.subset(idx);
}

LabeledDataset class_rows(const LabeledDataset& data, std::uint32_t c) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.label(i).value == c) idx.push_back(i);
  }
  return data.subset(idx);
}

void write_ecdfs(const LabeledDataset& synthetic, const LabeledDataset& real, const fs::path& dir, const Rng& rng) {
  if (synthetic.size() >= 2) {
    auto pooled = deterministic_subsample(synthetic, kEcdfSubsample, spawn_stream(rng, "ecdf", 0));
    write_ecdf_csv(fidelity_ecdf(pooled, real), dir / "ecdf_fidelity_pooled.csv");
    write_ecdf_csv(diversity_ecdf(pooled), dir / "ecdf_diversity_pooled.csv");
  }
  for (std::uint32_t c = 0; c < synthetic.num_classes(); ++c) {
    auto syn_c = class_rows(synthetic, c);
    auto real_c = class_rows(real, c);
    if (syn_c.size() < 2 || real_c.empty()) continue;
    auto sub = deterministic_subsample(syn_c, kEcdfSubsample, spawn_stream(rng, "ecdf", c + 1));
    std::string tag = "class" + std::to_string(c);
    write_ecdf_csv(fidelity_ecdf(sub, real_c), dir / ("ecdf_fidelity_" + tag + ".csv"));
    write_ecdf_csv(diversity_ecdf(sub), dir / ("ecdf_diversity_" + tag + ".csv"));
  }
}

LabeledDataset synthetic_rows(const LabeledDataset& data) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.provenance(i).origin == Origin::kSynthetic) idx.push_back(i);
  }
  return data.subset(idx);
}

void print_line(std::ostream& out, const json& line) {
  out << line.value("protocol", "") << " " << line.value("partition", "") << " seed=" << line.value("seed", 0)
      << " accuracy=" << line.value("accuracy", 0.0) << " total_bytes=" << line.value("total_bytes", 0) << "\n";
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

struct Summary {
  double mean = 0.0, std = 0.0;
};

Summary summarize(const std::vector<double>& v) { return {mean_of(v), stddev_of(v)}; }

double number_or_nan(const json& line, const char* key) {
  auto it = line.find(key);
  return it != line.end() && it->is_number() ? it->get<double>() : std::nan("");
}

std::vector<double> finite_only(const std::vector<double>& v) {
  std::vector<double> out;
  for (double x : v) {
    if (std::isfinite(x)) out.push_back(x);
  }
  return out;
}

// Groups lines by (protocol, partition) in first-seen order.
std::vector<std::pair<std::pair<std::string, std::string>, std::vector<json>>> group_lines(
    const std::vector<json>& lines) {
  std::vector<std::pair<std::pair<std::string, std::string>, std::vector<json>>> groups;
  for (const auto& l : lines) {
    std::pair<std::string, std::string> key{l.value("protocol", ""), l.value("partition", "")};
    auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.first == key; });
    if (it == groups.end()) {
      groups.push_back({key, {}});
      it = std::prev(groups.end());
    }
    it->second.push_back(l);
  }
  return groups;
}

std::vector<double> column(const std::vector<json>& lines, const char* key) {
  std::vector<double> v;
  for (const auto& l : lines) v.push_back(number_or_nan(l, key));
  return v;
}

// Mean +- std CSV; one row per (protocol, partition).
void write_summary_csv(const std::vector<json>& lines, const fs::path& path) {
  std::ostringstream s;
  s << "protocol,partition,runs,accuracy_mean,accuracy_std,auroc_mean,auroc_std,total_bytes_mean,flops_proxy_mean\n";
  for (const auto& [key, group] : group_lines(lines)) {
    auto acc = summarize(column(group, "accuracy"));
    auto auc = summarize(finite_only(column(group, "auroc")));
    s << key.first << "," << key.second << "," << group.size() << "," << fmt(acc.mean) << "," << fmt(acc.std) << ","
      << fmt(auc.mean) << "," << fmt(auc.std) << "," << fmt(mean_of(column(group, "total_bytes"))) << ","
      << fmt(mean_of(column(group, "flops_proxy"))) << "\n";
  }
  write_text(path, s.str());
}

fs::path results_path(const RunConfig& cfg) { return cfg.output_dir / "results.jsonl"; }

}  // namespace

void GlobalOptions::apply(RunConfig& cfg) const {
  if (seed) cfg.seed = *seed;
  if (out) cfg.output_dir = *out;
}

Federation build_federation(const RunConfig& cfg) {
  Rng master(cfg.seed);
  Federation fed;
  if (cfg.blobs) {
    const auto& b = *cfg.blobs;
    auto spec = ring_blob_spec(b.classes, b.dim, b.radius, b.sigma, b.components_per_class, b.spread,
                               b.samples_per_class, b.test_samples_per_class);
    Rng data_rng = spawn_stream(master, "data", 0);
    auto blobs = generate_blobs(spec, data_rng);
    fed.train = std::move(blobs.train);
    fed.test = std::move(blobs.test);
    fed.truth = std::move(blobs.truth);
  } else {
    fed.train = load_csv(cfg.csv->train);
    fed.test = load_csv(cfg.csv->test);
    if (fed.test.dim() != fed.train.dim()) throw ConfigError("dataset.test", "feature dimension differs from train");
    if (fed.test.num_classes() > fed.train.num_classes()) {
      throw ConfigError("dataset.test", "test labels exceed the training label range");
    }
    fed.test.set_num_classes(fed.train.num_classes());
  }
  cfg.validate(fed.train.num_classes());
  Rng part_rng = spawn_stream(master, "partition", 0);
  fed.partition = partition(fed.train, cfg.partition, part_rng);
  return fed;
}

std::string run_id(const RunConfig& cfg) { return config_hash(cfg).substr(0, 12) + "-s" + std::to_string(cfg.seed); }

RunRecord execute_run(const RunConfig& cfg, std::size_t jobs) {
  cfg.validate();
  Federation fed = build_federation(cfg);
  Rng master(cfg.seed);
  Rng proto_rng = spawn_stream(master, "protocol", 0);
  const std::string id = run_id(cfg);
  const fs::path dir = cfg.output_dir / "runs" / id;
  fs::remove_all(dir);
  fs::create_directories(dir);

  auto opts = protocol_options(cfg, jobs);
  ExperimentResult result;
  switch (cfg.protocol) {
    case ProtocolKind::kA: {
      auto o = run_protocol_a(fed, opts, proto_rng);
      write_file_bytes(dir / "model.ffcm", serialize_model(o.model));
      write_matrix_manifest(o.matrix, dir / "matrix");
      write_ecdfs(o.synthetic, fed.train, dir, spawn_stream(master, "artifacts", 0));
      result = std::move(o.result);
      break;
    }
    case ProtocolKind::kB: {
      auto o = run_protocol_b(fed, opts, proto_rng);
      for (std::size_t k = 0; k < o.experts.size(); ++k) {
        write_file_bytes(dir / ("expert_" + std::to_string(k) + ".ffcm"), serialize_model(o.experts[k]));
      }
      write_matrix_manifest(o.matrix, dir / "matrix");
      LabeledDataset synthetic(fed.train.dim(), fed.num_classes());
      for (const auto& mix : o.mixes) synthetic.append(synthetic_rows(mix));
      synthetic.set_num_classes(fed.num_classes());
      write_ecdfs(synthetic, fed.train, dir, spawn_stream(master, "artifacts", 0));
      result = std::move(o.result);
      break;
    }
    case ProtocolKind::kFedAvg:
    case ProtocolKind::kFedProx: {
      FedConfig fc = cfg.fed;
      fc.train = cfg.train;
      fc.jobs = jobs;
      BoundedLoss loss(cfg.p_min);
      auto o = cfg.protocol == ProtocolKind::kFedAvg ? run_fedavg(fed, fc, loss, proto_rng)
                                                     : run_fedprox(fed, fc, loss, proto_rng);
      write_file_bytes(dir / "model.ffcm", serialize_model(o.model));
      result = std::move(o.result);
      break;
    }
    case ProtocolKind::kCentralized: {
      auto o = run_centralized_baseline(fed.train, fed.test, cfg.train, BoundedLoss(cfg.p_min), proto_rng);
      write_file_bytes(dir / "model.ffcm", serialize_model(o.model));
      result = std::move(o.result);
      break;
    }
  }
  result.partition = cfg.partition.label();
  result.seed = cfg.seed;
  result.config_hash = config_hash(cfg);

  json line = result_line(cfg, result, id);
  json stable = line;
  stable.erase("timestamp");
  write_json(dir / "config.json", to_json(cfg));
  write_json(dir / "result.json", stable);
  write_run_manifest(dir, {{"run_id", id}, {"config_hash", result.config_hash}, {"seed", cfg.seed}});
  line["artifacts"] = fs::relative(dir, cfg.output_dir).generic_string();
  return {std::move(result), std::move(line), dir};
}

void append_result_line(const fs::path& results, const json& line) {
  if (results.has_parent_path()) fs::create_directories(results.parent_path());
  std::ofstream out(results, std::ios::app);
  if (!out) throw Error("cannot append to " + results.string());
  out << line.dump() << "\n";
}

std::vector<json> read_result_lines(const fs::path& results) {
  std::ifstream in(results);
  if (!in) throw Error("cannot open " + results.string());
  std::vector<json> lines;
  std::string text;
  std::size_t n = 0;
  while (std::getline(in, text)) {
    ++n;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = json::parse(text);
      if (!j.is_object()) throw ParseError("expected a JSON object", n);
      lines.push_back(std::move(j));
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("malformed results line: ") + e.what(), n);
    }
  }
  return lines;
}

std::vector<RunConfig> expand_sweep(const RunConfig& base, const SweepAxis& axis) {
  if (axis.alphas.empty() && axis.seeds.empty()) throw ConfigError("axis", "sweep axis is empty");
  std::vector<std::optional<std::string>> alphas;
  if (axis.alphas.empty()) {
    alphas.push_back(std::nullopt);
  } else {
    for (const auto& a : axis.alphas) alphas.emplace_back(a);
  }
  std::vector<std::uint64_t> seeds = axis.seeds.empty() ? std::vector<std::uint64_t>{base.seed} : axis.seeds;
  std::vector<RunConfig> out;
  for (const auto& a : alphas) {
    RunConfig cfg = base;
    if (a) {
      if (*a == "silo") {
        cfg.partition.mode = PartitionMode::kSingleClassSilo;
      } else {
        std::size_t used = 0;
        double v = 0.0;
        try {
          v = std::stod(*a, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != a->size()) throw ConfigError("axis.alpha", "expected a number or 'silo' (got '" + *a + "')");
        cfg.partition.mode = PartitionMode::kDirichlet;
        cfg.partition.alpha = v;
      }
    }
    for (auto s : seeds) {
      cfg.seed = s;
      cfg.validate();
      out.push_back(cfg);
    }
  }
  return out;
}

int cmd_run(const fs::path& config, const GlobalOptions& g, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  try {
    cfg = load_run_config(config);
    g.apply(cfg);
    cfg.validate();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  try {
    auto rec = execute_run(cfg, g.jobs);
    for (const auto& w : rec.result.warnings) err << "warning: " << w << "\n";
    append_result_line(results_path(cfg), rec.line);
    print_line(out, rec.line);
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_sweep(const fs::path& config, const SweepAxis& axis, const GlobalOptions& g, std::ostream& out,
              std::ostream& err) {
  std::vector<RunConfig> runs;
  RunConfig base;
  try {
    base = load_run_config(config);
    g.apply(base);
    runs = expand_sweep(base, axis);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  try {
    const std::size_t jobs = g.jobs == 0 ? default_jobs() : g.jobs;
    std::vector<RunRecord> records(runs.size());
    // Runs execute concurrently; each trains single-threaded inside.
    parallel_for(
        runs.size(), [&](std::size_t i) { records[i] = execute_run(runs[i], jobs > 1 ? 1 : 0); }, jobs);
    std::vector<json> lines;
    for (const auto& r : records) {
      for (const auto& w : r.result.warnings) err << "warning: " << w << "\n";
      append_result_line(results_path(base), r.line);
      print_line(out, r.line);
      lines.push_back(r.line);
    }
    write_summary_csv(lines, base.output_dir / "sweep_summary.csv");
    out << "summary: " << (base.output_dir / "sweep_summary.csv").string() << "\n";
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_unlearn(const fs::path& manifest, const std::string& request, const fs::path& config,
                const GlobalOptions& g, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  UnlearnRequest req;
  try {
    cfg = load_run_config(config);
    g.apply(cfg);
    cfg.validate();
    req = UnlearnRequest::parse(request);
  } catch (const InvalidInput& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  try {
    GenerativeMatrix before = read_matrix_manifest(manifest);
    UnlearnResult res = [&] {
      try {
        return unlearn(before, req);
      } catch (const InvalidInput& e) {
        throw ConfigError("request", e.what());
      }
    }();
    if (res.warning) err << "warning: " << *res.warning << "\n";

    Federation fed = build_federation(cfg);
    if (fed.num_classes() != before.num_classes()) {
      throw ConfigError("dataset", "class count differs from the matrix manifest");
    }
    Rng master(cfg.seed);
    Rng synth_before = spawn_stream(master, "unlearn-synthesize", 0);
    Rng synth_after = synth_before;
    LabeledDataset buffer_before = flush_and_resynthesize(before, cfg.n_target, synth_before);
    LabeledDataset buffer_after = flush_and_resynthesize(res.matrix, cfg.n_target, synth_after);
    buffer_after.set_num_classes(fed.num_classes());
    if (buffer_after.empty()) throw Error("no factories remain after unlearning; nothing to retrain on");

    // Provenance audit.
    auto cells_of = [](const LabeledDataset& d) {
      std::set<CellKey> s;
      for (std::size_t i = 0; i < d.size(); ++i) {
        const auto& p = d.provenance(i);
        if (p.origin == Origin::kSynthetic) s.insert({p.cls, p.client});
      }
      return s;
    };
    auto cells_json = [](const auto& cells) {
      json a = json::array();
      for (const auto& c : cells) a.push_back({c.cls.value, c.client.value});
      return a;
    };
    auto prov_before = cells_of(buffer_before), prov_after = cells_of(buffer_after);
    std::set<CellKey> deleted(res.removed.begin(), res.removed.end());
    std::vector<CellKey> leaked;
    std::set_intersection(prov_after.begin(), prov_after.end(), deleted.begin(), deleted.end(),
                          std::back_inserter(leaked));
    bool surviving_identical = true;
    for (const auto& [key, params] : res.matrix.cells()) {
      if (serialize_factory(params) != serialize_factory(before.cell(key.cls, key.client))) surviving_identical = false;
    }

    // Classes left without any factory drop out of the label set; the
    // retrained model has one output per surviving class.
    std::vector<std::uint32_t> surviving;
    std::vector<std::int64_t> remap(fed.num_classes(), -1);
    for (std::uint32_t c = 0; c < fed.num_classes(); ++c) {
      if (!res.matrix.providers(ClassId{c}).empty()) {
        remap[c] = static_cast<std::int64_t>(surviving.size());
        surviving.push_back(c);
      }
    }
    LabeledDataset compact(buffer_after.dim(), surviving.size());
    compact.reserve(buffer_after.size());
    for (std::size_t i = 0; i < buffer_after.size(); ++i) {
      auto c = static_cast<std::uint32_t>(remap[buffer_after.label(i).value]);
      compact.add(buffer_after.row(i), ClassId{c}, buffer_after.provenance(i));
    }
    CostLedger ledger(fed.num_clients());
    auto model = train_classifier(compact, cfg.train, BoundedLoss(cfg.p_min),
                                  spawn_stream(master, "unlearn-classifier", 0), &ledger);

    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < fed.test.size(); ++i) {
      if (remap[fed.test.label(i).value] >= 0) keep.push_back(i);
    }
    LabeledDataset test = fed.test.subset(keep);
    if (test.empty()) throw Error("no test samples remain after unlearning");
    // Scores over the original C classes; erased classes score 0.
    const std::size_t c_count = fed.num_classes();
    std::vector<double> scores(test.size() * c_count, 0.0);
    for (std::size_t i = 0; i < test.size(); ++i) {
      auto p = predict_proba(model, test.row(i));
      for (std::size_t j = 0; j < surviving.size(); ++j) scores[i * c_count + surviving[j]] = p[j];
    }
    ExperimentResult result;
    result.protocol = "A-unlearned";
    result.partition = cfg.partition.label();
    result.seed = cfg.seed;
    result.config_hash = config_hash(cfg);
    result.train_size = buffer_after.size();
    result.ledger = ledger;
    score_result(result, scores, c_count, test);
    if (cfg.estimate_kl && fed.truth) {
      std::vector<FactoryParams> kept;
      for (const auto& [key, params] : res.matrix.cells()) kept.push_back(params);
      result.epsilon_bar = aggregate_epsilon(*fed.truth, kept, protocol_options(cfg, 1).kl_samples,
                                             spawn_stream(master, "unlearn-kl", 0));
    }
    for (const auto& w : result.warnings) err << "warning: " << w << "\n";

    std::string tag = req.to_string();
    std::replace(tag.begin(), tag.end(), ':', '_');
    std::replace(tag.begin(), tag.end(), ',', '_');
    const std::string id = run_id(cfg) + "-unlearn-" + tag;
    const fs::path dir = cfg.output_dir / "runs" / id;
    fs::remove_all(dir);
    fs::create_directories(dir);

    json audit = {{"request", req.to_string()},
                  {"removed_cells", cells_json(res.removed)},
                  {"provenance_before", cells_json(prov_before)},
                  {"provenance_after", cells_json(prov_after)},
                  {"samples_before", buffer_before.size()},
                  {"samples_after", buffer_after.size()},
                  {"deleted_cells_in_buffer_after", cells_json(leaked)},
                  {"exact_erasure", leaked.empty()},
                  {"surviving_cells_identical", surviving_identical},
                  {"model_classes", surviving},
                  {"warning", res.warning ? json(*res.warning) : json(nullptr)}};
    write_json(dir / "audit.json", audit);
    write_matrix_manifest(res.matrix, dir / "matrix");
    write_file_bytes(dir / "model.ffcm", serialize_model(model));
    json line = result_line(cfg, result, id);
    line["unlearn"] = req.to_string();
    json stable = line;
    stable.erase("timestamp");
    write_json(dir / "result.json", stable);
    write_run_manifest(dir, {{"run_id", id}, {"config_hash", result.config_hash}, {"seed", cfg.seed}});
    line["artifacts"] = fs::relative(dir, cfg.output_dir).generic_string();
    append_result_line(results_path(cfg), line);

    out << "unlearn " << req.to_string() << ": removed " << res.removed.size() << " cell(s), buffer "
        << buffer_before.size() << " -> " << buffer_after.size() << " samples, exact_erasure="
        << (leaked.empty() ? "true" : "false") << ", accuracy=" << result.accuracy << "\n";
    if (!leaked.empty() || !surviving_identical) {
      err << "error: provenance audit failed\n";
      return kExitRuntime;
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

json theory_report_json(const TheoryReport& rep, const TheorySweepConfig& cfg, std::uint64_t seed) {
  auto ratios = rep.theorem1_ratios;
  std::sort(ratios.begin(), ratios.end());
  auto quantile = [&](double q) {
    if (ratios.empty()) return 0.0;
    return ratios[static_cast<std::size_t>(q * static_cast<double>(ratios.size() - 1))];
  };
  return {{"seed", seed},
          {"kl_scale", cfg.kl_scale},
          {"ok", rep.ok()},
          {"pinsker", {{"pairs", rep.pinsker_pairs}, {"violations", rep.pinsker_violations},
                       {"infinite_kl", rep.pinsker_infinite}}},
          {"lemma1", {{"instances", rep.lemma1_instances}, {"violations", rep.lemma1_violations},
                      {"max_abs_gap", rep.lemma1_max_gap}}},
          {"theorem1",
           {{"instances", rep.theorem1_instances},
            {"support", cfg.theorem1_support},
            {"clients", cfg.theorem1_clients},
            {"violations", rep.theorem1_violations},
            {"positive_excess", rep.theorem1_positive_excess},
            {"max_ratio", rep.theorem1_max_ratio},
            {"median_ratio", rep.theorem1_median_ratio},
            {"ratio_quantiles",
             {{"p10", quantile(0.1)}, {"p50", quantile(0.5)}, {"p90", quantile(0.9)}, {"max", quantile(1.0)}}}}}};
}

int cmd_verify_theory(const TheorySweepConfig& sweep, const GlobalOptions& g, std::ostream& out, std::ostream& err) {
  if (sweep.pinsker_pairs == 0 || sweep.lemma1_instances == 0 || sweep.theorem1_instances == 0) {
    err << "config error: counts must be >= 1\n";
    return kExitConfig;
  }
  try {
    const std::uint64_t seed = g.seed.value_or(1);
    auto rep = run_theory_sweeps(sweep, Rng(seed));
    const fs::path path = g.out.value_or("results") / "theory_report.json";
    write_json(path, theory_report_json(rep, sweep, seed));
    out << "pinsker: " << rep.pinsker_violations << "/" << rep.pinsker_pairs << " violations\n"
        << "lemma1: " << rep.lemma1_violations << "/" << rep.lemma1_instances
        << " violations, max |lhs-rhs| = " << rep.lemma1_max_gap << "\n"
        << "theorem1: " << rep.theorem1_violations << "/" << rep.theorem1_instances
        << " violations, max excess/bound = " << rep.theorem1_max_ratio
        << ", median = " << rep.theorem1_median_ratio << "\n"
        << "report: " << path.string() << "\n";
    return rep.ok() ? kExitOk : kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_report(const fs::path& results, const GlobalOptions& g, std::ostream& out, std::ostream& err) {
  std::vector<json> lines;
  try {
    lines = read_result_lines(results);
  } catch (const ParseError& e) {
    err << "error: " << results.string() << ": " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  try {
    const fs::path dir = g.out.value_or(results.has_parent_path() ? results.parent_path() : fs::path("."));
    auto groups = group_lines(lines);

    std::ostringstream t1;
    t1 << "method,partition,runs,accuracy_mean,accuracy_std,auroc_mean,auroc_std\n";
    for (const auto& [key, group] : groups) {
      auto acc = summarize(column(group, "accuracy"));
      auto auc = summarize(finite_only(column(group, "auroc")));
      t1 << key.first << "," << key.second << "," << group.size() << "," << fmt(acc.mean) << "," << fmt(acc.std)
         << "," << fmt(auc.mean) << "," << fmt(auc.std) << "\n";
    }

    // Protocol A uplink bytes per partition, the reference for the ratio column.
    std::map<std::string, double> a_uplink;
    for (const auto& [key, group] : groups) {
      if (key.first == "A") a_uplink[key.second] = mean_of(column(group, "uplink_bytes"));
    }
    std::ostringstream t2;
    t2 << "method,partition,runs,flops_proxy_mean,uplink_bytes_mean,downlink_bytes_mean,broadcast_bytes_mean,"
          "total_bytes_mean,rounds_max,bytes_ratio_to_A_uplink\n";
    for (const auto& [key, group] : groups) {
      double total = mean_of(column(group, "total_bytes"));
      double rounds = 0.0;
      for (double r : column(group, "rounds")) rounds = std::max(rounds, r);
      auto ref = a_uplink.find(key.second);
      std::string ratio = ref != a_uplink.end() && ref->second > 0.0 ? fmt(total / ref->second) : "";
      t2 << key.first << "," << key.second << "," << group.size() << "," << fmt(mean_of(column(group, "flops_proxy")))
         << "," << fmt(mean_of(column(group, "uplink_bytes"))) << "," << fmt(mean_of(column(group, "downlink_bytes")))
         << "," << fmt(mean_of(column(group, "broadcast_bytes"))) << "," << fmt(total) << "," << fmt(rounds) << ","
         << ratio << "\n";
    }
    write_text(dir / "table1.csv", t1.str());
    write_text(dir / "table2.csv", t2.str());
    out << "wrote " << (dir / "table1.csv").string() << " and " << (dir / "table2.csv").string() << " ("
        << lines.size() << " runs)\n";
    return kExitOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace fedfactory
