#include "fedfactory/config.hpp"

#include <fstream>
#include <set>

#include "fedfactory/hash.hpp"

namespace fedfactory {

using nlohmann::json;

namespace {

// Walks one JSON object, tracking which keys were consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key); }

  const json* get(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void number(const std::string& key, double& out) {
    if (auto* v = get(key)) {
      if (!v->is_number()) throw ConfigError(field(key), "expected a number");
      out = v->get<double>();
    }
  }

  template <class Int>
  void integer(const std::string& key, Int& out) {
    if (auto* v = get(key)) {
      if (!v->is_number_integer()) throw ConfigError(field(key), "expected an integer");
      if (v->is_number_unsigned()) {
        out = static_cast<Int>(v->get<std::uint64_t>());
      } else {
        auto x = v->get<std::int64_t>();
        if (x < 0) throw ConfigError(field(key), "must be non-negative");
        out = static_cast<Int>(x);
      }
    }
  }

  void boolean(const std::string& key, bool& out) {
    if (auto* v = get(key)) {
      if (!v->is_boolean()) throw ConfigError(field(key), "expected true or false");
      out = v->get<bool>();
    }
  }

  void string(const std::string& key, std::string& out) {
    if (auto* v = get(key)) {
      if (!v->is_string()) throw ConfigError(field(key), "expected a string");
      out = v->get<std::string>();
    }
  }

  Section child(const std::string& key) {
    static const json empty = json::object();
    auto* v = get(key);
    return Section(v ? *v : empty, field(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.contains(it.key())) throw ConfigError(field(it.key()), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void positive(double v, const std::string& field) {
  if (!(v > 0.0)) throw ConfigError(field, "must be > 0");
}

void at_least_one(std::size_t v, const std::string& field) {
  if (v < 1) throw ConfigError(field, "must be >= 1");
}

}  // namespace

std::string to_string(ProtocolKind p) {
  switch (p) {
    case ProtocolKind::kA:
      return "A";
    case ProtocolKind::kB:
      return "B";
    case ProtocolKind::kFedAvg:
      return "fedavg";
    case ProtocolKind::kFedProx:
      return "fedprox";
    case ProtocolKind::kCentralized:
      return "centralized";
  }
  return "unknown";
}

ProtocolKind parse_protocol(const std::string& name) {
  if (name == "A") return ProtocolKind::kA;
  if (name == "B") return ProtocolKind::kB;
  if (name == "fedavg") return ProtocolKind::kFedAvg;
  if (name == "fedprox") return ProtocolKind::kFedProx;
  if (name == "centralized") return ProtocolKind::kCentralized;
  throw ConfigError("protocol", "expected one of A, B, fedavg, fedprox, centralized (got '" + name + "')");
}

void RunConfig::validate(std::optional<std::size_t> num_classes) const {
  if (blobs.has_value() == csv.has_value()) throw ConfigError("dataset", "exactly one dataset source is required");
  if (blobs) {
    at_least_one(blobs->classes, "dataset.classes");
    at_least_one(blobs->dim, "dataset.dim");
    positive(blobs->sigma, "dataset.sigma");
    if (!(blobs->radius >= 0.0)) throw ConfigError("dataset.radius", "must be >= 0");
    at_least_one(blobs->components_per_class, "dataset.components_per_class");
    at_least_one(blobs->samples_per_class, "dataset.samples_per_class");
    at_least_one(blobs->test_samples_per_class, "dataset.test_samples_per_class");
    if (!num_classes) num_classes = blobs->classes;
  }
  at_least_one(partition.num_clients, "partition.clients");
  if (partition.mode == PartitionMode::kDirichlet) positive(partition.alpha, "partition.alpha");
  if (num_classes && partition.mode == PartitionMode::kSingleClassSilo && partition.num_clients != *num_classes) {
    throw ConfigError("partition.clients", "silo partition requires clients == classes (" +
                                               std::to_string(partition.num_clients) + " != " +
                                               std::to_string(*num_classes) + ")");
  }
  at_least_one(factory.n_components, "factory.n_components");
  at_least_one(factory.max_iters, "factory.max_iters");
  positive(factory.covariance_floor, "factory.covariance_floor");
  if (!(factory.rel_tol >= 0.0)) throw ConfigError("factory.rel_tol", "must be >= 0");
  at_least_one(n_target, "n_target");
  at_least_one(train.epochs, "train.epochs");
  at_least_one(train.batch_size, "train.batch_size");
  positive(train.lr0, "train.lr0");
  if (!(train.weight_decay >= 0.0)) throw ConfigError("train.weight_decay", "must be >= 0");
  at_least_one(fed.rounds, "fed.rounds");
  at_least_one(fed.local_epochs, "fed.local_epochs");
  if (!(fed.client_fraction > 0.0 && fed.client_fraction <= 1.0)) {
    throw ConfigError("fed.client_fraction", "must be in (0, 1]");
  }
  if (!(fed.mu_prox >= 0.0)) throw ConfigError("fed.mu_prox", "must be >= 0");
  if (!(p_min > 0.0 && p_min < 1.0)) throw ConfigError("loss.p_min", "must be in (0, 1)");
  if (num_classes && !(poe.p_floor > 0.0 && poe.p_floor * static_cast<double>(*num_classes) < 1.0)) {
    throw ConfigError("poe.p_floor", "must satisfy 0 < p_floor < 1/classes");
  }
}

RunConfig parse_run_config(const json& j, const std::filesystem::path& base_dir) {
  RunConfig cfg;
  Section root(j, "");

  {
    auto ds = root.child("dataset");
    std::string kind = "blobs";
    ds.string("kind", kind);
    if (kind == "blobs") {
      BlobsSource b;
      ds.integer("classes", b.classes);
      ds.integer("dim", b.dim);
      ds.number("radius", b.radius);
      ds.number("sigma", b.sigma);
      ds.integer("components_per_class", b.components_per_class);
      ds.number("spread", b.spread);
      ds.integer("samples_per_class", b.samples_per_class);
      ds.integer("test_samples_per_class", b.test_samples_per_class);
      cfg.blobs = b;
    } else if (kind == "csv") {
      std::string train, test;
      ds.string("train", train);
      ds.string("test", test);
      if (train.empty()) throw ConfigError("dataset.train", "required for csv datasets");
      if (test.empty()) throw ConfigError("dataset.test", "required for csv datasets");
      auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
      };
      cfg.csv = CsvSource{resolve(train), resolve(test)};
    } else {
      throw ConfigError("dataset.kind", "expected 'blobs' or 'csv' (got '" + kind + "')");
    }
    ds.finish();
  }

  {
    auto ps = root.child("partition");
    std::string mode = "uniform";
    ps.string("mode", mode);
    if (mode == "uniform") {
      cfg.partition.mode = PartitionMode::kUniform;
    } else if (mode == "dirichlet") {
      cfg.partition.mode = PartitionMode::kDirichlet;
    } else if (mode == "silo") {
      cfg.partition.mode = PartitionMode::kSingleClassSilo;
    } else {
      throw ConfigError("partition.mode", "expected 'uniform', 'dirichlet' or 'silo' (got '" + mode + "')");
    }
    if (ps.has("alpha") && cfg.partition.mode != PartitionMode::kDirichlet) {
      throw ConfigError("partition.alpha", "only valid with mode 'dirichlet'");
    }
    ps.number("alpha", cfg.partition.alpha);
    ps.integer("clients", cfg.partition.num_clients);
    ps.finish();
  }

  {
    std::string protocol = "A";
    root.string("protocol", protocol);
    cfg.protocol = parse_protocol(protocol);
  }

  {
    auto fs = root.child("factory");
    fs.integer("n_components", cfg.factory.n_components);
    fs.integer("max_iters", cfg.factory.max_iters);
    fs.number("rel_tol", cfg.factory.rel_tol);
    fs.number("covariance_floor", cfg.factory.covariance_floor);
    fs.finish();
  }

  root.integer("n_target", cfg.n_target);

  {
    auto ts = root.child("train");
    ts.integer("epochs", cfg.train.epochs);
    ts.integer("batch_size", cfg.train.batch_size);
    ts.number("lr0", cfg.train.lr0);
    ts.number("weight_decay", cfg.train.weight_decay);
    ts.finish();
  }

  {
    auto fs = root.child("fed");
    fs.integer("rounds", cfg.fed.rounds);
    fs.integer("local_epochs", cfg.fed.local_epochs);
    fs.number("client_fraction", cfg.fed.client_fraction);
    fs.number("mu_prox", cfg.fed.mu_prox);
    fs.finish();
  }

  {
    auto ps = root.child("poe");
    ps.number("p_floor", cfg.poe.p_floor);
    ps.finish();
  }

  {
    auto ls = root.child("loss");
    ls.number("p_min", cfg.p_min);
    ls.finish();
  }

  root.boolean("estimate_kl", cfg.estimate_kl);
  root.integer("seed", cfg.seed);
  {
    std::string out = cfg.output_dir.string();
    root.string("output_dir", out);
    cfg.output_dir = out;
  }
  root.finish();

  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("<file>", std::string("malformed JSON: ") + e.what());
  }
  return parse_run_config(j, path.parent_path());
}

json to_json(const RunConfig& cfg) {
  json j;
  if (cfg.blobs) {
    const auto& b = *cfg.blobs;
    j["dataset"] = {{"kind", "blobs"},
                    {"classes", b.classes},
                    {"dim", b.dim},
                    {"radius", b.radius},
                    {"sigma", b.sigma},
                    {"components_per_class", b.components_per_class},
                    {"spread", b.spread},
                    {"samples_per_class", b.samples_per_class},
                    {"test_samples_per_class", b.test_samples_per_class}};
  } else if (cfg.csv) {
    j["dataset"] = {{"kind", "csv"}, {"train", cfg.csv->train.string()}, {"test", cfg.csv->test.string()}};
  }
  json part = {{"clients", cfg.partition.num_clients}};
  switch (cfg.partition.mode) {
    case PartitionMode::kUniform:
      part["mode"] = "uniform";
      break;
    case PartitionMode::kDirichlet:
      part["mode"] = "dirichlet";
      part["alpha"] = cfg.partition.alpha;
      break;
    case PartitionMode::kSingleClassSilo:
      part["mode"] = "silo";
      break;
  }
  j["partition"] = part;
  j["protocol"] = to_string(cfg.protocol);
  j["factory"] = {{"n_components", cfg.factory.n_components},
                  {"max_iters", cfg.factory.max_iters},
                  {"rel_tol", cfg.factory.rel_tol},
                  {"covariance_floor", cfg.factory.covariance_floor}};
  j["n_target"] = cfg.n_target;
  j["train"] = {{"epochs", cfg.train.epochs},
                {"batch_size", cfg.train.batch_size},
                {"lr0", cfg.train.lr0},
                {"weight_decay", cfg.train.weight_decay}};
  j["fed"] = {{"rounds", cfg.fed.rounds},
              {"local_epochs", cfg.fed.local_epochs},
              {"client_fraction", cfg.fed.client_fraction},
              {"mu_prox", cfg.fed.mu_prox}};
  j["poe"] = {{"p_floor", cfg.poe.p_floor}};
  j["loss"] = {{"p_min", cfg.p_min}};
  j["estimate_kl"] = cfg.estimate_kl;
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir.string();
  return j;
}

std::string config_hash(const RunConfig& cfg) {
  json j = to_json(cfg);
  j.erase("seed");
  j.erase("output_dir");
  return sha256_hex(j.dump());
}

ProtocolOptions protocol_options(const RunConfig& cfg, std::size_t jobs) {
  ProtocolOptions opts;
  opts.gmm = cfg.factory;
  opts.n_target = cfg.n_target;
  opts.train = cfg.train;
  opts.loss = BoundedLoss(cfg.p_min);
  opts.poe = cfg.poe;
  opts.estimate_kl = cfg.estimate_kl;
  opts.jobs = jobs;
  return opts;
}

}  // namespace fedfactory
