#include "fedfactory/genmatrix.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fedfactory/hash.hpp"
#include "fedfactory/numeric.hpp"

namespace fedfactory {

const FactoryParams& GenerativeMatrix::cell(ClassId c, ClientId k) const {
  auto it = cells_.find({c, k});
  if (it == cells_.end()) {
    throw InvalidInput("cell (" + std::to_string(c.value) + ", " + std::to_string(k.value) + ") is empty");
  }
  return it->second;
}

std::size_t GenerativeMatrix::count(ClassId c, ClientId k) const {
  auto it = cells_.find({c, k});
  return it == cells_.end() ? 0 : it->second.n_local;
}

std::vector<ClientId> GenerativeMatrix::providers(ClassId c) const {
  std::vector<ClientId> out;
  for (auto it = cells_.lower_bound({c, ClientId{0}}); it != cells_.end() && it->first.cls == c; ++it) {
    out.push_back(it->first.client);
  }
  return out;
}

GenerativeMatrix build_matrix(const std::vector<FactoryParams>& factories, std::size_t num_classes,
                              std::size_t num_clients) {
  GenerativeMatrix m(num_classes, num_clients);
  for (const auto& f : factories) {
    if (f.cls.value >= num_classes || f.client.value >= num_clients) {
      throw InvalidInput("factory (" + std::to_string(f.cls.value) + ", " + std::to_string(f.client.value) +
                         ") lies outside the " + std::to_string(num_classes) + "x" + std::to_string(num_clients) +
                         " matrix");
    }
    f.validate();
    auto [it, inserted] = m.cells_.emplace(CellKey{f.cls, f.client}, f);
    if (!inserted) {
      throw InvalidInput("duplicate factory for cell (" + std::to_string(f.cls.value) + ", " +
                         std::to_string(f.client.value) + ")");
    }
  }
  return m;
}

std::size_t QuotaPlan::class_total(ClassId c) const {
  std::size_t n = 0;
  for (const auto& [key, q] : quotas) {
    if (key.cls == c) n += q;
  }
  return n;
}

std::size_t QuotaPlan::total() const {
  std::size_t n = 0;
  for (const auto& [key, q] : quotas) n += q;
  return n;
}

QuotaPlan allocate_quotas(const GenerativeMatrix& matrix, std::size_t n_target) {
  QuotaPlan plan;
  plan.n_target = n_target;
  for (std::size_t c = 0; c < matrix.num_classes(); ++c) {
    ClassId cls{static_cast<std::uint32_t>(c)};
    auto providers = matrix.providers(cls);
    if (providers.empty()) {
      plan.empty_classes.push_back(cls);
      plan.warnings.push_back("class " + std::to_string(c) + " has no provider; it receives no synthetic samples");
      continue;
    }
    std::vector<std::size_t> counts;
    for (ClientId k : providers) counts.push_back(matrix.count(cls, k));
    auto q = largest_remainder(std::span<const std::size_t>(counts), n_target);
    for (std::size_t i = 0; i < providers.size(); ++i) plan.quotas[{cls, providers[i]}] = q[i];
  }
  return plan;
}

LabeledDataset synthesize_global(const GenerativeMatrix& matrix, const QuotaPlan& plan, Rng& rng) {
  LabeledDataset out(0, matrix.num_classes());
  for (const auto& [key, q] : plan.quotas) {
    if (!matrix.occupied(key.cls, key.client)) {
      throw InvalidInput("quota plan references empty cell (" + std::to_string(key.cls.value) + ", " +
                         std::to_string(key.client.value) + ")");
    }
  }
  for (const auto& [key, q] : plan.quotas) {
    const auto& params = matrix.cell(key.cls, key.client);
    Rng cell_rng = spawn_stream(rng, "synthesize", key.cls.value * matrix.num_clients() + key.client.value);
    out.append(sample_factory(params, q, cell_rng, matrix.num_classes()));
  }
  out.set_num_classes(matrix.num_classes());
  return out;
}

UnlearnRequest UnlearnRequest::parse(const std::string& text) {
  auto colon = text.find(':');
  if (colon == std::string::npos) throw InvalidInput("unlearn request must look like mode:index, got '" + text + "'");
  std::string mode = text.substr(0, colon), args = text.substr(colon + 1);
  auto parse_index = [&](const std::string& s) {
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(s, &used);
    } catch (const std::exception&) {
      throw InvalidInput("bad index '" + s + "' in unlearn request");
    }
    if (used != s.size() || s.empty() || s[0] == '-') throw InvalidInput("bad index '" + s + "' in unlearn request");
    return static_cast<std::uint32_t>(v);
  };
  if (mode == "vertical") return vertical(ClientId{parse_index(args)});
  if (mode == "horizontal") return horizontal(ClassId{parse_index(args)});
  if (mode == "targeted") {
    auto comma = args.find(',');
    if (comma == std::string::npos) throw InvalidInput("targeted request needs class,client");
    return targeted(ClassId{parse_index(args.substr(0, comma))}, ClientId{parse_index(args.substr(comma + 1))});
  }
  throw InvalidInput("unknown unlearn mode '" + mode + "'");
}

std::string UnlearnRequest::to_string() const {
  switch (mode) {
    case UnlearnMode::kVertical:
      return "vertical:" + std::to_string(client.value);
    case UnlearnMode::kHorizontal:
      return "horizontal:" + std::to_string(cls.value);
    case UnlearnMode::kTargeted:
      return "targeted:" + std::to_string(cls.value) + "," + std::to_string(client.value);
  }
  return "?";
}

std::vector<CellKey> UnlearnRequest::covered_cells(std::size_t num_classes, std::size_t num_clients) const {
  std::vector<CellKey> out;
  switch (mode) {
    case UnlearnMode::kVertical:
      for (std::uint32_t c = 0; c < num_classes; ++c) out.push_back({ClassId{c}, client});
      break;
    case UnlearnMode::kHorizontal:
      for (std::uint32_t k = 0; k < num_clients; ++k) out.push_back({cls, ClientId{k}});
      break;
    case UnlearnMode::kTargeted:
      out.push_back({cls, client});
      break;
  }
  return out;
}

UnlearnResult unlearn(const GenerativeMatrix& matrix, const UnlearnRequest& request) {
  bool class_used = request.mode != UnlearnMode::kVertical;
  bool client_used = request.mode != UnlearnMode::kHorizontal;
  if (class_used && request.cls.value >= matrix.num_classes()) {
    throw InvalidInput("class " + std::to_string(request.cls.value) + " out of range");
  }
  if (client_used && request.client.value >= matrix.num_clients()) {
    throw InvalidInput("client " + std::to_string(request.client.value) + " out of range");
  }

  auto covered = request.covered_cells(matrix.num_classes(), matrix.num_clients());
  std::vector<FactoryParams> kept;
  std::vector<CellKey> removed;
  for (const auto& [key, params] : matrix.cells()) {
    if (std::find(covered.begin(), covered.end(), key) != covered.end()) {
      removed.push_back(key);
    } else {
      kept.push_back(params);
    }
  }
  UnlearnResult result{build_matrix(kept, matrix.num_classes(), matrix.num_clients()), std::move(removed), {}};
  if (result.removed.empty()) {
    result.warning = "unlearn " + request.to_string() + " targets no occupied cell; matrix unchanged";
  }
  return result;
}

LabeledDataset flush_and_resynthesize(const GenerativeMatrix& matrix_after, std::size_t n_target, Rng& rng) {
  return synthesize_global(matrix_after, allocate_quotas(matrix_after, n_target), rng);
}

std::filesystem::path write_matrix_manifest(const GenerativeMatrix& matrix, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& [key, params] : matrix.cells()) {
    auto bytes = serialize_factory(params);
    std::string name = "factory_c" + std::to_string(key.cls.value) + "_k" + std::to_string(key.client.value) + ".ffac";
    write_file_bytes(dir / name, bytes);
    cells.push_back({{"class", key.cls.value},
                     {"client", key.client.value},
                     {"n_local", params.n_local},
                     {"payload_path", name},
                     {"payload_sha256", sha256_hex(bytes)}});
  }
  nlohmann::json manifest = {{"format", "fedfactory-matrix-manifest"},
                             {"version", 1},
                             {"classes", matrix.num_classes()},
                             {"clients", matrix.num_clients()},
                             {"cells", cells}};
  auto path = dir / "matrix_manifest.json";
  std::ofstream out(path);
  out << manifest.dump(2) << "\n";
  return path;
}

GenerativeMatrix read_matrix_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw InvalidInput("cannot open manifest " + manifest_path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("manifest is not valid JSON: " + std::string(e.what()));
  }
  try {
    if (manifest.at("format") != "fedfactory-matrix-manifest" || manifest.at("version") != 1) {
      throw InvalidInput("unsupported manifest format");
    }
    auto base = manifest_path.parent_path();
    std::vector<FactoryParams> factories;
    for (const auto& cell : manifest.at("cells")) {
      auto bytes = read_file_bytes(base / cell.at("payload_path").get<std::string>());
      if (sha256_hex(bytes) != cell.at("payload_sha256").get<std::string>()) {
        throw InvalidInput("sha256 mismatch for " + cell.at("payload_path").get<std::string>());
      }
      auto params = deserialize_factory(bytes);
      if (params.cls.value != cell.at("class").get<std::uint32_t>() ||
          params.client.value != cell.at("client").get<std::uint32_t>() ||
          params.n_local != cell.at("n_local").get<std::uint32_t>()) {
        throw InvalidInput("payload header disagrees with manifest entry " + cell.at("payload_path").get<std::string>());
      }
      factories.push_back(std::move(params));
    }
    return build_matrix(factories, manifest.at("classes").get<std::size_t>(), manifest.at("clients").get<std::size_t>());
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("malformed manifest: " + std::string(e.what()));
  }
}

}  // namespace fedfactory
