#include "fedfactory/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "fedfactory/numeric.hpp"

namespace fedfactory {

void BlobSpec::validate() const {
  if (dim == 0) throw InvalidInput("blob dimension must be positive");
  if (classes.empty()) throw InvalidInput("blob spec needs at least one class");
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const auto& comps = classes[c];
    if (comps.empty()) throw InvalidInput("class " + std::to_string(c) + " has no components");
    double total = 0.0;
    for (const auto& comp : comps) {
      if (comp.mean.size() != dim || comp.var.size() != dim) {
        throw InvalidInput("class " + std::to_string(c) + " component has wrong dimension");
      }
      for (double v : comp.var) {
        if (!(v > 0.0) || !std::isfinite(v)) {
          throw InvalidInput("class " + std::to_string(c) + " has degenerate covariance entry " +
                             std::to_string(v));
        }
      }
      if (!(comp.weight > 0.0)) throw InvalidInput("mixture weights must be positive");
      total += comp.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw InvalidInput("class " + std::to_string(c) + " mixture weights sum to " + std::to_string(total));
    }
  }
}

BlobSpec ring_blob_spec(std::size_t num_classes, std::size_t dim, double radius, double sigma,
                        std::size_t components_per_class, double spread, std::size_t samples_per_class,
                        std::size_t test_samples_per_class) {
  if (dim < 2) throw InvalidInput("ring layout needs dim >= 2");
  if (components_per_class == 0) throw InvalidInput("components_per_class must be positive");
  BlobSpec spec;
  spec.dim = dim;
  spec.samples_per_class = samples_per_class;
  spec.test_samples_per_class = test_samples_per_class;
  for (std::size_t c = 0; c < num_classes; ++c) {
    double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(num_classes);
    double cx = radius * std::cos(angle), cy = radius * std::sin(angle);
    // Unit tangent.
    double tx = -std::sin(angle), ty = std::cos(angle);
    std::vector<BlobComponent> comps;
    for (std::size_t m = 0; m < components_per_class; ++m) {
      double offset = spread * (static_cast<double>(m) - 0.5 * static_cast<double>(components_per_class - 1));
      BlobComponent comp;
      comp.weight = 1.0 / static_cast<double>(components_per_class);
      comp.mean.assign(dim, 0.0);
      comp.mean[0] = cx + offset * tx;
      comp.mean[1] = cy + offset * ty;
      comp.var.assign(dim, sigma * sigma);
      comps.push_back(std::move(comp));
    }
    spec.classes.push_back(std::move(comps));
  }
  return spec;
}

BlobMixture::BlobMixture(BlobSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

double BlobMixture::log_density(ClassId cls, std::span<const double> x) const {
  if (cls.value >= spec_.num_classes()) throw InvalidInput("class out of range");
  if (x.size() != spec_.dim) throw InvalidInput("point has wrong dimension");
  const auto& comps = spec_.classes[cls.value];
  std::vector<double> terms;
  terms.reserve(comps.size());
  for (const auto& comp : comps) {
    terms.push_back(std::log(comp.weight) + diag_gaussian_log_pdf(x, comp.mean, comp.var));
  }
  return log_sum_exp(terms);
}

std::vector<double> BlobMixture::sample(ClassId cls, std::size_t n, Rng& rng) const {
  if (cls.value >= spec_.num_classes()) throw InvalidInput("class out of range");
  const auto& comps = spec_.classes[cls.value];
  std::vector<double> weights;
  for (const auto& comp : comps) weights.push_back(comp.weight);
  std::vector<double> out;
  out.reserve(n * spec_.dim);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& comp = comps[pick_weighted(weights, rng)];
    for (std::size_t j = 0; j < spec_.dim; ++j) {
      out.push_back(comp.mean[j] + std::sqrt(comp.var[j]) * rng.normal());
    }
  }
  return out;
}

BlobData generate_blobs(const BlobSpec& spec, Rng& rng) {
  BlobMixture truth(spec);
  const std::size_t d = spec.dim, c_count = spec.num_classes();
  LabeledDataset train(d, c_count), test(d, c_count);
  train.reserve(c_count * spec.samples_per_class);
  test.reserve(c_count * spec.test_samples_per_class);
  for (std::size_t c = 0; c < c_count; ++c) {
    ClassId cls{static_cast<std::uint32_t>(c)};
    Rng train_rng = spawn_stream(rng, "blobs/train", c);
    Rng test_rng = spawn_stream(rng, "blobs/test", c);
    auto xs = truth.sample(cls, spec.samples_per_class, train_rng);
    for (std::size_t i = 0; i < spec.samples_per_class; ++i) {
      train.add(std::span<const double>(xs).subspan(i * d, d), cls, Provenance::real(kUnassignedClient));
    }
    xs = truth.sample(cls, spec.test_samples_per_class, test_rng);
    for (std::size_t i = 0; i < spec.test_samples_per_class; ++i) {
      test.add(std::span<const double>(xs).subspan(i * d, d), cls, Provenance::real(kUnassignedClient));
    }
  }
  return {std::move(train), std::move(test), std::move(truth)};
}

namespace {

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  auto not_space = [](unsigned char ch) { return !std::isspace(ch); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

double parse_double(const std::string& field, std::size_t line) {
  std::string t = trim(field);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    throw ParseError("invalid number '" + t + "'", line);
  }
  if (used != t.size() || !std::isfinite(v)) throw ParseError("invalid number '" + t + "'", line);
  return v;
}

}  // namespace

LabeledDataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError("empty file, expected header", 1);
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = split_commas(line);
  if (header.size() < 2 || trim(header[0]) != "label") {
    throw ParseError("header must be label,f0,...,f{d-1}", line_no);
  }
  for (std::size_t j = 1; j < header.size(); ++j) {
    if (trim(header[j]) != "f" + std::to_string(j - 1)) {
      throw ParseError("header column " + std::to_string(j) + " must be f" + std::to_string(j - 1), line_no);
    }
  }
  const std::size_t d = header.size() - 1;

  std::vector<double> features;
  std::vector<std::uint32_t> labels;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto fields = split_commas(line);
    if (fields.size() != d + 1) {
      throw ParseError("expected " + std::to_string(d + 1) + " fields, found " + std::to_string(fields.size()),
                       line_no);
    }
    double label = parse_double(fields[0], line_no);
    if (label < 0 || label != std::floor(label) || label > 65535) {
      throw ParseError("label must be a non-negative integer", line_no);
    }
    labels.push_back(static_cast<std::uint32_t>(label));
    for (std::size_t j = 1; j <= d; ++j) features.push_back(parse_double(fields[j], line_no));
  }
  if (labels.empty()) throw ParseError("no data rows", line_no);

  std::uint32_t max_label = *std::max_element(labels.begin(), labels.end());
  std::vector<bool> seen(max_label + 1, false);
  for (auto l : labels) seen[l] = true;
  for (std::uint32_t c = 0; c <= max_label; ++c) {
    if (!seen[c]) throw InvalidInput("labels are not contiguous: class " + std::to_string(c) + " is missing");
  }

  LabeledDataset data(d, max_label + 1);
  data.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    data.add(std::span<const double>(features).subspan(i * d, d), ClassId{labels[i]},
             Provenance::real(kUnassignedClient));
  }
  return data;
}

void write_csv(const LabeledDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << "label";
  for (std::size_t j = 0; j < data.dim(); ++j) out << ",f" << j;
  out << "\n";
  out.precision(17);
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << data.label(i).value;
    for (double v : data.row(i)) out << "," << v;
    out << "\n";
  }
}

void PartitionSpec::validate(std::size_t num_classes) const {
  if (num_clients == 0) throw InvalidInput("partition needs at least one client");
  if (mode == PartitionMode::kDirichlet && !(alpha > 0.0)) {
    throw InvalidInput("Dirichlet alpha must be > 0");
  }
  if (mode == PartitionMode::kSingleClassSilo && num_clients != num_classes) {
    throw InvalidInput("single-class silo requires K == C (K=" + std::to_string(num_clients) +
                       ", C=" + std::to_string(num_classes) + ")");
  }
}

std::string PartitionSpec::label() const {
  switch (mode) {
    case PartitionMode::kUniform:
      return "uniform";
    case PartitionMode::kSingleClassSilo:
      return "silo";
    case PartitionMode::kDirichlet: {
      std::ostringstream s;
      s << "dirichlet:" << alpha;
      return s.str();
    }
  }
  return "unknown";
}

std::size_t Partition::client_size(ClientId k) const {
  std::size_t n = 0;
  for (std::size_t c = 0; c < num_classes; ++c) n += counts[c * num_clients + k.value];
  return n;
}

LabeledDataset Partition::client_data(const LabeledDataset& data, ClientId k) const {
  LabeledDataset out(data.dim(), data.num_classes());
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (assignment[i] == k) out.add(data.row(i), data.label(i), Provenance::real(k));
  }
  return out;
}

LabeledDataset Partition::cell_data(const LabeledDataset& data, ClassId c, ClientId k) const {
  LabeledDataset out(data.dim(), data.num_classes());
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (assignment[i] == k && data.label(i) == c) out.add(data.row(i), c, Provenance::real(k));
  }
  return out;
}

Partition partition(const LabeledDataset& data, const PartitionSpec& spec, Rng& rng) {
  const std::size_t c_count = data.num_classes(), k_count = spec.num_clients;
  spec.validate(c_count);

  std::vector<std::vector<std::size_t>> by_class(c_count);
  for (std::size_t i = 0; i < data.size(); ++i) by_class[data.label(i).value].push_back(i);

  if (spec.mode == PartitionMode::kSingleClassSilo) {
    for (std::size_t c = 0; c < c_count; ++c) {
      if (by_class[c].empty()) throw InvalidInput("single-class silo: class " + std::to_string(c) + " is empty");
    }
  }

  Partition part;
  part.num_classes = c_count;
  part.num_clients = k_count;
  part.assignment.assign(data.size(), ClientId{0});
  part.counts.assign(c_count * k_count, 0);

  for (std::size_t c = 0; c < c_count; ++c) {
    auto& idx = by_class[c];
    Rng class_rng = spawn_stream(rng, "partition", c);
    std::shuffle(idx.begin(), idx.end(), class_rng.engine());

    std::vector<std::size_t> share(k_count, 0);
    switch (spec.mode) {
      case PartitionMode::kUniform:
        for (std::size_t k = 0; k < k_count; ++k) {
          share[k] = idx.size() / k_count + (k < idx.size() % k_count ? 1 : 0);
        }
        break;
      case PartitionMode::kSingleClassSilo:
        share[c] = idx.size();
        break;
      case PartitionMode::kDirichlet: {
        auto props = dirichlet_sample(spec.alpha, k_count, class_rng);
        share = largest_remainder(props, idx.size());
        break;
      }
    }

    std::size_t pos = 0;
    for (std::size_t k = 0; k < k_count; ++k) {
      for (std::size_t j = 0; j < share[k]; ++j) {
        part.assignment[idx[pos++]] = ClientId{static_cast<std::uint32_t>(k)};
      }
      part.counts[c * k_count + k] = share[k];
    }
  }
  return part;
}

std::vector<double> dirichlet_sample(double alpha, std::size_t k, Rng& rng) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InvalidInput("Dirichlet alpha must be a positive real");
  if (k == 0) throw InvalidInput("Dirichlet needs K >= 1");
  if (k == 1) return {1.0};

  std::vector<double> out(k);
  if (alpha >= 1.0) {
    for (auto& v : out) v = rng.gamma(alpha);
    double total = std::accumulate(out.begin(), out.end(), 0.0);
    for (auto& v : out) v /= total;
    return out;
  }
  // Gamma(a) = Gamma(a + 1) * U^(1/a), kept in log space.
  std::vector<double> logs(k);
  for (auto& lg : logs) {
    double g = rng.gamma(alpha + 1.0);
    double u = rng.uniform();
    while (u <= 0.0) u = rng.uniform();
    lg = std::log(g) + std::log(u) / alpha;
  }
  double lse = log_sum_exp(logs);
  for (std::size_t i = 0; i < k; ++i) out[i] = std::exp(logs[i] - lse);
  double total = std::accumulate(out.begin(), out.end(), 0.0);
  for (auto& v : out) v /= total;
  return out;
}

}  // namespace fedfactory
