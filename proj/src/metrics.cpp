#include "fedfactory/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace fedfactory {

namespace {

double l2(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) acc += (a[j] - b[j]) * (a[j] - b[j]);
  return std::sqrt(acc);
}

std::size_t argmax_row(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < row.size(); ++c) {
    if (row[c] > row[best]) best = c;
  }
  return best;
}

}  // namespace

std::vector<double> score_matrix(const ClassifierModel& model, const LabeledDataset& data) {
  std::vector<double> scores;
  scores.reserve(data.size() * model.num_classes);
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto p = predict_proba(model, data.row(i));
    scores.insert(scores.end(), p.begin(), p.end());
  }
  return scores;
}

double accuracy(std::span<const double> scores, std::size_t num_classes, std::span<const ClassId> labels) {
  if (labels.empty()) throw InvalidInput("accuracy of an empty test set is undefined");
  if (scores.size() != labels.size() * num_classes) throw InvalidInput("score matrix shape mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (argmax_row(scores.subspan(i * num_classes, num_classes)) == labels[i].value) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double accuracy(const ClassifierModel& model, const LabeledDataset& test) {
  if (test.empty()) throw InvalidInput("accuracy of an empty test set is undefined");
  return accuracy(score_matrix(model, test), model.num_classes, test.labels());
}

std::vector<double> per_class_accuracy(std::span<const double> scores, std::size_t num_classes,
                                       std::span<const ClassId> labels) {
  std::vector<std::size_t> hits(num_classes, 0), total(num_classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::size_t y = labels[i].value;
    if (y >= num_classes) continue;
    ++total[y];
    if (argmax_row(scores.subspan(i * num_classes, num_classes)) == y) ++hits[y];
  }
  std::vector<double> out(num_classes, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (total[c] > 0) out[c] = static_cast<double>(hits[c]) / static_cast<double>(total[c]);
  }
  return out;
}

AurocResult macro_ovr_auroc(std::span<const double> scores, std::size_t num_classes,
                            std::span<const ClassId> labels) {
  const std::size_t n = labels.size();
  if (scores.size() != n * num_classes) throw InvalidInput("score matrix shape mismatch");
  std::vector<std::size_t> positives(num_classes, 0);
  for (ClassId y : labels) {
    if (y.value >= num_classes) throw InvalidInput("label outside score columns");
    ++positives[y.value];
  }
  std::size_t present = std::count_if(positives.begin(), positives.end(), [](std::size_t p) { return p > 0; });
  if (present < 2) throw UndefinedMetric("AUROC needs at least two classes in the labels");

  AurocResult res;
  res.per_class.assign(num_classes, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::size_t> order(n);
  std::vector<double> rank(n);
  double sum = 0.0;
  std::size_t included = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (positives[c] == 0) {
      res.skipped.push_back(ClassId{static_cast<std::uint32_t>(c)});
      res.warnings.push_back("class " + std::to_string(c) + " absent from labels; excluded from macro AUROC");
      continue;
    }
    auto col = [&](std::size_t i) { return scores[i * num_classes + c]; };
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return col(a) < col(b); });
    // Mid-ranks (1-based) over tie groups.
    for (std::size_t i = 0; i < n;) {
      std::size_t j = i;
      while (j + 1 < n && col(order[j + 1]) == col(order[i])) ++j;
      double mid = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t t = i; t <= j; ++t) rank[order[t]] = mid;
      i = j + 1;
    }
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (labels[i].value == c) rank_sum += rank[i];
    }
    double n_pos = static_cast<double>(positives[c]);
    double n_neg = static_cast<double>(n - positives[c]);
    double u = rank_sum - n_pos * (n_pos + 1.0) / 2.0;
    res.per_class[c] = u / (n_pos * n_neg);
    sum += res.per_class[c];
    ++included;
  }
  res.macro = sum / static_cast<double>(included);
  return res;
}

double EcdfCurve::at(double t) const {
  auto it = std::upper_bound(values.begin(), values.end(), t);
  if (it == values.begin()) return 0.0;
  return fractions[static_cast<std::size_t>(it - values.begin()) - 1];
}

EcdfCurve make_ecdf(std::vector<double> values) {
  EcdfCurve curve;
  std::sort(values.begin(), values.end());
  curve.fractions.resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    curve.fractions[i] = static_cast<double>(i + 1) / static_cast<double>(values.size());
  }
  curve.values = std::move(values);
  return curve;
}

EcdfCurve fidelity_ecdf(const LabeledDataset& synthetic, const LabeledDataset& real) {
  if (synthetic.empty() || real.empty()) throw InvalidInput("fidelity ECDF needs non-empty sets");
  if (synthetic.dim() != real.dim()) throw InvalidInput("fidelity ECDF dimension mismatch");
  std::vector<double> mins(synthetic.size());
  for (std::size_t i = 0; i < synthetic.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < real.size(); ++j) best = std::min(best, l2(synthetic.row(i), real.row(j)));
    mins[i] = best;
  }
  return make_ecdf(std::move(mins));
}

EcdfCurve diversity_ecdf(const LabeledDataset& synthetic) {
  const std::size_t n = synthetic.size();
  if (n < 2) throw InvalidInput("diversity ECDF needs at least two samples");
  std::vector<double> dists;
  dists.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) dists.push_back(l2(synthetic.row(i), synthetic.row(j)));
  }
  return make_ecdf(std::move(dists));
}

void write_ecdf_csv(const EcdfCurve& curve, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << "distance,cumulative_fraction\n";
  out.precision(17);
  for (std::size_t i = 0; i < curve.size(); ++i) out << curve.values[i] << "," << curve.fractions[i] << "\n";
}

}  // namespace fedfactory
