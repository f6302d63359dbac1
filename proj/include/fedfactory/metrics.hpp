#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fedfactory/core.hpp"
#include "fedfactory/learner.hpp"

namespace fedfactory {

// Row-major N x C score matrix from the model's softmax.
std::vector<double> score_matrix(const ClassifierModel& model, const LabeledDataset& data);

// Fraction of rows whose argmax (ties to the lowest class id) equals the
// label. Throws InvalidInput when there are no rows.
double accuracy(std::span<const double> scores, std::size_t num_classes, std::span<const ClassId> labels);
double accuracy(const ClassifierModel& model, const LabeledDataset& test);
// Accuracy restricted to each class; NaN for classes with no test rows.
std::vector<double> per_class_accuracy(std::span<const double> scores, std::size_t num_classes,
                                       std::span<const ClassId> labels);

struct AurocResult {
  double macro = 0.0;
  std::vector<double> per_class;       // NaN for skipped classes
  std::vector<ClassId> skipped;        // classes without positives
  std::vector<std::string> warnings;
};

// One-vs-rest Mann-Whitney AUROC per class using mid-ranks, averaged over
// classes that occur in `labels`. Throws UndefinedMetric when fewer than two
// classes occur.
AurocResult macro_ovr_auroc(std::span<const double> scores, std::size_t num_classes,
                            std::span<const ClassId> labels);

struct EcdfCurve {
  std::vector<double> values;     // sorted ascending
  std::vector<double> fractions;  // (i + 1) / n

  std::size_t size() const { return values.size(); }
  // Fraction of values <= t.
  double at(double t) const;
};

EcdfCurve make_ecdf(std::vector<double> values);

// Min L2 distance from each synthetic sample to the real set.
EcdfCurve fidelity_ecdf(const LabeledDataset& synthetic, const LabeledDataset& real);
// All pairwise L2 distances among synthetic samples (i < j).
EcdfCurve diversity_ecdf(const LabeledDataset& synthetic);

// Two columns: distance,cumulative_fraction.
void write_ecdf_csv(const EcdfCurve& curve, const std::filesystem::path& path);

}  // namespace fedfactory
