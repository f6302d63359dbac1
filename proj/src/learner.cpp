#include "fedfactory/learner.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "fedfactory/bytes.hpp"

namespace fedfactory {

namespace {

// Forward, backward and update multiply-adds per (sample, class, feature).
constexpr std::uint64_t kSgdOpsPerElement = 3;

void softmax_into(const ClassifierModel& m, std::span<const double> x, std::vector<double>& out) {
  out.resize(m.num_classes);
  for (std::size_t c = 0; c < m.num_classes; ++c) {
    double z = m.bias[c];
    const double* w = m.weights.data() + c * m.dim;
    for (std::size_t j = 0; j < m.dim; ++j) z += w[j] * x[j];
    out[c] = z;
  }
  double hi = *std::max_element(out.begin(), out.end());
  double total = 0.0;
  for (auto& v : out) {
    v = std::exp(v - hi);
    total += v;
  }
  for (auto& v : out) v /= total;
}

void check_shapes(const ClassifierModel& m, const LabeledDataset& data) {
  if (data.dim() != m.dim) throw InvalidInput("dataset dimension does not match the model");
  for (ClassId c : data.labels()) {
    if (c.value >= m.num_classes) throw InvalidInput("label outside the model's class range");
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size == 0) throw InvalidInput("batch_size must be positive");
  if (!(lr0 > 0.0)) throw InvalidInput("lr0 must be positive");
  if (weight_decay < 0.0) throw InvalidInput("weight_decay must be non-negative");
}

double TrainConfig::learning_rate(std::size_t epoch, std::size_t total_epochs) const {
  if (total_epochs == 0) return 0.0;
  double t = static_cast<double>(epoch) / static_cast<double>(total_epochs);
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

std::vector<double> predict_proba(const ClassifierModel& model, std::span<const double> x) {
  if (x.size() != model.dim) {
    throw InvalidInput("input has dimension " + std::to_string(x.size()) + ", model expects " +
                       std::to_string(model.dim));
  }
  std::vector<double> p;
  softmax_into(model, x, p);
  return p;
}

double evaluate_risk(const ClassifierModel& model, const LabeledDataset& data, const BoundedLoss& loss) {
  if (data.empty()) throw InvalidInput("risk of an empty dataset is undefined");
  check_shapes(model, data);
  std::vector<double> p;
  double acc = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    softmax_into(model, data.row(i), p);
    acc += clipped_cross_entropy(p, data.label(i), loss);
  }
  return acc / static_cast<double>(data.size());
}

Gradient objective_gradient(const ClassifierModel& model, const LabeledDataset& data,
                            std::span<const std::size_t> rows, const BoundedLoss& loss, double weight_decay) {
  const std::size_t c_count = model.num_classes, d = model.dim;
  Gradient g;
  g.weights.assign(c_count * d, 0.0);
  g.bias.assign(c_count, 0.0);
  std::vector<double> p;
  if (!rows.empty()) {
    const double inv_n = 1.0 / static_cast<double>(rows.size());
    for (std::size_t i : rows) {
      auto x = data.row(i);
      softmax_into(model, x, p);
      const std::size_t y = data.label(i).value;
      g.objective += clipped_cross_entropy(p, data.label(i), loss) * inv_n;
      if (p[y] < loss.p_min) continue;  // clipped: locally constant
      for (std::size_t c = 0; c < c_count; ++c) {
        double r = (p[c] - (c == y ? 1.0 : 0.0)) * inv_n;
        g.bias[c] += r;
        double* gw = g.weights.data() + c * d;
        for (std::size_t j = 0; j < d; ++j) gw[j] += r * x[j];
      }
    }
  }
  if (weight_decay != 0.0) {
    double sq = 0.0;
    for (std::size_t i = 0; i < model.weights.size(); ++i) {
      sq += model.weights[i] * model.weights[i];
      g.weights[i] += weight_decay * model.weights[i];
    }
    g.objective += 0.5 * weight_decay * sq;
  }
  return g;
}

Gradient objective_gradient(const ClassifierModel& model, const LabeledDataset& data, const BoundedLoss& loss,
                            double weight_decay) {
  check_shapes(model, data);
  std::vector<std::size_t> rows(data.size());
  std::iota(rows.begin(), rows.end(), 0);
  return objective_gradient(model, data, rows, loss, weight_decay);
}

std::uint64_t sgd_epochs(ClassifierModel& model, const LabeledDataset& data, const TrainConfig& cfg,
                         const BoundedLoss& loss, const Rng& base, std::size_t first_epoch, std::size_t last_epoch,
                         std::size_t total_epochs, const ProximalTerm& prox) {
  cfg.validate();
  check_shapes(model, data);
  if (prox.mu != 0.0 && (prox.anchor == nullptr || prox.anchor->num_params() != model.num_params())) {
    throw InvalidInput("proximal anchor missing or shaped differently from the model");
  }
  const std::size_t n = data.size();
  std::vector<std::size_t> order(n);
  std::uint64_t flops = 0;
  for (std::size_t epoch = first_epoch; epoch < last_epoch; ++epoch) {
    const double lr = cfg.learning_rate(epoch, total_epochs);
    std::iota(order.begin(), order.end(), 0);
    Rng epoch_rng = spawn_stream(base, "epoch", epoch);
    std::shuffle(order.begin(), order.end(), epoch_rng.engine());
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      std::span<const std::size_t> batch(order.data() + start, std::min(cfg.batch_size, n - start));
      Gradient g = objective_gradient(model, data, batch, loss, cfg.weight_decay);
      if (prox.mu == 0.0) {
        for (std::size_t i = 0; i < model.weights.size(); ++i) model.weights[i] -= lr * g.weights[i];
        for (std::size_t c = 0; c < model.bias.size(); ++c) model.bias[c] -= lr * g.bias[c];
      } else {
        const double shrink = 1.0 / (1.0 + lr * prox.mu);
        const double pull = lr * prox.mu;
        for (std::size_t i = 0; i < model.weights.size(); ++i) {
          model.weights[i] = (model.weights[i] - lr * g.weights[i] + pull * prox.anchor->weights[i]) * shrink;
        }
        for (std::size_t c = 0; c < model.bias.size(); ++c) {
          model.bias[c] = (model.bias[c] - lr * g.bias[c] + pull * prox.anchor->bias[c]) * shrink;
        }
      }
    }
    flops += static_cast<std::uint64_t>(n) * model.num_classes * model.dim * kSgdOpsPerElement;
  }
  return flops;
}

ClassifierModel train_classifier(const LabeledDataset& data, const TrainConfig& cfg, const BoundedLoss& loss,
                                 CostLedger* ledger) {
  return train_classifier(data, cfg, loss, Rng(cfg.seed), ledger);
}

ClassifierModel train_classifier(const LabeledDataset& data, const TrainConfig& cfg, const BoundedLoss& loss,
                                 const Rng& base, CostLedger* ledger) {
  if (data.empty()) throw InvalidInput("cannot train on an empty dataset");
  ClassifierModel model(data.num_classes(), data.dim());
  auto flops = sgd_epochs(model, data, cfg, loss, base, 0, cfg.epochs, cfg.epochs);
  if (ledger != nullptr) ledger->record_flops(flops);
  return model;
}

double finite_difference_grad_check(const ClassifierModel& model, const LabeledDataset& batch,
                                    const BoundedLoss& loss, double weight_decay, Rng& rng, double h,
                                    std::size_t n_coords) {
  if (batch.empty()) throw InvalidInput("gradient check needs a non-empty batch");
  check_shapes(model, batch);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto p = predict_proba(model, batch.row(i));
    if (p[batch.label(i).value] <= 2.0 * loss.p_min) {
      throw InvalidInput("sample " + std::to_string(i) + " lies at the p_min clipping boundary");
    }
  }
  Gradient analytic = objective_gradient(model, batch, loss, weight_decay);
  auto objective_at = [&](const ClassifierModel& m) { return objective_gradient(m, batch, loss, weight_decay).objective; };

  const std::size_t n_params = model.num_params();
  double worst = 0.0;
  for (std::size_t t = 0; t < n_coords; ++t) {
    std::size_t idx = rng.index(n_params);
    ClassifierModel plus = model, minus = model;
    double a;
    if (idx < model.weights.size()) {
      plus.weights[idx] += h;
      minus.weights[idx] -= h;
      a = analytic.weights[idx];
    } else {
      std::size_t c = idx - model.weights.size();
      plus.bias[c] += h;
      minus.bias[c] -= h;
      a = analytic.bias[c];
    }
    double numeric = (objective_at(plus) - objective_at(minus)) / (2.0 * h);
    double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

std::size_t model_payload_size(std::size_t num_classes, std::size_t dim) {
  return kModelHeaderBytes + 8 * (num_classes * dim + num_classes);
}

std::vector<std::uint8_t> serialize_model(const ClassifierModel& model) {
  if (model.num_classes > 0xFFFF || model.dim > 0xFFFF) throw InvalidInput("model too large for checkpoint format");
  ByteWriter w;
  const std::uint8_t magic[4] = {'F', 'F', 'C', 'M'};
  w.raw(magic);
  w.u16(1);
  w.u16(static_cast<std::uint16_t>(model.num_classes));
  w.u16(static_cast<std::uint16_t>(model.dim));
  w.zeros(kModelHeaderBytes - w.size());
  for (double v : model.weights) w.f64(v);
  for (double v : model.bias) w.f64(v);
  return w.take();
}

ClassifierModel deserialize_model(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  auto magic = r.raw(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), "FFCM")) throw FormatError("bad magic, expected FFCM", 0);
  std::size_t at = r.offset();
  auto version = r.u16("version");
  if (version != 1) throw FormatError("unsupported model format version " + std::to_string(version), at);
  std::size_t c = r.u16("classes");
  std::size_t d = r.u16("dim");
  r.raw(kModelHeaderBytes - r.offset(), "reserved");
  ClassifierModel m(c, d);
  for (auto& v : m.weights) v = r.f64("weights");
  for (auto& v : m.bias) v = r.f64("bias");
  if (r.remaining() != 0) throw FormatError("trailing bytes after model payload", r.offset());
  return m;
}

}  // namespace fedfactory
