#include "promptlearn/evaluation.hpp"

#include <nlohmann/json.hpp>

#include "promptlearn/error.hpp"

namespace pl {

ConfusionMatrix::ConfusionMatrix(std::size_t n_labels) : n_(n_labels), cells_(n_labels * (n_labels + 1), 0) {
  if (n_labels == 0) fail(ErrorCode::kInvalidArgument, "confusion matrix needs at least one label");
}

void ConfusionMatrix::add(LabelIndex gold, Prediction pred) {
  auto in_range = [&](LabelIndex i) { return i >= 0 && static_cast<std::size_t>(i) < n_; };
  if (!in_range(gold)) fail(ErrorCode::kInvalidArgument, "gold label " + std::to_string(gold) + " out of range");
  if (pred && !in_range(*pred)) fail(ErrorCode::kInvalidArgument, "predicted label " + std::to_string(*pred) + " out of range");
  const std::size_t col = pred ? static_cast<std::size_t>(*pred) : n_;
  ++cells_[static_cast<std::size_t>(gold) * (n_ + 1) + col];
  ++total_;
}

std::size_t ConfusionMatrix::cell(LabelIndex gold, LabelIndex pred) const {
  return cells_.at(static_cast<std::size_t>(gold) * (n_ + 1) + static_cast<std::size_t>(pred));
}

std::size_t ConfusionMatrix::failures(LabelIndex gold) const {
  return cells_.at(static_cast<std::size_t>(gold) * (n_ + 1) + n_);
}

std::size_t ConfusionMatrix::failure_total() const noexcept {
  std::size_t sum = 0;
  for (std::size_t g = 0; g < n_; ++g) sum += cells_[g * (n_ + 1) + n_];
  return sum;
}

std::size_t ConfusionMatrix::row_sum(LabelIndex gold) const {
  std::size_t sum = 0;
  for (std::size_t p = 0; p <= n_; ++p) sum += cells_.at(static_cast<std::size_t>(gold) * (n_ + 1) + p);
  return sum;
}

std::size_t ConfusionMatrix::column_sum(LabelIndex pred) const {
  std::size_t sum = 0;
  for (std::size_t g = 0; g < n_; ++g) sum += cells_.at(g * (n_ + 1) + static_cast<std::size_t>(pred));
  return sum;
}

std::size_t ConfusionMatrix::diagonal_sum() const {
  std::size_t sum = 0;
  for (std::size_t i = 0; i < n_; ++i) sum += cells_[i * (n_ + 1) + i];
  return sum;
}

std::vector<std::vector<std::size_t>> ConfusionMatrix::rows() const {
  std::vector<std::vector<std::size_t>> out(n_);
  for (std::size_t g = 0; g < n_; ++g) {
    out[g].assign(cells_.begin() + static_cast<std::ptrdiff_t>(g * (n_ + 1)),
                  cells_.begin() + static_cast<std::ptrdiff_t>((g + 1) * (n_ + 1)));
  }
  return out;
}

ConfusionMatrix confusion_matrix(std::span<const Prediction> preds, std::span<const LabelIndex> gold,
                                 std::size_t n_labels) {
  if (preds.size() != gold.size()) {
    fail(ErrorCode::kInvalidArgument, "prediction count " + std::to_string(preds.size()) + " != gold count " +
                                          std::to_string(gold.size()));
  }
  if (preds.empty()) fail(ErrorCode::kInvalidArgument, "no samples to evaluate");
  ConfusionMatrix m(n_labels);
  for (std::size_t i = 0; i < preds.size(); ++i) m.add(gold[i], preds[i]);
  return m;
}

double accuracy(const ConfusionMatrix& matrix) {
  if (matrix.total() == 0) fail(ErrorCode::kInvalidArgument, "accuracy of zero samples");
  return static_cast<double>(matrix.diagonal_sum()) / static_cast<double>(matrix.total());
}

MacroF1 macro_f1(const ConfusionMatrix& matrix) {
  if (matrix.total() == 0) fail(ErrorCode::kInvalidArgument, "macro F1 of zero samples");
  MacroF1 out;
  double sum = 0.0;
  for (std::size_t i = 0; i < matrix.n_labels(); ++i) {
    const auto label = static_cast<LabelIndex>(i);
    const double tp = static_cast<double>(matrix.cell(label, label));
    const auto col = matrix.column_sum(label);
    const auto row = matrix.row_sum(label);
    ClassScores s;
    s.precision = col ? tp / static_cast<double>(col) : 0.0;
    s.recall = row ? tp / static_cast<double>(row) : 0.0;
    s.f1 = (s.precision + s.recall) > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    sum += s.f1;
    out.per_class.push_back(s);
  }
  out.macro_f1 = sum / static_cast<double>(matrix.n_labels());
  return out;
}

EvaluationReport evaluate(const ConfusionMatrix& matrix) {
  EvaluationReport r;
  r.accuracy = accuracy(matrix);
  auto f1 = macro_f1(matrix);
  r.macro_f1 = f1.macro_f1;
  r.per_class = std::move(f1.per_class);
  r.confusion = matrix.rows();
  r.n_samples = matrix.total();
  r.n_parse_failures = matrix.failure_total();
  return r;
}

EvaluationReport evaluate(std::span<const Prediction> preds, std::span<const LabelIndex> gold, std::size_t n_labels) {
  return evaluate(confusion_matrix(preds, gold, n_labels));
}

std::string serialize_report(const EvaluationReport& report, const LabelCatalog& catalog) {
  nlohmann::ordered_json per_class = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < report.per_class.size(); ++i) {
    const auto& s = report.per_class[i];
    nlohmann::ordered_json entry;
    entry["label"] = i;
    if (catalog.contains(static_cast<LabelIndex>(i))) entry["name"] = catalog.at(static_cast<LabelIndex>(i)).name;
    entry["precision"] = s.precision;
    entry["recall"] = s.recall;
    entry["f1"] = s.f1;
    per_class.push_back(std::move(entry));
  }
  nlohmann::ordered_json doc;
  doc["accuracy"] = report.accuracy;
  doc["macro_f1"] = report.macro_f1;
  doc["per_class"] = std::move(per_class);
  doc["confusion"] = report.confusion;
  doc["n_samples"] = report.n_samples;
  doc["n_parse_failures"] = report.n_parse_failures;
  return doc.dump(2) + "\n";
}

}  // namespace pl
