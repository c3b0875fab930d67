#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "promptlearn/corpus.hpp"

namespace pl {

// nullopt marks a parse failure: always wrong, counted in accuracy's
// denominator but in no real label's precision denominator.
using Prediction = std::optional<LabelIndex>;

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t n_labels);

  void add(LabelIndex gold, Prediction pred);

  std::size_t n_labels() const noexcept { return n_; }
  // cells[g][p] for real labels p.
  std::size_t cell(LabelIndex gold, LabelIndex pred) const;
  // Parse failures recorded against gold label g.
  std::size_t failures(LabelIndex gold) const;
  std::size_t failure_total() const noexcept;
  std::size_t total() const noexcept { return total_; }
  std::size_t row_sum(LabelIndex gold) const;     // includes failures
  std::size_t column_sum(LabelIndex pred) const;  // real predictions only
  std::size_t diagonal_sum() const;

  // n rows of n+1 entries; the last column holds parse failures.
  std::vector<std::vector<std::size_t>> rows() const;

 private:
  std::size_t n_;
  std::size_t total_ = 0;
  std::vector<std::size_t> cells_;  // n x (n + 1)
};

ConfusionMatrix confusion_matrix(std::span<const Prediction> preds, std::span<const LabelIndex> gold,
                                 std::size_t n_labels);

double accuracy(const ConfusionMatrix& matrix);

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct MacroF1 {
  std::vector<ClassScores> per_class;
  double macro_f1 = 0.0;
};

// Zero denominators give 0; the mean runs over every catalog class.
MacroF1 macro_f1(const ConfusionMatrix& matrix);

struct EvaluationReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<ClassScores> per_class;
  std::vector<std::vector<std::size_t>> confusion;
  std::size_t n_samples = 0;
  std::size_t n_parse_failures = 0;
};

EvaluationReport evaluate(const ConfusionMatrix& matrix);
EvaluationReport evaluate(std::span<const Prediction> preds, std::span<const LabelIndex> gold, std::size_t n_labels);

// {accuracy, macro_f1, per_class:[{label, precision, recall, f1}], confusion, n_samples, n_parse_failures}
std::string serialize_report(const EvaluationReport& report, const LabelCatalog& catalog);

}  // namespace pl
