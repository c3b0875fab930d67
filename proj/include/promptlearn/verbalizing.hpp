#pragma once

#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "promptlearn/corpus.hpp"

namespace pl {

// Probability vector over the label catalog.
class LabelDistribution {
 public:
  LabelDistribution() = default;
  // Validates: entries finite, non-negative, summing to 1 within 1e-9.
  explicit LabelDistribution(std::vector<double> probs);

  // Divides by the sum; entries must be non-negative and not all zero.
  static LabelDistribution normalized(std::vector<double> weights);

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  const std::vector<double>& probs() const noexcept { return probs_; }

  bool operator==(const LabelDistribution&) const = default;

 private:
  std::vector<double> probs_;
};

// Label index -> non-empty list of lowercase label words. Words may repeat
// across labels but not within one.
class Verbalizer {
 public:
  Verbalizer(std::string id, std::vector<std::vector<std::string>> word_sets);

  const std::string& id() const noexcept { return id_; }
  std::size_t num_labels() const noexcept { return word_sets_.size(); }
  const std::vector<std::string>& words(LabelIndex label) const;
  const std::vector<std::vector<std::string>>& word_sets() const noexcept { return word_sets_; }

  // Distinct words over all labels, sorted.
  std::vector<std::string> vocabulary() const;

  bool operator==(const Verbalizer&) const = default;

 private:
  std::string id_;
  std::vector<std::vector<std::string>> word_sets_;
};

Verbalizer parse_verbalizer(std::string id, const std::map<LabelIndex, std::vector<std::string>>& spec,
                            std::size_t num_labels);

// Label score = mean of its words' probabilities, then renormalized.
LabelDistribution aggregate_scores(const std::unordered_map<std::string, double>& word_probs,
                                   const Verbalizer& verbalizer);

// The four shipped verbalizers over the 14-label catalog.
std::vector<Verbalizer> default_verbalizers();

// Verbalizer file: JSON array of {id, words: {"<label>": [word, ...]}}.
std::vector<Verbalizer> parse_verbalizers(std::string_view json_text, std::size_t num_labels);
std::vector<Verbalizer> load_verbalizers(const std::string& path, std::size_t num_labels);
std::string serialize_verbalizers(const std::vector<Verbalizer>& verbalizers);

}  // namespace pl
