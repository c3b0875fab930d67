#pragma once

#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "promptlearn/scoring.hpp"
#include "promptlearn/verbalizing.hpp"

namespace pl {

// exp(s_i - max) / sum_j exp(s_j - max).
LabelDistribution softmax_normalize(std::span<const double> scores);

// Softmax over a backend's candidate scores, keyed by candidate.
std::unordered_map<std::string, double> word_probabilities(const CandidateScores& scores);

// Weighted elementwise sum, renormalized. Weights default to 1.
LabelDistribution combine_distributions(std::span<const LabelDistribution> dists,
                                        std::optional<std::span<const double>> weights = std::nullopt);

// Argmax; ties go to the lowest index.
LabelIndex predict_label(const LabelDistribution& dist);

struct ModelSpec {
  std::string template_id;
  std::string verbalizer_id;
  std::string backend_id;

  bool operator==(const ModelSpec&) const = default;
};

struct GridSpec {
  std::vector<std::string> template_ids;
  std::vector<std::string> verbalizer_ids;
  std::string backend_id;
};

// Cross product, templates outer and verbalizers inner.
std::vector<ModelSpec> expand_grid(const GridSpec& grid);

}  // namespace pl
