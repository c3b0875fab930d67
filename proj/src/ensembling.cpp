#include "promptlearn/ensembling.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "promptlearn/error.hpp"

namespace pl {

LabelDistribution softmax_normalize(std::span<const double> scores) {
  if (scores.empty()) fail(ErrorCode::kInvalidArgument, "softmax of an empty vector");
  for (double s : scores) {
    if (!std::isfinite(s)) fail(ErrorCode::kInvalidArgument, "softmax input is not finite");
  }
  const double top = *std::max_element(scores.begin(), scores.end());
  std::vector<double> out;
  out.reserve(scores.size());
  for (double s : scores) out.push_back(std::exp(s - top));
  return LabelDistribution::normalized(std::move(out));
}

std::unordered_map<std::string, double> word_probabilities(const CandidateScores& scores) {
  validate_scores(scores);
  const auto dist = softmax_normalize(scores.scores);
  std::unordered_map<std::string, double> out;
  out.reserve(scores.candidates.size());
  for (std::size_t i = 0; i < scores.candidates.size(); ++i) out.emplace(scores.candidates[i], dist[i]);
  return out;
}

LabelDistribution combine_distributions(std::span<const LabelDistribution> dists,
                                        std::optional<std::span<const double>> weights) {
  if (dists.empty()) fail(ErrorCode::kInvalidArgument, "nothing to combine");
  if (weights && weights->size() != dists.size()) {
    fail(ErrorCode::kInvalidArgument, "weight count does not match distribution count");
  }
  const std::size_t n = dists.front().size();
  std::vector<double> sum(n, 0.0);
  for (std::size_t k = 0; k < dists.size(); ++k) {
    if (dists[k].size() != n) fail(ErrorCode::kInvalidArgument, "distributions differ in length");
    const double w = weights ? (*weights)[k] : 1.0;
    if (!(w > 0.0) || !std::isfinite(w)) fail(ErrorCode::kInvalidArgument, "ensemble weights must be positive");
    for (std::size_t i = 0; i < n; ++i) sum[i] += w * dists[k][i];
  }
  return LabelDistribution::normalized(std::move(sum));
}

LabelIndex predict_label(const LabelDistribution& dist) {
  if (dist.size() == 0) fail(ErrorCode::kInvalidArgument, "empty distribution");
  std::size_t best = 0;
  for (std::size_t i = 1; i < dist.size(); ++i) {
    if (dist[i] > dist[best]) best = i;
  }
  return static_cast<LabelIndex>(best);
}

std::vector<ModelSpec> expand_grid(const GridSpec& grid) {
  if (grid.template_ids.empty() || grid.verbalizer_ids.empty()) {
    fail(ErrorCode::kInvalidArgument, "grid needs at least one template and one verbalizer");
  }
  auto check_unique = [](const std::vector<std::string>& ids, const char* what) {
    std::unordered_set<std::string> seen;
    for (const auto& id : ids) {
      if (!seen.insert(id).second) fail(ErrorCode::kInvalidArgument, std::string("duplicate ") + what + " id '" + id + "'");
    }
  };
  check_unique(grid.template_ids, "template");
  check_unique(grid.verbalizer_ids, "verbalizer");
  std::vector<ModelSpec> out;
  out.reserve(grid.template_ids.size() * grid.verbalizer_ids.size());
  for (const auto& t : grid.template_ids) {
    for (const auto& v : grid.verbalizer_ids) out.push_back({t, v, grid.backend_id});
  }
  return out;
}

}  // namespace pl
