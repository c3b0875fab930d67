#include "promptlearn/sampling.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "promptlearn/error.hpp"
#include "promptlearn/util.hpp"

namespace pl {

SamplingPlan allocate_counts(std::span<const std::size_t> class_counts, double proportion) {
  if (!(proportion > 0.0 && proportion <= 1.0)) {
    fail(ErrorCode::kInvalidArgument, "sampling proportion must be in (0, 1]");
  }
  SamplingPlan plan;
  for (std::size_t label = 0; label < class_counts.size(); ++label) {
    const std::size_t n = class_counts[label];
    if (n == 0) fail(ErrorCode::kInvalidArgument, "label " + std::to_string(label) + " has no records to sample");
    // The epsilon keeps exact halves (0.05 * 30 = 1.5000000000000002 or
    // 1.4999999999999998) rounding up consistently.
    const double want = std::floor(proportion * static_cast<double>(n) + 0.5 + 1e-9);
    plan[static_cast<LabelIndex>(label)] = std::clamp<std::size_t>(static_cast<std::size_t>(want), 1, n);
  }
  return plan;
}

namespace {

std::map<LabelIndex, std::vector<std::size_t>> members_by_label(const Dataset& dataset, const SamplingPlan& plan) {
  std::map<LabelIndex, std::vector<std::size_t>> members;
  for (const auto& [label, count] : plan) members[label];
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    const auto& label = dataset.records[i].label;
    if (!label) continue;
    auto it = members.find(*label);
    if (it != members.end()) it->second.push_back(i);
  }
  for (const auto& [label, count] : plan) {
    const auto have = members[label].size();
    if (count == 0 || count > have) {
      fail(ErrorCode::kInvalidArgument, "plan asks for " + std::to_string(count) + " records of label " +
                                            std::to_string(label) + " but it has " + std::to_string(have));
    }
  }
  return members;
}

}  // namespace

std::vector<std::string> sample_random(const Dataset& dataset, const SamplingPlan& plan, std::uint64_t seed) {
  auto members = members_by_label(dataset, plan);
  std::vector<std::string> out;
  for (const auto& [label, count] : plan) {
    auto pool = members[label];
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(label));
    rng.shuffle(pool);
    pool.resize(count);
    std::sort(pool.begin(), pool.end());
    for (std::size_t i : pool) out.push_back(dataset.records[i].id);
  }
  return out;
}

std::vector<double> class_centroid(const EmbeddingMatrix& embeddings, std::span<const std::string> ids) {
  if (ids.empty()) fail(ErrorCode::kInvalidArgument, "centroid of an empty id set");
  std::vector<double> sum(embeddings.dim(), 0.0);
  for (const auto& id : ids) {
    const auto row = embeddings.row(id);
    for (std::size_t d = 0; d < row.size(); ++d) sum[d] += row[d];
  }
  for (double& x : sum) x /= static_cast<double>(ids.size());
  return sum;
}

DistanceMetric parse_metric(std::string_view name) {
  if (name == "euclidean") return DistanceMetric::kEuclidean;
  if (name == "cosine") return DistanceMetric::kCosine;
  fail(ErrorCode::kConfig, "unknown distance metric '" + std::string(name) + "' (euclidean, cosine)");
}

std::string_view metric_name(DistanceMetric metric) {
  return metric == DistanceMetric::kCosine ? "cosine" : "euclidean";
}

double centroid_distance(std::span<const float> point, std::span<const double> centroid, DistanceMetric metric) {
  if (metric == DistanceMetric::kEuclidean) {
    double sum = 0.0;
    for (std::size_t d = 0; d < point.size(); ++d) {
      const double diff = static_cast<double>(point[d]) - centroid[d];
      sum += diff * diff;
    }
    return sum;
  }
  double dot = 0.0, pp = 0.0, cc = 0.0;
  for (std::size_t d = 0; d < point.size(); ++d) {
    const double p = point[d];
    dot += p * centroid[d];
    pp += p * p;
    cc += centroid[d] * centroid[d];
  }
  if (pp == 0.0 || cc == 0.0) return 1.0;
  return 1.0 - dot / (std::sqrt(pp) * std::sqrt(cc));
}

std::vector<std::string> sample_active(const Dataset& dataset, const EmbeddingMatrix& embeddings,
                                       const SamplingPlan& plan, DistanceMetric metric) {
  auto members = members_by_label(dataset, plan);
  std::vector<std::string> out;
  for (const auto& [label, count] : plan) {
    std::vector<std::string> ids;
    for (std::size_t i : members[label]) {
      const auto& id = dataset.records[i].id;
      if (!embeddings.contains(id)) fail(ErrorCode::kInvalidArgument, "record '" + id + "' has no embedding");
      ids.push_back(id);
    }
    const auto centroid = class_centroid(embeddings, ids);
    std::vector<std::pair<double, std::string>> ranked;
    ranked.reserve(ids.size());
    for (auto& id : ids) ranked.emplace_back(centroid_distance(embeddings.row(id), centroid, metric), std::move(id));
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(count), ranked.end());
    for (std::size_t k = 0; k < count; ++k) out.push_back(std::move(ranked[k].second));
  }
  return out;
}

std::string serialize_selection(const std::vector<std::string>& ids, const SelectionProvenance& provenance) {
  nlohmann::json doc = {{"selected", ids},
                        {"provenance",
                         {{"strategy", provenance.strategy},
                          {"proportion", provenance.proportion},
                          {"seed", provenance.seed},
                          {"metric", provenance.metric}}}};
  return doc.dump(2) + "\n";
}

}  // namespace pl
