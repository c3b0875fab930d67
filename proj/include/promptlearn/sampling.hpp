#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "promptlearn/corpus.hpp"
#include "promptlearn/embeddings.hpp"

namespace pl {

// Requested per-label counts.
using SamplingPlan = std::map<LabelIndex, std::size_t>;

// round-half-up(proportion * class size), clamped to [1, class size].
SamplingPlan allocate_counts(std::span<const std::size_t> class_counts, double proportion);

// Per label, a uniform subset of the planned size drawn with the stream
// (seed, label). Output is grouped by label, dataset order within a label.
std::vector<std::string> sample_random(const Dataset& dataset, const SamplingPlan& plan, std::uint64_t seed);

std::vector<double> class_centroid(const EmbeddingMatrix& embeddings, std::span<const std::string> ids);

enum class DistanceMetric { kEuclidean, kCosine };

DistanceMetric parse_metric(std::string_view name);
std::string_view metric_name(DistanceMetric metric);

// Distance used for ranking: squared Euclidean, or 1 - cosine similarity.
double centroid_distance(std::span<const float> point, std::span<const double> centroid, DistanceMetric metric);

// Per label, the planned number of ids closest to that label's centroid,
// ties broken by id. Output is grouped by label, nearest first.
std::vector<std::string> sample_active(const Dataset& dataset, const EmbeddingMatrix& embeddings,
                                       const SamplingPlan& plan,
                                       DistanceMetric metric = DistanceMetric::kEuclidean);

struct SelectionProvenance {
  std::string strategy;
  double proportion = 0.0;
  std::uint64_t seed = 0;
  std::string metric;
};

// {"selected": [...], "provenance": {...}}
std::string serialize_selection(const std::vector<std::string>& ids, const SelectionProvenance& provenance);

}  // namespace pl
