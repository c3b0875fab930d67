#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "promptlearn/corpus.hpp"
#include "promptlearn/embeddings.hpp"
#include "promptlearn/ensembling.hpp"
#include "promptlearn/evaluation.hpp"
#include "promptlearn/prompting.hpp"
#include "promptlearn/sampling.hpp"
#include "promptlearn/scoring.hpp"
#include "promptlearn/verbalizing.hpp"

namespace pl {

inline constexpr std::uint64_t kDefaultSeed = 144;

enum class SamplingStrategy { kRandom, kActive };

struct SamplingConfig {
  SamplingStrategy strategy = SamplingStrategy::kRandom;
  double proportion = 0.05;
  DistanceMetric metric = DistanceMetric::kEuclidean;
  // Train on the first label word only instead of every word of the gold label.
  bool first_word_only = false;
};

struct EmbeddingSource {
  std::optional<std::string> file;
  std::optional<std::string> endpoint;

  bool present() const noexcept { return file || endpoint; }
};

struct ExperimentConfig {
  std::string dataset_path;
  std::string catalog_path;
  std::optional<std::string> templates_path;    // defaults: shipped templates 1-4; the descriptive 5 is always added
  std::optional<std::string> verbalizers_path;  // defaults: shipped verbalizers 1-4
  std::optional<std::string> split_path;        // precomputed split; otherwise stratified
  std::vector<std::string> template_ids{"1"};
  std::vector<std::string> verbalizer_ids{"1"};
  BackendConfig backend;
  SamplingConfig sampling;
  SplitRatios ratios;
  EmbeddingSource embeddings;
  std::uint64_t seed = kDefaultSeed;
  std::string output_dir;  // empty: write nothing
  std::optional<std::string> cache_dir;  // absent: in-memory cache only
  std::optional<std::size_t> max_chars;
  std::size_t workers = 4;
  SplitPart eval_split = SplitPart::kTest;
};

// Relative paths resolve against base_dir.
ExperimentConfig parse_experiment_config(std::string_view json_text, const std::string& base_dir = ".");
ExperimentConfig load_experiment_config(const std::string& path);

// (backend key, template id, record id) + candidate digest -> scores.
// Concurrent readers, exclusive writers.
class ScoreCache {
 public:
  explicit ScoreCache(std::optional<std::string> dir = std::nullopt);

  std::optional<CandidateScores> find(const std::string& backend, const std::string& template_id,
                                      const std::string& record_id, const std::string& digest);
  void insert(const std::string& backend, const std::string& template_id, const std::string& record_id,
              const std::string& digest, CandidateScores scores);
  // Writes one file per (backend, template) when a directory is set.
  void flush() const;

  std::size_t hits() const noexcept { return hits_.load(); }
  std::size_t misses() const noexcept { return misses_.load(); }

 private:
  struct Entry {
    std::string digest;
    CandidateScores scores;
  };
  using Table = std::map<std::string, Entry>;  // by record id
  Table& table_locked(const std::string& backend, const std::string& template_id);
  std::string file_for(const std::string& backend, const std::string& template_id) const;

  std::optional<std::string> dir_;
  mutable std::shared_mutex mutex_;
  std::map<std::pair<std::string, std::string>, Table> tables_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
};

std::string candidate_digest(std::span<const std::string> candidates);

// Everything an experiment needs, loaded and cross-checked.
struct ExperimentResources {
  Dataset dataset;
  std::vector<Template> templates;
  std::vector<Verbalizer> verbalizers;
  std::optional<EmbeddingMatrix> embeddings;
  std::optional<SplitAssignment> split;
};

class Experiment {
 public:
  Experiment(ExperimentConfig config, ExperimentResources resources);

  const ExperimentConfig& config() const noexcept { return config_; }
  const Dataset& dataset() const noexcept { return res_.dataset; }
  const LabelCatalog& catalog() const noexcept { return res_.dataset.catalog; }
  const Template& template_by_id(std::string_view id) const;
  const Verbalizer& verbalizer_by_id(std::string_view id) const;
  const std::vector<Template>& templates() const noexcept { return res_.templates; }
  const std::vector<Verbalizer>& verbalizers() const noexcept { return res_.verbalizers; }
  const std::optional<EmbeddingMatrix>& embeddings() const noexcept { return res_.embeddings; }

  // Precomputed split when configured, else stratified with the config seed.
  const SplitAssignment& split() const;
  Dataset part(SplitPart p) const;

  ScoreCache& cache() const noexcept { return *cache_; }

 private:
  ExperimentConfig config_;
  ExperimentResources res_;
  mutable std::optional<SplitAssignment> split_;
  std::unique_ptr<ScoreCache> cache_;
};

// Reads dataset, catalog, template/verbalizer files and embeddings (file
// source) named by the config.
Experiment load_experiment(const ExperimentConfig& config);

struct RecordPrediction {
  std::string id;
  Prediction pred;
  std::optional<LabelIndex> gold;
};

struct RunResult {
  EvaluationReport report;
  std::vector<RecordPrediction> predictions;
  bool complete = true;
  std::string predictions_jsonl;
  std::string report_json;
  std::string provenance_json;  // few-shot only
};

std::string serialize_predictions(const std::vector<RecordPrediction>& predictions);
std::vector<RecordPrediction> parse_predictions(std::string_view jsonl);

struct Selection {
  std::vector<std::string> ids;
  SelectionProvenance provenance;
};

SplitAssignment run_split(const Experiment& exp);

// Few-shot subset of train_dev by the configured strategy.
Selection run_sample(const Experiment& exp);

std::vector<FilledPrompt> run_render(const Experiment& exp, SplitPart part, std::string_view template_id);
// One {"id","template","prompt","truncated"} object per line.
std::string serialize_prompts(const std::vector<FilledPrompt>& prompts);

// Builds a backend for the config. Toy backends must be created by
// run_few_shot, which trains them.
std::unique_ptr<ScoringBackend> make_backend(const Experiment& exp);

// Render, score, verbalize and ensemble every configured (template,
// verbalizer) model; chat backends classify by index instead.
RunResult run_zero_shot(const Experiment& exp, SplitPart part);
RunResult run_zero_shot(const Experiment& exp, SplitPart part, const ScoringBackend& backend,
                        const std::string& backend_key);

// Training pairs for the selected records; throws kLeakage if any record
// is outside train_dev.
std::vector<TrainingPair> build_training_pairs(const Experiment& exp, std::span<const std::string> selected);

// Number of leakage assertions evaluated in this process.
std::size_t leakage_checks_performed() noexcept;

struct FewShotModel {
  Selection selection;
  std::size_t n_pairs = 0;
  std::shared_ptr<const ToyBackend> backend;
  std::string backend_key;
};

FewShotModel train_few_shot(const Experiment& exp);
RunResult run_few_shot(const Experiment& exp);

// (template id or ".*", verbalizer id or ".*") -> report.
struct GridResults {
  std::vector<std::string> template_ids;
  std::vector<std::string> verbalizer_ids;
  std::map<std::pair<std::string, std::string>, EvaluationReport> cells;
  std::size_t scoring_calls = 0;
};

inline constexpr std::string_view kEnsembleKey = ".*";

// Every (template, verbalizer) model, each template row ensemble, each
// verbalizer column ensemble and the joint ensemble, scored on the eval split.
// A toy backend is trained first.
GridResults run_grid(const Experiment& exp);
GridResults run_grid(const Experiment& exp, const ScoringBackend& backend, const std::string& backend_key);

std::string serialize_grid(const GridResults& results);
GridResults parse_grid(std::string_view json_text);

struct GridTable {
  std::string markdown;
  std::vector<std::string> warnings;
};

// (T+1) x (V+1) table of "acc / macroF1" percentages; ensemble cells bold,
// missing cells rendered as an em dash with a warning.
GridTable render_grid_report(const GridResults& results);

}  // namespace pl
