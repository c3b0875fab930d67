#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "promptlearn/corpus.hpp"
#include "promptlearn/prompting.hpp"

namespace pl {

struct CandidateScores {
  std::vector<std::string> candidates;
  std::vector<double> scores;  // unnormalized, higher = more likely

  bool operator==(const CandidateScores&) const = default;
};

// Throws unless lengths match and every score is finite.
void validate_scores(const CandidateScores& scores);

// Backend contract: score candidate answer strings for a filled prompt.
// Implementations are immutable after construction and safe to call
// concurrently.
class ScoringBackend {
 public:
  virtual ~ScoringBackend() = default;

  virtual std::string_view kind() const noexcept = 0;

  // candidates must be non-empty and unique.
  virtual CandidateScores score_candidates(const FilledPrompt& prompt,
                                           std::span<const std::string> candidates) const = 0;
};

void check_candidates(std::span<const std::string> candidates);

// Distinct shared tokens between candidate and prompt, plus a sub-1e-6
// offset from a stable hash of the candidate to break ties.
class MockBackend final : public ScoringBackend {
 public:
  std::string_view kind() const noexcept override { return "mock"; }
  CandidateScores score_candidates(const FilledPrompt& prompt,
                                   std::span<const std::string> candidates) const override;

  static double tie_break(std::string_view candidate);
};

struct TrainingPair {
  std::string prompt_text;
  std::string target_word;
};

// Multinomial naive Bayes over prompt tokens, one class per distinct target
// word. Stand-in for prompt-based fine-tuning.
class ToyBackend final : public ScoringBackend {
 public:
  struct ClassStats {
    std::size_t pair_count = 0;
    std::size_t token_total = 0;
    std::map<std::string, std::size_t> token_counts;
  };

  static ToyBackend fit(std::span<const TrainingPair> pairs, double alpha, std::string name = "toy");

  std::string_view kind() const noexcept override { return "toy"; }
  CandidateScores score_candidates(const FilledPrompt& prompt,
                                   std::span<const std::string> candidates) const override;

  // log prior + sum over in-vocabulary prompt tokens of log P(token | class).
  // Unseen candidates get the background class: prior alpha/(N+alpha) and
  // uniform 1/|V| token likelihoods.
  double score_text(std::string_view prompt_text, std::string_view candidate) const;

  const std::string& name() const noexcept { return name_; }
  double alpha() const noexcept { return alpha_; }
  std::size_t pair_total() const noexcept { return pair_total_; }
  std::size_t vocabulary_size() const noexcept { return vocabulary_.size(); }
  double prior(std::string_view word) const;
  const std::map<std::string, ClassStats>& classes() const noexcept { return classes_; }

  std::string serialize() const;
  static ToyBackend deserialize(std::string_view text);
  void save(const std::string& path) const;
  static ToyBackend load(const std::string& path);

 private:
  ToyBackend() = default;
  void finalize();
  double score_tokens(const std::vector<std::string>& tokens, std::string_view candidate) const;

  std::string name_;
  double alpha_ = 1.0;
  std::size_t pair_total_ = 0;
  std::map<std::string, ClassStats> classes_;
  std::map<std::string, std::size_t> vocabulary_;
  // Derived at finalize().
  struct Compiled {
    double log_prior = 0.0;
    double log_unseen = 0.0;  // log(alpha / (total + alpha |V|))
    std::unordered_map<std::string, double> log_likelihood;
  };
  std::unordered_map<std::string, Compiled> compiled_;
  double background_log_prior_ = 0.0;
  double background_log_token_ = 0.0;
};

struct RetryPolicy {
  int max_retries = 3;
  double base_delay_s = 0.5;
  double factor = 2.0;
  double jitter = 0.25;  // +/- fraction of the nominal delay
  std::uint64_t jitter_seed = 144;
};

struct HttpOptions {
  std::string endpoint;
  double timeout_s = 30.0;
  RetryPolicy retry;
  std::size_t max_in_flight = 2;
  std::optional<std::string> bearer_token;
};

class HttpJsonClient;

// Remote scorer speaking POST {endpoint}/score and {endpoint}/embed.
class LogitServerBackend final : public ScoringBackend {
 public:
  explicit LogitServerBackend(HttpOptions options);
  ~LogitServerBackend() override;

  std::string_view kind() const noexcept override { return "logit-server"; }
  CandidateScores score_candidates(const FilledPrompt& prompt,
                                   std::span<const std::string> candidates) const override;

  // One vector per text, order preserved.
  std::vector<std::vector<double>> embed(std::span<const std::string> texts) const;

  std::size_t requests_sent() const noexcept;

 private:
  std::unique_ptr<HttpJsonClient> client_;
};

inline constexpr std::string_view kIndexInstruction = "Return the index of the label, please.";

// OpenAI-compatible chat completions client, temperature 0, one user message.
class ChatClient {
 public:
  ChatClient(HttpOptions options, std::string model);
  ~ChatClient();
  ChatClient(ChatClient&&) noexcept;

  // Reply text of the first choice.
  std::string complete(const std::string& user_content) const;

  const std::string& model() const noexcept { return model_; }
  std::size_t requests_sent() const noexcept;

 private:
  std::unique_ptr<HttpJsonClient> client_;
  std::string model_;
};

// First standalone integer in [0, n_labels); otherwise the label whose name
// occurs case-insensitively in the reply (longest name wins, then lowest
// index); otherwise nullopt (parse failure).
std::optional<LabelIndex> parse_index_response(std::string_view reply, std::size_t n_labels,
                                               const LabelCatalog& catalog);

// The prompt with the <MASK> marker replaced by the index instruction.
std::string chat_message(const FilledPrompt& prompt);

struct ChatClassification {
  std::optional<LabelIndex> label;
  std::string reply;
};

ChatClassification chat_classify(const ChatClient& client, const FilledPrompt& prompt,
                                 const LabelCatalog& catalog);

enum class BackendKind { kMock, kToy, kLogitServer, kChat };

BackendKind parse_backend_kind(std::string_view name);
std::string_view backend_kind_name(BackendKind kind);

struct BackendConfig {
  std::string id = "mock";
  BackendKind kind = BackendKind::kMock;
  std::optional<std::string> endpoint;
  std::string model;
  double timeout_s = 30.0;
  int max_retries = 3;
  double backoff_base_s = 0.5;
  std::size_t concurrency = 2;
  double toy_alpha = 1.0;
};

bool is_network_kind(BackendKind kind) noexcept;

// Fills a chat endpoint from PL_API_BASE when absent, then checks that an
// endpoint is present exactly for network kinds.
void resolve_backend_config(BackendConfig& config);

HttpOptions http_options(const BackendConfig& config, std::uint64_t seed);

}  // namespace pl
