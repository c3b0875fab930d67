#include "promptlearn/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <set>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "http_client.hpp"
#include "promptlearn/error.hpp"
#include "promptlearn/util.hpp"

namespace pl {

using nlohmann::json;

void validate_scores(const CandidateScores& scores) {
  if (scores.candidates.size() != scores.scores.size()) {
    fail(ErrorCode::kProtocol, "score count " + std::to_string(scores.scores.size()) + " does not match " +
                                   std::to_string(scores.candidates.size()) + " candidates");
  }
  for (double s : scores.scores) {
    if (!std::isfinite(s)) fail(ErrorCode::kProtocol, "non-finite candidate score");
  }
}

void check_candidates(std::span<const std::string> candidates) {
  if (candidates.empty()) fail(ErrorCode::kInvalidArgument, "empty candidate list");
  std::unordered_set<std::string_view> seen;
  for (const auto& c : candidates) {
    if (!seen.insert(c).second) fail(ErrorCode::kInvalidArgument, "duplicate candidate '" + c + "'");
  }
}

// ---- mock ------------------------------------------------------------------

double MockBackend::tie_break(std::string_view candidate) {
  return static_cast<double>(fnv1a64(candidate) >> 11) * 0x1.0p-53 * 1e-6;
}

CandidateScores MockBackend::score_candidates(const FilledPrompt& prompt,
                                              std::span<const std::string> candidates) const {
  check_candidates(candidates);
  const auto prompt_tokens = tokenize(prompt.text);
  const std::unordered_set<std::string> in_prompt(prompt_tokens.begin(), prompt_tokens.end());
  CandidateScores out;
  out.candidates.assign(candidates.begin(), candidates.end());
  for (const auto& c : candidates) {
    const auto tokens = tokenize(c);
    const std::set<std::string> distinct(tokens.begin(), tokens.end());
    std::size_t shared = 0;
    for (const auto& t : distinct) shared += in_prompt.count(t);
    out.scores.push_back(static_cast<double>(shared) + tie_break(c));
  }
  return out;
}

// ---- toy naive Bayes ---------------------------------------------------------

ToyBackend ToyBackend::fit(std::span<const TrainingPair> pairs, double alpha, std::string name) {
  if (pairs.empty()) fail(ErrorCode::kInvalidArgument, "toy_fit needs at least one training pair");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) fail(ErrorCode::kInvalidArgument, "smoothing alpha must be positive");
  ToyBackend model;
  model.name_ = std::move(name);
  model.alpha_ = alpha;
  for (const auto& pair : pairs) {
    if (pair.target_word.empty()) fail(ErrorCode::kInvalidArgument, "training pair with empty target word");
    auto& cls = model.classes_[to_lower_ascii(pair.target_word)];
    ++cls.pair_count;
    ++model.pair_total_;
    for (auto& tok : tokenize(pair.prompt_text)) {
      ++cls.token_counts[tok];
      ++cls.token_total;
      ++model.vocabulary_[std::move(tok)];
    }
  }
  model.finalize();
  return model;
}

void ToyBackend::finalize() {
  compiled_.clear();
  const double v = static_cast<double>(vocabulary_.size());
  const double n = static_cast<double>(pair_total_);
  for (const auto& [word, cls] : classes_) {
    Compiled c;
    const double denom = static_cast<double>(cls.token_total) + alpha_ * v;
    c.log_prior = std::log(static_cast<double>(cls.pair_count) / n);
    c.log_unseen = std::log(alpha_ / denom);
    for (const auto& [tok, count] : cls.token_counts) {
      c.log_likelihood.emplace(tok, std::log((static_cast<double>(count) + alpha_) / denom));
    }
    compiled_.emplace(word, std::move(c));
  }
  background_log_prior_ = std::log(alpha_ / (n + alpha_));
  background_log_token_ = v > 0.0 ? -std::log(v) : 0.0;
}

double ToyBackend::prior(std::string_view word) const {
  auto it = classes_.find(to_lower_ascii(word));
  if (it == classes_.end()) return 0.0;
  return static_cast<double>(it->second.pair_count) / static_cast<double>(pair_total_);
}

namespace {

std::vector<std::string> in_vocabulary(std::string_view text, const std::map<std::string, std::size_t>& vocab) {
  auto tokens = tokenize(text);
  std::erase_if(tokens, [&](const std::string& t) { return !vocab.count(t); });
  return tokens;
}

}  // namespace

double ToyBackend::score_tokens(const std::vector<std::string>& tokens, std::string_view candidate) const {
  auto it = compiled_.find(to_lower_ascii(candidate));
  if (it == compiled_.end()) {
    return background_log_prior_ + static_cast<double>(tokens.size()) * background_log_token_;
  }
  const auto& c = it->second;
  double score = c.log_prior;
  for (const auto& t : tokens) {
    auto ll = c.log_likelihood.find(t);
    score += ll == c.log_likelihood.end() ? c.log_unseen : ll->second;
  }
  return score;
}

double ToyBackend::score_text(std::string_view prompt_text, std::string_view candidate) const {
  return score_tokens(in_vocabulary(prompt_text, vocabulary_), candidate);
}

CandidateScores ToyBackend::score_candidates(const FilledPrompt& prompt,
                                             std::span<const std::string> candidates) const {
  check_candidates(candidates);
  const auto tokens = in_vocabulary(prompt.text, vocabulary_);
  CandidateScores out;
  out.candidates.assign(candidates.begin(), candidates.end());
  out.scores.reserve(candidates.size());
  for (const auto& cand : candidates) out.scores.push_back(score_tokens(tokens, cand));
  return out;
}

std::string ToyBackend::serialize() const {
  json classes = json::array();
  for (const auto& [word, cls] : classes_) {
    classes.push_back({{"word", word},
                       {"pairs", cls.pair_count},
                       {"prior", static_cast<double>(cls.pair_count) / static_cast<double>(pair_total_)},
                       {"token_total", cls.token_total},
                       {"tokens", cls.token_counts}});
  }
  json doc = {{"format", "promptlearn-toy"}, {"version", 1},       {"name", name_},
              {"alpha", alpha_},              {"pairs", pair_total_}, {"vocabulary", vocabulary_},
              {"classes", classes}};
  return doc.dump(1) + "\n";
}

ToyBackend ToyBackend::deserialize(std::string_view text) {
  ToyBackend model;
  try {
    const json doc = json::parse(text);
    if (doc.at("format") != "promptlearn-toy" || doc.at("version") != 1) {
      fail(ErrorCode::kParse, "not a toy backend state file (version 1)");
    }
    model.name_ = doc.at("name").get<std::string>();
    model.alpha_ = doc.at("alpha").get<double>();
    model.pair_total_ = doc.at("pairs").get<std::size_t>();
    model.vocabulary_ = doc.at("vocabulary").get<std::map<std::string, std::size_t>>();
    for (const auto& c : doc.at("classes")) {
      ClassStats stats;
      stats.pair_count = c.at("pairs").get<std::size_t>();
      stats.token_total = c.at("token_total").get<std::size_t>();
      stats.token_counts = c.at("tokens").get<std::map<std::string, std::size_t>>();
      model.classes_.emplace(c.at("word").get<std::string>(), std::move(stats));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("toy backend state: ") + e.what());
  }
  if (!(model.alpha_ > 0.0) || model.pair_total_ == 0) fail(ErrorCode::kParse, "toy backend state: invalid alpha or pair count");
  model.finalize();
  return model;
}

void ToyBackend::save(const std::string& path) const { write_file(path, serialize()); }

ToyBackend ToyBackend::load(const std::string& path) { return deserialize(read_file(path)); }

// ---- logit server ----------------------------------------------------------------

LogitServerBackend::LogitServerBackend(HttpOptions options)
    : client_(std::make_unique<HttpJsonClient>(std::move(options))) {}

LogitServerBackend::~LogitServerBackend() = default;

std::size_t LogitServerBackend::requests_sent() const noexcept { return client_->requests_sent(); }

CandidateScores LogitServerBackend::score_candidates(const FilledPrompt& prompt,
                                                     std::span<const std::string> candidates) const {
  check_candidates(candidates);
  json request = {{"prompt", prompt.text}, {"candidates", candidates}};
  const json reply = client_->post("/score", request);
  CandidateScores out;
  out.candidates.assign(candidates.begin(), candidates.end());
  if (!reply.is_object() || !reply.contains("scores") || !reply["scores"].is_array()) {
    fail(ErrorCode::kProtocol, "/score reply lacks a 'scores' array");
  }
  for (const auto& s : reply["scores"]) {
    if (!s.is_number()) fail(ErrorCode::kProtocol, "/score reply has a non-numeric score");
    out.scores.push_back(s.get<double>());
  }
  validate_scores(out);
  return out;
}

std::vector<std::vector<double>> LogitServerBackend::embed(std::span<const std::string> texts) const {
  const json reply = client_->post("/embed", json{{"texts", texts}});
  if (!reply.is_object() || !reply.contains("vectors") || !reply["vectors"].is_array()) {
    fail(ErrorCode::kProtocol, "/embed reply lacks a 'vectors' array");
  }
  std::vector<std::vector<double>> out;
  for (const auto& v : reply["vectors"]) {
    if (!v.is_array()) fail(ErrorCode::kProtocol, "/embed vector is not an array");
    std::vector<double> row;
    for (const auto& x : v) {
      if (!x.is_number()) fail(ErrorCode::kProtocol, "/embed vector has a non-numeric entry");
      row.push_back(x.get<double>());
    }
    out.push_back(std::move(row));
  }
  if (out.size() != texts.size()) {
    fail(ErrorCode::kProtocol, "/embed returned " + std::to_string(out.size()) + " vectors for " +
                                   std::to_string(texts.size()) + " texts");
  }
  return out;
}

// ---- chat ----------------------------------------------------------------

ChatClient::ChatClient(HttpOptions options, std::string model)
    : client_(std::make_unique<HttpJsonClient>(std::move(options))), model_(std::move(model)) {}

ChatClient::~ChatClient() = default;
ChatClient::ChatClient(ChatClient&&) noexcept = default;

std::size_t ChatClient::requests_sent() const noexcept { return client_->requests_sent(); }

std::string ChatClient::complete(const std::string& user_content) const {
  const json request = {{"model", model_},
                        {"messages", json::array({{{"role", "user"}, {"content", user_content}}})},
                        {"temperature", 0}};
  const json reply = client_->post("/v1/chat/completions", request);
  try {
    const auto& content = reply.at("choices").at(0).at("message").at("content");
    if (content.is_null()) return {};
    return content.get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kProtocol, std::string("chat reply lacks choices[0].message.content: ") + e.what());
  }
}

namespace {

bool is_alnum(char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}
bool is_digit(char c) { return c >= '0' && c <= '9'; }

}  // namespace

std::optional<LabelIndex> parse_index_response(std::string_view reply, std::size_t n_labels,
                                               const LabelCatalog& catalog) {
  if (n_labels == 0) return std::nullopt;
  std::size_t i = 0;
  while (i < reply.size()) {
    if (!is_digit(reply[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < reply.size() && is_digit(reply[j])) ++j;
    const bool letter_before = i > 0 && is_alnum(reply[i - 1]);
    const bool letter_after = j < reply.size() && is_alnum(reply[j]);
    const bool negative = i > 0 && reply[i - 1] == '-';
    const bool fraction = i > 1 && reply[i - 1] == '.' && is_digit(reply[i - 2]);
    const bool has_fraction = j + 1 < reply.size() && reply[j] == '.' && is_digit(reply[j + 1]);
    if (!letter_before && !letter_after && !negative && !fraction && !has_fraction) {
      std::string_view digits = reply.substr(i, j - i);
      while (digits.size() > 1 && digits.front() == '0') digits.remove_prefix(1);
      if (digits.size() <= 9) {
        const std::size_t value = std::stoul(std::string(digits));
        if (value < n_labels) return static_cast<LabelIndex>(value);
      }
    }
    i = j;
  }

  const std::string lowered = to_lower_ascii(reply);
  std::optional<LabelIndex> best;
  std::size_t best_len = 0;
  for (const auto& e : catalog.entries()) {
    if (static_cast<std::size_t>(e.index) >= n_labels) continue;
    const std::string name = to_lower_ascii(e.name);
    if (name.size() > best_len && lowered.find(name) != std::string::npos) {
      best = e.index;
      best_len = name.size();
    }
  }
  return best;
}

std::string chat_message(const FilledPrompt& prompt) {
  std::string text = prompt.text;
  const auto pos = text.rfind(kMaskMarker);
  if (pos == std::string::npos) fail(ErrorCode::kInvalidArgument, "prompt has no <MASK> marker");
  text.replace(pos, kMaskMarker.size(), kIndexInstruction);
  return text;
}

ChatClassification chat_classify(const ChatClient& client, const FilledPrompt& prompt,
                                 const LabelCatalog& catalog) {
  if (catalog.empty()) fail(ErrorCode::kInvalidArgument, "chat_classify needs a non-empty catalog");
  ChatClassification out;
  out.reply = client.complete(chat_message(prompt));
  out.label = parse_index_response(out.reply, catalog.size(), catalog);
  return out;
}

// ---- configuration ---------------------------------------------------------------

BackendKind parse_backend_kind(std::string_view name) {
  if (name == "mock") return BackendKind::kMock;
  if (name == "toy") return BackendKind::kToy;
  if (name == "logit-server") return BackendKind::kLogitServer;
  if (name == "chat") return BackendKind::kChat;
  fail(ErrorCode::kConfig, "unknown backend kind '" + std::string(name) + "' (mock, toy, logit-server, chat)");
}

std::string_view backend_kind_name(BackendKind kind) {
  switch (kind) {
    case BackendKind::kMock: return "mock";
    case BackendKind::kToy: return "toy";
    case BackendKind::kLogitServer: return "logit-server";
    case BackendKind::kChat: return "chat";
  }
  return "mock";
}

bool is_network_kind(BackendKind kind) noexcept {
  return kind == BackendKind::kLogitServer || kind == BackendKind::kChat;
}

void resolve_backend_config(BackendConfig& config) {
  if (config.kind == BackendKind::kChat && !config.endpoint) {
    if (const char* base = std::getenv("PL_API_BASE"); base && *base) config.endpoint = base;
  }
  if (is_network_kind(config.kind) && !config.endpoint) {
    fail(ErrorCode::kConfig, "backend '" + config.id + "' (" + std::string(backend_kind_name(config.kind)) +
                                 ") needs an endpoint");
  }
  if (!is_network_kind(config.kind) && config.endpoint) {
    fail(ErrorCode::kConfig, "backend '" + config.id + "' is local and must not set an endpoint");
  }
  if (config.kind == BackendKind::kChat && config.model.empty()) {
    fail(ErrorCode::kConfig, "chat backend '" + config.id + "' needs a model name");
  }
  if (config.max_retries < 0 || !(config.timeout_s > 0.0) || config.concurrency == 0) {
    fail(ErrorCode::kConfig, "backend '" + config.id + "': invalid timeout, retry or concurrency settings");
  }
  if (!(config.toy_alpha > 0.0)) fail(ErrorCode::kConfig, "backend '" + config.id + "': toy alpha must be positive");
}

HttpOptions http_options(const BackendConfig& config, std::uint64_t seed) {
  HttpOptions opts;
  opts.endpoint = config.endpoint.value_or("");
  opts.timeout_s = config.timeout_s;
  opts.retry.max_retries = config.max_retries;
  opts.retry.base_delay_s = config.backoff_base_s;
  opts.retry.jitter_seed = seed;
  opts.max_in_flight = config.concurrency;
  if (config.kind == BackendKind::kChat) {
    if (const char* key = std::getenv("PL_API_KEY"); key && *key) opts.bearer_token = key;
  }
  return opts;
}

}  // namespace pl
