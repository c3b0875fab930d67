#include "promptlearn/runner.hpp"

#include <algorithm>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <mutex>
#include <set>
#include <thread>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "promptlearn/error.hpp"
#include "promptlearn/util.hpp"

namespace pl {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::atomic<std::size_t> g_leakage_checks{0};

std::string resolve_path(const std::string& base_dir, const std::string& path) {
  const fs::path p(path);
  if (p.is_absolute()) return path;
  return (fs::path(base_dir) / p).lexically_normal().string();
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
  if (!obj.contains(key) || obj[key].is_null()) return fallback;
  try {
    return obj[key].get<T>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, std::string("config key '") + key + "': " + e.what());
  }
}

void reject_unknown(const json& obj, std::initializer_list<std::string_view> known, const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      fail(ErrorCode::kConfig, where + ": unknown key '" + key + "'");
    }
  }
}

// Runs fn(i) for i in [0, n) on up to `workers` threads. The first exception
// stops the remaining work and is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  const std::size_t count = std::max<std::size_t>(1, std::min(workers, n));
  if (count == 1) {
    body();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < count; ++w) pool.emplace_back(body);
  }
  if (error) std::rethrow_exception(error);
}

void write_output(const Experiment& exp, const std::string& name, std::string_view contents) {
  const auto& dir = exp.config().output_dir;
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kIo, "cannot create output directory '" + dir + "': " + ec.message());
  write_file((fs::path(dir) / name).string(), contents);
}

std::string sanitize(std::string_view name) {
  std::string out;
  for (char c : name) {
    const bool ok = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '-' ||
                    c == '_' || c == '.';
    out.push_back(ok ? c : '_');
  }
  return out;
}

}  // namespace

// ---- config ---------------------------------------------------------------

ExperimentConfig parse_experiment_config(std::string_view json_text, const std::string& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, std::string("experiment config: ") + e.what());
  }
  if (!doc.is_object()) fail(ErrorCode::kConfig, "experiment config must be a JSON object");
  reject_unknown(doc,
                 {"dataset", "catalog", "templates_file", "verbalizers_file", "split_file", "templates",
                  "verbalizers", "backend", "sampling", "split_ratios", "embeddings", "seed", "output_dir",
                  "cache_dir", "max_chars", "workers", "eval_split"},
                 "experiment config");

  ExperimentConfig c;
  if (!doc.contains("dataset") || !doc.contains("catalog")) {
    fail(ErrorCode::kConfig, "experiment config needs 'dataset' and 'catalog'");
  }
  c.dataset_path = resolve_path(base_dir, get_or<std::string>(doc, "dataset", ""));
  c.catalog_path = resolve_path(base_dir, get_or<std::string>(doc, "catalog", ""));
  if (doc.contains("templates_file")) c.templates_path = resolve_path(base_dir, doc["templates_file"].get<std::string>());
  if (doc.contains("verbalizers_file")) {
    c.verbalizers_path = resolve_path(base_dir, doc["verbalizers_file"].get<std::string>());
  }
  if (doc.contains("split_file")) c.split_path = resolve_path(base_dir, doc["split_file"].get<std::string>());
  c.template_ids = get_or(doc, "templates", c.template_ids);
  c.verbalizer_ids = get_or(doc, "verbalizers", c.verbalizer_ids);
  if (c.template_ids.empty() || c.verbalizer_ids.empty()) {
    fail(ErrorCode::kConfig, "'templates' and 'verbalizers' must be non-empty");
  }

  if (doc.contains("backend")) {
    const auto& b = doc["backend"];
    if (!b.is_object()) fail(ErrorCode::kConfig, "'backend' must be an object");
    reject_unknown(b, {"id", "kind", "endpoint", "model", "timeout", "max_retries", "backoff_base", "concurrency", "alpha"},
                   "backend");
    c.backend.kind = parse_backend_kind(get_or<std::string>(b, "kind", "mock"));
    c.backend.id = get_or<std::string>(b, "id", std::string(backend_kind_name(c.backend.kind)));
    if (b.contains("endpoint") && !b["endpoint"].is_null()) c.backend.endpoint = b["endpoint"].get<std::string>();
    c.backend.model = get_or<std::string>(b, "model", "");
    c.backend.timeout_s = get_or(b, "timeout", c.backend.timeout_s);
    c.backend.max_retries = get_or(b, "max_retries", c.backend.max_retries);
    c.backend.backoff_base_s = get_or(b, "backoff_base", c.backend.backoff_base_s);
    c.backend.concurrency = get_or(b, "concurrency", c.backend.concurrency);
    c.backend.toy_alpha = get_or(b, "alpha", c.backend.toy_alpha);
  }
  resolve_backend_config(c.backend);

  if (doc.contains("sampling")) {
    const auto& s = doc["sampling"];
    if (!s.is_object()) fail(ErrorCode::kConfig, "'sampling' must be an object");
    reject_unknown(s, {"strategy", "proportion", "metric", "words"}, "sampling");
    const auto strategy = get_or<std::string>(s, "strategy", "random");
    if (strategy == "random") {
      c.sampling.strategy = SamplingStrategy::kRandom;
    } else if (strategy == "active") {
      c.sampling.strategy = SamplingStrategy::kActive;
    } else {
      fail(ErrorCode::kConfig, "sampling strategy must be 'random' or 'active'");
    }
    c.sampling.proportion = get_or(s, "proportion", c.sampling.proportion);
    c.sampling.metric = parse_metric(get_or<std::string>(s, "metric", "euclidean"));
    const auto words = get_or<std::string>(s, "words", "all");
    if (words != "all" && words != "first") fail(ErrorCode::kConfig, "sampling words must be 'all' or 'first'");
    c.sampling.first_word_only = words == "first";
  }
  if (!(c.sampling.proportion > 0.0 && c.sampling.proportion <= 1.0)) {
    fail(ErrorCode::kConfig, "sampling proportion must be in (0, 1]");
  }

  if (doc.contains("split_ratios")) {
    const auto r = doc["split_ratios"].get<std::vector<double>>();
    if (r.size() != 3) fail(ErrorCode::kConfig, "'split_ratios' needs three numbers");
    c.ratios = {r[0], r[1], r[2]};
  }
  {
    double sum = 0.0;
    for (double r : c.ratios.as_array()) {
      if (!(r >= 0.0)) fail(ErrorCode::kConfig, "split ratios must be non-negative");
      sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-9) fail(ErrorCode::kConfig, "split ratios must sum to 1");
  }

  if (doc.contains("embeddings") && !doc["embeddings"].is_null()) {
    const auto& e = doc["embeddings"];
    reject_unknown(e, {"file", "endpoint"}, "embeddings");
    if (e.contains("file")) c.embeddings.file = resolve_path(base_dir, e["file"].get<std::string>());
    if (e.contains("endpoint")) c.embeddings.endpoint = e["endpoint"].get<std::string>();
  }
  if (c.sampling.strategy == SamplingStrategy::kActive && !c.embeddings.present()) {
    fail(ErrorCode::kConfig, "active sampling needs an 'embeddings' source (file or endpoint)");
  }

  c.seed = get_or<std::uint64_t>(doc, "seed", c.seed);
  if (doc.contains("output_dir")) c.output_dir = resolve_path(base_dir, doc["output_dir"].get<std::string>());
  if (doc.contains("cache_dir") && !doc["cache_dir"].is_null()) {
    c.cache_dir = resolve_path(base_dir, doc["cache_dir"].get<std::string>());
  }
  if (doc.contains("max_chars") && !doc["max_chars"].is_null()) c.max_chars = doc["max_chars"].get<std::size_t>();
  c.workers = std::max<std::size_t>(1, get_or(doc, "workers", c.workers));
  try {
    c.eval_split = parse_split_part(get_or<std::string>(doc, "eval_split", "test"));
  } catch (const Error& e) {
    fail(ErrorCode::kConfig, e.what());
  }
  if (c.backend.kind == BackendKind::kChat && c.template_ids.size() != 1) {
    fail(ErrorCode::kConfig, "the chat backend classifies with exactly one template");
  }
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  const auto base = fs::path(path).parent_path().string();
  return parse_experiment_config(read_file(path), base.empty() ? "." : base);
}

// ---- cache ----------------------------------------------------------------

std::string candidate_digest(std::span<const std::string> candidates) {
  std::uint64_t h = fnv1a64("");
  for (const auto& c : candidates) {
    h = fnv1a64(c, h);
    h = fnv1a64("\x1f", h);
  }
  return hex64(h);
}

ScoreCache::ScoreCache(std::optional<std::string> dir) : dir_(std::move(dir)) {}

std::string ScoreCache::file_for(const std::string& backend, const std::string& template_id) const {
  return (fs::path(*dir_) / (sanitize(backend) + "__" + sanitize(template_id) + ".jsonl")).string();
}

ScoreCache::Table& ScoreCache::table_locked(const std::string& backend, const std::string& template_id) {
  const auto key = std::make_pair(backend, template_id);
  auto it = tables_.find(key);
  if (it != tables_.end()) return it->second;
  Table table;
  if (dir_) {
    const auto path = file_for(backend, template_id);
    if (fs::exists(path)) {
      const auto text = read_file(path);
      std::size_t pos = 0;
      while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        const auto line = std::string_view(text).substr(pos, end - pos);
        pos = end + 1;
        if (line.empty()) continue;
        try {
          const auto obj = json::parse(line);
          Entry e;
          e.digest = obj.at("digest").get<std::string>();
          e.scores.candidates = obj.at("candidates").get<std::vector<std::string>>();
          e.scores.scores = obj.at("scores").get<std::vector<double>>();
          table[obj.at("record").get<std::string>()] = std::move(e);
        } catch (const json::exception& ex) {
          fail(ErrorCode::kParse, "score cache '" + path + "': " + ex.what());
        }
      }
    }
  }
  return tables_.emplace(key, std::move(table)).first->second;
}

std::optional<CandidateScores> ScoreCache::find(const std::string& backend, const std::string& template_id,
                                                const std::string& record_id, const std::string& digest) {
  {
    std::shared_lock lock(mutex_);
    auto t = tables_.find({backend, template_id});
    if (t != tables_.end()) {
      auto e = t->second.find(record_id);
      if (e != t->second.end() && e->second.digest == digest) {
        ++hits_;
        return e->second.scores;
      }
      ++misses_;
      return std::nullopt;
    }
  }
  std::unique_lock lock(mutex_);
  auto& table = table_locked(backend, template_id);
  auto e = table.find(record_id);
  if (e != table.end() && e->second.digest == digest) {
    ++hits_;
    return e->second.scores;
  }
  ++misses_;
  return std::nullopt;
}

void ScoreCache::insert(const std::string& backend, const std::string& template_id, const std::string& record_id,
                        const std::string& digest, CandidateScores scores) {
  std::unique_lock lock(mutex_);
  table_locked(backend, template_id)[record_id] = Entry{digest, std::move(scores)};
}

void ScoreCache::flush() const {
  if (!dir_) return;
  std::shared_lock lock(mutex_);
  std::error_code ec;
  fs::create_directories(*dir_, ec);
  if (ec) fail(ErrorCode::kIo, "cannot create cache directory '" + *dir_ + "'");
  for (const auto& [key, table] : tables_) {
    std::string out;
    for (const auto& [record, entry] : table) {
      ordered_json obj;
      obj["record"] = record;
      obj["digest"] = entry.digest;
      obj["candidates"] = entry.scores.candidates;
      obj["scores"] = entry.scores.scores;
      out += obj.dump();
      out += '\n';
    }
    write_file(file_for(key.first, key.second), out);
  }
}

// ---- experiment -----------------------------------------------------------------

Experiment::Experiment(ExperimentConfig config, ExperimentResources resources)
    : config_(std::move(config)),
      res_(std::move(resources)),
      cache_(std::make_unique<ScoreCache>(config_.cache_dir)) {
  validate_dataset(res_.dataset);
  for (const auto& id : config_.template_ids) template_by_id(id);
  for (const auto& id : config_.verbalizer_ids) {
    const auto& v = verbalizer_by_id(id);
    if (v.num_labels() != catalog().size()) {
      fail(ErrorCode::kConfig, "verbalizer '" + id + "' covers " + std::to_string(v.num_labels()) +
                                   " labels, catalog has " + std::to_string(catalog().size()));
    }
  }
  if (config_.sampling.strategy == SamplingStrategy::kActive && !res_.embeddings && !config_.embeddings.present()) {
    fail(ErrorCode::kConfig, "active sampling needs an embeddings source");
  }
  if (res_.split) {
    std::unordered_set<std::string_view> ids;
    for (const auto& r : res_.dataset.records) ids.insert(r.id);
    std::size_t n = 0;
    for (auto p : {SplitPart::kTrainDev, SplitPart::kValidation, SplitPart::kTest}) {
      for (const auto& id : res_.split->part(p)) {
        if (!ids.count(id)) fail(ErrorCode::kConfig, "split file names unknown id '" + id + "'");
        ++n;
      }
    }
    if (n != ids.size()) fail(ErrorCode::kConfig, "split file does not cover every record");
    split_ = res_.split;
  }
}

const Template& Experiment::template_by_id(std::string_view id) const {
  for (const auto& t : res_.templates) {
    if (t.id() == id) return t;
  }
  fail(ErrorCode::kConfig, "unknown template id '" + std::string(id) + "'");
}

const Verbalizer& Experiment::verbalizer_by_id(std::string_view id) const {
  for (const auto& v : res_.verbalizers) {
    if (v.id() == id) return v;
  }
  fail(ErrorCode::kConfig, "unknown verbalizer id '" + std::string(id) + "'");
}

const SplitAssignment& Experiment::split() const {
  if (!split_) split_ = stratified_split(res_.dataset, config_.ratios, config_.seed);
  return *split_;
}

Dataset Experiment::part(SplitPart p) const { return subset(res_.dataset, split().part(p)); }

Experiment load_experiment(const ExperimentConfig& config) {
  ExperimentResources res;
  const auto catalog = load_catalog(config.catalog_path);
  res.dataset = load_dataset(config.dataset_path, catalog);
  res.templates = config.templates_path ? load_templates(*config.templates_path) : default_templates();
  auto descriptive = descriptive_template(catalog);
  if (std::none_of(res.templates.begin(), res.templates.end(),
                   [&](const Template& t) { return t.id() == descriptive.id(); })) {
    res.templates.push_back(std::move(descriptive));
  }
  res.verbalizers =
      config.verbalizers_path ? load_verbalizers(*config.verbalizers_path, catalog.size()) : default_verbalizers();
  if (config.embeddings.file) res.embeddings = load_embeddings(*config.embeddings.file);
  if (config.split_path) res.split = parse_split(read_file(*config.split_path));
  return Experiment(config, std::move(res));
}

// ---- operations -----------------------------------------------------------------

SplitAssignment run_split(const Experiment& exp) {
  const auto& split = exp.split();
  write_output(exp, "split.json", serialize_split(split));
  return split;
}

namespace {

const EmbeddingMatrix& embeddings_for(const Experiment& exp, const Dataset& train_dev,
                                      std::optional<EmbeddingMatrix>& fetched) {
  if (exp.embeddings()) return *exp.embeddings();
  const auto& src = exp.config().embeddings;
  if (!src.endpoint) fail(ErrorCode::kConfig, "active sampling needs an embeddings source");
  BackendConfig bc = exp.config().backend;
  bc.kind = BackendKind::kLogitServer;
  bc.endpoint = src.endpoint;
  LogitServerBackend server(http_options(bc, exp.config().seed));
  // Only train_dev texts are embedded: centroids never see held-out data.
  fetched = fetch_embeddings(server, train_dev.records, FetchOptions{32, bc.concurrency});
  return *fetched;
}

}  // namespace

Selection run_sample(const Experiment& exp) {
  const auto& cfg = exp.config();
  const Dataset train_dev = exp.part(SplitPart::kTrainDev);
  const auto counts = label_distribution(train_dev);
  const auto plan = allocate_counts(counts, cfg.sampling.proportion);
  Selection sel;
  sel.provenance.proportion = cfg.sampling.proportion;
  sel.provenance.seed = cfg.seed;
  if (cfg.sampling.strategy == SamplingStrategy::kActive) {
    std::optional<EmbeddingMatrix> fetched;
    const auto& emb = embeddings_for(exp, train_dev, fetched);
    sel.ids = sample_active(train_dev, emb, plan, cfg.sampling.metric);
    sel.provenance.strategy = "active";
    sel.provenance.metric = std::string(metric_name(cfg.sampling.metric));
  } else {
    sel.ids = sample_random(train_dev, plan, cfg.seed);
    sel.provenance.strategy = "random";
    sel.provenance.metric = "none";
  }
  write_output(exp, "selected.json", serialize_selection(sel.ids, sel.provenance));
  return sel;
}

std::string serialize_prompts(const std::vector<FilledPrompt>& prompts) {
  std::string out;
  for (const auto& p : prompts) {
    ordered_json obj;
    obj["id"] = p.record_id;
    obj["template"] = p.template_id;
    obj["prompt"] = p.text;
    obj["truncated"] = p.truncated;
    out += obj.dump();
    out += '\n';
  }
  return out;
}

std::vector<FilledPrompt> run_render(const Experiment& exp, SplitPart part, std::string_view template_id) {
  const auto& tmpl = exp.template_by_id(template_id);
  const Dataset ds = exp.part(part);
  std::vector<FilledPrompt> out;
  out.reserve(ds.records.size());
  for (const auto& r : ds.records) out.push_back(render_prompt(tmpl, r, exp.config().max_chars));
  write_output(exp, "prompts.jsonl", serialize_prompts(out));
  return out;
}

std::unique_ptr<ScoringBackend> make_backend(const Experiment& exp) {
  const auto& b = exp.config().backend;
  switch (b.kind) {
    case BackendKind::kMock: return std::make_unique<MockBackend>();
    case BackendKind::kLogitServer:
      return std::make_unique<LogitServerBackend>(http_options(b, exp.config().seed));
    case BackendKind::kToy:
      fail(ErrorCode::kConfig, "the toy backend is trained by a few-shot run (classify or grid)");
    case BackendKind::kChat:
      fail(ErrorCode::kConfig, "the chat backend does not expose candidate scores");
  }
  fail(ErrorCode::kInternal, "unhandled backend kind");
}

std::string serialize_predictions(const std::vector<RecordPrediction>& predictions) {
  std::string out;
  for (const auto& p : predictions) {
    ordered_json obj;
    obj["id"] = p.id;
    obj["pred"] = p.pred ? json(*p.pred) : json(nullptr);
    obj["gold"] = p.gold ? json(*p.gold) : json(nullptr);
    obj["parse_failure"] = !p.pred.has_value();
    out += obj.dump();
    out += '\n';
  }
  return out;
}

std::vector<RecordPrediction> parse_predictions(std::string_view jsonl) {
  std::vector<RecordPrediction> out;
  std::size_t pos = 0, line_no = 0;
  while (pos < jsonl.size()) {
    auto end = jsonl.find('\n', pos);
    if (end == std::string_view::npos) end = jsonl.size();
    const auto line = jsonl.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      const auto obj = json::parse(line);
      RecordPrediction p;
      p.id = obj.at("id").get<std::string>();
      if (!obj.at("pred").is_null()) p.pred = obj["pred"].get<LabelIndex>();
      if (obj.contains("gold") && !obj["gold"].is_null()) p.gold = obj["gold"].get<LabelIndex>();
      if (obj.value("parse_failure", false)) p.pred.reset();
      out.push_back(std::move(p));
    } catch (const json::exception& e) {
      fail(ErrorCode::kParse, "predictions line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

namespace {

struct ScoredRecords {
  // dists[record][t * V + v]
  std::vector<std::vector<LabelDistribution>> dists;
  std::vector<char> done;
  std::size_t backend_calls = 0;
};

// Scores each record once per template against the union of the configured
// verbalizers' words; each verbalizer then reads its own words out of that.
// Softmax over the union differs from softmax over one verbalizer's words by
// a constant factor that aggregate_scores normalizes away.
void score_models(const Experiment& exp, const std::vector<ConversationRecord>& records,
                  const ScoringBackend& backend, const std::string& backend_key, ScoredRecords& out) {
  const auto& cfg = exp.config();
  std::vector<const Template*> templates;
  for (const auto& id : cfg.template_ids) templates.push_back(&exp.template_by_id(id));
  std::vector<const Verbalizer*> verbalizers;
  std::set<std::string> union_words;
  for (const auto& id : cfg.verbalizer_ids) {
    verbalizers.push_back(&exp.verbalizer_by_id(id));
    for (auto& w : verbalizers.back()->vocabulary()) union_words.insert(std::move(w));
  }
  const std::vector<std::string> candidates(union_words.begin(), union_words.end());
  const std::string digest = candidate_digest(candidates);

  out.dists.assign(records.size(), {});
  out.done.assign(records.size(), 0);
  std::atomic<std::size_t> calls{0};
  try {
    parallel_for(records.size(), cfg.workers, [&](std::size_t i) {
      const auto& rec = records[i];
      std::vector<LabelDistribution> dists;
      dists.reserve(templates.size() * verbalizers.size());
      for (const auto* tmpl : templates) {
        auto scores = exp.cache().find(backend_key, tmpl->id(), rec.id, digest);
        if (!scores) {
          const auto prompt = render_prompt(*tmpl, rec, cfg.max_chars);
          ++calls;
          scores = backend.score_candidates(prompt, candidates);
          validate_scores(*scores);
          if (scores->candidates != candidates) fail(ErrorCode::kProtocol, "backend reordered candidates");
          exp.cache().insert(backend_key, tmpl->id(), rec.id, digest, *scores);
        }
        const auto probs = word_probabilities(*scores);
        for (const auto* verb : verbalizers) dists.push_back(aggregate_scores(probs, *verb));
      }
      out.dists[i] = std::move(dists);
      out.done[i] = 1;
    });
  } catch (...) {
    out.backend_calls = calls.load();
    exp.cache().flush();
    throw;
  }
  out.backend_calls = calls.load();
  exp.cache().flush();
}

RunResult finish_run(const Experiment& exp, const std::vector<ConversationRecord>& records,
                     std::vector<RecordPrediction> preds, bool complete, const std::string& error) {
  RunResult result;
  result.complete = complete;
  std::vector<Prediction> p;
  std::vector<LabelIndex> g;
  for (const auto& rp : preds) {
    if (!rp.gold) continue;
    p.push_back(rp.pred);
    g.push_back(*rp.gold);
  }
  (void)records;
  if (!g.empty()) result.report = evaluate(p, g, exp.catalog().size());
  result.predictions = std::move(preds);
  result.predictions_jsonl = serialize_predictions(result.predictions);
  if (g.empty()) {
    result.report_json = "{}\n";
  } else {
    result.report_json = serialize_report(result.report, exp.catalog());
  }
  if (!complete) {
    auto doc = ordered_json::parse(result.report_json);
    doc["complete"] = false;
    doc["error"] = error;
    result.report_json = doc.dump(2) + "\n";
  }
  write_output(exp, "predictions.jsonl", result.predictions_jsonl);
  write_output(exp, "report.json", result.report_json);
  return result;
}

RunResult run_chat(const Experiment& exp, const std::vector<ConversationRecord>& records) {
  const auto& cfg = exp.config();
  ChatClient client(http_options(cfg.backend, cfg.seed), cfg.backend.model);
  const auto& tmpl = exp.template_by_id(cfg.template_ids.front());
  std::vector<Prediction> preds(records.size());
  std::vector<char> done(records.size(), 0);
  std::string error;
  try {
    parallel_for(records.size(), cfg.workers, [&](std::size_t i) {
      const auto prompt = render_prompt(tmpl, records[i], cfg.max_chars);
      preds[i] = chat_classify(client, prompt, exp.catalog()).label;
      done[i] = 1;
    });
  } catch (const std::exception& e) {
    error = e.what();
    std::vector<RecordPrediction> partial;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (done[i]) partial.push_back({records[i].id, preds[i], records[i].label});
    }
    finish_run(exp, records, std::move(partial), false, error);
    throw;
  }
  std::vector<RecordPrediction> out;
  for (std::size_t i = 0; i < records.size(); ++i) out.push_back({records[i].id, preds[i], records[i].label});
  return finish_run(exp, records, std::move(out), true, {});
}

}  // namespace

RunResult run_zero_shot(const Experiment& exp, SplitPart part, const ScoringBackend& backend,
                        const std::string& backend_key) {
  const Dataset ds = exp.part(part);
  if (ds.records.empty()) fail(ErrorCode::kInvalidArgument, "empty evaluation split");
  ScoredRecords scored;
  auto to_prediction = [&](std::size_t i) {
    const auto ensemble = combine_distributions(scored.dists[i]);
    return RecordPrediction{ds.records[i].id, predict_label(ensemble), ds.records[i].label};
  };
  try {
    score_models(exp, ds.records, backend, backend_key, scored);
  } catch (const std::exception& e) {
    std::vector<RecordPrediction> partial;
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
      if (scored.done[i]) partial.push_back(to_prediction(i));
    }
    finish_run(exp, ds.records, std::move(partial), false, e.what());
    throw;
  }
  std::vector<RecordPrediction> preds;
  preds.reserve(ds.records.size());
  for (std::size_t i = 0; i < ds.records.size(); ++i) preds.push_back(to_prediction(i));
  return finish_run(exp, ds.records, std::move(preds), true, {});
}

RunResult run_zero_shot(const Experiment& exp, SplitPart part) {
  if (exp.config().backend.kind == BackendKind::kChat) {
    const Dataset ds = exp.part(part);
    if (ds.records.empty()) fail(ErrorCode::kInvalidArgument, "empty evaluation split");
    return run_chat(exp, ds.records);
  }
  const auto backend = make_backend(exp);
  return run_zero_shot(exp, part, *backend, exp.config().backend.id);
}

std::size_t leakage_checks_performed() noexcept { return g_leakage_checks.load(); }

std::vector<TrainingPair> build_training_pairs(const Experiment& exp, std::span<const std::string> selected) {
  const auto& split = exp.split();
  const std::unordered_set<std::string_view> train(split.train_dev.begin(), split.train_dev.end());
  std::unordered_set<std::string_view> held_out(split.validation.begin(), split.validation.end());
  held_out.insert(split.test.begin(), split.test.end());

  std::unordered_map<std::string_view, const ConversationRecord*> by_id;
  for (const auto& r : exp.dataset().records) by_id.emplace(r.id, &r);

  const auto& cfg = exp.config();
  std::vector<TrainingPair> pairs;
  for (const auto& id : selected) {
    ++g_leakage_checks;
    if (held_out.count(id) || !train.count(id)) {
      fail(ErrorCode::kLeakage, "record '" + id + "' is not in train_dev and must not be used for training");
    }
    const auto* rec = by_id.at(id);
    if (!rec->label) fail(ErrorCode::kInvalidArgument, "selected record '" + id + "' is unlabeled");
    std::vector<std::string> words;
    for (const auto& vid : cfg.verbalizer_ids) {
      const auto& ws = exp.verbalizer_by_id(vid).words(*rec->label);
      const std::size_t take = cfg.sampling.first_word_only ? 1 : ws.size();
      for (std::size_t k = 0; k < take; ++k) {
        if (std::find(words.begin(), words.end(), ws[k]) == words.end()) words.push_back(ws[k]);
      }
    }
    for (const auto& tid : cfg.template_ids) {
      const auto prompt = render_prompt(exp.template_by_id(tid), *rec, cfg.max_chars);
      for (const auto& w : words) pairs.push_back({prompt.text, w});
    }
  }
  return pairs;
}

FewShotModel train_few_shot(const Experiment& exp) {
  const auto& cfg = exp.config();
  if (cfg.backend.kind != BackendKind::kToy) {
    fail(ErrorCode::kConfig, "few-shot training needs a trainable (toy) backend");
  }
  FewShotModel model;
  model.selection = run_sample(exp);
  const auto pairs = build_training_pairs(exp, model.selection.ids);
  model.n_pairs = pairs.size();
  auto toy = std::make_shared<ToyBackend>(ToyBackend::fit(pairs, cfg.backend.toy_alpha, cfg.backend.id));
  const auto state = toy->serialize();
  // Keyed by the trained state so cached scores never outlive their model.
  model.backend_key = cfg.backend.id + "@" + hex64(fnv1a64(state));
  write_output(exp, "toy_state.json", state);
  model.backend = std::move(toy);
  return model;
}

RunResult run_few_shot(const Experiment& exp) {
  const auto model = train_few_shot(exp);
  auto result = run_zero_shot(exp, exp.config().eval_split, *model.backend, model.backend_key);
  ordered_json prov;
  prov["strategy"] = model.selection.provenance.strategy;
  prov["proportion"] = model.selection.provenance.proportion;
  prov["seed"] = model.selection.provenance.seed;
  prov["metric"] = model.selection.provenance.metric;
  prov["n_training_pairs"] = model.n_pairs;
  prov["selected"] = model.selection.ids;
  result.provenance_json = prov.dump(2) + "\n";
  write_output(exp, "provenance.json", result.provenance_json);
  return result;
}

// ---- grid ------------------------------------------------------------------------

GridResults run_grid(const Experiment& exp, const ScoringBackend& backend, const std::string& backend_key) {
  const auto& cfg = exp.config();
  const Dataset ds = exp.part(cfg.eval_split);
  if (ds.records.empty()) fail(ErrorCode::kInvalidArgument, "empty evaluation split");
  const auto specs = expand_grid(GridSpec{cfg.template_ids, cfg.verbalizer_ids, backend_key});

  ScoredRecords scored;
  score_models(exp, ds.records, backend, backend_key, scored);

  const std::size_t n_t = cfg.template_ids.size();
  const std::size_t n_v = cfg.verbalizer_ids.size();
  std::vector<LabelIndex> gold;
  for (const auto& r : ds.records) {
    if (!r.label) fail(ErrorCode::kInvalidArgument, "grid evaluation needs gold labels ('" + r.id + "')");
    gold.push_back(*r.label);
  }

  GridResults out;
  out.template_ids = cfg.template_ids;
  out.verbalizer_ids = cfg.verbalizer_ids;
  out.scoring_calls = scored.backend_calls;

  // Members are indices into the row-major model list.
  auto evaluate_members = [&](const std::vector<std::size_t>& members) {
    std::vector<Prediction> preds;
    preds.reserve(ds.records.size());
    std::vector<LabelDistribution> chosen;
    for (std::size_t r = 0; r < ds.records.size(); ++r) {
      chosen.clear();
      for (std::size_t m : members) chosen.push_back(scored.dists[r][m]);
      preds.push_back(predict_label(combine_distributions(chosen)));
    }
    return evaluate(preds, gold, exp.catalog().size());
  };

  const std::string all(kEnsembleKey);
  std::vector<std::size_t> every;
  for (std::size_t t = 0; t < n_t; ++t) {
    std::vector<std::size_t> row;
    for (std::size_t v = 0; v < n_v; ++v) {
      const std::size_t m = t * n_v + v;
      out.cells[{specs[m].template_id, specs[m].verbalizer_id}] = evaluate_members({m});
      row.push_back(m);
      every.push_back(m);
    }
    out.cells[{cfg.template_ids[t], all}] = evaluate_members(row);
  }
  for (std::size_t v = 0; v < n_v; ++v) {
    std::vector<std::size_t> column;
    for (std::size_t t = 0; t < n_t; ++t) column.push_back(t * n_v + v);
    out.cells[{all, cfg.verbalizer_ids[v]}] = evaluate_members(column);
  }
  out.cells[{all, all}] = evaluate_members(every);

  write_output(exp, "grid.json", serialize_grid(out));
  const auto table = render_grid_report(out);
  write_output(exp, "report.md", table.markdown);
  return out;
}

GridResults run_grid(const Experiment& exp) {
  const auto& b = exp.config().backend;
  if (b.kind == BackendKind::kChat) fail(ErrorCode::kConfig, "grid experiments need candidate scores; chat has none");
  if (b.kind == BackendKind::kToy) {
    const auto model = train_few_shot(exp);
    return run_grid(exp, *model.backend, model.backend_key);
  }
  const auto backend = make_backend(exp);
  return run_grid(exp, *backend, b.id);
}

std::string serialize_grid(const GridResults& results) {
  ordered_json doc;
  doc["templates"] = results.template_ids;
  doc["verbalizers"] = results.verbalizer_ids;
  doc["scoring_calls"] = results.scoring_calls;
  auto rows = results.template_ids;
  rows.emplace_back(kEnsembleKey);
  auto cols = results.verbalizer_ids;
  cols.emplace_back(kEnsembleKey);
  ordered_json cells = ordered_json::array();
  for (const auto& t : rows) {
    for (const auto& v : cols) {
      auto it = results.cells.find({t, v});
      if (it == results.cells.end()) continue;
      ordered_json cell;
      cell["template"] = t;
      cell["verbalizer"] = v;
      cell["accuracy"] = it->second.accuracy;
      cell["macro_f1"] = it->second.macro_f1;
      cell["n_samples"] = it->second.n_samples;
      cell["n_parse_failures"] = it->second.n_parse_failures;
      cells.push_back(std::move(cell));
    }
  }
  doc["cells"] = std::move(cells);
  return doc.dump(2) + "\n";
}

GridResults parse_grid(std::string_view json_text) {
  GridResults out;
  try {
    const auto doc = json::parse(json_text);
    out.template_ids = doc.at("templates").get<std::vector<std::string>>();
    out.verbalizer_ids = doc.at("verbalizers").get<std::vector<std::string>>();
    out.scoring_calls = doc.value("scoring_calls", std::size_t{0});
    for (const auto& c : doc.at("cells")) {
      EvaluationReport r;
      r.accuracy = c.at("accuracy").get<double>();
      r.macro_f1 = c.at("macro_f1").get<double>();
      r.n_samples = c.value("n_samples", std::size_t{0});
      r.n_parse_failures = c.value("n_parse_failures", std::size_t{0});
      out.cells[{c.at("template").get<std::string>(), c.at("verbalizer").get<std::string>()}] = r;
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("grid results: ") + e.what());
  }
  return out;
}

GridTable render_grid_report(const GridResults& results) {
  GridTable table;
  auto rows = results.template_ids;
  rows.emplace_back(kEnsembleKey);
  auto cols = results.verbalizer_ids;
  cols.emplace_back(kEnsembleKey);

  std::string& md = table.markdown;
  md += "| Template \\ Verbalizer (Acc. / Macro F1) |";
  for (const auto& v : cols) md += " " + v + " |";
  md += "\n|---|";
  for (std::size_t i = 0; i < cols.size(); ++i) md += "---|";
  md += '\n';
  char buf[64];
  for (const auto& t : rows) {
    md += "| " + t + " |";
    for (const auto& v : cols) {
      auto it = results.cells.find({t, v});
      if (it == results.cells.end()) {
        md += " — |";
        table.warnings.push_back("missing cell (" + t + ", " + v + ")");
        continue;
      }
      std::snprintf(buf, sizeof buf, "%.2f / %.2f", it->second.accuracy * 100.0, it->second.macro_f1 * 100.0);
      const bool ensemble = t == kEnsembleKey || v == kEnsembleKey;
      md += ensemble ? " **" + std::string(buf) + "** |" : " " + std::string(buf) + " |";
    }
    md += '\n';
  }
  return table;
}

}  // namespace pl
