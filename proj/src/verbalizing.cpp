#include "promptlearn/verbalizing.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "promptlearn/error.hpp"
#include "promptlearn/util.hpp"

namespace pl {

using nlohmann::json;

LabelDistribution::LabelDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) fail(ErrorCode::kInvalidArgument, "label distribution is empty");
  double sum = 0.0;
  for (double p : probs_) {
    if (!std::isfinite(p) || p < 0.0) fail(ErrorCode::kInvalidArgument, "label distribution has a negative or non-finite entry");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) fail(ErrorCode::kInvalidArgument, "label distribution does not sum to 1");
}

LabelDistribution LabelDistribution::normalized(std::vector<double> weights) {
  double sum = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) fail(ErrorCode::kInvalidArgument, "weights must be finite and non-negative");
    sum += w;
  }
  if (!(sum > 0.0)) fail(ErrorCode::kInvalidArgument, "weights are all zero");
  for (double& w : weights) w /= sum;
  return LabelDistribution(std::move(weights));
}

Verbalizer::Verbalizer(std::string id, std::vector<std::vector<std::string>> word_sets)
    : id_(std::move(id)), word_sets_(std::move(word_sets)) {
  for (std::size_t label = 0; label < word_sets_.size(); ++label) {
    auto& words = word_sets_[label];
    if (words.empty()) {
      fail(ErrorCode::kParse, "verbalizer '" + id_ + "': label " + std::to_string(label) + " has no words");
    }
    std::unordered_set<std::string> seen;
    for (auto& w : words) {
      w = to_lower_ascii(w);
      if (w.empty()) fail(ErrorCode::kParse, "verbalizer '" + id_ + "': empty label word");
      if (!seen.insert(w).second) {
        fail(ErrorCode::kParse,
             "verbalizer '" + id_ + "': duplicate word '" + w + "' in label " + std::to_string(label));
      }
    }
  }
}

const std::vector<std::string>& Verbalizer::words(LabelIndex label) const {
  if (label < 0 || static_cast<std::size_t>(label) >= word_sets_.size()) {
    fail(ErrorCode::kInvalidArgument, "verbalizer '" + id_ + "' has no label " + std::to_string(label));
  }
  return word_sets_[static_cast<std::size_t>(label)];
}

std::vector<std::string> Verbalizer::vocabulary() const {
  std::set<std::string> all;
  for (const auto& ws : word_sets_) all.insert(ws.begin(), ws.end());
  return {all.begin(), all.end()};
}

Verbalizer parse_verbalizer(std::string id, const std::map<LabelIndex, std::vector<std::string>>& spec,
                            std::size_t num_labels) {
  std::vector<std::vector<std::string>> sets(num_labels);
  for (const auto& [label, words] : spec) {
    if (label < 0 || static_cast<std::size_t>(label) >= num_labels) {
      fail(ErrorCode::kParse, "verbalizer '" + id + "': label " + std::to_string(label) + " outside catalog");
    }
    sets[static_cast<std::size_t>(label)] = words;
  }
  for (std::size_t label = 0; label < num_labels; ++label) {
    if (!spec.count(static_cast<LabelIndex>(label))) {
      fail(ErrorCode::kParse, "verbalizer '" + id + "': missing entry for label " + std::to_string(label));
    }
  }
  return Verbalizer(std::move(id), std::move(sets));
}

LabelDistribution aggregate_scores(const std::unordered_map<std::string, double>& word_probs,
                                   const Verbalizer& verbalizer) {
  std::vector<double> label_scores;
  label_scores.reserve(verbalizer.num_labels());
  for (const auto& words : verbalizer.word_sets()) {
    double sum = 0.0;
    for (const auto& w : words) {
      auto it = word_probs.find(w);
      if (it == word_probs.end()) {
        fail(ErrorCode::kInvalidArgument, "no probability for label word '" + w + "'");
      }
      if (!std::isfinite(it->second) || it->second < 0.0) {
        fail(ErrorCode::kInvalidArgument, "probability for '" + w + "' is negative or non-finite");
      }
      sum += it->second;
    }
    label_scores.push_back(sum / static_cast<double>(words.size()));
  }
  return LabelDistribution::normalized(std::move(label_scores));
}

std::vector<Verbalizer> default_verbalizers() {
  using Sets = std::vector<std::vector<std::string>>;
  return {
      Verbalizer("1", Sets{{"availability"},
                           {"general"},
                           {"general", "purchase"},
                           {"help", "integrate", "product"},
                           {"initiate", "sales"},
                           {"issue", "handling"},
                           {"order", "creation"},
                           {"order", "fulfillment", "issues"},
                           {"order", "processing"},
                           {"other"},
                           {"planning", "advice"},
                           {"prepare", "exchange", "return"},
                           {"product", "service", "information"},
                           {"service", "fulfillment"}}),
      Verbalizer("2", Sets{{"availability", "stock", "order"},
                           {"general", "membership"},
                           {"general", "help"},
                           {"assembly", "product"},
                           {"aftersales"},
                           {"issue", "refund"},
                           {"order", "availability", "delivery"},
                           {"order", "product", "refund", "fulfillment"},
                           {"order", "address", "delivery"},
                           {"other"},
                           {"planning", "advice", "suggestion"},
                           {"exchange", "return"},
                           {"stock", "delivery", "information", "order"},
                           {"service", "fulfillment"}}),
      Verbalizer("3", Sets{{"availability", "purchase"},
                           {"general", "problem"},
                           {"general", "purchase", "problem"},
                           {"help", "integrate", "product", "purchase"},
                           {"initiate", "sales", "problem"},
                           {"issue", "handling", "refund"},
                           {"order", "creation"},
                           {"order", "fulfillment", "issue", "problem"},
                           {"order", "processing"},
                           {"other"},
                           {"planning", "advice", "project"},
                           {"prepare", "exchange", "return"},
                           {"product", "service", "information", "order"},
                           {"service", "fulfillment", "order"}}),
      Verbalizer("4", Sets{{"availability", "stock", "order", "purchase"},
                           {"membership", "problem", "account"},
                           {"general", "help", "problem"},
                           {"assembly", "product", "purchase"},
                           {"aftersales", "problem"},
                           {"issue", "refund"},
                           {"order", "availability", "delivery"},
                           {"order", "product", "refund", "problem"},
                           {"order", "address", "delivery"},
                           {"other"},
                           {"planning", "advice", "suggestion", "project"},
                           {"exchange", "return"},
                           {"stock", "delivery", "information", "order"},
                           {"service", "fulfillment", "order"}}),
  };
}

std::vector<Verbalizer> parse_verbalizers(std::string_view json_text, std::size_t num_labels) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("verbalizer file: ") + e.what());
  }
  if (!doc.is_array()) fail(ErrorCode::kParse, "verbalizer file must be a JSON array");
  std::vector<Verbalizer> out;
  for (const auto& item : doc) {
    if (!item.is_object() || !item.contains("id") || !item["id"].is_string() || !item.contains("words") ||
        !item["words"].is_object()) {
      fail(ErrorCode::kParse, "verbalizer entries need string 'id' and object 'words'");
    }
    const auto id = item["id"].get<std::string>();
    std::map<LabelIndex, std::vector<std::string>> spec;
    for (const auto& [key, words] : item["words"].items()) {
      LabelIndex label = 0;
      try {
        std::size_t used = 0;
        label = std::stoi(key, &used);
        if (used != key.size()) throw std::invalid_argument(key);
      } catch (const std::exception&) {
        fail(ErrorCode::kParse, "verbalizer '" + id + "': label key '" + key + "' is not an integer");
      }
      if (!words.is_array()) fail(ErrorCode::kParse, "verbalizer '" + id + "': words must be arrays");
      spec[label] = words.get<std::vector<std::string>>();
    }
    out.push_back(parse_verbalizer(id, spec, num_labels));
  }
  return out;
}

std::vector<Verbalizer> load_verbalizers(const std::string& path, std::size_t num_labels) {
  return parse_verbalizers(read_file(path), num_labels);
}

std::string serialize_verbalizers(const std::vector<Verbalizer>& verbalizers) {
  json doc = json::array();
  for (const auto& v : verbalizers) {
    json words = json::object();
    for (std::size_t label = 0; label < v.num_labels(); ++label) {
      words[std::to_string(label)] = v.word_sets()[label];
    }
    doc.push_back({{"id", v.id()}, {"words", words}});
  }
  return doc.dump(2) + "\n";
}

}  // namespace pl
