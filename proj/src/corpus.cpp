#include "promptlearn/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "promptlearn/error.hpp"
#include "promptlearn/util.hpp"

namespace pl {

using nlohmann::json;

LabelCatalog::LabelCatalog(std::vector<LabelEntry> entries) : entries_(std::move(entries)) {
  std::sort(entries_.begin(), entries_.end(),
            [](const LabelEntry& a, const LabelEntry& b) { return a.index < b.index; });
  std::unordered_set<std::string> names;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (e.index != static_cast<LabelIndex>(i)) {
      fail(ErrorCode::kParse, "label catalog indices must be exactly 0..N-1 (found gap or duplicate at " +
                                  std::to_string(e.index) + ")");
    }
    if (e.name.empty()) fail(ErrorCode::kParse, "label " + std::to_string(e.index) + " has an empty name");
    if (!names.insert(e.name).second) fail(ErrorCode::kParse, "duplicate label name '" + e.name + "'");
  }
}

const LabelEntry& LabelCatalog::at(LabelIndex index) const {
  if (!contains(index)) fail(ErrorCode::kInvalidArgument, "label index " + std::to_string(index) + " outside catalog");
  return entries_[static_cast<std::size_t>(index)];
}

LabelCatalog parse_catalog(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("label catalog: ") + e.what());
  }
  if (!doc.is_array()) fail(ErrorCode::kParse, "label catalog must be a JSON array");
  std::vector<LabelEntry> entries;
  for (const auto& item : doc) {
    if (!item.is_object() || !item.contains("index") || !item["index"].is_number_integer() ||
        !item.contains("name") || !item["name"].is_string()) {
      fail(ErrorCode::kParse, "label catalog entry needs integer 'index' and string 'name'");
    }
    LabelEntry e;
    e.index = item["index"].get<LabelIndex>();
    e.name = item["name"].get<std::string>();
    if (item.contains("description") && item["description"].is_string()) {
      e.description = item["description"].get<std::string>();
    }
    entries.push_back(std::move(e));
  }
  return LabelCatalog(std::move(entries));
}

LabelCatalog load_catalog(const std::string& path) { return parse_catalog(read_file(path)); }

std::string serialize_catalog(const LabelCatalog& catalog) {
  json doc = json::array();
  for (const auto& e : catalog.entries()) {
    doc.push_back({{"index", e.index}, {"name", e.name}, {"description", e.description}});
  }
  return doc.dump(2) + "\n";
}

void validate_dataset(const Dataset& dataset) {
  std::unordered_set<std::string_view> ids;
  for (const auto& r : dataset.records) {
    if (r.id.empty()) fail(ErrorCode::kParse, "record with empty id");
    if (!ids.insert(r.id).second) fail(ErrorCode::kParse, "duplicate record id '" + r.id + "'");
    if (r.label && !dataset.catalog.contains(*r.label)) {
      fail(ErrorCode::kParse, "record '" + r.id + "' has label " + std::to_string(*r.label) +
                                  " outside the catalog (size " + std::to_string(dataset.catalog.size()) + ")");
    }
  }
}

Dataset parse_dataset(std::string_view jsonl, const LabelCatalog& catalog) {
  Dataset ds;
  ds.catalog = catalog;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < jsonl.size()) {
    std::size_t end = jsonl.find('\n', pos);
    if (end == std::string_view::npos) end = jsonl.size();
    std::string_view line = jsonl.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

    const std::string where = "dataset line " + std::to_string(line_no);
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorCode::kParse, where + ": " + e.what());
    }
    if (!obj.is_object()) fail(ErrorCode::kParse, where + ": expected an object");
    if (!obj.contains("id") || !obj["id"].is_string()) fail(ErrorCode::kParse, where + ": missing string 'id'");
    if (!obj.contains("text") || !obj["text"].is_string()) {
      fail(ErrorCode::kParse, where + ": missing string 'text'");
    }
    ConversationRecord rec;
    rec.id = obj["id"].get<std::string>();
    rec.text = obj["text"].get<std::string>();
    if (obj.contains("label") && !obj["label"].is_null()) {
      if (!obj["label"].is_number_integer()) fail(ErrorCode::kParse, where + ": 'label' must be an integer or null");
      rec.label = obj["label"].get<LabelIndex>();
    }
    ds.records.push_back(std::move(rec));
  }
  validate_dataset(ds);
  return ds;
}

Dataset load_dataset(const std::string& path, const LabelCatalog& catalog) {
  return parse_dataset(read_file(path), catalog);
}

std::string serialize_dataset(const Dataset& dataset) {
  std::string out;
  for (const auto& r : dataset.records) {
    json obj = {{"id", r.id}, {"text", r.text}};
    obj["label"] = r.label ? json(*r.label) : json(nullptr);
    out += obj.dump();
    out += '\n';
  }
  return out;
}

void save_dataset(const Dataset& dataset, const std::string& path) {
  write_file(path, serialize_dataset(dataset));
}

std::vector<std::size_t> label_distribution(const Dataset& dataset) {
  std::vector<std::size_t> counts(dataset.catalog.size(), 0);
  for (const auto& r : dataset.records) {
    if (r.label) ++counts.at(static_cast<std::size_t>(*r.label));
  }
  return counts;
}

Dataset subset(const Dataset& dataset, const std::vector<std::string>& ids) {
  std::unordered_set<std::string_view> wanted(ids.begin(), ids.end());
  Dataset out;
  out.catalog = dataset.catalog;
  for (const auto& r : dataset.records) {
    if (wanted.erase(r.id) > 0) out.records.push_back(r);
  }
  if (!wanted.empty()) {
    fail(ErrorCode::kInvalidArgument, "id '" + std::string(*wanted.begin()) + "' not in dataset");
  }
  return out;
}

SplitPart parse_split_part(std::string_view name) {
  if (name == "train_dev") return SplitPart::kTrainDev;
  if (name == "validation") return SplitPart::kValidation;
  if (name == "test") return SplitPart::kTest;
  fail(ErrorCode::kConfig, "unknown split '" + std::string(name) + "' (train_dev, validation, test)");
}

std::string_view split_part_name(SplitPart part) {
  switch (part) {
    case SplitPart::kTrainDev: return "train_dev";
    case SplitPart::kValidation: return "validation";
    case SplitPart::kTest: return "test";
  }
  return "test";
}

const std::vector<std::string>& SplitAssignment::part(SplitPart p) const {
  switch (p) {
    case SplitPart::kTrainDev: return train_dev;
    case SplitPart::kValidation: return validation;
    case SplitPart::kTest: return test;
  }
  return test;
}

namespace {

void check_ratios(const SplitRatios& ratios) {
  double sum = 0.0;
  for (double r : ratios.as_array()) {
    if (!(r >= 0.0) || !std::isfinite(r)) fail(ErrorCode::kInvalidArgument, "split ratios must be non-negative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) fail(ErrorCode::kInvalidArgument, "split ratios must sum to 1");
}

}  // namespace

std::array<std::size_t, 3> apportion(std::size_t total, const SplitRatios& ratios) {
  check_ratios(ratios);
  const auto r = ratios.as_array();
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double quota = r[k] * static_cast<double>(total);
    // Guard against 0.3*10 = 2.9999999999999996 style underflow.
    double whole = std::floor(quota + 1e-9);
    counts[k] = static_cast<std::size_t>(whole);
    remainder[k] = std::max(0.0, quota - whole);
    assigned += counts[k];
  }
  // Rounding slack can overshoot by at most one unit per part.
  while (assigned > total) {
    std::size_t k = 2;
    while (counts[k] == 0) --k;
    --counts[k];
    --assigned;
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return remainder[a] > remainder[b] + 1e-9;
  });
  for (std::size_t i = 0; assigned < total; i = (i + 1) % 3) {
    ++counts[order[i]];
    ++assigned;
  }
  return counts;
}

SplitAssignment stratified_split(const Dataset& dataset, const SplitRatios& ratios, std::uint64_t seed) {
  check_ratios(ratios);
  std::vector<std::vector<std::size_t>> by_class(dataset.catalog.size());
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    const auto& r = dataset.records[i];
    if (!r.label) fail(ErrorCode::kInvalidArgument, "stratified split needs labels; record '" + r.id + "' is unlabeled");
    by_class.at(static_cast<std::size_t>(*r.label)).push_back(i);
  }

  std::vector<int> part_of(dataset.records.size(), -1);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& members = by_class[c];
    if (members.empty()) {
      fail(ErrorCode::kInvalidArgument, "class " + std::to_string(c) + " ('" +
                                            dataset.catalog.at(static_cast<LabelIndex>(c)).name + "') has no records");
    }
    Rng rng = Rng::stream(seed, c);
    rng.shuffle(members);
    const auto counts = apportion(members.size(), ratios);
    std::size_t cursor = 0;
    for (int p = 0; p < 3; ++p) {
      for (std::size_t k = 0; k < counts[static_cast<std::size_t>(p)]; ++k) part_of[members[cursor++]] = p;
    }
  }

  SplitAssignment out;
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    const auto& id = dataset.records[i].id;
    switch (part_of[i]) {
      case 0: out.train_dev.push_back(id); break;
      case 1: out.validation.push_back(id); break;
      default: out.test.push_back(id); break;
    }
  }
  return out;
}

std::string serialize_split(const SplitAssignment& split) {
  json doc = {{"train_dev", split.train_dev}, {"validation", split.validation}, {"test", split.test}};
  return doc.dump(2) + "\n";
}

SplitAssignment parse_split(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("split file: ") + e.what());
  }
  SplitAssignment out;
  try {
    out.train_dev = doc.at("train_dev").get<std::vector<std::string>>();
    out.validation = doc.at("validation").get<std::vector<std::string>>();
    out.test = doc.at("test").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("split file: ") + e.what());
  }
  std::unordered_set<std::string_view> seen;
  for (const auto* part : {&out.train_dev, &out.validation, &out.test}) {
    for (const auto& id : *part) {
      if (!seen.insert(id).second) fail(ErrorCode::kParse, "split file: id '" + id + "' assigned twice");
    }
  }
  return out;
}

}  // namespace pl
