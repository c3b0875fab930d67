#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace pl {

using LabelIndex = int;

struct LabelEntry {
  LabelIndex index = 0;
  std::string name;
  std::string description;

  bool operator==(const LabelEntry&) const = default;
};

// Ordered label set; indices are exactly 0..N-1.
class LabelCatalog {
 public:
  LabelCatalog() = default;
  explicit LabelCatalog(std::vector<LabelEntry> entries);

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  bool contains(LabelIndex index) const noexcept {
    return index >= 0 && static_cast<std::size_t>(index) < entries_.size();
  }
  const LabelEntry& at(LabelIndex index) const;
  const std::vector<LabelEntry>& entries() const noexcept { return entries_; }

  bool operator==(const LabelCatalog&) const = default;

 private:
  std::vector<LabelEntry> entries_;
};

LabelCatalog load_catalog(const std::string& path);
LabelCatalog parse_catalog(std::string_view json_text);
std::string serialize_catalog(const LabelCatalog& catalog);

struct ConversationRecord {
  std::string id;
  std::string text;
  std::optional<LabelIndex> label;

  bool operator==(const ConversationRecord&) const = default;
};

struct Dataset {
  LabelCatalog catalog;
  std::vector<ConversationRecord> records;

  bool operator==(const Dataset&) const = default;
};

// Checks id uniqueness and label bounds; throws naming the offending id.
void validate_dataset(const Dataset& dataset);

Dataset load_dataset(const std::string& path, const LabelCatalog& catalog);
Dataset parse_dataset(std::string_view jsonl, const LabelCatalog& catalog);
std::string serialize_dataset(const Dataset& dataset);
void save_dataset(const Dataset& dataset, const std::string& path);

// Per-label counts over labeled records; size == catalog size.
std::vector<std::size_t> label_distribution(const Dataset& dataset);

// Subset in source order; unknown ids are an error.
Dataset subset(const Dataset& dataset, const std::vector<std::string>& ids);

struct SplitRatios {
  double train_dev = 0.50;
  double validation = 0.25;
  double test = 0.25;

  std::array<double, 3> as_array() const { return {train_dev, validation, test}; }
};

enum class SplitPart { kTrainDev, kValidation, kTest };

SplitPart parse_split_part(std::string_view name);
std::string_view split_part_name(SplitPart part);

// Ids in each part are listed in source-dataset order.
struct SplitAssignment {
  std::vector<std::string> train_dev;
  std::vector<std::string> validation;
  std::vector<std::string> test;

  const std::vector<std::string>& part(SplitPart p) const;
  bool operator==(const SplitAssignment&) const = default;
};

// Largest-remainder apportionment of `total` over `ratios`; leftover units go
// to the largest fractional parts, ties to the lower part index.
std::array<std::size_t, 3> apportion(std::size_t total, const SplitRatios& ratios);

// Per class: shuffle that class's ids with the stream (seed, class index),
// then hand out apportion(class size) ids to train_dev, validation, test.
SplitAssignment stratified_split(const Dataset& dataset, const SplitRatios& ratios,
                                 std::uint64_t seed);

std::string serialize_split(const SplitAssignment& split);
SplitAssignment parse_split(std::string_view json_text);

}  // namespace pl
