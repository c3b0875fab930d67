#include <functional>
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "promptlearn/corpus.hpp"
#include "promptlearn/error.hpp"
#include "promptlearn/util.hpp"
#include "support/synthetic.hpp"

using namespace pl;
namespace fs = std::filesystem;

namespace {

LabelCatalog two_labels() { return LabelCatalog({{0, "A", ""}, {1, "B", ""}}); }

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

// Hand apportionment: floor the quotas, then hand leftovers to the largest
// fractional parts, lower part index first on ties.
// Exact arithmetic on ratios parts[i] / denom; remainder ties go to the earlier part.
std::array<std::size_t, 3> oracle_apportion(std::size_t n, std::array<std::size_t, 3> parts, std::size_t denom) {
  std::array<std::size_t, 3> out{};
  std::array<std::size_t, 3> rem{};
  std::size_t used = 0;
  for (int i = 0; i < 3; ++i) {
    out[i] = parts[i] * n / denom;
    rem[i] = parts[i] * n % denom;
    used += out[i];
  }
  std::array<bool, 3> taken{};
  while (used < n) {
    int best = -1;
    for (int i = 0; i < 3; ++i) {
      if (!taken[i] && (best < 0 || rem[i] > rem[best])) best = i;
    }
    ++out[best];
    taken[best] = true;
    ++used;
  }
  return out;
}

std::map<std::string, LabelIndex> labels_by_id(const Dataset& ds) {
  std::map<std::string, LabelIndex> out;
  for (const auto& r : ds.records) out[r.id] = *r.label;
  return out;
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("catalog parse validates indices and names") {
  const auto cat = parse_catalog(R"([{"index":1,"name":"B"},{"index":0,"name":"A","description":"first"}])");
  REQUIRE(cat.size() == 2);
  CHECK(cat.at(0).name == "A");
  CHECK(cat.at(0).description == "first");
  CHECK(parse_catalog(serialize_catalog(cat)) == cat);

  CHECK_THROWS_AS(parse_catalog(R"([{"index":0,"name":"A"},{"index":2,"name":"B"}])"), Error);
  CHECK_THROWS_AS(parse_catalog(R"([{"index":0,"name":"A"},{"index":1,"name":"A"}])"), Error);
  CHECK_THROWS_AS(parse_catalog(R"([{"index":0,"name":""}])"), Error);
  CHECK_THROWS_AS(parse_catalog(R"({"index":0})"), Error);
  CHECK_THROWS_AS(two_labels().at(2), Error);
}

TEST_CASE("shipped catalog matches the fourteen intents") {
  const auto cat = load_catalog(PL_DATA_DIR "/catalog.json");
  REQUIRE(cat.size() == 14);
  const auto names = pltest::intent_catalog();
  for (int i = 0; i < 14; ++i) CHECK(cat.at(i).name == names.at(i).name);
  CHECK(cat.at(1).description == "General information and issues customer has before buying at IKEA");
  CHECK(cat.at(12).description == "Information about products and services");
  for (const auto& e : cat.entries()) CHECK_FALSE(e.description.empty());
}

TEST_CASE("dataset with three valid lines loads three records") {
  const auto ds = parse_dataset(
      "{\"id\":\"a\",\"text\":\"hello\",\"label\":0}\n"
      "{\"id\":\"b\",\"text\":\"world\",\"label\":1}\n"
      "\n"
      "{\"id\":\"c\",\"text\":\"unlabeled\",\"label\":null}\n",
      two_labels());
  REQUIRE(ds.records.size() == 3);
  CHECK(ds.records[1].text == "world");
  CHECK_FALSE(ds.records[2].label.has_value());
}

TEST_CASE("label outside the catalog names the offending id") {
  const auto cat = pltest::intent_catalog();
  const auto msg = error_of([&] { parse_dataset("{\"id\":\"conv-77\",\"text\":\"x\",\"label\":14}\n", cat); });
  CHECK(msg.find("conv-77") != std::string::npos);
}

TEST_CASE("malformed dataset lines report their line number") {
  const auto msg = error_of([] { parse_dataset("{\"id\":\"a\",\"text\":\"x\",\"label\":0}\nnot json\n", two_labels()); });
  CHECK(msg.find("line 2") != std::string::npos);
  CHECK_THROWS_AS(parse_dataset("{\"id\":\"a\",\"label\":0}\n", two_labels()), Error);
  CHECK_THROWS_AS(parse_dataset("{\"id\":\"a\",\"text\":\"x\",\"label\":0}\n{\"id\":\"a\",\"text\":\"y\",\"label\":1}\n",
                                two_labels()),
                  Error);
}

TEST_CASE("dataset round-trips through a file") {
  Dataset ds{two_labels(), {{"x1", "caf\xc3\xa9 \"quoted\"\nnewline", 0}, {"x2", "", 1}, {"x3", "none", std::nullopt}}};
  const auto path = (fs::temp_directory_path() / "pl-corpus-roundtrip.jsonl").string();
  save_dataset(ds, path);
  CHECK(load_dataset(path, ds.catalog) == ds);
  fs::remove(path);
}

TEST_CASE("label distribution counts per label") {
  Dataset empty{two_labels(), {}};
  CHECK(label_distribution(empty) == std::vector<std::size_t>{0, 0});

  Dataset ds{two_labels(), {{"a", "", 0}, {"b", "", 0}, {"c", "", 1}}};
  CHECK(label_distribution(ds) == std::vector<std::size_t>{2, 1});
}

TEST_CASE("the intent corpus profile") {
  const auto ds = pltest::counted_dataset(pltest::intent_class_counts(), pltest::intent_catalog());
  const auto dist = label_distribution(ds);
  CHECK(dist[6] == 1259);
  CHECK(dist[13] == 29);
  std::size_t total = 0;
  for (auto c : dist) total += c;
  // The table's rows add up to 7502; its printed total reads 7477.
  CHECK(total == 7502);
}

TEST_CASE("subset keeps source order and rejects unknown ids") {
  Dataset ds{two_labels(), {{"a", "", 0}, {"b", "", 1}, {"c", "", 0}}};
  const auto sub = subset(ds, {"c", "a"});
  REQUIRE(sub.records.size() == 2);
  CHECK(sub.records[0].id == "a");
  CHECK(sub.records[1].id == "c");
  CHECK_THROWS_AS(subset(ds, {"zz"}), Error);
}

TEST_CASE("apportion follows largest remainder") {
  const SplitRatios r;
  CHECK(apportion(4, r) == std::array<std::size_t, 3>{2, 1, 1});
  CHECK(apportion(29, r) == std::array<std::size_t, 3>{15, 7, 7});
  CHECK(apportion(1, r) == std::array<std::size_t, 3>{1, 0, 0});
  CHECK(apportion(0, r) == std::array<std::size_t, 3>{0, 0, 0});
  for (std::size_t n = 0; n < 300; ++n) {
    CHECK(apportion(n, r) == oracle_apportion(n, {2, 1, 1}, 4));
    CHECK(apportion(n, {0.7, 0.2, 0.1}) == oracle_apportion(n, {7, 2, 1}, 10));
  }
}

TEST_CASE("stratified split of two classes of four") {
  const auto ds = pltest::counted_dataset({4, 4}, two_labels());
  const auto split = stratified_split(ds, {}, 144);
  CHECK(split.train_dev.size() == 4);
  CHECK(split.validation.size() == 2);
  CHECK(split.test.size() == 2);
  const auto labels = labels_by_id(ds);
  for (auto part : {SplitPart::kTrainDev, SplitPart::kValidation, SplitPart::kTest}) {
    std::size_t a = 0;
    for (const auto& id : split.part(part)) a += labels.at(id) == 0;
    CHECK(a * 2 == split.part(part).size());
  }
}

TEST_CASE("stratified split of twenty-nine gives 15/7/7") {
  const auto ds = pltest::counted_dataset({29}, LabelCatalog({{0, "A", ""}}));
  const auto split = stratified_split(ds, {}, 144);
  CHECK(split.train_dev.size() == 15);
  CHECK(split.validation.size() == 7);
  CHECK(split.test.size() == 7);
}

TEST_CASE("stratified split lists ids in dataset order") {
  const auto ds = pltest::counted_dataset({10, 10}, two_labels());
  const auto split = stratified_split(ds, {}, 1);
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < ds.records.size(); ++i) pos[ds.records[i].id] = i;
  for (auto part : {SplitPart::kTrainDev, SplitPart::kValidation, SplitPart::kTest}) {
    const auto& ids = split.part(part);
    for (std::size_t i = 1; i < ids.size(); ++i) CHECK(pos[ids[i - 1]] < pos[ids[i]]);
  }
}

TEST_CASE("adding a class leaves other classes' assignments alone") {
  const auto a = stratified_split(pltest::counted_dataset({12, 9}, two_labels()), {}, 5);
  const auto b = stratified_split(
      pltest::counted_dataset({12, 9, 7}, LabelCatalog({{0, "A", ""}, {1, "B", ""}, {2, "C", ""}})), {}, 5);
  auto only_ab = [](const std::vector<std::string>& ids) {
    std::vector<std::string> out;
    for (const auto& id : ids) {
      if (id.rfind("c02", 0) != 0) out.push_back(id);
    }
    return out;
  };
  CHECK(only_ab(b.train_dev) == a.train_dev);
  CHECK(only_ab(b.test) == a.test);
}

TEST_CASE("stratified split rejects unlabeled records, empty classes and bad ratios") {
  Dataset unlabeled{two_labels(), {{"a", "", 0}, {"b", "", 1}, {"c", "", std::nullopt}}};
  CHECK_THROWS_AS(stratified_split(unlabeled, {}, 1), Error);
  CHECK_THROWS_AS(stratified_split(pltest::counted_dataset({3, 0}, two_labels()), {}, 1), Error);
  CHECK_THROWS_AS(stratified_split(pltest::counted_dataset({3, 3}, two_labels()), {0.5, 0.5, 0.5}, 1), Error);
  CHECK_THROWS_AS(stratified_split(pltest::counted_dataset({3, 3}, two_labels()), {1.2, -0.1, -0.1}, 1), Error);
}

TEST_CASE("split file round-trips and rejects duplicates") {
  const auto split = stratified_split(pltest::counted_dataset({5, 6}, two_labels()), {}, 9);
  CHECK(parse_split(serialize_split(split)) == split);
  CHECK_THROWS_AS(parse_split(R"({"train_dev":["a"],"validation":["a"],"test":[]})"), Error);
  CHECK_THROWS_AS(parse_split(R"({"train_dev":["a"]})"), Error);
  CHECK(parse_split_part("validation") == SplitPart::kValidation);
  CHECK(split_part_name(SplitPart::kTrainDev) == "train_dev");
  CHECK_THROWS_AS(parse_split_part("dev"), Error);
}

TEST_CASE("property: split invariants over random corpora") {
  Rng rng(31);
  for (int inst = 0; inst < 60; ++inst) {
    const std::size_t n_labels = 1 + rng.below(8);
    std::vector<LabelEntry> entries;
    std::vector<std::size_t> counts;
    for (std::size_t k = 0; k < n_labels; ++k) {
      entries.push_back({static_cast<int>(k), "L" + std::to_string(k), ""});
      counts.push_back(1 + rng.below(120));
    }
    const auto ds = pltest::counted_dataset(counts, LabelCatalog(entries));
    const double a = 0.2 + 0.6 * rng.uniform();
    const double b = (1.0 - a) * rng.uniform();
    const SplitRatios ratios{a, b, 1.0 - a - b};
    const std::uint64_t seed = rng.next();
    const auto split = stratified_split(ds, ratios, seed);
    CHECK(stratified_split(ds, ratios, seed) == split);

    const auto labels = labels_by_id(ds);
    std::set<std::string> seen;
    std::vector<std::array<std::size_t, 3>> per_class(n_labels, {0, 0, 0});
    const SplitPart parts[] = {SplitPart::kTrainDev, SplitPart::kValidation, SplitPart::kTest};
    for (int p = 0; p < 3; ++p) {
      for (const auto& id : split.part(parts[p])) {
        REQUIRE(seen.insert(id).second);
        ++per_class[static_cast<std::size_t>(labels.at(id))][p];
      }
    }
    CHECK(seen.size() == ds.records.size());
    const auto r = ratios.as_array();
    for (std::size_t k = 0; k < n_labels; ++k) {
      for (int p = 0; p < 3; ++p) {
        CHECK(std::abs(static_cast<double>(per_class[k][p]) - r[p] * static_cast<double>(counts[k])) < 1.0);
      }
    }
  }
}

}
