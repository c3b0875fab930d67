#include <doctest.h>

#include <cmath>

#include "promptlearn/ensembling.hpp"
#include "promptlearn/error.hpp"
#include "promptlearn/util.hpp"

using namespace pl;

namespace {

std::vector<double> naive_softmax(const std::vector<double>& s) {
  std::vector<double> out;
  double z = 0.0;
  for (double x : s) z += std::exp(x);
  for (double x : s) out.push_back(std::exp(x) / z);
  return out;
}

LabelIndex naive_argmax(const std::vector<double>& p) {
  LabelIndex best = 0;
  for (std::size_t i = 1; i < p.size(); ++i) {
    if (p[i] > p[static_cast<std::size_t>(best)]) best = static_cast<LabelIndex>(i);
  }
  return best;
}

}  // namespace

TEST_SUITE("ensembling") {

TEST_CASE("softmax of small vectors") {
  const std::vector<double> zero = {0.0, 0.0};
  CHECK(softmax_normalize(zero).probs() == std::vector<double>{0.5, 0.5});
  const std::vector<double> ln2 = {std::log(2.0), 0.0};
  const auto d = softmax_normalize(ln2);
  CHECK(d[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(d[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("softmax survives large scores") {
  const std::vector<double> big = {1000.0, 999.0, -1000.0};
  const auto d = softmax_normalize(big);
  CHECK(d[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-12));
  CHECK(d[2] == 0.0);
  CHECK_THROWS_AS(softmax_normalize(std::vector<double>{}), Error);
}

TEST_CASE("property: softmax matches the naive form and ignores shifts") {
  Rng rng(41);
  for (int inst = 0; inst < 200; ++inst) {
    std::vector<double> s(1 + rng.below(10));
    for (double& x : s) x = 10.0 * rng.normal();
    const auto want = naive_softmax(s);
    const auto got = softmax_normalize(s);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-9));
    const double c = 50.0 * rng.normal();
    auto shifted = s;
    for (double& x : shifted) x += c;
    const auto again = softmax_normalize(shifted);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(again[i] == doctest::Approx(got[i]).epsilon(1e-9));
  }
}

TEST_CASE("word probabilities are keyed by candidate") {
  const auto probs = word_probabilities({{"a", "b"}, {std::log(3.0), 0.0}});
  CHECK(probs.at("a") == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(probs.at("b") == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("combining two distributions") {
  const std::vector<LabelDistribution> ds = {LabelDistribution({0.2, 0.8}), LabelDistribution({0.6, 0.4})};
  const auto c = combine_distributions(ds);
  CHECK(c[0] == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(c[1] == doctest::Approx(0.6).epsilon(1e-12));
  const std::vector<double> w = {3.0, 1.0};
  const auto weighted = combine_distributions(ds, w);
  CHECK(weighted[0] == doctest::Approx(0.3).epsilon(1e-12));
  CHECK_THROWS_AS(combine_distributions(std::vector<LabelDistribution>{}), Error);
  const std::vector<LabelDistribution> mixed = {LabelDistribution({1.0}), LabelDistribution({0.5, 0.5})};
  CHECK_THROWS_AS(combine_distributions(mixed), Error);
}

TEST_CASE("property: combining is order independent") {
  Rng rng(43);
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t n = 2 + rng.below(6);
    std::vector<LabelDistribution> ds;
    for (std::size_t m = 1 + rng.below(8); m > 0; --m) {
      std::vector<double> w(n);
      for (double& x : w) x = rng.uniform() + 1e-3;
      ds.push_back(LabelDistribution::normalized(w));
    }
    const auto a = combine_distributions(ds);
    rng.shuffle(ds);
    const auto b = combine_distributions(ds);
    for (std::size_t i = 0; i < n; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  }
}

TEST_CASE("ties go to the lowest index") {
  CHECK(predict_label(LabelDistribution({0.25, 0.25, 0.25, 0.25})) == 0);
  CHECK(predict_label(LabelDistribution({0.1, 0.45, 0.45})) == 1);
  CHECK(predict_label(LabelDistribution({0.1, 0.2, 0.7})) == 2);
}

TEST_CASE("grid expansion") {
  GridSpec g{{"1", "2", "3", "4"}, {"1", "2", "3", "4"}, "mock"};
  const auto models = expand_grid(g);
  REQUIRE(models.size() == 16);
  CHECK(models[0] == ModelSpec{"1", "1", "mock"});
  CHECK(models[1] == ModelSpec{"1", "2", "mock"});
  CHECK(models[2 * 4 + 3] == ModelSpec{"3", "4", "mock"});
  CHECK(expand_grid({{"1"}, {"1", "2", "3", "4"}, "mock"}).size() == 4);
  CHECK(expand_grid({{"1"}, {"2"}, "mock"}).size() == 1);
  CHECK_THROWS_AS(expand_grid({{"1", "1"}, {"1"}, "mock"}), Error);
  CHECK_THROWS_AS(expand_grid({{}, {"1"}, "mock"}), Error);
  CHECK_THROWS_AS(expand_grid({{"1"}, {}, "mock"}), Error);
}

TEST_CASE("property: softmax of log weights keeps the argmax") {
  Rng rng(47);
  for (int inst = 0; inst < 200; ++inst) {
    std::vector<double> w(2 + rng.below(12));
    for (double& x : w) x = rng.uniform() + 1e-6;
    const auto dist = LabelDistribution::normalized(w);
    std::vector<double> logs;
    for (double p : dist.probs()) logs.push_back(std::log(p));
    CHECK(predict_label(softmax_normalize(logs)) == naive_argmax(dist.probs()));
    CHECK(predict_label(dist) == naive_argmax(dist.probs()));
  }
}

}
