#include "synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "promptlearn/util.hpp"

namespace pltest {

std::vector<std::size_t> intent_class_counts() {
  return {951, 113, 108, 306, 907, 655, 1259, 997, 1069, 102, 192, 531, 283, 29};
}

pl::LabelCatalog intent_catalog() {
  const char* names[] = {"Product / Service Availability",
                         "General",
                         "General after Purchase",
                         "Help Integrating the Product",
                         "Initiate After-sales Service",
                         "Issue Handling",
                         "Order Creation",
                         "Order Fulfillment Issues",
                         "Order Processing",
                         "Other",
                         "Planning & Advice",
                         "Prepare for Exchange & Returns",
                         "Product / Service Information",
                         "Service Fulfillment"};
  std::vector<pl::LabelEntry> entries;
  for (int i = 0; i < 14; ++i) entries.push_back({i, names[i], ""});
  return pl::LabelCatalog(entries);
}

SyntheticSpec scaled_intent_spec(double divisor, std::size_t min_size) {
  SyntheticSpec spec;
  for (auto c : intent_class_counts()) {
    const auto n = static_cast<std::size_t>(std::lround(static_cast<double>(c) / divisor));
    spec.class_sizes.push_back(std::max(n, min_size));
  }
  return spec;
}

namespace {

std::string signal_word(std::size_t label, std::size_t j) {
  return "k" + std::to_string(label) + "s" + std::to_string(j);
}

}  // namespace

SyntheticCorpus make_synthetic_corpus(const SyntheticSpec& spec) {
  const std::size_t n_labels = spec.class_sizes.size();
  pl::Rng rng(spec.seed);

  std::vector<pl::LabelEntry> entries;
  for (std::size_t k = 0; k < n_labels; ++k) {
    entries.push_back({static_cast<pl::LabelIndex>(k), "class " + std::to_string(k), ""});
  }

  std::vector<std::vector<double>> centres(n_labels, std::vector<double>(spec.dim));
  for (auto& c : centres) {
    for (double& x : c) x = spec.centre_scale * rng.normal();
  }

  struct Draft {
    pl::LabelIndex label;
    std::string text;
    std::vector<float> vec;
  };
  std::vector<Draft> drafts;
  for (std::size_t k = 0; k < n_labels; ++k) {
    for (std::size_t r = 0; r < spec.class_sizes[k]; ++r) {
      const double a = rng.uniform();
      const double p_signal = spec.clean_signal - (spec.clean_signal - spec.noisy_signal) * a;
      const double p_confuse = spec.confusion * a;
      std::string text;
      for (std::size_t t = 0; t < spec.tokens_per_record; ++t) {
        const double u = rng.uniform();
        std::string word;
        if (u < p_signal) {
          word = signal_word(k, rng.below(spec.signal_words));
        } else if (u < p_signal + p_confuse && n_labels > 1) {
          auto other = rng.below(n_labels - 1);
          if (other >= k) ++other;
          word = signal_word(other, rng.below(spec.signal_words));
        } else {
          word = "n" + std::to_string(rng.below(spec.noise_words));
        }
        if (!text.empty()) text += ' ';
        text += word;
      }
      std::vector<float> vec(spec.dim);
      for (std::size_t d = 0; d < spec.dim; ++d) {
        vec[d] = static_cast<float>(centres[k][d] + spec.spread * a * rng.normal());
      }
      drafts.push_back({static_cast<pl::LabelIndex>(k), std::move(text), std::move(vec)});
    }
  }
  rng.shuffle(drafts);

  SyntheticCorpus out;
  out.dataset.catalog = pl::LabelCatalog(entries);
  char id[32];
  for (std::size_t i = 0; i < drafts.size(); ++i) {
    std::snprintf(id, sizeof id, "r%05zu", i);
    out.dataset.records.push_back({id, drafts[i].text, drafts[i].label});
    out.embeddings.add(id, std::move(drafts[i].vec));
  }
  return out;
}

pl::Dataset counted_dataset(const std::vector<std::size_t>& counts, const pl::LabelCatalog& catalog) {
  pl::Dataset ds;
  ds.catalog = catalog;
  char id[32];
  std::size_t n = 0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    for (std::size_t r = 0; r < counts[k]; ++r) {
      std::snprintf(id, sizeof id, "c%02zu-%05zu", k, r);
      ds.records.push_back({id, "text " + std::to_string(n++), static_cast<pl::LabelIndex>(k)});
    }
  }
  return ds;
}

}  // namespace pltest
