#pragma once

// Synthetic labeled corpora with a known class mechanism: every class has a
// small set of indicator tokens whose probability is boosted over a shared
// background distribution (which itself contains all tokens, so boost = 0
// degenerates to one uniform pool). Class counts follow the requested
// proportions exactly (largest-remainder quotas, then a seeded shuffle).

#include <cstdint>
#include <cstdio>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "dager/corpus.hpp"

namespace dager {

struct SynthSpec {
  std::vector<std::string> labels = {"abusive", "hateful", "normal", "spam"};
  std::vector<double> proportions = {0.2715, 0.0497, 0.5385, 0.1403};
  std::size_t total = 10000;
  std::size_t background_vocab = 1000;
  std::size_t indicators_per_class = 6;
  double boost = 0.12;  // probability mass redirected to the class's indicators
  int len_min = 3;
  int len_max = 7;
  std::uint64_t seed = 0;

  void validate() const {
    if (labels.empty() || labels.size() != proportions.size())
      throw std::invalid_argument("SynthSpec: labels/proportions mismatch");
    double sum = 0.0;
    for (double p : proportions) {
      if (p <= 0.0) throw std::invalid_argument("SynthSpec: proportions must be positive");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw std::invalid_argument("SynthSpec: proportions must sum to 1");
    if (boost < 0.0 || boost >= 1.0)
      throw std::invalid_argument("SynthSpec: boost must be in [0,1)");
    if (boost > 0.0 && indicators_per_class == 0)
      throw std::invalid_argument("SynthSpec: boost > 0 needs indicator tokens");
    if (len_min < 1 || len_max > static_cast<int>(kMaxTokens) || len_min > len_max)
      throw std::invalid_argument("SynthSpec: bad length range");
    if (total == 0) throw std::invalid_argument("SynthSpec: total must be positive");
  }
};

inline std::string indicator_token(const std::string& label, std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "sig%02zu", i);
  return label + buf;
}

inline std::string background_token(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "tok%04zu", i);
  return buf;
}

inline Dataset synth_corpus(const SynthSpec& spec) {
  spec.validate();

  // shared pool: background tokens plus every class's indicators
  std::vector<std::string> pool;
  for (std::size_t i = 0; i < spec.background_vocab; ++i)
    pool.push_back(background_token(i));
  std::map<std::string, std::vector<std::string>> indicators;
  for (const auto& label : spec.labels) {
    auto& ind = indicators[label];
    for (std::size_t i = 0; i < spec.indicators_per_class; ++i) {
      ind.push_back(indicator_token(label, i));
      pool.push_back(ind.back());
    }
  }

  // exact per-class quotas
  std::vector<std::size_t> quota(spec.labels.size());
  std::size_t assigned = 0;
  std::vector<std::pair<double, std::size_t>> rem;
  for (std::size_t c = 0; c < spec.labels.size(); ++c) {
    const double ideal = spec.proportions[c] * static_cast<double>(spec.total);
    quota[c] = static_cast<std::size_t>(ideal);
    assigned += quota[c];
    rem.push_back({-(ideal - static_cast<double>(quota[c])), c});
  }
  std::sort(rem.begin(), rem.end());
  for (std::size_t i = 0; assigned < spec.total; ++i) {
    ++quota[rem[i % rem.size()].second];
    ++assigned;
  }
  std::vector<std::size_t> class_of;
  for (std::size_t c = 0; c < spec.labels.size(); ++c)
    class_of.insert(class_of.end(), quota[c], c);
  Rng order_rng = Rng::substream(spec.seed, fnv1a("synth-order"));
  shuffle(class_of, order_rng);

  Dataset ds;
  for (std::size_t i = 0; i < class_of.size(); ++i) {
    const std::size_t c = class_of[i];
    const std::string& label = spec.labels[c];
    Rng rng = Rng::substream(spec.seed, fnv1a("synth-example"), i);
    const int len = spec.len_min +
                    static_cast<int>(rng.next_below(spec.len_max - spec.len_min + 1));
    LabeledExample ex;
    ex.label = label;
    for (int t = 0; t < len; ++t) {
      const bool boosted = spec.boost > 0.0 && rng.next_double() < spec.boost;
      const auto& source = boosted ? indicators[label] : pool;
      ex.tokens.push_back(source[rng.next_below(source.size())]);
    }
    for (std::size_t t = 0; t < ex.tokens.size(); ++t) {
      if (t) ex.text += ' ';
      ex.text += ex.tokens[t];
    }
    ds.examples.push_back(std::move(ex));
  }
  return finalize_label_set(std::move(ds));
}

}  // namespace dager
