#pragma once

// Labeled text ingestion and preparation: JSONL/TSV loading, cleaning,
// the 30-token length filter, stratified train/test splitting and
// stratified down-sampling. All operations are pure given (input, seed).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dager/rng.hpp"
#include "dager/stopwords.hpp"

namespace dager {

inline constexpr std::size_t kMaxTokens = 30;

struct LabeledExample {
  std::string text;                 // original (or generated) surface form
  std::vector<std::string> tokens;  // post-preprocessing; empty until finalized
  std::string label;
  std::string provenance = "original";  // original | generated
};

struct Dataset {
  std::vector<LabeledExample> examples;
  std::vector<std::string> label_set;  // distinct labels, lexicographic
  std::string provenance = "original"; // original | generated | mixed
};

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

enum class CorpusFormat { jsonl, tsv };

// ---------------------------------------------------------------------------
// preprocessing

inline bool is_ascii_punct(char c) {
  return (c >= '!' && c <= '/') || (c >= ':' && c <= '@') ||
         (c >= '[' && c <= '`') || (c >= '{' && c <= '~');
}

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

inline bool looks_like_url(std::string_view lower) {
  return lower.substr(0, 7) == "http://" || lower.substr(0, 8) == "https://" ||
         lower.substr(0, 4) == "www." || lower.find("://") != std::string_view::npos;
}

// Cleaning order matters for idempotence: URL/hashtag/mention tests run on
// the raw token, stop-word membership on the lowercased punctuation-free
// form. Output tokens are exactly the fixed points of this function.
inline std::vector<std::string> preprocess(std::string_view raw) {
  std::vector<std::string> out;
  std::size_t i = 0;
  const std::size_t n = raw.size();
  while (i < n) {
    while (i < n && std::isspace(static_cast<unsigned char>(raw[i]))) ++i;
    std::size_t j = i;
    while (j < n && !std::isspace(static_cast<unsigned char>(raw[j]))) ++j;
    if (j > i) {
      std::string_view piece = raw.substr(i, j - i);
      if (piece[0] != '#' && piece[0] != '@') {
        std::string token;
        token.reserve(piece.size());
        bool url = looks_like_url(ascii_lower(piece));
        if (!url) {
          for (char c : piece) {
            if (is_ascii_punct(c)) continue;
            if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
            token.push_back(c);
          }
          if (!token.empty() && !is_stopword(token)) out.push_back(std::move(token));
        }
      }
    }
    i = j;
  }
  return out;
}

// ---------------------------------------------------------------------------
// loading

inline Dataset finalize_label_set(Dataset ds) {
  std::set<std::string> labels;
  for (const auto& ex : ds.examples) labels.insert(ex.label);
  ds.label_set.assign(labels.begin(), labels.end());
  return ds;
}

inline Dataset load_corpus(const std::string& path, CorpusFormat format) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_corpus: cannot open " + path);
  Dataset ds;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    LabeledExample ex;
    if (format == CorpusFormat::jsonl) {
      nlohmann::json rec = nlohmann::json::parse(line, nullptr, false);
      if (rec.is_discarded() || !rec.is_object())
        throw std::runtime_error("load_corpus: malformed JSON record at line " +
                                 std::to_string(lineno));
      if (!rec.contains("text") || !rec["text"].is_string())
        throw std::runtime_error("load_corpus: record missing \"text\" at line " +
                                 std::to_string(lineno));
      if (!rec.contains("label") || !rec["label"].is_string())
        throw std::runtime_error("load_corpus: record missing \"label\" at line " +
                                 std::to_string(lineno));
      ex.text = rec["text"].get<std::string>();
      ex.label = rec["label"].get<std::string>();
      if (rec.contains("provenance") && rec["provenance"].is_string())
        ex.provenance = rec["provenance"].get<std::string>();
    } else {
      const std::size_t tab = line.rfind('\t');
      if (tab == std::string::npos)
        throw std::runtime_error("load_corpus: missing tab separator at line " +
                                 std::to_string(lineno));
      ex.text = line.substr(0, tab);
      ex.label = line.substr(tab + 1);
    }
    if (ex.text.empty())
      throw std::runtime_error("load_corpus: empty text at line " + std::to_string(lineno));
    if (ex.label.empty())
      throw std::runtime_error("load_corpus: empty label at line " + std::to_string(lineno));
    ds.examples.push_back(std::move(ex));
  }
  if (ds.examples.empty()) throw std::runtime_error("load_corpus: empty file " + path);
  return finalize_label_set(std::move(ds));
}

inline void save_corpus(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_corpus: cannot open " + path);
  for (const auto& ex : ds.examples) {
    nlohmann::json rec;
    rec["text"] = ex.text;
    rec["label"] = ex.label;
    if (ex.provenance != "original") rec["provenance"] = ex.provenance;
    out << rec.dump() << '\n';
  }
  if (!out) throw std::runtime_error("save_corpus: write failed for " + path);
}

// ---------------------------------------------------------------------------
// filtering

struct FilterReport {
  Dataset dataset;
  std::size_t dropped_empty = 0;
  std::size_t dropped_long = 0;
  std::map<std::string, std::size_t> surviving_per_class;
};

// Applies preprocess() and drops examples outside [1, 30] tokens. The token
// cap is evaluated after cleaning (so stop words do not count toward it).
inline FilterReport filter_and_finalize(const Dataset& input) {
  FilterReport rep;
  for (const auto& ex : input.examples) {
    LabeledExample kept = ex;
    kept.tokens = preprocess(ex.text);
    if (kept.tokens.empty()) {
      ++rep.dropped_empty;
      continue;
    }
    if (kept.tokens.size() > kMaxTokens) {
      ++rep.dropped_long;
      continue;
    }
    ++rep.surviving_per_class[kept.label];
    rep.dataset.examples.push_back(std::move(kept));
  }
  if (rep.dataset.examples.empty())
    throw std::runtime_error("filter_and_finalize: no examples survive preprocessing");
  rep.dataset.provenance = input.provenance;
  rep.dataset = finalize_label_set(std::move(rep.dataset));
  return rep;
}

// ---------------------------------------------------------------------------
// stats and stratified selection

inline std::map<std::string, std::size_t> class_stats(const Dataset& ds) {
  std::map<std::string, std::size_t> counts;
  for (const auto& ex : ds.examples) ++counts[ex.label];
  return counts;
}

inline std::size_t round_half_up(double x) {
  return static_cast<std::size_t>(std::floor(x + 0.5));
}

namespace detail {

// Per class: deterministic shuffle of that class's positions, take the first
// round(count * fraction), emit selections in original dataset order.
inline std::vector<std::size_t> stratified_pick(const Dataset& ds, double fraction,
                                                std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < ds.examples.size(); ++i)
    by_class[ds.examples[i].label].push_back(i);
  std::vector<std::size_t> picked;
  for (auto& [label, idx] : by_class) {
    const std::size_t want = round_half_up(static_cast<double>(idx.size()) * fraction);
    Rng rng = Rng::substream(seed, fnv1a(label));
    shuffle(idx, rng);
    for (std::size_t i = 0; i < want && i < idx.size(); ++i) picked.push_back(idx[i]);
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

}  // namespace detail

inline std::pair<Dataset, Dataset> stratified_split(const Dataset& ds, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
    throw std::invalid_argument("stratified_split: train_fraction must be in (0,1)");
  for (const auto& [label, count] : class_stats(ds))
    if (count < 2)
      throw std::runtime_error("stratified_split: class \"" + label +
                               "\" has fewer than 2 examples");
  const std::vector<std::size_t> train_idx =
      detail::stratified_pick(ds, spec.train_fraction, spec.seed);
  std::vector<bool> in_train(ds.examples.size(), false);
  for (std::size_t i : train_idx) in_train[i] = true;
  Dataset train, test;
  for (std::size_t i = 0; i < ds.examples.size(); ++i)
    (in_train[i] ? train : test).examples.push_back(ds.examples[i]);
  train.provenance = ds.provenance;
  test.provenance = ds.provenance;
  return {finalize_label_set(std::move(train)), finalize_label_set(std::move(test))};
}

inline Dataset downsample(const Dataset& ds, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw std::invalid_argument("downsample: fraction must be in (0,1]");
  for (const auto& [label, count] : class_stats(ds))
    if (round_half_up(static_cast<double>(count) * fraction) == 0)
      throw std::runtime_error("downsample: fraction " + std::to_string(fraction) +
                               " would empty class \"" + label + "\"");
  const std::vector<std::size_t> keep = detail::stratified_pick(ds, fraction, seed);
  Dataset out;
  for (std::size_t i : keep) out.examples.push_back(ds.examples[i]);
  out.provenance = ds.provenance;
  return finalize_label_set(std::move(out));
}

}  // namespace dager
