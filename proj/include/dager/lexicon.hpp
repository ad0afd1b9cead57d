#pragma once

// Per-class feature lexicons. Each class is scored as one concatenated
// document: score(t,c) = tf(t,c) * idf(t) with tf a within-class ratio and
// smoothed idf ln((1+D)/(1+df)) + 1. The top-k tokens per class form the
// condition signal the generator is steered toward.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "dager/corpus.hpp"

namespace dager {

struct ClassLexicon {
  std::string label;
  std::vector<std::pair<std::string, double>> entries;  // descending score
};

enum class DocGranularity { per_class, per_example };

using ScoreMap = std::map<std::string, std::map<std::string, double>>;

// df is counted over class documents by default; per_example switches the
// idf unit to individual examples. tf is always the within-class ratio.
inline ScoreMap score_tfidf(const Dataset& train,
                            DocGranularity granularity = DocGranularity::per_class) {
  if (train.examples.empty()) throw std::runtime_error("score_tfidf: empty training set");
  if (train.label_set.size() < 2)
    throw std::runtime_error("score_tfidf: need at least 2 classes");

  std::map<std::string, std::unordered_map<std::string, std::size_t>> counts;
  std::map<std::string, std::size_t> totals;
  std::unordered_map<std::string, std::size_t> df;

  for (const auto& label : train.label_set) counts[label];  // empty class doc allowed
  for (const auto& ex : train.examples) {
    auto& c = counts[ex.label];
    for (const auto& t : ex.tokens) {
      ++c[t];
      ++totals[ex.label];
    }
    if (granularity == DocGranularity::per_example) {
      std::unordered_set<std::string> seen(ex.tokens.begin(), ex.tokens.end());
      for (const auto& t : seen) ++df[t];
    }
  }
  double num_docs;
  if (granularity == DocGranularity::per_class) {
    for (const auto& [label, c] : counts)
      for (const auto& [tok, cnt] : c) ++df[tok];
    num_docs = static_cast<double>(train.label_set.size());
  } else {
    num_docs = static_cast<double>(train.examples.size());
  }

  ScoreMap scores;
  for (const auto& [label, c] : counts) {
    auto& out = scores[label];
    const double total = static_cast<double>(totals[label]);
    for (const auto& [tok, cnt] : c) {
      const double tf = static_cast<double>(cnt) / total;
      const double idf =
          std::log((1.0 + num_docs) / (1.0 + static_cast<double>(df[tok]))) + 1.0;
      out[tok] = tf * idf;
    }
  }
  return scores;
}

inline std::vector<ClassLexicon> extract_lexicons(const ScoreMap& scores, std::size_t k = 500) {
  if (k == 0) throw std::invalid_argument("extract_lexicons: k must be positive");
  std::vector<ClassLexicon> out;
  for (const auto& [label, token_scores] : scores) {
    ClassLexicon lex;
    lex.label = label;
    lex.entries.assign(token_scores.begin(), token_scores.end());
    std::sort(lex.entries.begin(), lex.entries.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;  // ties: lexicographically smaller first
    });
    if (lex.entries.size() > k) lex.entries.resize(k);
    out.push_back(std::move(lex));
  }
  return out;
}

// TSV: class <TAB> token <TAB> score. %.17g keeps the double exact across a
// save/load cycle.
inline void save_lexicons(const std::vector<ClassLexicon>& lexicons, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_lexicons: cannot open " + path);
  char buf[64];
  for (const auto& lex : lexicons) {
    for (const auto& [tok, score] : lex.entries) {
      std::snprintf(buf, sizeof(buf), "%.17g", score);
      out << lex.label << '\t' << tok << '\t' << buf << '\n';
    }
  }
  if (!out) throw std::runtime_error("save_lexicons: write failed for " + path);
}

inline std::vector<ClassLexicon> load_lexicons(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_lexicons: cannot open " + path);
  std::vector<ClassLexicon> out;
  std::map<std::string, std::size_t> index;
  std::map<std::string, std::set<std::string>> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::size_t t1 = line.find('\t');
    const std::size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos)
      throw std::runtime_error("load_lexicons: malformed line " + std::to_string(lineno));
    const std::string label = line.substr(0, t1);
    const std::string token = line.substr(t1 + 1, t2 - t1 - 1);
    char* end = nullptr;
    const double score = std::strtod(line.c_str() + t2 + 1, &end);
    if (end == line.c_str() + t2 + 1 || !std::isfinite(score) || score < 0.0)
      throw std::runtime_error("load_lexicons: bad score at line " + std::to_string(lineno));
    auto it = index.find(label);
    if (it == index.end()) {
      index[label] = out.size();
      out.push_back(ClassLexicon{label, {}});
      it = index.find(label);
    }
    ClassLexicon& lex = out[it->second];
    if (!seen[label].insert(token).second)
      throw std::runtime_error("load_lexicons: duplicate token \"" + token + "\" for class \"" +
                               label + "\" at line " + std::to_string(lineno));
    if (!lex.entries.empty() && lex.entries.back().second < score)
      throw std::runtime_error("load_lexicons: scores not descending at line " +
                               std::to_string(lineno));
    lex.entries.emplace_back(token, score);
  }
  if (out.empty()) throw std::runtime_error("load_lexicons: empty file " + path);
  return out;
}

}  // namespace dager
