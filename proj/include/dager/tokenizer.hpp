#pragma once

// Word-level tokenizer shared by the LM and the lexicons: one vocabulary
// built from corpus frequency, reserved ids 0/1/2 for <bos>/<eos>/<unk>.

#include <algorithm>
#include <fstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "dager/corpus.hpp"

namespace dager {

struct Tokenizer {
  static constexpr int bos_id = 0;
  static constexpr int eos_id = 1;
  static constexpr int unk_id = 2;

  std::vector<std::string> vocab;  // id -> token
  std::unordered_map<std::string, int> ids;

  int size() const { return static_cast<int>(vocab.size()); }

  int id_of(const std::string& token) const {
    auto it = ids.find(token);
    return it == ids.end() ? unk_id : it->second;
  }

  std::vector<int> encode(const std::vector<std::string>& tokens) const {
    std::vector<int> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(id_of(t));
    return out;
  }

  std::vector<std::string> decode(const std::vector<int>& token_ids) const {
    std::vector<std::string> out;
    out.reserve(token_ids.size());
    for (int id : token_ids) {
      if (id < 0 || id >= size())
        throw std::out_of_range("Tokenizer::decode: id out of range");
      out.push_back(vocab[id]);
    }
    return out;
  }

  void rebuild_index() {
    ids.clear();
    for (int i = 0; i < size(); ++i) ids[vocab[i]] = i;
    if (ids.size() != vocab.size())
      throw std::runtime_error("Tokenizer: duplicate token in vocabulary");
  }
};

inline Tokenizer build_tokenizer(const Dataset& corpus, std::size_t max_vocab) {
  if (max_vocab < 4)
    throw std::invalid_argument("build_tokenizer: max_vocab must be at least 4");
  if (corpus.examples.empty())
    throw std::runtime_error("build_tokenizer: empty corpus");
  std::unordered_map<std::string, std::size_t> freq;
  for (const auto& ex : corpus.examples)
    for (const auto& t : ex.tokens) ++freq[t];
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Tokenizer tok;
  tok.vocab = {"<bos>", "<eos>", "<unk>"};
  for (std::size_t i = 0; i < ranked.size() && tok.vocab.size() < max_vocab; ++i)
    tok.vocab.push_back(ranked[i].first);
  tok.rebuild_index();
  return tok;
}

inline void save_vocab(const Tokenizer& tok, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_vocab: cannot open " + path);
  for (const auto& t : tok.vocab) out << t << '\n';
}

inline Tokenizer load_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_vocab: cannot open " + path);
  Tokenizer tok;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tok.vocab.push_back(line);
  }
  if (tok.vocab.size() < 3 || tok.vocab[0] != "<bos>" || tok.vocab[1] != "<eos>" ||
      tok.vocab[2] != "<unk>")
    throw std::runtime_error("load_vocab: missing reserved tokens in " + path);
  tok.rebuild_index();
  return tok;
}

}  // namespace dager
