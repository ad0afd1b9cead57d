#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dager/lexicon.hpp"

using namespace dager;

namespace {

Dataset two_class_toy() {
  // class A: "kill kill ugly", class B: "nice day"
  Dataset ds;
  auto add = [&ds](std::vector<std::string> tokens, const std::string& label) {
    LabeledExample ex;
    ex.tokens = std::move(tokens);
    ex.label = label;
    ds.examples.push_back(std::move(ex));
  };
  add({"kill", "kill", "ugly"}, "A");
  add({"nice", "day"}, "B");
  return finalize_label_set(std::move(ds));
}

Dataset random_dataset(Rng& rng, int classes, int examples, int vocab) {
  Dataset ds;
  for (int i = 0; i < examples; ++i) {
    LabeledExample ex;
    // first `classes` examples pin one per class so the set never collapses
    ex.label = "c" + std::to_string(i < classes ? i : static_cast<int>(rng.next_below(classes)));
    const int len = 1 + static_cast<int>(rng.next_below(10));
    for (int t = 0; t < len; ++t)
      ex.tokens.push_back("w" + std::to_string(rng.next_below(vocab)));
    ds.examples.push_back(std::move(ex));
  }
  return finalize_label_set(std::move(ds));
}

// independent recomputation: same formula evaluated through different code
double oracle_score(const Dataset& ds, const std::string& label, const std::string& token) {
  std::size_t count = 0, total = 0, df = 0;
  for (const auto& ex : ds.examples)
    if (ex.label == label) {
      total += ex.tokens.size();
      for (const auto& t : ex.tokens)
        if (t == token) ++count;
    }
  for (const auto& c : ds.label_set) {
    bool present = false;
    for (const auto& ex : ds.examples)
      if (ex.label == c)
        for (const auto& t : ex.tokens)
          if (t == token) present = true;
    if (present) ++df;
  }
  if (count == 0) return 0.0;
  const double tf = static_cast<double>(count) / static_cast<double>(total);
  const double idf = std::log((1.0 + static_cast<double>(ds.label_set.size())) /
                              (1.0 + static_cast<double>(df))) +
                     1.0;
  return tf * idf;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("tfidf hand-checked values on the two-class toy") {
  const Dataset ds = two_class_toy();
  const ScoreMap scores = score_tfidf(ds);
  const double expected = (2.0 / 3.0) * (std::log(3.0 / 2.0) + 1.0);  // 0.93698...
  REQUIRE_THAT(scores.at("A").at("kill"),
               Catch::Matchers::WithinAbs(expected, 1e-12));
  REQUIRE_THAT(scores.at("A").at("kill"), Catch::Matchers::WithinAbs(0.937, 5e-4));
  REQUIRE(scores.at("A").count("nice") == 0);  // absent token scores 0
}

TEST_CASE("tfidf idf is exactly 1 for a token present in every class") {
  Dataset ds;
  for (int c = 0; c < 3; ++c) {
    LabeledExample ex;
    ex.label = "c" + std::to_string(c);
    ex.tokens = {"shared", "only" + std::to_string(c)};
    ds.examples.push_back(ex);
  }
  ds = finalize_label_set(std::move(ds));
  const ScoreMap scores = score_tfidf(ds);
  // tf = 1/2, idf = ln(4/4)+1 = 1
  REQUIRE_THAT(scores.at("c0").at("shared"), Catch::Matchers::WithinAbs(0.5, 1e-15));
}

TEST_CASE("tfidf is invariant to example order within a class") {
  Rng rng(31);
  Dataset ds = random_dataset(rng, 3, 60, 40);
  ScoreMap a = score_tfidf(ds);
  std::reverse(ds.examples.begin(), ds.examples.end());
  ScoreMap b = score_tfidf(finalize_label_set(std::move(ds)));
  REQUIRE(a == b);
}

TEST_CASE("tfidf is invariant under duplicating every example") {
  Rng rng(77);
  Dataset ds = random_dataset(rng, 4, 40, 30);
  Dataset doubled = ds;
  doubled.examples.insert(doubled.examples.end(), ds.examples.begin(), ds.examples.end());
  doubled = finalize_label_set(std::move(doubled));
  const ScoreMap a = score_tfidf(ds);
  const ScoreMap b = score_tfidf(doubled);
  for (const auto& [label, tokens] : a)
    for (const auto& [tok, score] : tokens)
      REQUIRE_THAT(b.at(label).at(tok), Catch::Matchers::WithinAbs(score, 1e-15));
}

TEST_CASE("tfidf rejects single-class and empty inputs") {
  Dataset ds;
  LabeledExample ex;
  ex.label = "only";
  ex.tokens = {"token"};
  ds.examples.push_back(ex);
  ds = finalize_label_set(std::move(ds));
  REQUIRE_THROWS(score_tfidf(ds));
  REQUIRE_THROWS(score_tfidf(Dataset{}));
}

TEST_CASE("extract_lexicons clamps capacity and breaks ties lexicographically") {
  Dataset ds;
  LabeledExample a, b;
  a.label = "A";
  a.tokens = {"t1", "t2", "t3", "t4", "t5", "t6", "t7"};
  b.label = "B";
  b.tokens = {"zz", "aa"};  // equal counts -> equal scores
  ds.examples = {a, b};
  ds = finalize_label_set(std::move(ds));
  const auto lexicons = extract_lexicons(score_tfidf(ds), 500);
  REQUIRE(lexicons[0].label == "A");
  REQUIRE(lexicons[0].entries.size() == 7);  // capacity clamp
  REQUIRE(lexicons[1].entries.size() == 2);
  REQUIRE(lexicons[1].entries[0].first == "aa");  // tie: smaller token first
  REQUIRE(lexicons[1].entries[1].first == "zz");
  REQUIRE_THROWS(extract_lexicons(score_tfidf(ds), 0));
}

TEST_CASE("extract_lexicons matches a sort-all-then-truncate oracle at k=500") {
  Rng rng(123);
  Dataset ds = random_dataset(rng, 2, 600, 2000);  // ~thousands of distinct tokens
  const ScoreMap scores = score_tfidf(ds);
  const auto lexicons = extract_lexicons(scores, 500);
  for (const auto& lex : lexicons) {
    std::vector<std::pair<std::string, double>> oracle(scores.at(lex.label).begin(),
                                                       scores.at(lex.label).end());
    std::stable_sort(oracle.begin(), oracle.end(), [](const auto& x, const auto& y) {
      if (x.second != y.second) return x.second > y.second;
      return x.first < y.first;
    });
    if (oracle.size() > 500) oracle.resize(500);
    REQUIRE(lex.entries == oracle);
  }
}

TEST_CASE("unique tokens always reach their class lexicon") {
  Rng rng(55);
  for (int trial = 0; trial < 50; ++trial) {
    Dataset ds = random_dataset(rng, 3, 30, 25);
    ds.examples[0].tokens.push_back("uniquemarkertoken");
    ds = finalize_label_set(std::move(ds));
    const std::string owner = ds.examples[0].label;
    const auto lexicons = extract_lexicons(score_tfidf(ds), 1000);
    bool found = false;
    for (const auto& lex : lexicons)
      if (lex.label == owner)
        for (const auto& [tok, score] : lex.entries)
          if (tok == "uniquemarkertoken") found = true;
    REQUIRE(found);
  }
}

TEST_CASE("tfidf oracle agreement on 1000 random instances") {
  Rng rng(2024);
  int checked = 0;
  while (checked < 1000) {
    Dataset ds = random_dataset(rng, 2 + static_cast<int>(rng.next_below(3)), 12, 15);
    const ScoreMap scores = score_tfidf(ds);
    // probe a few (class, token) pairs per dataset, present or not
    for (int probe = 0; probe < 5 && checked < 1000; ++probe, ++checked) {
      const std::string label =
          ds.label_set[rng.next_below(ds.label_set.size())];
      const std::string token = "w" + std::to_string(rng.next_below(15));
      const double expected = oracle_score(ds, label, token);
      const auto& m = scores.at(label);
      const double actual = m.count(token) ? m.at(token) : 0.0;
      REQUIRE(actual == expected);  // identical arithmetic order: exact
    }
  }
}

TEST_CASE("lexicon files round-trip losslessly and validate on load") {
  Rng rng(9);
  Dataset ds = random_dataset(rng, 4, 80, 60);
  const auto lexicons = extract_lexicons(score_tfidf(ds), 500);
  const std::string path = temp_path("dager_lexicons.tsv");
  save_lexicons(lexicons, path);
  const auto loaded = load_lexicons(path);
  REQUIRE(loaded.size() == lexicons.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    REQUIRE(loaded[i].label == lexicons[i].label);
    REQUIRE(loaded[i].entries == lexicons[i].entries);  // full precision
  }

  // determinism: two saves are byte-identical
  const std::string path2 = temp_path("dager_lexicons2.tsv");
  save_lexicons(extract_lexicons(score_tfidf(ds), 500), path2);
  std::ifstream f1(path), f2(path2);
  std::stringstream s1, s2;
  s1 << f1.rdbuf();
  s2 << f2.rdbuf();
  REQUIRE(s1.str() == s2.str());
}

TEST_CASE("lexicon load rejects duplicates and non-descending scores") {
  const std::string dup = temp_path("dager_lex_dup.tsv");
  {
    std::ofstream out(dup);
    out << "A\tkill\t0.5\nA\tkill\t0.4\n";
  }
  REQUIRE_THROWS_WITH(load_lexicons(dup), Catch::Matchers::ContainsSubstring("duplicate"));

  const std::string asc = temp_path("dager_lex_asc.tsv");
  {
    std::ofstream out(asc);
    out << "A\tkill\t0.4\nA\tugly\t0.5\n";
  }
  REQUIRE_THROWS_WITH(load_lexicons(asc), Catch::Matchers::ContainsSubstring("descending"));
}
