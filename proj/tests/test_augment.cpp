#include <catch2/catch_amalgamated.hpp>

#include "dager/augment.hpp"
#include "dager/trainer.hpp"

using namespace dager;

namespace {

Model toy_model(std::uint64_t seed) {
  Dataset corpus;
  Rng rng(seed);
  for (int i = 0; i < 80; ++i) {
    LabeledExample ex;
    ex.label = "x";
    const int len = 2 + static_cast<int>(rng.next_below(5));
    for (int t = 0; t < len; ++t)
      ex.tokens.push_back("w" + std::to_string(rng.next_below(30)));
    corpus.examples.push_back(std::move(ex));
  }
  corpus = finalize_label_set(std::move(corpus));
  ModelConfig cfg;
  cfg.layers = 1;
  cfg.d_model = 16;
  cfg.heads = 2;
  cfg.ffn_dim = 32;
  cfg.context_length = 64;
  cfg.vocab_size = 64;
  cfg.seed = seed;
  return train_lm(corpus, cfg, 0, 1e-3).model;
}

std::vector<ClassLexicon> toy_lexicons(const std::vector<std::string>& labels) {
  std::vector<ClassLexicon> lexicons;
  for (std::size_t c = 0; c < labels.size(); ++c) {
    ClassLexicon lex;
    lex.label = labels[c];
    for (int i = 0; i < 4; ++i)
      lex.entries.push_back({"w" + std::to_string(c * 4 + i), 1.0 - 0.1 * i});
    lexicons.push_back(std::move(lex));
  }
  return lexicons;
}

}  // namespace

TEST_CASE("plan_boost preserve mode keeps the distribution") {
  const std::map<std::string, std::size_t> stats = {{"A", 80}, {"B", 20}};
  const BoostPlan plan = plan_boost(stats, 200, BoostMode::preserve_distribution);
  REQUIRE(plan.target.at("A") == 160);
  REQUIRE(plan.target.at("B") == 40);
  REQUIRE(plan.boosting.at("A") == 80);
  REQUIRE(plan.boosting.at("B") == 20);
}

TEST_CASE("plan_boost balance mode equalizes classes") {
  const std::map<std::string, std::size_t> stats = {{"A", 80}, {"B", 20}};
  const BoostPlan plan = plan_boost(stats, 200, BoostMode::balance);
  REQUIRE(plan.target.at("A") == 100);
  REQUIRE(plan.target.at("B") == 100);
  REQUIRE(plan.boosting.at("A") == 20);
  REQUIRE(plan.boosting.at("B") == 80);
}

TEST_CASE("balance remainders go to the lexicographically first classes") {
  const std::map<std::string, std::size_t> stats = {{"a", 1}, {"b", 1}, {"c", 1}};
  const BoostPlan plan = plan_boost(stats, 10, BoostMode::balance);
  REQUIRE(plan.target.at("a") == 4);
  REQUIRE(plan.target.at("b") == 3);
  REQUIRE(plan.target.at("c") == 3);
}

TEST_CASE("plan_boost conserves totals exactly on random instances") {
  Rng rng(41);
  for (int trial = 0; trial < 300; ++trial) {
    std::map<std::string, std::size_t> stats;
    const int classes = 2 + static_cast<int>(rng.next_below(5));
    std::size_t total = 0;
    for (int c = 0; c < classes; ++c) {
      const std::size_t n = 1 + rng.next_below(500);
      stats["c" + std::to_string(c)] = n;
      total += n;
    }
    const std::size_t target = total + rng.next_below(2000);
    const auto mode = rng.next_below(2) ? BoostMode::balance : BoostMode::preserve_distribution;
    BoostPlan plan;
    try {
      plan = plan_boost(stats, target, mode);
    } catch (const std::runtime_error&) {
      continue;  // balance mode may undershoot a dominant class; that throws
    }
    std::size_t sum = 0, boost_sum = 0;
    for (const auto& [label, t] : plan.target) sum += t;
    for (const auto& [label, b] : plan.boosting) boost_sum += b;
    REQUIRE(sum == target);
    REQUIRE(boost_sum == target - total);
  }
}

TEST_CASE("boosting counts scale the starved table-style stats by ~79x") {
  // training split sized from the challenge table, starved to 1% of the whole
  const std::map<std::string, std::size_t> full = {
      {"normal", 53851}, {"spam", 14030}, {"abusive", 27150}, {"hateful", 4965}};
  std::map<std::string, std::size_t> train, starved;
  std::size_t train_total = 0;
  for (const auto& [label, count] : full) {
    train[label] = round_half_up(count * 0.8);
    train_total += train[label];
    starved[label] = round_half_up(train[label] * (0.01 / 0.8));
  }
  const BoostPlan plan =
      plan_boost(starved, train_total, BoostMode::preserve_distribution, &train);
  for (const auto& [label, boost] : plan.boosting) {
    const double ratio = static_cast<double>(boost) / starved.at(label);
    REQUIRE(ratio > 77.0);
    REQUIRE(ratio < 81.0);
  }
}

TEST_CASE("plan_boost rejects bad targets") {
  const std::map<std::string, std::size_t> stats = {{"A", 80}, {"B", 20}};
  REQUIRE_THROWS(plan_boost(stats, 50, BoostMode::preserve_distribution));
  // balance cannot reach equal shares when one class already exceeds total/C
  REQUIRE_THROWS(plan_boost(stats, 110, BoostMode::balance));
}

TEST_CASE("generate_batch produces exactly the planned counts with correct labels") {
  const Model m = toy_model(1);
  const std::vector<std::string> labels = {"A", "B"};
  const auto lexicons = toy_lexicons(labels);
  BoostPlan plan;
  plan.boosting = {{"A", 50}, {"B", 50}};
  SteerConfig cfg;
  cfg.alpha = 1.0;
  const Dataset gen = generate_batch(m, lexicons, plan, cfg, LengthRange{1, 10}, 77);
  const auto stats = class_stats(gen);
  REQUIRE(stats.at("A") == 50);
  REQUIRE(stats.at("B") == 50);
  for (const auto& ex : gen.examples) {
    REQUIRE(ex.provenance == "generated");
    REQUIRE(ex.tokens.size() >= 1);
    REQUIRE(ex.tokens.size() <= 30);
    REQUIRE((ex.label == "A" || ex.label == "B"));
  }
}

TEST_CASE("generate_batch is deterministic and order-independent") {
  const Model m = toy_model(2);
  const auto lexicons = toy_lexicons({"A", "B"});
  SteerConfig cfg;
  cfg.alpha = 1.0;
  BoostPlan forward, reversed;
  forward.boosting = {{"A", 20}, {"B", 20}};
  reversed.boosting = {{"B", 20}, {"A", 20}};  // map re-sorts; same plan
  const Dataset g1 = generate_batch(m, lexicons, forward, cfg, LengthRange{1, 8}, 5);
  const Dataset g2 = generate_batch(m, lexicons, reversed, cfg, LengthRange{1, 8}, 5);
  REQUIRE(g1.examples.size() == g2.examples.size());
  for (std::size_t i = 0; i < g1.examples.size(); ++i) {
    REQUIRE(g1.examples[i].tokens == g2.examples[i].tokens);
    REQUIRE(g1.examples[i].label == g2.examples[i].label);
  }
}

TEST_CASE("all-zero plans generate nothing") {
  const Model m = toy_model(3);
  BoostPlan plan;
  plan.boosting = {{"A", 0}};
  const Dataset gen =
      generate_batch(m, toy_lexicons({"A"}), plan, SteerConfig{}, LengthRange{1, 8}, 1);
  REQUIRE(gen.examples.empty());
}

TEST_CASE("dedup_merge drops duplicates and merges disjoint sets") {
  Dataset original;
  LabeledExample a;
  a.tokens = {"w1", "w2"};
  a.label = "A";
  original.examples.push_back(a);
  original = finalize_label_set(std::move(original));

  Dataset generated;
  LabeledExample dup = a;  // identical token sequence
  dup.provenance = "generated";
  LabeledExample fresh;
  fresh.tokens = {"w3"};
  fresh.label = "A";
  fresh.provenance = "generated";
  generated.examples = {dup, fresh};
  generated = finalize_label_set(std::move(generated));

  const MergeResult r = dedup_merge(original, generated);
  REQUIRE(r.duplicates_dropped == 1);
  REQUIRE(r.shortfall == 1);  // no regenerator available
  REQUIRE(r.merged.examples.size() == 2);
  REQUIRE(r.merged.provenance == "mixed");
}

TEST_CASE("dedup_merge regenerates dropped slots through the callback") {
  Dataset original;
  LabeledExample a;
  a.tokens = {"w1"};
  a.label = "A";
  original.examples.push_back(a);
  original = finalize_label_set(std::move(original));

  Dataset generated;
  LabeledExample dup = a;
  dup.provenance = "generated";
  generated.examples = {dup};
  generated = finalize_label_set(std::move(generated));

  std::size_t calls = 0;
  const MergeResult r = dedup_merge(original, generated,
                                    [&](const std::string&, std::size_t, std::size_t attempt) {
                                      ++calls;
                                      // first attempt still collides, second is fresh
                                      return attempt == 1 ? std::vector<std::string>{"w1"}
                                                          : std::vector<std::string>{"w9"};
                                    });
  REQUIRE(calls == 2);
  REQUIRE(r.shortfall == 0);
  REQUIRE(r.merged.examples.size() == 2);
}

TEST_CASE("dedup_merge reports shortfall when regeneration keeps colliding") {
  Dataset original;
  LabeledExample a;
  a.tokens = {"w1"};
  a.label = "A";
  original.examples.push_back(a);
  original = finalize_label_set(std::move(original));
  Dataset generated = original;
  generated.examples[0].provenance = "generated";

  std::size_t calls = 0;
  const MergeResult r = dedup_merge(original, generated,
                                    [&](const std::string&, std::size_t, std::size_t) {
                                      ++calls;
                                      return std::vector<std::string>{"w1"};  // always dup
                                    });
  REQUIRE(calls == 10);  // retry budget
  REQUIRE(r.shortfall == 1);
}

TEST_CASE("dedup_merge rejects label schema mismatches") {
  Dataset original;
  LabeledExample a;
  a.tokens = {"w1"};
  a.label = "A";
  original.examples.push_back(a);
  original = finalize_label_set(std::move(original));
  Dataset generated;
  LabeledExample b;
  b.tokens = {"w2"};
  b.label = "ZZZ";
  generated.examples.push_back(b);
  generated = finalize_label_set(std::move(generated));
  REQUIRE_THROWS(dedup_merge(original, generated));
}

TEST_CASE("augment_dataset hits plan targets with no internal duplicates") {
  const Model m = toy_model(4);
  const auto lexicons = toy_lexicons({"A", "B"});
  Dataset original;
  for (int i = 0; i < 10; ++i) {
    LabeledExample ex;
    ex.label = i % 2 ? "A" : "B";
    ex.tokens = {"orig" + std::to_string(i)};
    original.examples.push_back(ex);
  }
  original = finalize_label_set(std::move(original));
  const BoostPlan plan = plan_boost(class_stats(original), 60, BoostMode::balance);
  SteerConfig cfg;
  cfg.alpha = 1.0;
  const MergeResult r =
      augment_dataset(m, lexicons, original, plan, cfg, LengthRange{2, 12}, 99);
  const auto stats = class_stats(r.merged);
  if (r.shortfall == 0) {
    REQUIRE(stats.at("A") == plan.target.at("A"));
    REQUIRE(stats.at("B") == plan.target.at("B"));
  }
  std::set<std::string> generated_keys;
  for (const auto& ex : r.merged.examples)
    if (ex.provenance == "generated")
      REQUIRE(generated_keys.insert(token_key(ex.tokens)).second);  // unique
}
