#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "dager/steer.hpp"
#include "dager/trainer.hpp"

using namespace dager;

namespace {

Model tiny_model(int vocab_hint, std::uint64_t seed) {
  Dataset corpus;
  Rng rng(seed);
  for (int i = 0; i < 60; ++i) {
    LabeledExample ex;
    ex.label = "x";
    const int len = 2 + static_cast<int>(rng.next_below(6));
    for (int t = 0; t < len; ++t)
      ex.tokens.push_back("w" + std::to_string(rng.next_below(vocab_hint)));
    corpus.examples.push_back(std::move(ex));
  }
  corpus = finalize_label_set(std::move(corpus));
  ModelConfig cfg;
  cfg.layers = 2;
  cfg.d_model = 32;
  cfg.heads = 4;
  cfg.ffn_dim = 64;
  cfg.context_length = 64;
  cfg.vocab_size = vocab_hint + 8;
  cfg.seed = seed;
  return train_lm(corpus, cfg, 0, 1e-3).model;
}

DecoderSession random_session(const Model& m, Rng& rng, int max_prefix = 8) {
  DecoderSession s(m);
  s.step(Tokenizer::bos_id);
  const int extra = static_cast<int>(rng.next_below(max_prefix));
  for (int i = 0; i < extra; ++i)
    s.step(static_cast<int>(rng.next_below(m.cfg.vocab_size)));
  return s;
}

std::vector<int> random_bag(const Model& m, Rng& rng, int max_size = 6) {
  std::vector<int> bag;
  const int n = 1 + static_cast<int>(rng.next_below(max_size));
  for (int i = 0; i < n; ++i) {
    const int id = 3 + static_cast<int>(rng.next_below(m.cfg.vocab_size - 3));
    if (std::find(bag.begin(), bag.end(), id) == bag.end()) bag.push_back(id);
  }
  return bag;
}

double combined_loss_at(const Model& m, const std::vector<double>& h,
                        const std::vector<double>& dh, const std::vector<int>& bag,
                        const SteerConfig& cfg) {
  std::vector<double> shifted(h);
  for (std::size_t i = 0; i < h.size(); ++i) shifted[i] += dh[i];
  const auto q = nn::softmax(m.head_logits(shifted));
  const auto p = nn::softmax(m.head_logits(h));
  return cfg.alpha * bow_loss(q, bag) + cfg.beta * kl_loss(p, q);
}

}  // namespace

TEST_CASE("bow_loss analytic values") {
  const std::vector<double> uniform = {0.25, 0.25, 0.25, 0.25};
  REQUIRE_THAT(bow_loss(uniform, {0, 1}),
               Catch::Matchers::WithinAbs(2.0 * std::log(4.0), 1e-12));   // 2.77259
  REQUIRE_THAT(bow_loss({0.0, 1.0}, {1}), Catch::Matchers::WithinAbs(0.0, 0.0));
  REQUIRE_THAT(bow_loss({0.7, 0.2, 0.1}, {0, 2}),
               Catch::Matchers::WithinAbs(2.65926, 1e-5));
}

TEST_CASE("bow_loss floors vanishing probabilities and counts the hits") {
  std::size_t hits = 0;
  const double loss = bow_loss({1.0, 0.0}, {1}, &hits);
  REQUIRE(hits == 1);
  REQUIRE_THAT(loss, Catch::Matchers::WithinAbs(-std::log(1e-12), 1e-9));
  REQUIRE_THROWS(bow_loss({1.0}, {}));
  REQUIRE_THROWS(bow_loss({1.0}, {5}));
}

TEST_CASE("kl_loss analytic values and nonnegativity") {
  REQUIRE(kl_loss({0.3, 0.7}, {0.3, 0.7}) == 0.0);
  REQUIRE_THAT(kl_loss({0.5, 0.5}, {0.25, 0.75}),
               Catch::Matchers::WithinAbs(0.143841, 1e-6));
  REQUIRE_THROWS(kl_loss({0.5, 0.5}, {1.0}));

  Rng rng(5150);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + static_cast<int>(rng.next_below(20));
    std::vector<double> p(n), q(n);
    double sp = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
      p[i] = rng.next_double() + 1e-9;
      q[i] = rng.next_double() + 1e-9;
      sp += p[i];
      sq += q[i];
    }
    for (int i = 0; i < n; ++i) {
      p[i] /= sp;
      q[i] /= sq;
    }
    REQUIRE(kl_loss(p, q) >= 0.0);  // Gibbs
  }
}

TEST_CASE("kl_loss_sum reduces to the single-position term") {
  const std::vector<double> p = {0.5, 0.5}, q = {0.25, 0.75};
  REQUIRE(kl_loss_sum({p, p, p}, {p, p, q}) == kl_loss(p, q));
}

TEST_CASE("logit gradient hand value: uniform q, bag {0,1}, alpha 1, beta 0") {
  const std::vector<double> q = {0.25, 0.25, 0.25, 0.25};
  const auto g = combined_logit_gradient(q, q, {0, 1}, 1.0, 0.0);
  REQUIRE_THAT(g[0], Catch::Matchers::WithinAbs(-0.5, 1e-15));
  REQUIRE_THAT(g[1], Catch::Matchers::WithinAbs(-0.5, 1e-15));
  REQUIRE_THAT(g[2], Catch::Matchers::WithinAbs(0.5, 1e-15));
  REQUIRE_THAT(g[3], Catch::Matchers::WithinAbs(0.5, 1e-15));
}

TEST_CASE("zero weights give a zero update") {
  const Model m = tiny_model(20, 3);
  Rng rng(8);
  DecoderSession s = random_session(m, rng);
  SteerConfig cfg;
  cfg.alpha = 0.0;
  cfg.beta = 0.0;
  const auto up = loss_gradient(m, s.hidden(), std::vector<double>(m.cfg.d_model, 0.0),
                                {3, 4}, cfg);
  for (double g : up.gradient) REQUIRE(g == 0.0);
  for (double d : up.delta) REQUIRE(d == 0.0);
}

TEST_CASE("at dh = 0 the KL term contributes no gradient") {
  const Model m = tiny_model(20, 4);
  Rng rng(9);
  DecoderSession s = random_session(m, rng);
  SteerConfig cfg;
  cfg.alpha = 0.0;
  cfg.beta = 1.0;
  const auto up = loss_gradient(m, s.hidden(), std::vector<double>(m.cfg.d_model, 0.0),
                                {3, 4}, cfg);
  for (double g : up.gradient) REQUIRE_THAT(g, Catch::Matchers::WithinAbs(0.0, 1e-12));
}

TEST_CASE("analytic gradient matches central finite differences") {
  const Model m = tiny_model(40, 17);
  Rng rng(2718);
  const double eps = 1e-4;
  for (int trial = 0; trial < 20; ++trial) {
    DecoderSession s = random_session(m, rng);
    const std::vector<int> bag = random_bag(m, rng);
    SteerConfig cfg;
    cfg.alpha = 0.1 + rng.next_double() * 2.0;
    cfg.beta = rng.next_double() * 0.5;
    std::vector<double> dh(m.cfg.d_model);
    for (double& x : dh) x = rng.next_gaussian() * 0.05;

    const auto up = loss_gradient(m, s.hidden(), dh, bag, cfg);
    std::vector<double> fd(m.cfg.d_model);
    std::vector<double> probe = dh;
    for (int i = 0; i < m.cfg.d_model; ++i) {
      probe[i] = dh[i] + eps;
      const double up_val = combined_loss_at(m, s.hidden(), probe, bag, cfg);
      probe[i] = dh[i] - eps;
      const double down_val = combined_loss_at(m, s.hidden(), probe, bag, cfg);
      probe[i] = dh[i];
      fd[i] = (up_val - down_val) / (2.0 * eps);
    }
    double num = 0.0, den = 0.0;
    for (int i = 0; i < m.cfg.d_model; ++i) {
      num += (up.gradient[i] - fd[i]) * (up.gradient[i] - fd[i]);
      den += fd[i] * fd[i];
    }
    REQUIRE(den > 0.0);
    REQUIRE(std::sqrt(num / den) < 1e-3);
  }
}

TEST_CASE("perturb with zero step leaves the distribution untouched") {
  const Model m = tiny_model(25, 21);
  Rng rng(4);
  DecoderSession s = random_session(m, rng);
  SteerConfig cfg;
  cfg.step_size = 0.0;
  const auto [dh, losses] = perturb(s, {3, 5}, cfg);
  for (double x : dh) REQUIRE(x == 0.0);
  const auto cond = conditional_distribution(s, {3, 5}, cfg);
  const auto unc = s.probs();
  for (std::size_t v = 0; v < cond.size(); ++v) REQUIRE(cond[v] == unc[v]);
}

TEST_CASE("the smallest grid step always descends the bow loss") {
  const Model m = tiny_model(30, 31);
  Rng rng(606);
  for (int trial = 0; trial < 50; ++trial) {
    DecoderSession s = random_session(m, rng);
    const std::vector<int> bag = random_bag(m, rng);
    const double before = bow_loss(s.probs(), bag);
    bool smallest_descends = false;
    for (double step : {1e-3, 1e-2, 3e-2}) {
      SteerConfig cfg;
      cfg.alpha = 1.0;
      cfg.beta = 0.0;
      cfg.step_size = step;
      const auto [dh, losses] = perturb(s, bag, cfg);
      if (step == 1e-3) smallest_descends = losses.bow < before;
    }
    REQUIRE(smallest_descends);
  }
}

TEST_CASE("perturbation never decreases the bag mass at small steps") {
  const Model m = tiny_model(30, 41);
  Rng rng(707);
  for (int trial = 0; trial < 100; ++trial) {
    DecoderSession s = random_session(m, rng);
    const std::vector<int> bag = random_bag(m, rng);
    SteerConfig cfg;
    cfg.alpha = 1.0;
    cfg.beta = 0.0;
    cfg.step_size = 1e-3;
    const auto before_dist = s.probs();
    const auto after_dist = conditional_distribution(s, bag, cfg);
    double before = 0.0, after = 0.0;
    for (int w : bag) {
      before += before_dist[w];
      after += after_dist[w];
    }
    REQUIRE(after >= before);
  }
}

TEST_CASE("zero steering reproduces the unconditional sampler draw by draw") {
  const Model m = tiny_model(30, 51);
  Rng outer(12);
  for (int trial = 0; trial < 20; ++trial) {
    DecoderSession s = random_session(m, outer);
    SteerConfig cfg;
    cfg.alpha = 0.0;
    cfg.beta = 0.0;
    Rng r1(trial + 1), r2(trial + 1);
    const int steered = conditional_step(s, {3, 4, 5}, cfg, r1);
    const int plain = sample_next(s.probs(), cfg.decode, r2);
    REQUIRE(steered == plain);
  }
}

TEST_CASE("strong single-token steering flips greedy decoding") {
  const Model m = tiny_model(30, 61);
  Rng rng(818);
  SteerConfig cfg;
  cfg.alpha = 5.0;
  cfg.beta = 0.0;
  cfg.step_size = 2.0;
  cfg.iterations = 5;
  cfg.grad_normalize = true;
  cfg.decode = DecodeStrategy{DecodeKind::greedy, 0, 0.9};
  int steered_hits = 0, unsteered_hits = 0;
  const int trials = 100;
  for (int trial = 0; trial < trials; ++trial) {
    DecoderSession s = random_session(m, rng);
    const int target = 3 + static_cast<int>(rng.next_below(m.cfg.vocab_size - 3));
    Rng r1(1), r2(1);
    if (conditional_step(s, {target}, cfg, r1) == target) ++steered_hits;
    if (sample_next(s.probs(), cfg.decode, r2) == target) ++unsteered_hits;
  }
  REQUIRE(steered_hits > trials / 2);
  REQUIRE(steered_hits > unsteered_hits);
}

TEST_CASE("conditional generation is deterministic and capped at 30 tokens") {
  const Model m = tiny_model(40, 71);
  ClassLexicon lex;
  lex.label = "x";
  for (int i = 0; i < 5; ++i) lex.entries.push_back({"w" + std::to_string(i), 1.0 - 0.1 * i});
  SteerConfig cfg;
  cfg.alpha = 1.0;
  LengthRange range{1, 30};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto a = generate_conditional(m, lex, cfg, range, seed);
    const auto b = generate_conditional(m, lex, cfg, range, seed);
    REQUIRE(a == b);
    REQUIRE(a.size() >= 1);
    REQUIRE(a.size() <= 30);
  }
}

TEST_CASE("zero-steering generation is identical to the unconditional path") {
  const Model m = tiny_model(40, 81);
  ClassLexicon lex;
  lex.label = "x";
  lex.entries = {{"w1", 1.0}, {"w2", 0.5}};
  LengthRange range{1, 20};
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    SteerConfig zero_step;
    zero_step.step_size = 0.0;
    const auto a = generate_conditional(m, lex, zero_step, range, seed);
    SteerConfig zero_weights;
    zero_weights.alpha = 0.0;
    zero_weights.beta = 0.0;
    const auto b = generate_conditional(m, lex, zero_weights, range, seed);
    const auto c = generate_unconditional(m, zero_step.decode, range, seed);
    REQUIRE(a == c);
    REQUIRE(b == c);
  }
}

TEST_CASE("lexicon bags drop OOV entries and reject fully unknown lexicons") {
  const Model m = tiny_model(10, 91);
  ClassLexicon lex;
  lex.label = "x";
  lex.entries = {{"w1", 1.0}, {"definitelynotinvocab", 0.9}};
  std::size_t dropped = 0;
  const auto bag = bag_from_lexicon(m.tokenizer, lex, &dropped);
  REQUIRE(dropped == 1);
  REQUIRE(bag.size() == 1);

  ClassLexicon all_oov;
  all_oov.label = "y";
  all_oov.entries = {{"nopeA", 1.0}, {"nopeB", 0.5}};
  REQUIRE_THROWS(bag_from_lexicon(m.tokenizer, all_oov));
}
