#pragma once

// Desk-scale reproductions of the three experiment designs: data starvation
// (train on a shrinking fraction, boost back to the full training size),
// ratio-controlled label preservation (constant training size, growing
// generated share), and classifier-agnostic gains (doubling via generation).
//
// Conventions shared by all three:
//  * fractions are of the WHOLE dataset (the training split is 80% of it),
//  * one fixed test split for every cell and repeat (checksummed),
//  * repeats use seeds master, master+1, ...,
//  * lexicons are mined only from the cell's own (possibly starved) subset,
//    never from held-out or removed data; per-cell lexicon checksums make
//    that auditable,
//  * the LM is trained once on the unlabeled text of the full training split.

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dager/augment.hpp"
#include "dager/classify.hpp"
#include "dager/corpus.hpp"
#include "dager/lexicon.hpp"
#include "dager/report.hpp"
#include "dager/steer.hpp"
#include "dager/synth.hpp"
#include "dager/trainer.hpp"

namespace dager {

struct BenchParams {
  SynthSpec synth;
  double split_ratio = 0.8;

  int lm_epochs = 5;
  double lm_lr = 3e-3;
  ModelConfig lm;  // vocab_size acts as the max vocabulary

  std::size_t lexicon_k = 20;
  SteerConfig steer;
  LengthRange gen_range{1, 12};
  BoostMode augment_mode = BoostMode::preserve_distribution;

  ClassifierSpec clf_linear;
  ClassifierSpec clf_neural;

  std::vector<double> fractions = {0.01, 0.05, 0.20, 0.40, 0.60};
  std::vector<int> ratio_originals = {80, 70, 60, 50, 40, 30, 20, 10};
  std::vector<double> agnostic_fractions = {0.20, 0.30, 0.40};
  int repeats = 5;
  std::uint64_t master_seed = 42;

  BenchParams() {
    lm.layers = 2;
    lm.d_model = 64;
    lm.heads = 4;
    lm.ffn_dim = 256;
    lm.context_length = 64;
    lm.vocab_size = 8000;
    steer.alpha = 1.0;
    steer.beta = 0.01;
    steer.step_size = 0.6;
    steer.iterations = 5;
    steer.grad_normalize = true;
    steer.decode = DecodeStrategy{DecodeKind::topk, 10, 0.9};
    clf_linear.family = ClassifierFamily::linear_bow;
    clf_linear.epochs = 120;
    clf_linear.learning_rate = 0.5;
    clf_linear.l2 = 1e-4;
    clf_neural.family = ClassifierFamily::neural;
    clf_neural.epochs = 200;
    clf_neural.embedding_dim = 24;
    clf_neural.hidden_dim = 48;
    clf_neural.neural_lr = 0.02;
    clf_neural.l2 = 1e-5;
  }
};

namespace bench_detail {

inline std::uint64_t dataset_checksum(const Dataset& ds) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& ex : ds.examples) {
    h = fnv1a(ex.label, h);
    h = fnv1a("\x1e", h);
    for (const auto& t : ex.tokens) {
      h = fnv1a(t, h);
      h = fnv1a("\x1f", h);
    }
  }
  return h;
}

inline std::uint64_t lexicon_checksum(const std::vector<ClassLexicon>& lexicons) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& lex : lexicons) {
    h = fnv1a(lex.label, h);
    for (const auto& [tok, score] : lex.entries) {
      h = fnv1a(tok, h);
      h = fnv1a(format_double(score), h);
    }
  }
  return h;
}

inline std::string fraction_cell(double f) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "fraction=%.2f", f);
  return buf;
}

inline const ClassifierSpec& family_spec(const BenchParams& p, ClassifierFamily family) {
  return family == ClassifierFamily::linear_bow ? p.clf_linear : p.clf_neural;
}

inline double run_cell_classifier(const Dataset& train, const Dataset& test,
                                  const ClassifierSpec& spec, std::uint64_t seed) {
  ClassifierSpec s = spec;
  s.seed = seed;
  return evaluate(train_classifier(train, s), test).macro_f1;
}

// Mines lexicons from `subset` and fills it to `target_total` examples with
// generated samples (preserve/balance per params). Returns the mixed set.
inline Dataset boost_subset(const Dataset& subset, std::size_t target_total,
                            const std::map<std::string, std::size_t>& reference_stats,
                            const Model& lm, const BenchParams& p, std::uint64_t seed,
                            std::vector<ClassLexicon>* lexicons_out = nullptr) {
  auto lexicons = extract_lexicons(score_tfidf(subset), p.lexicon_k);
  if (lexicons_out) *lexicons_out = lexicons;
  const BoostPlan plan = plan_boost(class_stats(subset), target_total, p.augment_mode,
                                    &reference_stats);
  return augment_dataset(lm, lexicons, subset, plan, p.steer, p.gen_range, seed).merged;
}

inline void append_config_echo(ExperimentReport& rep, const BenchParams& p) {
  auto add = [&rep](const std::string& k, const std::string& v) {
    rep.config_echo.emplace_back(k, v);
  };
  std::ostringstream labels, props, fracs, ratios, afracs;
  for (std::size_t i = 0; i < p.synth.labels.size(); ++i)
    labels << (i ? "," : "") << p.synth.labels[i];
  for (std::size_t i = 0; i < p.synth.proportions.size(); ++i)
    props << (i ? "," : "") << format_double(p.synth.proportions[i]);
  for (std::size_t i = 0; i < p.fractions.size(); ++i)
    fracs << (i ? "," : "") << format_double(p.fractions[i]);
  for (std::size_t i = 0; i < p.ratio_originals.size(); ++i)
    ratios << (i ? "," : "") << p.ratio_originals[i];
  for (std::size_t i = 0; i < p.agnostic_fractions.size(); ++i)
    afracs << (i ? "," : "") << format_double(p.agnostic_fractions[i]);
  add("labels", labels.str());
  add("proportions", props.str());
  add("total", std::to_string(p.synth.total));
  add("background_vocab", std::to_string(p.synth.background_vocab));
  add("indicators_per_class", std::to_string(p.synth.indicators_per_class));
  add("boost", format_double(p.synth.boost));
  add("len_min", std::to_string(p.synth.len_min));
  add("len_max", std::to_string(p.synth.len_max));
  add("corpus_seed", std::to_string(p.synth.seed));
  add("split_ratio", format_double(p.split_ratio));
  add("lm_layers", std::to_string(p.lm.layers));
  add("lm_dim", std::to_string(p.lm.d_model));
  add("lm_heads", std::to_string(p.lm.heads));
  add("lm_ffn", std::to_string(p.lm.ffn_dim));
  add("lm_context", std::to_string(p.lm.context_length));
  add("lm_max_vocab", std::to_string(p.lm.vocab_size));
  add("lm_epochs", std::to_string(p.lm_epochs));
  add("lm_lr", format_double(p.lm_lr));
  add("lexicon_k", std::to_string(p.lexicon_k));
  add("steer_alpha", format_double(p.steer.alpha));
  add("steer_beta", format_double(p.steer.beta));
  add("steer_step", format_double(p.steer.step_size));
  add("steer_iters", std::to_string(p.steer.iterations));
  add("steer_grad_normalize", p.steer.grad_normalize ? "true" : "false");
  add("steer_topk", std::to_string(p.steer.decode.k));
  add("gen_len_min", std::to_string(p.gen_range.min_tokens));
  add("gen_len_max", std::to_string(p.gen_range.max_tokens));
  add("augment_mode",
      p.augment_mode == BoostMode::preserve_distribution ? "preserve" : "balance");
  add("clf_linear_epochs", std::to_string(p.clf_linear.epochs));
  add("clf_linear_lr", format_double(p.clf_linear.learning_rate));
  add("clf_linear_l2", format_double(p.clf_linear.l2));
  add("clf_neural_epochs", std::to_string(p.clf_neural.epochs));
  add("clf_neural_lr", format_double(p.clf_neural.neural_lr));
  add("clf_neural_l2", format_double(p.clf_neural.l2));
  add("clf_neural_embedding_dim", std::to_string(p.clf_neural.embedding_dim));
  add("clf_neural_hidden_dim", std::to_string(p.clf_neural.hidden_dim));
  add("fractions", fracs.str());
  add("ratio_originals", ratios.str());
  add("agnostic_fractions", afracs.str());
  add("repeats", std::to_string(p.repeats));
  add("master_seed", std::to_string(p.master_seed));
}

}  // namespace bench_detail

// Trains the shared base LM on the unlabeled text of the training split.
inline Model train_base_lm(const Dataset& train, const BenchParams& p) {
  ModelConfig cfg = p.lm;
  cfg.seed = p.master_seed;
  return train_lm(train, cfg, p.lm_epochs, p.lm_lr).model;
}

inline ExperimentReport run_starvation(const Dataset& train, const Dataset& test,
                                       const Model& lm, const BenchParams& p) {
  ExperimentReport rep;
  rep.experiment = "starvation";
  bench_detail::append_config_echo(rep, p);
  rep.checksums.emplace_back("train_split", bench_detail::dataset_checksum(train));
  rep.checksums.emplace_back("test_split", bench_detail::dataset_checksum(test));
  const auto reference_stats = class_stats(train);
  const std::size_t target_total = train.examples.size();

  std::map<int, std::set<std::uint64_t>> lexicon_checksums_by_repeat;
  std::size_t cells = 0;
  for (double fraction : p.fractions) {
    const std::string cell = bench_detail::fraction_cell(fraction);
    const double train_fraction = fraction / p.split_ratio;
    if (train_fraction > 1.0 + 1e-12)
      throw std::invalid_argument("run_starvation: fraction exceeds the training share");
    for (int r = 0; r < p.repeats; ++r) {
      const std::uint64_t seed = p.master_seed + static_cast<std::uint64_t>(r);
      const Dataset subset =
          train_fraction >= 1.0 ? train : downsample(train, train_fraction, seed);
      rep.rows.push_back({cell, "baseline", r, seed,
                          bench_detail::run_cell_classifier(subset, test, p.clf_linear, seed)});
      if (subset.examples.size() >= target_total) continue;  // nothing to fill
      std::vector<ClassLexicon> lexicons;
      const Dataset boosted = bench_detail::boost_subset(subset, target_total, reference_stats,
                                                         lm, p, seed, &lexicons);
      const std::uint64_t lex_chk = bench_detail::lexicon_checksum(lexicons);
      rep.checksums.emplace_back("lexicon " + cell + " repeat=" + std::to_string(r), lex_chk);
      if (!lexicon_checksums_by_repeat[r].insert(lex_chk).second)
        throw std::runtime_error("run_starvation: identical lexicons across fractions "
                                 "(leakage guard)");
      rep.rows.push_back({cell, "boosted", r, seed,
                          bench_detail::run_cell_classifier(boosted, test, p.clf_linear, seed)});
    }
    ++cells;
  }
  if (cells != p.fractions.size())
    throw std::runtime_error("run_starvation: missing grid cells");
  rep.sort_rows();
  return rep;
}

inline ExperimentReport run_ratio(const Dataset& train, const Dataset& test, const Model& lm,
                                  const BenchParams& p) {
  ExperimentReport rep;
  rep.experiment = "ratio";
  bench_detail::append_config_echo(rep, p);
  rep.checksums.emplace_back("train_split", bench_detail::dataset_checksum(train));
  rep.checksums.emplace_back("test_split", bench_detail::dataset_checksum(test));
  const auto reference_stats = class_stats(train);
  const std::size_t target_total = train.examples.size();

  for (int original : p.ratio_originals) {
    if (original < 1 || original > 80)
      throw std::invalid_argument("run_ratio: original share must be in 1..80");
    char cell[32];
    std::snprintf(cell, sizeof(cell), "ratio=%02d/%02d", original, 80 - original);
    const double keep = static_cast<double>(original) / 80.0;
    for (int r = 0; r < p.repeats; ++r) {
      const std::uint64_t seed = p.master_seed + static_cast<std::uint64_t>(r);
      const Dataset subset = keep >= 1.0 ? train : downsample(train, keep, seed);
      Dataset mixed;
      if (subset.examples.size() >= target_total) {
        mixed = subset;
      } else {
        std::vector<ClassLexicon> lexicons;
        mixed = bench_detail::boost_subset(subset, target_total, reference_stats, lm, p, seed,
                                           &lexicons);
        rep.checksums.emplace_back(
            std::string("lexicon ") + cell + " repeat=" + std::to_string(r),
            bench_detail::lexicon_checksum(lexicons));
      }
      rep.rows.push_back({cell, "mix", r, seed,
                          bench_detail::run_cell_classifier(mixed, test, p.clf_linear, seed)});
    }
  }
  rep.sort_rows();
  return rep;
}

inline ExperimentReport run_agnostic(const Dataset& train, const Dataset& test, const Model& lm,
                                     const BenchParams& p) {
  ExperimentReport rep;
  rep.experiment = "agnostic";
  bench_detail::append_config_echo(rep, p);
  rep.checksums.emplace_back("train_split", bench_detail::dataset_checksum(train));
  rep.checksums.emplace_back("test_split", bench_detail::dataset_checksum(test));
  const auto reference_stats = class_stats(train);

  const std::vector<std::pair<std::string, ClassifierFamily>> families = {
      {"linear", ClassifierFamily::linear_bow}, {"neural", ClassifierFamily::neural}};
  for (const auto& [family_name, family] : families) {
    for (double fraction : p.agnostic_fractions) {
      char cell[64];
      std::snprintf(cell, sizeof(cell), "family=%s,fraction=%.2f", family_name.c_str(),
                    fraction);
      const double train_fraction = fraction / p.split_ratio;
      if (train_fraction > 1.0 + 1e-12)
        throw std::invalid_argument("run_agnostic: fraction exceeds the training share");
      const ClassifierSpec& spec = bench_detail::family_spec(p, family);
      for (int r = 0; r < p.repeats; ++r) {
        const std::uint64_t seed = p.master_seed + static_cast<std::uint64_t>(r);
        const Dataset subset =
            train_fraction >= 1.0 ? train : downsample(train, train_fraction, seed);
        rep.rows.push_back({cell, "baseline", r, seed,
                            bench_detail::run_cell_classifier(subset, test, spec, seed)});
        std::vector<ClassLexicon> lexicons;
        const Dataset augmented = bench_detail::boost_subset(
            subset, 2 * subset.examples.size(), reference_stats, lm, p, seed, &lexicons);
        rep.checksums.emplace_back(
            std::string("lexicon ") + cell + " repeat=" + std::to_string(r),
            bench_detail::lexicon_checksum(lexicons));
        rep.rows.push_back({cell, "augmented", r, seed,
                            bench_detail::run_cell_classifier(augmented, test, spec, seed)});
      }
    }
  }
  const std::size_t expect = families.size() * p.agnostic_fractions.size();
  std::set<std::string> cells;
  for (const auto& r : rep.rows) cells.insert(r.cell);
  if (cells.size() != expect) throw std::runtime_error("run_agnostic: missing grid cells");
  rep.sort_rows();
  return rep;
}

inline void emit_report(const ExperimentReport& rep, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  emit_report_csv(rep, out_dir + "/report.csv");
  emit_report_markdown(rep, out_dir + "/report.md");
  emit_config_echo(rep, out_dir + "/config_echo.txt");
  emit_checksums(rep, out_dir + "/checksums.txt");
}

}  // namespace dager
