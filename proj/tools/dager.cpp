// dager command line: ingest/split/downsample labeled corpora, mine class
// lexicons, train the small LM, generate class-conditional samples, augment
// training sets, train/evaluate classifiers, and run the benchmark grids.

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "dager/augment.hpp"
#include "dager/bench.hpp"
#include "dager/bench_config.hpp"
#include "dager/classify.hpp"
#include "dager/corpus.hpp"
#include "dager/lexicon.hpp"
#include "dager/steer.hpp"
#include "dager/synth.hpp"
#include "dager/trainer.hpp"

namespace {

// Canonical on-disk datasets store text as the space-joined cleaned tokens;
// re-running the preprocessor over them is the identity, so one loader
// serves raw and already-processed files alike.
dager::Dataset load_processed(const std::string& path) {
  return dager::filter_and_finalize(dager::load_corpus(path, dager::CorpusFormat::jsonl)).dataset;
}

void save_processed(const dager::Dataset& ds, const std::string& path) {
  dager::Dataset canonical = ds;
  for (auto& ex : canonical.examples) {
    std::string text;
    for (std::size_t i = 0; i < ex.tokens.size(); ++i) {
      if (i) text += ' ';
      text += ex.tokens[i];
    }
    ex.text = std::move(text);
  }
  dager::save_corpus(canonical, path);
}

std::map<std::string, std::size_t> load_stats(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open stats file " + path);
  nlohmann::json j;
  in >> j;
  std::map<std::string, std::size_t> stats;
  for (auto it = j.begin(); it != j.end(); ++it)
    stats[it.key()] = it.value().get<std::size_t>();
  return stats;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dager: generation-based data augmentation for imbalanced text classification"};
  app.require_subcommand(1);

  // ---- ingest ----
  std::string in_path, out_path, format = "jsonl";
  auto* ingest = app.add_subcommand("ingest", "load a labeled corpus, clean and filter it");
  ingest->add_option("--in", in_path)->required();
  ingest->add_option("--format", format)->check(CLI::IsMember({"jsonl", "tsv"}));
  ingest->add_option("--out", out_path)->required();
  ingest->callback([&] {
    const auto fmt = format == "tsv" ? dager::CorpusFormat::tsv : dager::CorpusFormat::jsonl;
    const auto rep = dager::filter_and_finalize(dager::load_corpus(in_path, fmt));
    save_processed(rep.dataset, out_path);
    std::cout << "kept " << rep.dataset.examples.size() << " examples (dropped "
              << rep.dropped_empty << " empty, " << rep.dropped_long << " over "
              << dager::kMaxTokens << " tokens)\n";
    for (const auto& [label, count] : rep.surviving_per_class)
      std::cout << "  " << label << ": " << count << '\n';
  });

  // ---- split ----
  double ratio = 0.8;
  std::uint64_t seed = 0;
  std::string train_out, test_out;
  auto* split = app.add_subcommand("split", "stratified train/test split");
  split->add_option("--in", in_path)->required();
  split->add_option("--ratio", ratio);
  split->add_option("--seed", seed);
  split->add_option("--train-out", train_out)->required();
  split->add_option("--test-out", test_out)->required();
  split->callback([&] {
    const auto ds = load_processed(in_path);
    const auto [train, test] = dager::stratified_split(ds, dager::SplitSpec{ratio, seed});
    save_processed(train, train_out);
    save_processed(test, test_out);
    std::cout << "train " << train.examples.size() << " / test " << test.examples.size() << '\n';
  });

  // ---- downsample ----
  double fraction = 1.0;
  auto* down = app.add_subcommand("downsample", "stratified down-sampling");
  down->add_option("--in", in_path)->required();
  down->add_option("--fraction", fraction)->required();
  down->add_option("--seed", seed);
  down->add_option("--out", out_path)->required();
  down->callback([&] {
    const auto ds = load_processed(in_path);
    const auto sub = dager::downsample(ds, fraction, seed);
    save_processed(sub, out_path);
    std::cout << "kept " << sub.examples.size() << " of " << ds.examples.size() << '\n';
  });

  // ---- stats ----
  auto* stats_cmd = app.add_subcommand("stats", "per-class counts as JSON");
  stats_cmd->add_option("--in", in_path)->required();
  stats_cmd->add_option("--out", out_path)->required();
  stats_cmd->callback([&] {
    const auto stats = dager::class_stats(load_processed(in_path));
    nlohmann::json j;
    for (const auto& [label, count] : stats) j[label] = count;
    std::ofstream out(out_path);
    out << j.dump(2) << '\n';
  });

  // ---- lexicon ----
  std::string train_path, granularity = "class";
  std::size_t top_k = 500;
  auto* lex = app.add_subcommand("lexicon", "mine per-class TF-IDF lexicons");
  lex->add_option("--train", train_path)->required();
  lex->add_option("--k", top_k);
  lex->add_option("--doc-granularity", granularity)->check(CLI::IsMember({"class", "example"}));
  lex->add_option("--out", out_path)->required();
  lex->callback([&] {
    const auto ds = load_processed(train_path);
    const auto scores = dager::score_tfidf(ds, granularity == "example"
                                                   ? dager::DocGranularity::per_example
                                                   : dager::DocGranularity::per_class);
    const auto lexicons = dager::extract_lexicons(scores, top_k);
    dager::save_lexicons(lexicons, out_path);
    for (const auto& l : lexicons)
      std::cout << l.label << ": " << l.entries.size() << " tokens\n";
  });

  // ---- train-lm ----
  std::string model_dir;
  dager::ModelConfig lm_cfg;
  lm_cfg.vocab_size = 8000;
  int epochs = 5;
  double lr = 3e-3;
  auto* train_lm_cmd = app.add_subcommand("train-lm", "train the decoder LM from scratch");
  train_lm_cmd->add_option("--corpus", in_path)->required();
  train_lm_cmd->add_option("--layers", lm_cfg.layers);
  train_lm_cmd->add_option("--dim", lm_cfg.d_model);
  train_lm_cmd->add_option("--heads", lm_cfg.heads);
  train_lm_cmd->add_option("--ffn", lm_cfg.ffn_dim);
  train_lm_cmd->add_option("--context", lm_cfg.context_length);
  train_lm_cmd->add_option("--max-vocab", lm_cfg.vocab_size);
  train_lm_cmd->add_option("--epochs", epochs);
  train_lm_cmd->add_option("--lr", lr);
  train_lm_cmd->add_option("--seed", lm_cfg.seed);
  train_lm_cmd->add_option("--out", model_dir)->required();
  train_lm_cmd->callback([&] {
    const auto corpus = load_processed(in_path);
    const auto result = dager::train_lm(corpus, lm_cfg, epochs, lr);
    dager::save_model(result.model, model_dir);
    std::cout << "loss " << result.initial_loss << " -> " << result.final_loss << " ("
              << result.model.cfg.vocab_size << " vocab)\n";
  });

  // ---- generate ----
  std::string lexicon_path, class_label;
  std::size_t n_samples = 10;
  dager::SteerConfig steer;
  dager::LengthRange gen_range;
  auto* gen = app.add_subcommand("generate", "class-conditional generation");
  gen->add_option("--model", model_dir)->required();
  gen->add_option("--lexicon", lexicon_path)->required();
  gen->add_option("--class", class_label)->required();
  gen->add_option("--n", n_samples);
  gen->add_option("--alpha", steer.alpha);
  gen->add_option("--beta", steer.beta);
  gen->add_option("--step", steer.step_size);
  gen->add_option("--iters", steer.iterations);
  gen->add_option("--topk", steer.decode.k);
  gen->add_flag("--grad-normalize", steer.grad_normalize);
  gen->add_option("--min-len", gen_range.min_tokens);
  gen->add_option("--max-len", gen_range.max_tokens);
  gen->add_option("--seed", seed);
  gen->add_option("--out", out_path)->required();
  gen->callback([&] {
    const auto model = dager::load_model(model_dir);
    const auto lexicons = dager::load_lexicons(lexicon_path);
    const auto& lex = dager::lexicon_for(lexicons, class_label);
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot open " + out_path);
    dager::SteerStats st;
    for (std::size_t i = 0; i < n_samples; ++i) {
      const auto tokens = dager::generate_conditional(
          model, lex, steer, gen_range,
          dager::Rng::substream(seed, dager::fnv1a(class_label), i).next_u64(), &st);
      nlohmann::json rec;
      std::string text;
      for (std::size_t t = 0; t < tokens.size(); ++t) {
        if (t) text += ' ';
        text += tokens[t];
      }
      rec["text"] = text;
      rec["label"] = class_label;
      out << rec.dump() << '\n';
    }
    if (st.oov_dropped)
      std::cerr << "warning: " << st.oov_dropped << " lexicon entries outside LM vocabulary\n";
    std::cout << "wrote " << n_samples << " samples\n";
  });

  // ---- augment ----
  std::string lexicons_path, mode = "preserve", ref_stats_path;
  std::size_t target_total = 0;
  auto* aug = app.add_subcommand("augment", "fill a training set with generated samples");
  aug->add_option("--train", train_path)->required();
  aug->add_option("--model", model_dir)->required();
  aug->add_option("--lexicons", lexicons_path)->required();
  aug->add_option("--target-total", target_total)->required();
  aug->add_option("--mode", mode)->check(CLI::IsMember({"preserve", "balance"}));
  aug->add_option("--ref-stats", ref_stats_path,
                  "stats JSON giving the reference distribution for preserve mode");
  aug->add_option("--alpha", steer.alpha);
  aug->add_option("--beta", steer.beta);
  aug->add_option("--step", steer.step_size);
  aug->add_option("--iters", steer.iterations);
  aug->add_option("--topk", steer.decode.k);
  aug->add_flag("--grad-normalize", steer.grad_normalize);
  aug->add_option("--min-len", gen_range.min_tokens);
  aug->add_option("--max-len", gen_range.max_tokens);
  aug->add_option("--seed", seed);
  aug->add_option("--out", out_path)->required();
  aug->callback([&] {
    const auto train = load_processed(train_path);
    const auto model = dager::load_model(model_dir);
    const auto lexicons = dager::load_lexicons(lexicons_path);
    const auto stats = dager::class_stats(train);
    std::map<std::string, std::size_t> ref;
    if (!ref_stats_path.empty()) ref = load_stats(ref_stats_path);
    const auto plan = dager::plan_boost(
        stats, target_total,
        mode == "balance" ? dager::BoostMode::balance : dager::BoostMode::preserve_distribution,
        ref.empty() ? nullptr : &ref);
    const auto result =
        dager::augment_dataset(model, lexicons, train, plan, steer, gen_range, seed);
    save_processed(result.merged, out_path);
    std::cout << "merged " << result.merged.examples.size() << " examples";
    if (result.shortfall) std::cout << " (shortfall " << result.shortfall << ")";
    std::cout << '\n';
  });

  // ---- train-clf ----
  std::string family = "linear", clf_dir;
  dager::ClassifierSpec clf_spec;
  auto* tclf = app.add_subcommand("train-clf", "train a judgement classifier");
  tclf->add_option("--train", train_path)->required();
  tclf->add_option("--family", family)->check(CLI::IsMember({"linear", "neural"}));
  tclf->add_option("--epochs", clf_spec.epochs);
  tclf->add_option("--lr", clf_spec.learning_rate);
  tclf->add_option("--l2", clf_spec.l2);
  tclf->add_option("--embedding-dim", clf_spec.embedding_dim);
  tclf->add_option("--hidden-dim", clf_spec.hidden_dim);
  tclf->add_option("--neural-lr", clf_spec.neural_lr);
  tclf->add_option("--seed", clf_spec.seed);
  tclf->add_option("--out", clf_dir)->required();
  tclf->callback([&] {
    clf_spec.family = family == "neural" ? dager::ClassifierFamily::neural
                                         : dager::ClassifierFamily::linear_bow;
    const auto train = load_processed(train_path);
    const auto clf = dager::train_classifier(train, clf_spec);
    dager::save_classifier(clf, clf_dir);
    std::cout << "trained " << family << " classifier on " << train.examples.size()
              << " examples\n";
  });

  // ---- eval ----
  std::string test_path;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a classifier, write metrics JSON");
  eval_cmd->add_option("--clf", clf_dir)->required();
  eval_cmd->add_option("--test", test_path)->required();
  eval_cmd->add_option("--out", out_path)->required();
  eval_cmd->callback([&] {
    const auto clf = dager::load_classifier(clf_dir);
    const auto test = load_processed(test_path);
    const auto result = dager::evaluate(clf, test);
    nlohmann::json j;
    j["macro_f1"] = result.macro_f1;
    j["labels"] = result.labels;
    nlohmann::json per;
    for (std::size_t c = 0; c < result.labels.size(); ++c) {
      per[result.labels[c]] = {{"precision", result.precision[c]},
                               {"recall", result.recall[c]},
                               {"f1", result.f1[c]},
                               {"support", result.support[c]}};
    }
    j["per_class"] = per;
    j["confusion"] = result.confusion;
    std::ofstream out(out_path);
    out << j.dump(2) << '\n';
    std::cout << "macro_f1 " << result.macro_f1 << '\n';
  });

  // ---- bench ----
  std::string experiment, config_path, out_dir;
  std::uint64_t seed_flag = 0;
  bool seed_flag_set = false;
  auto* bench = app.add_subcommand("bench", "run an experiment grid");
  bench->add_option("experiment", experiment)
      ->required()
      ->check(CLI::IsMember({"starvation", "ratio", "agnostic"}));
  bench->add_option("--config", config_path)->required();
  bench->add_option("--out", out_dir)->required();
  bench->add_option("--seed", seed_flag)->each([&](const std::string&) { seed_flag_set = true; });
  bench->callback([&] {
    auto setup = dager::parse_bench_config(config_path);
    if (const char* env = std::getenv("DAGER_SEED"))
      setup.params.master_seed = std::strtoull(env, nullptr, 10);
    if (seed_flag_set) setup.params.master_seed = seed_flag;  // flag beats env

    dager::Dataset corpus = setup.corpus_path.empty()
                                ? dager::synth_corpus(setup.params.synth)
                                : load_processed(setup.corpus_path);
    const auto [train, test] = dager::stratified_split(
        corpus, dager::SplitSpec{setup.params.split_ratio, setup.params.master_seed});
    std::cout << "training LM on " << train.examples.size() << " examples...\n";
    const dager::Model lm = dager::train_base_lm(train, setup.params);
    dager::ExperimentReport rep;
    if (experiment == "starvation")
      rep = dager::run_starvation(train, test, lm, setup.params);
    else if (experiment == "ratio")
      rep = dager::run_ratio(train, test, lm, setup.params);
    else
      rep = dager::run_agnostic(train, test, lm, setup.params);
    dager::emit_report(rep, out_dir);
    std::cout << "report written to " << out_dir << '\n';
  });

  CLI11_PARSE(app, argc, argv);
  return 0;
}
