#pragma once

// key = value config files for the bench runner. Every hyperparameter of
// BenchParams is addressable; unknown keys are an error so typos do not
// silently fall back to defaults.

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dager/bench.hpp"

namespace dager {

namespace config_detail {

inline std::string trim(std::string s) {
  const auto a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(trim(part));
  return out;
}

}  // namespace config_detail

struct BenchSetup {
  BenchParams params;
  std::string corpus_path;  // empty: use the synthetic corpus
};

inline BenchSetup parse_bench_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("parse_bench_config: cannot open " + path);
  BenchSetup setup;
  BenchParams& p = setup.params;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = config_detail::trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("parse_bench_config: line " + std::to_string(lineno) +
                               " is not key = value");
    const std::string key = config_detail::trim(stripped.substr(0, eq));
    const std::string value = config_detail::trim(stripped.substr(eq + 1));
    try {
      if (key == "labels") p.synth.labels = config_detail::split_csv(value);
      else if (key == "proportions") {
        p.synth.proportions.clear();
        for (const auto& v : config_detail::split_csv(value))
          p.synth.proportions.push_back(std::stod(v));
      } else if (key == "total") p.synth.total = std::stoull(value);
      else if (key == "background_vocab") p.synth.background_vocab = std::stoull(value);
      else if (key == "indicators_per_class") p.synth.indicators_per_class = std::stoull(value);
      else if (key == "boost") p.synth.boost = std::stod(value);
      else if (key == "len_min") p.synth.len_min = std::stoi(value);
      else if (key == "len_max") p.synth.len_max = std::stoi(value);
      else if (key == "corpus_seed") p.synth.seed = std::stoull(value);
      else if (key == "corpus") setup.corpus_path = value;
      else if (key == "split_ratio") p.split_ratio = std::stod(value);
      else if (key == "lm_layers") p.lm.layers = std::stoi(value);
      else if (key == "lm_dim") p.lm.d_model = std::stoi(value);
      else if (key == "lm_heads") p.lm.heads = std::stoi(value);
      else if (key == "lm_ffn") p.lm.ffn_dim = std::stoi(value);
      else if (key == "lm_context") p.lm.context_length = std::stoi(value);
      else if (key == "lm_max_vocab") p.lm.vocab_size = std::stoi(value);
      else if (key == "lm_epochs") p.lm_epochs = std::stoi(value);
      else if (key == "lm_lr") p.lm_lr = std::stod(value);
      else if (key == "lexicon_k") p.lexicon_k = std::stoull(value);
      else if (key == "steer_alpha") p.steer.alpha = std::stod(value);
      else if (key == "steer_beta") p.steer.beta = std::stod(value);
      else if (key == "steer_step") p.steer.step_size = std::stod(value);
      else if (key == "steer_iters") p.steer.iterations = std::stoi(value);
      else if (key == "steer_grad_normalize") p.steer.grad_normalize = value == "true";
      else if (key == "steer_topk") p.steer.decode.k = std::stoi(value);
      else if (key == "gen_len_min") p.gen_range.min_tokens = std::stoi(value);
      else if (key == "gen_len_max") p.gen_range.max_tokens = std::stoi(value);
      else if (key == "augment_mode")
        p.augment_mode = value == "balance" ? BoostMode::balance
                                            : BoostMode::preserve_distribution;
      else if (key == "clf_linear_epochs") p.clf_linear.epochs = std::stoi(value);
      else if (key == "clf_linear_lr") p.clf_linear.learning_rate = std::stod(value);
      else if (key == "clf_linear_l2") p.clf_linear.l2 = std::stod(value);
      else if (key == "clf_neural_epochs") p.clf_neural.epochs = std::stoi(value);
      else if (key == "clf_neural_lr") p.clf_neural.neural_lr = std::stod(value);
      else if (key == "clf_neural_l2") p.clf_neural.l2 = std::stod(value);
      else if (key == "clf_neural_embedding_dim") p.clf_neural.embedding_dim = std::stoi(value);
      else if (key == "clf_neural_hidden_dim") p.clf_neural.hidden_dim = std::stoi(value);
      else if (key == "fractions") {
        p.fractions.clear();
        for (const auto& v : config_detail::split_csv(value)) p.fractions.push_back(std::stod(v));
      } else if (key == "ratio_originals") {
        p.ratio_originals.clear();
        for (const auto& v : config_detail::split_csv(value))
          p.ratio_originals.push_back(std::stoi(v));
      } else if (key == "agnostic_fractions") {
        p.agnostic_fractions.clear();
        for (const auto& v : config_detail::split_csv(value))
          p.agnostic_fractions.push_back(std::stod(v));
      } else if (key == "repeats") p.repeats = std::stoi(value);
      else if (key == "seed" || key == "master_seed") p.master_seed = std::stoull(value);
      else
        throw std::runtime_error("unknown key \"" + key + "\"");
    } catch (const std::runtime_error&) {
      throw;
    } catch (const std::exception& e) {
      throw std::runtime_error("parse_bench_config: bad value for \"" + key + "\" at line " +
                               std::to_string(lineno) + ": " + e.what());
    }
  }
  return setup;
}

}  // namespace dager
