#pragma once

// Boost planning and execution: decide per-class generation counts, generate
// labeled samples with per-sample rng substreams keyed by (seed, class,
// index, attempt), drop exact duplicates, and merge into the training set.

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "dager/corpus.hpp"
#include "dager/steer.hpp"

namespace dager {

enum class BoostMode { preserve_distribution, balance };

struct BoostPlan {
  BoostMode mode = BoostMode::preserve_distribution;
  std::map<std::string, std::size_t> target;    // per-class total after boosting
  std::map<std::string, std::size_t> boosting;  // target - original
};

// Targets sum to target_total exactly: floor of the ideal share per class,
// remainder by largest fractional part (ties to the lexicographically first).
inline BoostPlan plan_boost(const std::map<std::string, std::size_t>& stats,
                            std::size_t target_total, BoostMode mode,
                            const std::map<std::string, std::size_t>* reference = nullptr) {
  if (stats.empty()) throw std::invalid_argument("plan_boost: empty stats");
  std::size_t current_total = 0;
  for (const auto& [label, count] : stats) current_total += count;
  if (target_total < current_total)
    throw std::invalid_argument("plan_boost: target_total below current size");

  const std::map<std::string, std::size_t>& ref = reference ? *reference : stats;
  double ref_total = 0.0;
  for (const auto& [label, count] : ref) ref_total += static_cast<double>(count);

  BoostPlan plan;
  plan.mode = mode;
  std::vector<std::pair<double, std::string>> remainders;  // (-fraction, label)
  std::size_t assigned = 0;
  for (const auto& [label, count] : stats) {
    double ideal;
    if (mode == BoostMode::preserve_distribution) {
      auto it = ref.find(label);
      const double share = it == ref.end() ? 0.0 : static_cast<double>(it->second) / ref_total;
      ideal = share * static_cast<double>(target_total);
    } else {
      ideal = static_cast<double>(target_total) / static_cast<double>(stats.size());
    }
    const std::size_t base = static_cast<std::size_t>(ideal);
    plan.target[label] = base;
    assigned += base;
    remainders.push_back({-(ideal - static_cast<double>(base)), label});
  }
  std::sort(remainders.begin(), remainders.end());
  for (std::size_t i = 0; assigned < target_total; ++i) {
    ++plan.target[remainders[i % remainders.size()].second];
    ++assigned;
  }
  for (const auto& [label, count] : stats) {
    if (plan.target[label] < count)
      throw std::runtime_error("plan_boost: target for class \"" + label +
                               "\" is below its current count");
    plan.boosting[label] = plan.target[label] - count;
  }
  return plan;
}

// ---------------------------------------------------------------------------
// generation

inline LabeledExample make_generated(std::vector<std::string> tokens, const std::string& label) {
  LabeledExample ex;
  ex.tokens = std::move(tokens);
  std::string text;
  for (std::size_t i = 0; i < ex.tokens.size(); ++i) {
    if (i) text += ' ';
    text += ex.tokens[i];
  }
  ex.text = std::move(text);
  ex.label = label;
  ex.provenance = "generated";
  return ex;
}

inline const ClassLexicon& lexicon_for(const std::vector<ClassLexicon>& lexicons,
                                       const std::string& label) {
  for (const auto& lex : lexicons)
    if (lex.label == label) return lex;
  throw std::runtime_error("no lexicon for class \"" + label + "\"");
}

// Exactly plan.boosting[c] samples per class, labeled with the conditioning
// class. Sample i of class c uses substream (seed, fnv1a(c), i), so the
// output multiset does not depend on generation order.
inline Dataset generate_batch(const Model& model, const std::vector<ClassLexicon>& lexicons,
                              const BoostPlan& plan, const SteerConfig& cfg, LengthRange range,
                              std::uint64_t seed, SteerStats* stats = nullptr) {
  Dataset out;
  out.provenance = "generated";
  for (const auto& [label, count] : plan.boosting) {
    if (count == 0) continue;
    const ClassLexicon& lex = lexicon_for(lexicons, label);
    SteerStats local;
    SteerStats* s = stats ? stats : &local;
    const std::vector<int> bag = bag_from_lexicon(model.tokenizer, lex, &s->oov_dropped);
    for (std::size_t i = 0; i < count; ++i) {
      Rng rng = Rng::substream(seed, fnv1a(label), i);
      out.examples.push_back(
          make_generated(generate_stream(model, &bag, cfg, range, rng, s), label));
    }
  }
  return finalize_label_set(std::move(out));
}

// ---------------------------------------------------------------------------
// dedup + merge

using Regenerator =
    std::function<std::vector<std::string>(const std::string& label, std::size_t index,
                                           std::size_t attempt)>;

struct MergeResult {
  Dataset merged;
  std::size_t duplicates_dropped = 0;
  std::size_t shortfall = 0;  // slots still duplicate after the retry budget
};

inline std::string token_key(const std::vector<std::string>& tokens) {
  std::string key;
  for (const auto& t : tokens) {
    key += t;
    key += '\x1f';
  }
  return key;
}

// Generated samples whose token sequence exactly matches an original or an
// earlier generated sample are dropped. A regenerator, when provided, gets
// up to 10 fresh attempts per slot; whatever is still duplicate counts as
// shortfall rather than an error.
inline MergeResult dedup_merge(const Dataset& original, const Dataset& generated,
                               const Regenerator& regenerate = nullptr) {
  for (const auto& l : generated.label_set)
    if (std::find(original.label_set.begin(), original.label_set.end(), l) ==
        original.label_set.end())
      throw std::runtime_error("dedup_merge: generated label \"" + l +
                               "\" not in the original label schema");
  MergeResult result;
  result.merged = original;
  std::set<std::string> seen;
  for (const auto& ex : original.examples) seen.insert(token_key(ex.tokens));

  std::map<std::string, std::size_t> index_in_class;
  for (const auto& ex : generated.examples) {
    const std::size_t index = index_in_class[ex.label]++;
    if (seen.insert(token_key(ex.tokens)).second) {
      result.merged.examples.push_back(ex);
      continue;
    }
    ++result.duplicates_dropped;
    bool replaced = false;
    if (regenerate) {
      for (std::size_t attempt = 1; attempt <= 10 && !replaced; ++attempt) {
        auto tokens = regenerate(ex.label, index, attempt);
        if (seen.insert(token_key(tokens)).second) {
          result.merged.examples.push_back(make_generated(std::move(tokens), ex.label));
          replaced = true;
        }
      }
    }
    if (!replaced) ++result.shortfall;
  }
  result.merged.provenance = "mixed";
  result.merged = finalize_label_set(std::move(result.merged));
  return result;
}

// The full boosting pipeline used by the CLI and the benchmarks.
inline MergeResult augment_dataset(const Model& model, const std::vector<ClassLexicon>& lexicons,
                                   const Dataset& original, const BoostPlan& plan,
                                   const SteerConfig& cfg, LengthRange range, std::uint64_t seed,
                                   SteerStats* stats = nullptr) {
  const Dataset generated = generate_batch(model, lexicons, plan, cfg, range, seed, stats);
  Regenerator regen = [&](const std::string& label, std::size_t index, std::size_t attempt) {
    const ClassLexicon& lex = lexicon_for(lexicons, label);
    SteerStats local;
    const std::vector<int> bag = bag_from_lexicon(model.tokenizer, lex, &local.oov_dropped);
    Rng rng = Rng::substream(seed, fnv1a(label), index, attempt);
    return generate_stream(model, &bag, cfg, range, rng, stats);
  };
  return dedup_merge(original, generated, regen);
}

}  // namespace dager
