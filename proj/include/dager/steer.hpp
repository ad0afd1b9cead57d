#pragma once

// Class-conditional decoding by activation perturbation. At each step the
// decoder's current hidden state h gets an additive update dh found by
// descending alpha * L_bow + beta * L_kl:
//   L_bow — negative log-likelihood the perturbed distribution assigns to
//           the class lexicon tokens (pulls generation toward the class),
//   L_kl  — KL(unconditional || perturbed) (pulls it back toward fluency).
// The gradient is closed-form: with q = softmax(head(h + dh)) and
// p = softmax(head(h)), the logit-space gradient is
// alpha * (|bag| q - 1_bag) + beta * (q - p), chained through the tied
// embedding head back to activation space. The attention cache is never
// touched; only the emitted token conditions later steps.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "dager/lexicon.hpp"
#include "dager/model.hpp"
#include "dager/sampling.hpp"

namespace dager {

struct SteerConfig {
  double alpha = 0.3;
  double beta = 0.01;
  double step_size = 0.03;
  int iterations = 3;
  bool grad_normalize = false;
  DecodeStrategy decode{DecodeKind::topk, 10, 0.9};

  void validate() const {
    if (alpha < 0.0 || beta < 0.0)
      throw std::invalid_argument("SteerConfig: alpha/beta must be nonnegative");
    if (step_size < 0.0) throw std::invalid_argument("SteerConfig: step_size must be >= 0");
    if (iterations < 1) throw std::invalid_argument("SteerConfig: iterations must be >= 1");
  }
};

struct LossBreakdown {
  double bow = 0.0;
  double kl = 0.0;
  double combined = 0.0;
};

struct SteerUpdate {
  std::vector<double> delta;     // -s * g (or -s * g/|g| when normalized)
  std::vector<double> gradient;  // activation-space gradient of the combined loss
};

inline constexpr double kProbFloor = 1e-12;

inline double bow_loss(const std::vector<double>& q, const std::vector<int>& bag,
                       std::size_t* floor_hits = nullptr) {
  if (bag.empty()) throw std::invalid_argument("bow_loss: empty bag");
  double loss = 0.0;
  for (int w : bag) {
    if (w < 0 || w >= static_cast<int>(q.size()))
      throw std::out_of_range("bow_loss: bag id outside vocabulary");
    double qa = q[w];
    if (qa < kProbFloor) {
      qa = kProbFloor;
      if (floor_hits) ++*floor_hits;
    }
    loss -= std::log(qa);
  }
  return loss;
}

// KL(p || q); terms with p(v)=0 contribute 0, q floored at 1e-12.
inline double kl_loss(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_loss: dimension mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    kl += p[i] * std::log(p[i] / std::max(q[i], kProbFloor));
  }
  return kl;
}

// Sum over a window of positions; with only the current position perturbed,
// every other term vanishes and this reduces to kl_loss on that position.
inline double kl_loss_sum(const std::vector<std::vector<double>>& ps,
                          const std::vector<std::vector<double>>& qs) {
  if (ps.size() != qs.size()) throw std::invalid_argument("kl_loss_sum: length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < ps.size(); ++i) total += kl_loss(ps[i], qs[i]);
  return total;
}

// d(alpha*L_bow + beta*L_kl)/dz' evaluated at perturbed logits z'
inline std::vector<double> combined_logit_gradient(const std::vector<double>& q,
                                                   const std::vector<double>& p,
                                                   const std::vector<int>& bag, double alpha,
                                                   double beta) {
  if (q.size() != p.size())
    throw std::invalid_argument("combined_logit_gradient: dimension mismatch");
  const double nb = static_cast<double>(bag.size());
  std::vector<double> g(q.size());
  for (std::size_t v = 0; v < q.size(); ++v) g[v] = alpha * nb * q[v] + beta * (q[v] - p[v]);
  for (int w : bag) {
    if (w < 0 || w >= static_cast<int>(q.size()))
      throw std::out_of_range("combined_logit_gradient: bag id outside vocabulary");
    g[w] -= alpha;
  }
  return g;
}

// Gradient of the combined loss w.r.t. the activation perturbation, at the
// given (h, dh). Returns both the gradient and the step it implies.
inline SteerUpdate loss_gradient(const Model& model, const std::vector<double>& h,
                                 const std::vector<double>& dh, const std::vector<int>& bag,
                                 const SteerConfig& cfg) {
  if (bag.empty()) throw std::invalid_argument("loss_gradient: empty bag");
  const int d = model.cfg.d_model;
  if (static_cast<int>(h.size()) != d || static_cast<int>(dh.size()) != d)
    throw std::invalid_argument("loss_gradient: bad activation dimension");
  for (double x : h)
    if (!std::isfinite(x)) throw std::runtime_error("loss_gradient: non-finite activation");

  std::vector<double> shifted(h);
  for (int i = 0; i < d; ++i) shifted[i] += dh[i];
  const std::vector<double> q = nn::softmax(model.head_logits(shifted));
  const std::vector<double> p = nn::softmax(model.head_logits(h));
  const std::vector<double> gz = combined_logit_gradient(q, p, bag, cfg.alpha, cfg.beta);

  SteerUpdate up;
  up.gradient = model.head_backward(gz);
  up.delta.assign(d, 0.0);
  double norm = 0.0;
  for (double x : up.gradient) norm += x * x;
  norm = std::sqrt(norm);
  const double scale =
      cfg.grad_normalize && norm > 0.0 ? cfg.step_size / norm : cfg.step_size;
  for (int i = 0; i < d; ++i) up.delta[i] = -scale * up.gradient[i];
  return up;
}

struct SteerStats {
  std::size_t floor_hits = 0;       // bag probabilities clamped at the floor
  std::size_t oov_dropped = 0;      // lexicon entries outside the LM vocabulary
};

// Accumulates dh over cfg.iterations gradient steps. The session itself is
// read-only here; the caller decides what to do with the perturbation.
inline std::pair<std::vector<double>, LossBreakdown> perturb(const DecoderSession& session,
                                                             const std::vector<int>& bag,
                                                             const SteerConfig& cfg,
                                                             SteerStats* stats = nullptr) {
  cfg.validate();
  const Model& model = session.model();
  const int d = model.cfg.d_model;
  const std::vector<double>& h = session.hidden();
  const std::vector<double> p = nn::softmax(model.head_logits(h));

  std::vector<double> dh(d, 0.0), shifted(d);
  auto losses_at = [&](const std::vector<double>& delta) {
    for (int i = 0; i < d; ++i) shifted[i] = h[i] + delta[i];
    const std::vector<double> q = nn::softmax(model.head_logits(shifted));
    LossBreakdown lb;
    lb.bow = bow_loss(q, bag, stats ? &stats->floor_hits : nullptr);
    lb.kl = kl_loss(p, q);
    lb.combined = cfg.alpha * lb.bow + cfg.beta * lb.kl;
    return lb;
  };

  for (int it = 0; it < cfg.iterations; ++it) {
    const LossBreakdown lb = losses_at(dh);
    if (!std::isfinite(lb.combined))
      throw std::runtime_error("perturb: non-finite loss at iteration " + std::to_string(it));
    const SteerUpdate up = loss_gradient(model, h, dh, bag, cfg);
    double descent = 0.0;
    for (int i = 0; i < d; ++i) descent += up.gradient[i] * up.delta[i];
    if (descent > 1e-12)
      throw std::runtime_error("perturb: update is not a descent direction");
    for (int i = 0; i < d; ++i) dh[i] += up.delta[i];
  }
  const LossBreakdown final_losses = losses_at(dh);
  if (!std::isfinite(final_losses.combined))
    throw std::runtime_error("perturb: non-finite final loss");
  return {std::move(dh), final_losses};
}

// Distribution the conditional decoder samples from at the current step.
inline std::vector<double> conditional_distribution(const DecoderSession& session,
                                                    const std::vector<int>& bag,
                                                    const SteerConfig& cfg,
                                                    SteerStats* stats = nullptr) {
  const auto [dh, losses] = perturb(session, bag, cfg, stats);
  (void)losses;
  std::vector<double> shifted(session.hidden());
  for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += dh[i];
  return nn::softmax(session.model().head_logits(shifted));
}

inline int conditional_step(const DecoderSession& session, const std::vector<int>& bag,
                            const SteerConfig& cfg, Rng& rng, SteerStats* stats = nullptr) {
  return sample_next(conditional_distribution(session, bag, cfg, stats), cfg.decode, rng);
}

// ---------------------------------------------------------------------------
// generation

struct LengthRange {
  int min_tokens = 1;
  int max_tokens = 30;
};

inline std::vector<int> bag_from_lexicon(const Tokenizer& tok, const ClassLexicon& lexicon,
                                         std::size_t* oov_dropped = nullptr) {
  std::vector<int> bag;
  for (const auto& [token, score] : lexicon.entries) {
    const int id = tok.id_of(token);
    if (id == Tokenizer::unk_id) {
      if (oov_dropped) ++*oov_dropped;
      continue;
    }
    bag.push_back(id);
  }
  if (bag.empty())
    throw std::runtime_error("bag_from_lexicon: no lexicon token for class \"" + lexicon.label +
                             "\" is in the LM vocabulary");
  return bag;
}

namespace detail {

// <bos> and <unk> are never emitted; <eos> is masked until min length.
inline void mask_and_renormalize(std::vector<double>& dist, bool allow_eos) {
  dist[Tokenizer::bos_id] = 0.0;
  dist[Tokenizer::unk_id] = 0.0;
  if (!allow_eos) dist[Tokenizer::eos_id] = 0.0;
  double sum = 0.0;
  for (double x : dist) sum += x;
  if (sum <= 0.0) throw std::runtime_error("generation: distribution fully masked");
  for (double& x : dist) x /= sum;
}

}  // namespace detail

// One generation stream. With bag == nullptr (or zero steering) this is the
// plain unconditional decoder; both paths consume the rng identically, which
// is what makes the zero-steering equivalence exact.
inline std::vector<std::string> generate_stream(const Model& model, const std::vector<int>* bag,
                                                const SteerConfig& cfg, LengthRange range,
                                                Rng& rng, SteerStats* stats = nullptr) {
  if (range.min_tokens < 1 || range.max_tokens > static_cast<int>(kMaxTokens) ||
      range.min_tokens > range.max_tokens)
    throw std::invalid_argument("generate_stream: bad length range");
  DecoderSession session(model);
  session.step(Tokenizer::bos_id);
  std::vector<std::string> tokens;
  while (static_cast<int>(tokens.size()) < range.max_tokens) {
    std::vector<double> dist = bag ? conditional_distribution(session, *bag, cfg, stats)
                                   : session.probs();
    detail::mask_and_renormalize(dist, static_cast<int>(tokens.size()) >= range.min_tokens);
    const int id = sample_next(dist, cfg.decode, rng);
    if (id == Tokenizer::eos_id) break;
    session.step(id);
    tokens.push_back(model.tokenizer.vocab[id]);
  }
  return tokens;
}

inline std::vector<std::string> generate_conditional(const Model& model,
                                                     const ClassLexicon& lexicon,
                                                     const SteerConfig& cfg, LengthRange range,
                                                     std::uint64_t seed,
                                                     SteerStats* stats = nullptr) {
  cfg.validate();
  SteerStats local;
  SteerStats* s = stats ? stats : &local;
  const std::vector<int> bag = bag_from_lexicon(model.tokenizer, lexicon, &s->oov_dropped);
  Rng rng(seed);
  return generate_stream(model, &bag, cfg, range, rng, s);
}

inline std::vector<std::string> generate_unconditional(const Model& model,
                                                       const DecodeStrategy& decode,
                                                       LengthRange range, std::uint64_t seed) {
  SteerConfig cfg;
  cfg.decode = decode;
  Rng rng(seed);
  return generate_stream(model, nullptr, cfg, range, rng);
}

}  // namespace dager
