#pragma once

// Teacher-forcing trainer for the decoder LM: full-sequence forward with a
// tape, hand-written backward, Adam updates. The batched forward here is an
// independent code path from DecoderSession's incremental one; the tests
// cross-check the two (cache equivalence).

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "dager/model.hpp"

namespace dager {

namespace nn {

// One training sequence's intermediate state.
struct Tape {
  int T = 0;
  std::vector<int> ids;
  // x after embedding, then per layer the block-internal activations
  std::vector<double> x0;  // T*d
  struct LayerTape {
    std::vector<double> ln1_xhat, ln1_out;  // T*d
    std::vector<double> ln1_inv;            // T
    std::vector<double> q, k, v, ctx;       // T*d
    std::vector<double> att;                // heads*T*T (row t holds probs over u<=t)
    std::vector<double> x_mid;              // T*d (after attention residual)
    std::vector<double> ln2_xhat, ln2_out;  // T*d
    std::vector<double> ln2_inv;            // T
    std::vector<double> f1, h1;             // T*f (pre-/post-gelu)
    std::vector<double> x_out;              // T*d
  };
  std::vector<LayerTape> layers;
  std::vector<double> lnf_xhat, hf;  // T*d
  std::vector<double> lnf_inv;       // T
  std::vector<double> probs;         // T*v (softmaxed logits)
};

inline void lm_forward(const Model& m, const std::vector<int>& ids, Tape& tape) {
  const ModelConfig& c = m.cfg;
  const int T = static_cast<int>(ids.size());
  if (T < 1) throw std::invalid_argument("lm_forward: empty sequence");
  if (T > c.context_length) throw std::runtime_error("lm_forward: sequence exceeds context");
  const int d = c.d_model, heads = c.heads, dh = d / heads, f = c.ffn_dim, v = c.vocab_size;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  tape.T = T;
  tape.ids = ids;
  tape.x0.assign(static_cast<std::size_t>(T) * d, 0.0);
  tape.layers.assign(c.layers, {});
  for (int t = 0; t < T; ++t) {
    const float* emb = m.tok_emb() + static_cast<std::size_t>(ids[t]) * d;
    const float* pe = m.pos_emb() + static_cast<std::size_t>(t) * d;
    double* x = tape.x0.data() + static_cast<std::size_t>(t) * d;
    for (int i = 0; i < d; ++i) x[i] = static_cast<double>(emb[i]) + static_cast<double>(pe[i]);
  }

  const std::vector<double>* x_in = &tape.x0;
  for (int l = 0; l < c.layers; ++l) {
    auto& lt = tape.layers[l];
    lt.ln1_xhat.resize(static_cast<std::size_t>(T) * d);
    lt.ln1_out.resize(static_cast<std::size_t>(T) * d);
    lt.ln1_inv.resize(T);
    lt.q.resize(static_cast<std::size_t>(T) * d);
    lt.k.resize(static_cast<std::size_t>(T) * d);
    lt.v.resize(static_cast<std::size_t>(T) * d);
    lt.ctx.assign(static_cast<std::size_t>(T) * d, 0.0);
    lt.att.assign(static_cast<std::size_t>(heads) * T * T, 0.0);
    lt.x_mid.resize(static_cast<std::size_t>(T) * d);
    lt.ln2_xhat.resize(static_cast<std::size_t>(T) * d);
    lt.ln2_out.resize(static_cast<std::size_t>(T) * d);
    lt.ln2_inv.resize(T);
    lt.f1.resize(static_cast<std::size_t>(T) * f);
    lt.h1.resize(static_cast<std::size_t>(T) * f);
    lt.x_out.resize(static_cast<std::size_t>(T) * d);

    for (int t = 0; t < T; ++t) {
      const double* x = x_in->data() + static_cast<std::size_t>(t) * d;
      double* y = lt.ln1_out.data() + static_cast<std::size_t>(t) * d;
      double* xh = lt.ln1_xhat.data() + static_cast<std::size_t>(t) * d;
      lt.ln1_inv[t] = layernorm(x, m.layer(l, 0), m.layer(l, 1), d, y, xh);
      matvec(m.layer(l, 2), y, lt.q.data() + static_cast<std::size_t>(t) * d, d, d);
      matvec(m.layer(l, 3), y, lt.k.data() + static_cast<std::size_t>(t) * d, d, d);
      matvec(m.layer(l, 4), y, lt.v.data() + static_cast<std::size_t>(t) * d, d, d);
    }
    for (int h = 0; h < heads; ++h) {
      const int off = h * dh;
      for (int t = 0; t < T; ++t) {
        double* row = lt.att.data() + (static_cast<std::size_t>(h) * T + t) * T;
        const double* qt = lt.q.data() + static_cast<std::size_t>(t) * d + off;
        for (int u = 0; u <= t; ++u) {
          const double* ku = lt.k.data() + static_cast<std::size_t>(u) * d + off;
          double dot = 0.0;
          for (int i = 0; i < dh; ++i) dot += qt[i] * ku[i];
          row[u] = dot * scale;
        }
        softmax_inplace(row, t + 1);
        double* ct = lt.ctx.data() + static_cast<std::size_t>(t) * d + off;
        for (int u = 0; u <= t; ++u) {
          const double* vu = lt.v.data() + static_cast<std::size_t>(u) * d + off;
          const double a = row[u];
          for (int i = 0; i < dh; ++i) ct[i] += a * vu[i];
        }
      }
    }
    std::vector<double> proj(d);
    for (int t = 0; t < T; ++t) {
      matvec(m.layer(l, 5), lt.ctx.data() + static_cast<std::size_t>(t) * d, proj.data(), d, d);
      const double* x = x_in->data() + static_cast<std::size_t>(t) * d;
      double* xm = lt.x_mid.data() + static_cast<std::size_t>(t) * d;
      for (int i = 0; i < d; ++i) xm[i] = x[i] + proj[i];

      double* y2 = lt.ln2_out.data() + static_cast<std::size_t>(t) * d;
      double* xh2 = lt.ln2_xhat.data() + static_cast<std::size_t>(t) * d;
      lt.ln2_inv[t] = layernorm(xm, m.layer(l, 6), m.layer(l, 7), d, y2, xh2);
      double* f1t = lt.f1.data() + static_cast<std::size_t>(t) * f;
      matvec(m.layer(l, 8), y2, f1t, f, d);
      const float* b1 = m.layer(l, 9);
      double* h1t = lt.h1.data() + static_cast<std::size_t>(t) * f;
      for (int i = 0; i < f; ++i) {
        f1t[i] += static_cast<double>(b1[i]);
        h1t[i] = gelu(f1t[i]);
      }
      matvec(m.layer(l, 10), h1t, proj.data(), d, f);
      const float* b2 = m.layer(l, 11);
      double* xo = lt.x_out.data() + static_cast<std::size_t>(t) * d;
      for (int i = 0; i < d; ++i) xo[i] = xm[i] + proj[i] + static_cast<double>(b2[i]);
    }
    x_in = &lt.x_out;
  }

  tape.lnf_xhat.resize(static_cast<std::size_t>(T) * d);
  tape.hf.resize(static_cast<std::size_t>(T) * d);
  tape.lnf_inv.resize(T);
  tape.probs.resize(static_cast<std::size_t>(T) * v);
  for (int t = 0; t < T; ++t) {
    const double* x = x_in->data() + static_cast<std::size_t>(t) * d;
    double* hf = tape.hf.data() + static_cast<std::size_t>(t) * d;
    double* xh = tape.lnf_xhat.data() + static_cast<std::size_t>(t) * d;
    tape.lnf_inv[t] = layernorm(x, m.ln_f_g(), m.ln_f_b(), d, hf, xh);
    double* z = tape.probs.data() + static_cast<std::size_t>(t) * v;
    m.head_logits(hf, z);
  }
}

// Logits of the last position from a full (non-cached) forward pass.
inline std::vector<double> full_forward_last_logits(const Model& m, const std::vector<int>& ids) {
  Tape tape;
  lm_forward(m, ids, tape);
  const int v = m.cfg.vocab_size;
  return std::vector<double>(tape.probs.begin() + static_cast<std::size_t>(tape.T - 1) * v,
                             tape.probs.begin() + static_cast<std::size_t>(tape.T) * v);
}

struct Grads {
  std::vector<std::vector<double>> g;  // parallel to Model::tensors

  explicit Grads(const Model& m) {
    g.reserve(m.tensors.size());
    for (const auto& t : m.tensors) g.emplace_back(t.size(), 0.0);
  }
  void zero() {
    for (auto& t : g) std::fill(t.begin(), t.end(), 0.0);
  }
  double* tok_emb() { return g[0].data(); }
  double* pos_emb() { return g[1].data(); }
  double* layer(const Model& m, int l, int which) {
    return g[2 + static_cast<std::size_t>(l) * Model::kPerLayer + which].data();
  }
  double* ln_f_g() { return g[g.size() - 2].data(); }
  double* ln_f_b() { return g[g.size() - 1].data(); }
};

namespace detail {

// dW += dy ⊗ x (W is [out x in])
inline void outer_add(double* dW, const double* dy, const double* x, int out, int in) {
  for (int o = 0; o < out; ++o) {
    const double g = dy[o];
    if (g == 0.0) continue;
    double* row = dW + static_cast<std::size_t>(o) * in;
    for (int i = 0; i < in; ++i) row[i] += g * x[i];
  }
}

inline void layernorm_backward(const double* dy, const double* xhat, double inv_std,
                               const float* gamma, int d, double* dgamma, double* dbeta,
                               double* dx_add) {
  double sum_g = 0.0, sum_gx = 0.0;
  for (int i = 0; i < d; ++i) {
    const double gd = dy[i] * static_cast<double>(gamma[i]);
    dgamma[i] += dy[i] * xhat[i];
    dbeta[i] += dy[i];
    sum_g += gd;
    sum_gx += gd * xhat[i];
  }
  const double mg = sum_g / d, mgx = sum_gx / d;
  for (int i = 0; i < d; ++i) {
    const double gd = dy[i] * static_cast<double>(gamma[i]);
    dx_add[i] += inv_std * (gd - mg - xhat[i] * mgx);
  }
}

}  // namespace detail

// Cross-entropy over next-token targets; returns mean loss and accumulates
// parameter gradients for one sequence. tape.probs is softmaxed in place.
inline double lm_backward(const Model& m, Tape& tape, const std::vector<int>& targets,
                          Grads& grads) {
  const ModelConfig& c = m.cfg;
  const int T = tape.T, d = c.d_model, heads = c.heads, dh = d / heads, f = c.ffn_dim,
            v = c.vocab_size;
  if (static_cast<int>(targets.size()) != T)
    throw std::invalid_argument("lm_backward: targets/ids length mismatch");
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const double inv_T = 1.0 / T;

  double loss = 0.0;
  for (int t = 0; t < T; ++t) {
    double* z = tape.probs.data() + static_cast<std::size_t>(t) * v;
    softmax_inplace(z, v);
    loss -= std::log(std::max(z[targets[t]], 1e-300));
  }
  loss *= inv_T;

  // head + final layernorm
  std::vector<double> dx(static_cast<std::size_t>(T) * d, 0.0);
  {
    std::vector<double> dhf(d);
    for (int t = 0; t < T; ++t) {
      double* p = tape.probs.data() + static_cast<std::size_t>(t) * v;
      p[targets[t]] -= 1.0;
      for (int i = 0; i < v; ++i) p[i] *= inv_T;  // p now holds dlogits
      const double* hf = tape.hf.data() + static_cast<std::size_t>(t) * d;
      detail::outer_add(grads.tok_emb(), p, hf, v, d);
      std::fill(dhf.begin(), dhf.end(), 0.0);
      matvec_transposed_add(m.tok_emb(), p, dhf.data(), v, d);
      detail::layernorm_backward(dhf.data(),
                                 tape.lnf_xhat.data() + static_cast<std::size_t>(t) * d,
                                 tape.lnf_inv[t], m.ln_f_g(), d, grads.ln_f_g(),
                                 grads.ln_f_b(), dx.data() + static_cast<std::size_t>(t) * d);
    }
  }

  std::vector<double> df1(f), dh1(f), dctx(static_cast<std::size_t>(T) * d),
      dq(static_cast<std::size_t>(T) * d), dk(static_cast<std::size_t>(T) * d),
      dv(static_cast<std::size_t>(T) * d), dln1(d), da(0), dx_prev(static_cast<std::size_t>(T) * d);

  for (int l = c.layers - 1; l >= 0; --l) {
    auto& lt = tape.layers[l];
    const std::vector<double>& x_in = (l == 0) ? tape.x0 : tape.layers[l - 1].x_out;

    // FFN sub-block: x_out = x_mid + W2 gelu(W1 ln2(x_mid) + b1) + b2
    for (int t = 0; t < T; ++t) {
      double* dxo = dx.data() + static_cast<std::size_t>(t) * d;  // gradient at x_out[t]
      const double* h1t = lt.h1.data() + static_cast<std::size_t>(t) * f;
      const double* f1t = lt.f1.data() + static_cast<std::size_t>(t) * f;
      detail::outer_add(grads.layer(m, l, 10), dxo, h1t, d, f);
      double* db2 = grads.layer(m, l, 11);
      for (int i = 0; i < d; ++i) db2[i] += dxo[i];
      std::fill(dh1.begin(), dh1.end(), 0.0);
      matvec_transposed_add(m.layer(l, 10), dxo, dh1.data(), d, f);
      for (int i = 0; i < f; ++i) df1[i] = dh1[i] * gelu_grad(f1t[i]);
      const double* y2 = lt.ln2_out.data() + static_cast<std::size_t>(t) * d;
      detail::outer_add(grads.layer(m, l, 8), df1.data(), y2, f, d);
      double* db1 = grads.layer(m, l, 9);
      for (int i = 0; i < f; ++i) db1[i] += df1[i];
      std::fill(dln1.begin(), dln1.end(), 0.0);  // borrow as d(ln2_out)
      matvec_transposed_add(m.layer(l, 8), df1.data(), dln1.data(), f, d);
      // residual: gradient at x_mid = dxo + ln2 backward
      detail::layernorm_backward(dln1.data(),
                                 lt.ln2_xhat.data() + static_cast<std::size_t>(t) * d,
                                 lt.ln2_inv[t], m.layer(l, 6), d, grads.layer(m, l, 6),
                                 grads.layer(m, l, 7), dxo);
      // dxo now holds gradient at x_mid[t]
    }

    // attention sub-block: x_mid = x_in + Wo ctx
    std::fill(dctx.begin(), dctx.end(), 0.0);
    for (int t = 0; t < T; ++t) {
      const double* dxm = dx.data() + static_cast<std::size_t>(t) * d;
      detail::outer_add(grads.layer(m, l, 5), dxm, lt.ctx.data() + static_cast<std::size_t>(t) * d,
                        d, d);
      matvec_transposed_add(m.layer(l, 5), dxm, dctx.data() + static_cast<std::size_t>(t) * d, d,
                            d);
    }
    std::fill(dq.begin(), dq.end(), 0.0);
    std::fill(dk.begin(), dk.end(), 0.0);
    std::fill(dv.begin(), dv.end(), 0.0);
    for (int h = 0; h < heads; ++h) {
      const int off = h * dh;
      for (int t = 0; t < T; ++t) {
        const double* att = lt.att.data() + (static_cast<std::size_t>(h) * T + t) * T;
        const double* dct = dctx.data() + static_cast<std::size_t>(t) * d + off;
        da.assign(t + 1, 0.0);
        double dot_aa = 0.0;
        for (int u = 0; u <= t; ++u) {
          const double* vu = lt.v.data() + static_cast<std::size_t>(u) * d + off;
          double acc = 0.0;
          for (int i = 0; i < dh; ++i) acc += dct[i] * vu[i];
          da[u] = acc;
          dot_aa += att[u] * acc;
          double* dvu = dv.data() + static_cast<std::size_t>(u) * d + off;
          const double a = att[u];
          for (int i = 0; i < dh; ++i) dvu[i] += a * dct[i];
        }
        const double* qt = lt.q.data() + static_cast<std::size_t>(t) * d + off;
        double* dqt = dq.data() + static_cast<std::size_t>(t) * d + off;
        for (int u = 0; u <= t; ++u) {
          const double ds = att[u] * (da[u] - dot_aa) * scale;
          const double* ku = lt.k.data() + static_cast<std::size_t>(u) * d + off;
          double* dku = dk.data() + static_cast<std::size_t>(u) * d + off;
          for (int i = 0; i < dh; ++i) {
            dqt[i] += ds * ku[i];
            dku[i] += ds * qt[i];
          }
        }
      }
    }
    std::fill(dx_prev.begin(), dx_prev.end(), 0.0);
    for (int t = 0; t < T; ++t) {
      const double* y1 = lt.ln1_out.data() + static_cast<std::size_t>(t) * d;
      const double* dqt = dq.data() + static_cast<std::size_t>(t) * d;
      const double* dkt = dk.data() + static_cast<std::size_t>(t) * d;
      const double* dvt = dv.data() + static_cast<std::size_t>(t) * d;
      detail::outer_add(grads.layer(m, l, 2), dqt, y1, d, d);
      detail::outer_add(grads.layer(m, l, 3), dkt, y1, d, d);
      detail::outer_add(grads.layer(m, l, 4), dvt, y1, d, d);
      std::fill(dln1.begin(), dln1.end(), 0.0);
      matvec_transposed_add(m.layer(l, 2), dqt, dln1.data(), d, d);
      matvec_transposed_add(m.layer(l, 3), dkt, dln1.data(), d, d);
      matvec_transposed_add(m.layer(l, 4), dvt, dln1.data(), d, d);
      double* dxp = dx_prev.data() + static_cast<std::size_t>(t) * d;
      // residual: gradient flows to x_in both directly and through ln1
      const double* dxm = dx.data() + static_cast<std::size_t>(t) * d;
      for (int i = 0; i < d; ++i) dxp[i] += dxm[i];
      detail::layernorm_backward(dln1.data(),
                                 lt.ln1_xhat.data() + static_cast<std::size_t>(t) * d,
                                 lt.ln1_inv[t], m.layer(l, 0), d, grads.layer(m, l, 0),
                                 grads.layer(m, l, 1), dxp);
    }
    dx.swap(dx_prev);
    (void)x_in;
  }

  for (int t = 0; t < T; ++t) {
    const double* dx0 = dx.data() + static_cast<std::size_t>(t) * d;
    double* de = grads.tok_emb() + static_cast<std::size_t>(tape.ids[t]) * d;
    double* dp = grads.pos_emb() + static_cast<std::size_t>(t) * d;
    for (int i = 0; i < d; ++i) {
      de[i] += dx0[i];
      dp[i] += dx0[i];
    }
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Adam

class Adam {
 public:
  Adam(const Model& m, double lr) : lr_(lr) {
    m_.reserve(m.tensors.size());
    v_.reserve(m.tensors.size());
    for (const auto& t : m.tensors) {
      m_.emplace_back(t.size(), 0.0);
      v_.emplace_back(t.size(), 0.0);
    }
  }

  void step(Model& model, const Grads& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t k = 0; k < model.tensors.size(); ++k) {
      auto& w = model.tensors[k].w;
      const auto& g = grads.g[k];
      auto& mk = m_[k];
      auto& vk = v_[k];
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = g[i];
        mk[i] = beta1_ * mk[i] + (1.0 - beta1_) * gi;
        vk[i] = beta2_ * vk[i] + (1.0 - beta2_) * gi * gi;
        const double mhat = mk[i] / bc1;
        const double vhat = vk[i] / bc2;
        w[i] = static_cast<float>(static_cast<double>(w[i]) -
                                  lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

 private:
  double lr_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// ---------------------------------------------------------------------------
// training driver

struct TrainResult {
  Model model;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

inline std::vector<int> training_sequence(const Tokenizer& tok, const LabeledExample& ex,
                                          int context_length) {
  std::vector<int> ids;
  ids.reserve(ex.tokens.size() + 2);
  ids.push_back(Tokenizer::bos_id);
  for (const auto& t : ex.tokens) ids.push_back(tok.id_of(t));
  ids.push_back(Tokenizer::eos_id);
  if (static_cast<int>(ids.size()) > context_length) ids.resize(context_length);
  return ids;
}

inline double sequence_loss(const Model& m, const std::vector<int>& ids) {
  Tape tape;
  const std::vector<int> inputs(ids.begin(), ids.end() - 1);
  const std::vector<int> targets(ids.begin() + 1, ids.end());
  lm_forward(m, inputs, tape);
  const int v = m.cfg.vocab_size;
  double loss = 0.0;
  for (int t = 0; t < tape.T; ++t) {
    double* z = tape.probs.data() + static_cast<std::size_t>(t) * v;
    softmax_inplace(z, v);
    loss -= std::log(std::max(z[targets[t]], 1e-300));
  }
  return loss / tape.T;
}

}  // namespace nn

// Trains a model from scratch on the corpus text (labels unused). One Adam
// update per sequence; deterministic given config.seed.
inline nn::TrainResult train_lm(const Dataset& corpus, const ModelConfig& config, int epochs,
                                double learning_rate) {
  if (epochs < 0) throw std::invalid_argument("train_lm: epochs must be >= 0");
  ModelConfig cfg = config;
  Tokenizer tok;
  if (cfg.vocab_size > 0) {
    tok = build_tokenizer(corpus, static_cast<std::size_t>(cfg.vocab_size));
    cfg.vocab_size = tok.size();  // corpus may have fewer distinct tokens
  } else {
    throw std::invalid_argument("train_lm: vocab_size must be set (max vocabulary)");
  }
  nn::TrainResult result{Model::init(cfg, std::move(tok)), 0.0, 0.0};
  Model& m = result.model;

  std::vector<std::vector<int>> seqs;
  seqs.reserve(corpus.examples.size());
  for (const auto& ex : corpus.examples) {
    auto ids = nn::training_sequence(m.tokenizer, ex, cfg.context_length);
    if (ids.size() >= 2) seqs.push_back(std::move(ids));
  }
  if (seqs.empty()) throw std::runtime_error("train_lm: no usable sequences");

  double eval = 0.0;
  for (const auto& s : seqs) eval += nn::sequence_loss(m, s);
  result.initial_loss = eval / seqs.size();
  result.final_loss = result.initial_loss;

  nn::Adam adam(m, learning_rate);
  nn::Grads grads(m);
  nn::Tape tape;
  std::vector<std::size_t> order(seqs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= epochs; ++epoch) {
    Rng rng = Rng::substream(cfg.seed, fnv1a("train-epoch"), static_cast<std::uint64_t>(epoch));
    shuffle(order, rng);
    double epoch_loss = 0.0;
    for (std::size_t oi = 0; oi < order.size(); ++oi) {
      const auto& ids = seqs[order[oi]];
      const std::vector<int> inputs(ids.begin(), ids.end() - 1);
      const std::vector<int> targets(ids.begin() + 1, ids.end());
      grads.zero();
      nn::lm_forward(m, inputs, tape);
      const double loss = nn::lm_backward(m, tape, targets, grads);
      if (!std::isfinite(loss))
        throw std::runtime_error("train_lm: loss diverged at epoch " + std::to_string(epoch));
      epoch_loss += loss;
      adam.step(m, grads);
    }
    result.final_loss = epoch_loss / seqs.size();
  }
  return result;
}

}  // namespace dager
