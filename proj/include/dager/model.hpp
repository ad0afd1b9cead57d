#pragma once

// Decoder-only transformer, small enough to train on a CPU in minutes.
// Pre-LN blocks, learned positional embeddings, tied input/output embedding
// so the LM head is exactly the embedding matrix. Weights are held as
// float32 (the on-disk format); all arithmetic runs in double so gradient
// checks have headroom.
//
// DecoderSession is the incremental decode state: token prefix, per-layer
// key/value cache, and the current position's final hidden state (after the
// last layernorm) together with its logits. That hidden state is the vector
// the steering module perturbs.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dager/rng.hpp"
#include "dager/tokenizer.hpp"

namespace dager {

struct ModelConfig {
  int layers = 2;
  int d_model = 64;
  int heads = 4;
  int ffn_dim = 256;
  int context_length = 64;
  int vocab_size = 0;
  std::uint64_t seed = 0;

  void validate() const {
    if (layers < 1 || d_model < 1 || heads < 1 || ffn_dim < 1)
      throw std::invalid_argument("ModelConfig: dimensions must be positive");
    if (d_model % heads != 0)
      throw std::invalid_argument("ModelConfig: d_model must be divisible by heads");
    if (context_length < 32)
      throw std::invalid_argument("ModelConfig: context_length must be at least 32");
    if (vocab_size < 4)
      throw std::invalid_argument("ModelConfig: vocab_size must be at least 4");
  }
};

struct Tensor {
  std::string name;
  std::vector<int> shape;
  std::vector<float> w;

  std::size_t size() const { return w.size(); }
};

namespace nn {

inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475244));
}

inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865475244));
  const double pdf = std::exp(-0.5 * x * x) * 0.3989422804014326779;
  return cdf + x * pdf;
}

// y = W x, W row-major [out x in]
inline void matvec(const float* W, const double* x, double* y, int out, int in) {
  for (int o = 0; o < out; ++o) {
    const float* row = W + static_cast<std::size_t>(o) * in;
    double acc = 0.0;
    for (int i = 0; i < in; ++i) acc += static_cast<double>(row[i]) * x[i];
    y[o] = acc;
  }
}

// dx += W^T dy
inline void matvec_transposed_add(const float* W, const double* dy, double* dx, int out,
                                  int in) {
  for (int o = 0; o < out; ++o) {
    const float* row = W + static_cast<std::size_t>(o) * in;
    const double g = dy[o];
    if (g == 0.0) continue;
    for (int i = 0; i < in; ++i) dx[i] += static_cast<double>(row[i]) * g;
  }
}

inline void softmax_inplace(double* x, int n) {
  double mx = x[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    x[i] = std::exp(x[i] - mx);
    sum += x[i];
  }
  const double inv = 1.0 / sum;
  for (int i = 0; i < n; ++i) x[i] *= inv;
}

inline std::vector<double> softmax(std::vector<double> x) {
  softmax_inplace(x.data(), static_cast<int>(x.size()));
  return x;
}

constexpr double kLayerNormEps = 1e-5;

// returns inv_std; xhat receives the normalized input (needed for backward)
inline double layernorm(const double* x, const float* gamma, const float* beta, int d,
                        double* y, double* xhat) {
  double mean = 0.0;
  for (int i = 0; i < d; ++i) mean += x[i];
  mean /= d;
  double var = 0.0;
  for (int i = 0; i < d; ++i) {
    const double dx = x[i] - mean;
    var += dx * dx;
  }
  var /= d;
  const double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
  for (int i = 0; i < d; ++i) {
    const double n = (x[i] - mean) * inv_std;
    xhat[i] = n;
    y[i] = n * static_cast<double>(gamma[i]) + static_cast<double>(beta[i]);
  }
  return inv_std;
}

}  // namespace nn

class Model {
 public:
  ModelConfig cfg;
  Tokenizer tokenizer;
  std::vector<Tensor> tensors;  // manifest order

  // tensor layout: tok_emb, pos_emb, per layer {ln1_g, ln1_b, wq, wk, wv, wo,
  // ln2_g, ln2_b, w1, b1, w2, b2}, ln_f_g, ln_f_b
  static constexpr int kPerLayer = 12;

  static Model init(const ModelConfig& config, Tokenizer tok) {
    config.validate();
    if (tok.size() != config.vocab_size)
      throw std::invalid_argument("Model::init: tokenizer size does not match vocab_size");
    Model m;
    m.cfg = config;
    m.tokenizer = std::move(tok);
    const int d = config.d_model, f = config.ffn_dim, v = config.vocab_size;
    Rng rng = Rng::substream(config.seed, fnv1a("model-init"));
    auto normal = [&rng](std::vector<int> shape, double scale) {
      std::size_t n = 1;
      for (int s : shape) n *= static_cast<std::size_t>(s);
      std::vector<float> w(n);
      for (auto& x : w) x = static_cast<float>(rng.next_gaussian() * scale);
      return w;
    };
    auto constant = [](std::vector<int> shape, float value) {
      std::size_t n = 1;
      for (int s : shape) n *= static_cast<std::size_t>(s);
      return std::vector<float>(n, value);
    };
    auto push = [&m](std::string name, std::vector<int> shape, std::vector<float> w) {
      m.tensors.push_back(Tensor{std::move(name), std::move(shape), std::move(w)});
    };
    push("tok_emb", {v, d}, normal({v, d}, 0.02));
    push("pos_emb", {config.context_length, d}, normal({config.context_length, d}, 0.01));
    for (int l = 0; l < config.layers; ++l) {
      const std::string p = "layer" + std::to_string(l) + ".";
      push(p + "ln1_g", {d}, constant({d}, 1.0f));
      push(p + "ln1_b", {d}, constant({d}, 0.0f));
      push(p + "wq", {d, d}, normal({d, d}, 0.02));
      push(p + "wk", {d, d}, normal({d, d}, 0.02));
      push(p + "wv", {d, d}, normal({d, d}, 0.02));
      push(p + "wo", {d, d}, normal({d, d}, 0.02));
      push(p + "ln2_g", {d}, constant({d}, 1.0f));
      push(p + "ln2_b", {d}, constant({d}, 0.0f));
      push(p + "w1", {f, d}, normal({f, d}, 0.02));
      push(p + "b1", {f}, constant({f}, 0.0f));
      push(p + "w2", {d, f}, normal({d, f}, 0.02));
      push(p + "b2", {d}, constant({d}, 0.0f));
    }
    push("ln_f_g", {d}, constant({d}, 1.0f));
    push("ln_f_b", {d}, constant({d}, 0.0f));
    return m;
  }

  const Tensor& tensor(std::size_t i) const { return tensors[i]; }
  Tensor& tensor(std::size_t i) { return tensors[i]; }

  const float* tok_emb() const { return tensors[0].w.data(); }
  const float* pos_emb() const { return tensors[1].w.data(); }
  const float* layer(int l, int which) const {  // which indexes the per-layer block
    return tensors[2 + static_cast<std::size_t>(l) * kPerLayer + which].w.data();
  }
  const float* ln_f_g() const { return tensors[tensors.size() - 2].w.data(); }
  const float* ln_f_b() const { return tensors[tensors.size() - 1].w.data(); }

  // logits = tok_emb * h  (tied output head)
  void head_logits(const double* h, double* z) const {
    nn::matvec(tok_emb(), h, z, cfg.vocab_size, cfg.d_model);
  }

  std::vector<double> head_logits(const std::vector<double>& h) const {
    std::vector<double> z(cfg.vocab_size);
    head_logits(h.data(), z.data());
    return z;
  }

  // g_h = tok_emb^T g_z  (gradient of the head w.r.t. its input)
  std::vector<double> head_backward(const std::vector<double>& g_z) const {
    std::vector<double> g_h(cfg.d_model, 0.0);
    nn::matvec_transposed_add(tok_emb(), g_z.data(), g_h.data(), cfg.vocab_size, cfg.d_model);
    return g_h;
  }
};

// Incremental decoding with per-layer key/value cache. One session per
// generation stream; many sessions may share one immutable Model.
class DecoderSession {
 public:
  explicit DecoderSession(const Model& model)
      : model_(&model),
        kcache_(model.cfg.layers),
        vcache_(model.cfg.layers),
        hidden_(model.cfg.d_model, 0.0),
        logits_(model.cfg.vocab_size, 0.0) {}

  const Model& model() const { return *model_; }
  const std::vector<int>& prefix() const { return prefix_; }
  const std::vector<double>& hidden() const { return hidden_; }
  const std::vector<double>& logits() const { return logits_; }

  std::vector<double> probs() const { return nn::softmax(logits_); }

  void step(int token_id) {
    const ModelConfig& c = model_->cfg;
    if (token_id < 0 || token_id >= c.vocab_size)
      throw std::out_of_range("DecoderSession::step: token id out of range");
    const int pos = static_cast<int>(prefix_.size());
    if (pos >= c.context_length)
      throw std::runtime_error("DecoderSession::step: context length exceeded");
    const int d = c.d_model, heads = c.heads, dh = d / heads, f = c.ffn_dim;

    std::vector<double> x(d), tmp(d), xhat(d), q(d), k(d), v(d), ctx(d), h1(f), f1(f);
    const float* emb = model_->tok_emb() + static_cast<std::size_t>(token_id) * d;
    const float* pe = model_->pos_emb() + static_cast<std::size_t>(pos) * d;
    for (int i = 0; i < d; ++i) x[i] = static_cast<double>(emb[i]) + static_cast<double>(pe[i]);

    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int l = 0; l < c.layers; ++l) {
      nn::layernorm(x.data(), model_->layer(l, 0), model_->layer(l, 1), d, tmp.data(),
                    xhat.data());
      nn::matvec(model_->layer(l, 2), tmp.data(), q.data(), d, d);
      nn::matvec(model_->layer(l, 3), tmp.data(), k.data(), d, d);
      nn::matvec(model_->layer(l, 4), tmp.data(), v.data(), d, d);
      kcache_[l].insert(kcache_[l].end(), k.begin(), k.end());
      vcache_[l].insert(vcache_[l].end(), v.begin(), v.end());

      const int span = pos + 1;
      std::vector<double> scores(span);
      for (int h = 0; h < heads; ++h) {
        const int off = h * dh;
        for (int u = 0; u < span; ++u) {
          const double* ku = kcache_[l].data() + static_cast<std::size_t>(u) * d + off;
          double dot = 0.0;
          for (int i = 0; i < dh; ++i) dot += q[off + i] * ku[i];
          scores[u] = dot * scale;
        }
        nn::softmax_inplace(scores.data(), span);
        for (int i = 0; i < dh; ++i) ctx[off + i] = 0.0;
        for (int u = 0; u < span; ++u) {
          const double* vu = vcache_[l].data() + static_cast<std::size_t>(u) * d + off;
          const double a = scores[u];
          for (int i = 0; i < dh; ++i) ctx[off + i] += a * vu[i];
        }
      }
      nn::matvec(model_->layer(l, 5), ctx.data(), tmp.data(), d, d);
      for (int i = 0; i < d; ++i) x[i] += tmp[i];

      nn::layernorm(x.data(), model_->layer(l, 6), model_->layer(l, 7), d, tmp.data(),
                    xhat.data());
      nn::matvec(model_->layer(l, 8), tmp.data(), f1.data(), f, d);
      const float* b1 = model_->layer(l, 9);
      for (int i = 0; i < f; ++i) h1[i] = nn::gelu(f1[i] + static_cast<double>(b1[i]));
      nn::matvec(model_->layer(l, 10), h1.data(), tmp.data(), d, f);
      const float* b2 = model_->layer(l, 11);
      for (int i = 0; i < d; ++i) x[i] += tmp[i] + static_cast<double>(b2[i]);
    }

    nn::layernorm(x.data(), model_->ln_f_g(), model_->ln_f_b(), d, hidden_.data(), xhat.data());
    model_->head_logits(hidden_.data(), logits_.data());
    prefix_.push_back(token_id);
  }

 private:
  const Model* model_;
  std::vector<int> prefix_;
  std::vector<std::vector<double>> kcache_, vcache_;  // per layer, position-major
  std::vector<double> hidden_, logits_;
};

// ---------------------------------------------------------------------------
// persistence: config.txt + vocab.txt + manifest.txt + weights.bin (LE f32)

inline void save_model(const Model& m, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream out(dir + "/config.txt");
    if (!out) throw std::runtime_error("save_model: cannot write config.txt");
    out << "layers = " << m.cfg.layers << '\n'
        << "d_model = " << m.cfg.d_model << '\n'
        << "heads = " << m.cfg.heads << '\n'
        << "ffn_dim = " << m.cfg.ffn_dim << '\n'
        << "context_length = " << m.cfg.context_length << '\n'
        << "vocab_size = " << m.cfg.vocab_size << '\n'
        << "seed = " << m.cfg.seed << '\n';
  }
  save_vocab(m.tokenizer, dir + "/vocab.txt");
  {
    std::ofstream manifest(dir + "/manifest.txt");
    std::ofstream blob(dir + "/weights.bin", std::ios::binary);
    if (!manifest || !blob) throw std::runtime_error("save_model: cannot write weights");
    std::size_t offset = 0;
    for (const auto& t : m.tensors) {
      manifest << t.name << ' ';
      for (std::size_t i = 0; i < t.shape.size(); ++i)
        manifest << (i ? "x" : "") << t.shape[i];
      manifest << ' ' << offset << '\n';
      blob.write(reinterpret_cast<const char*>(t.w.data()),
                 static_cast<std::streamsize>(t.w.size() * sizeof(float)));
      offset += t.w.size() * sizeof(float);
    }
    if (!manifest || !blob) throw std::runtime_error("save_model: write failed");
  }
}

inline Model load_model(const std::string& dir) {
  ModelConfig cfg;
  {
    std::ifstream in(dir + "/config.txt");
    if (!in) throw std::runtime_error("load_model: cannot open " + dir + "/config.txt");
    std::string key, eq;
    while (in >> key >> eq) {
      if (eq != "=") throw std::runtime_error("load_model: malformed config.txt");
      if (key == "layers") in >> cfg.layers;
      else if (key == "d_model") in >> cfg.d_model;
      else if (key == "heads") in >> cfg.heads;
      else if (key == "ffn_dim") in >> cfg.ffn_dim;
      else if (key == "context_length") in >> cfg.context_length;
      else if (key == "vocab_size") in >> cfg.vocab_size;
      else if (key == "seed") in >> cfg.seed;
      else throw std::runtime_error("load_model: unknown config key " + key);
    }
  }
  cfg.validate();
  Tokenizer tok = load_vocab(dir + "/vocab.txt");
  if (tok.size() != cfg.vocab_size)
    throw std::runtime_error("load_model: vocab_size mismatch between config.txt and vocab.txt");

  Model probe = Model::init(cfg, tok);  // reference layout to validate against
  std::ifstream manifest(dir + "/manifest.txt");
  if (!manifest) throw std::runtime_error("load_model: cannot open manifest.txt");
  std::ifstream blob(dir + "/weights.bin", std::ios::binary);
  if (!blob) throw std::runtime_error("load_model: cannot open weights.bin");
  blob.seekg(0, std::ios::end);
  const std::size_t blob_size = static_cast<std::size_t>(blob.tellg());
  blob.seekg(0, std::ios::beg);

  std::size_t expected_offset = 0;
  std::string line;
  std::size_t idx = 0;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name, shape_str;
    std::size_t offset;
    if (!(ls >> name >> shape_str >> offset))
      throw std::runtime_error("load_model: malformed manifest line: " + line);
    if (idx >= probe.tensors.size())
      throw std::runtime_error("load_model: manifest lists too many tensors");
    Tensor& t = probe.tensors[idx];
    if (t.name != name)
      throw std::runtime_error("load_model: unexpected tensor \"" + name + "\", wanted \"" +
                               t.name + "\"");
    std::vector<int> shape;
    std::istringstream ss(shape_str);
    std::string part;
    while (std::getline(ss, part, 'x')) shape.push_back(std::stoi(part));
    if (shape != t.shape)
      throw std::runtime_error("load_model: shape mismatch for tensor \"" + name + "\"");
    if (offset != expected_offset)
      throw std::runtime_error("load_model: bad offset for tensor \"" + name + "\"");
    blob.read(reinterpret_cast<char*>(t.w.data()),
              static_cast<std::streamsize>(t.w.size() * sizeof(float)));
    if (!blob) throw std::runtime_error("load_model: truncated weights.bin");
    expected_offset += t.w.size() * sizeof(float);
    ++idx;
  }
  if (idx != probe.tensors.size())
    throw std::runtime_error("load_model: manifest lists too few tensors");
  if (expected_offset != blob_size)
    throw std::runtime_error("load_model: weights.bin size does not match manifest");
  return probe;
}

}  // namespace dager
