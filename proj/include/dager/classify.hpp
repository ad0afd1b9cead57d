#pragma once

// Downstream judgement classifiers and the macro-F1 metric. Two families:
//   linear_bow — multinomial logistic regression over token counts,
//   neural     — mean of trained embeddings -> tanh hidden layer -> softmax.
// Both are deterministic given their seed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "dager/corpus.hpp"
#include "dager/model.hpp"

namespace dager {

enum class ClassifierFamily { linear_bow, neural };

struct ClassifierSpec {
  ClassifierFamily family = ClassifierFamily::linear_bow;
  int epochs = 150;
  double learning_rate = 0.5;   // linear: full-batch GD step
  double l2 = 1e-4;
  int embedding_dim = 32;       // neural only
  int hidden_dim = 64;          // neural only
  double neural_lr = 0.02;      // neural: Adam step
  std::uint64_t seed = 0;
};

struct EvalResult {
  std::vector<std::string> labels;
  std::vector<double> precision, recall, f1;
  std::vector<std::size_t> support;
  std::vector<std::vector<std::size_t>> confusion;  // [gold][pred]
  double macro_f1 = 0.0;
};

class Classifier {
 public:
  ClassifierSpec spec;
  std::vector<std::string> labels;          // class index -> label
  std::vector<std::string> feature_vocab;   // feature index -> token
  std::string majority_label;               // fallback for empty token lists
  // linear: weights [C x (V+1)], last column is the bias
  // neural: emb [V x E], w1 [H x E], b1 [H], w2 [C x H], b2 [C]
  std::vector<std::vector<double>> params;

  int num_classes() const { return static_cast<int>(labels.size()); }

  std::string predict_one(const std::vector<std::string>& tokens) const {
    if (tokens.empty()) return majority_label;
    const std::vector<double> scores = class_scores(tokens);
    int best = 0;
    for (int c = 1; c < num_classes(); ++c)
      if (scores[c] > scores[best]) best = c;
    return labels[best];
  }

  std::vector<std::string> predict(const std::vector<std::vector<std::string>>& texts) const {
    std::vector<std::string> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(predict_one(t));
    return out;
  }

  std::vector<double> class_scores(const std::vector<std::string>& tokens) const {
    const auto& index = feature_index();
    const int C = num_classes();
    std::vector<double> scores(C, 0.0);
    if (spec.family == ClassifierFamily::linear_bow) {
      const int V = static_cast<int>(feature_vocab.size());
      std::unordered_map<int, double> counts;
      for (const auto& t : tokens) {
        auto it = index.find(t);
        if (it != index.end()) counts[it->second] += 1.0;
      }
      for (int c = 0; c < C; ++c) {
        const auto& w = params[c];
        double acc = w[V];  // bias
        for (const auto& [feat, cnt] : counts) acc += w[feat] * cnt;
        scores[c] = acc;
      }
    } else {
      const int E = spec.embedding_dim, H = spec.hidden_dim;
      std::vector<double> mean(E, 0.0);
      std::size_t known = 0;
      for (const auto& t : tokens) {
        auto it = index.find(t);
        if (it == index.end()) continue;
        const double* e = params[0].data() + static_cast<std::size_t>(it->second) * E;
        for (int i = 0; i < E; ++i) mean[i] += e[i];
        ++known;
      }
      if (known > 0)
        for (double& x : mean) x /= static_cast<double>(known);
      std::vector<double> hidden(H);
      for (int h = 0; h < H; ++h) {
        const double* row = params[1].data() + static_cast<std::size_t>(h) * E;
        double acc = params[2][h];
        for (int i = 0; i < E; ++i) acc += row[i] * mean[i];
        hidden[h] = std::tanh(acc);
      }
      for (int c = 0; c < C; ++c) {
        const double* row = params[3].data() + static_cast<std::size_t>(c) * H;
        double acc = params[4][c];
        for (int i = 0; i < H; ++i) acc += row[i] * hidden[i];
        scores[c] = acc;
      }
    }
    return scores;
  }

 private:
  const std::unordered_map<std::string, int>& feature_index() const {
    if (feature_index_.size() != feature_vocab.size()) {
      feature_index_.clear();
      for (int i = 0; i < static_cast<int>(feature_vocab.size()); ++i)
        feature_index_.emplace(feature_vocab[i], i);
    }
    return feature_index_;
  }
  mutable std::unordered_map<std::string, int> feature_index_;
};

namespace clf_detail {

struct Encoded {
  std::vector<std::vector<std::pair<int, double>>> features;  // sparse counts
  std::vector<int> gold;
};

inline Encoded encode(const Dataset& train, const std::vector<std::string>& vocab,
                      const std::vector<std::string>& labels) {
  std::unordered_map<std::string, int> vindex, lindex;
  for (int i = 0; i < static_cast<int>(vocab.size()); ++i) vindex.emplace(vocab[i], i);
  for (int i = 0; i < static_cast<int>(labels.size()); ++i) lindex.emplace(labels[i], i);
  Encoded enc;
  for (const auto& ex : train.examples) {
    std::map<int, double> counts;
    for (const auto& t : ex.tokens) {
      auto it = vindex.find(t);
      if (it != vindex.end()) counts[it->second] += 1.0;
    }
    enc.features.emplace_back(counts.begin(), counts.end());
    enc.gold.push_back(lindex.at(ex.label));
  }
  return enc;
}

inline void softmax_small(std::vector<double>& z) {
  double mx = z[0];
  for (double x : z) mx = std::max(mx, x);
  double sum = 0.0;
  for (double& x : z) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (double& x : z) x /= sum;
}

}  // namespace clf_detail

inline Classifier train_classifier(const Dataset& train, const ClassifierSpec& spec) {
  if (train.label_set.size() < 2)
    throw std::runtime_error("train_classifier: need at least 2 classes");
  Classifier clf;
  clf.spec = spec;
  clf.labels = train.label_set;

  {  // majority label, ties to the lexicographically first
    const auto stats = class_stats(train);
    std::size_t best = 0;
    for (const auto& [label, count] : stats)
      if (count > best) {
        best = count;
        clf.majority_label = label;
      }
  }

  std::set<std::string> vocab_set;
  for (const auto& ex : train.examples)
    for (const auto& t : ex.tokens) vocab_set.insert(t);
  clf.feature_vocab.assign(vocab_set.begin(), vocab_set.end());
  const int V = static_cast<int>(clf.feature_vocab.size());
  const int C = clf.num_classes();
  const auto enc = clf_detail::encode(train, clf.feature_vocab, clf.labels);
  const std::size_t n = enc.features.size();

  if (spec.family == ClassifierFamily::linear_bow) {
    clf.params.assign(C, std::vector<double>(V + 1, 0.0));
    std::vector<std::vector<double>> grad(C, std::vector<double>(V + 1, 0.0));
    std::vector<double> z(C);
    for (int epoch = 0; epoch < spec.epochs; ++epoch) {
      for (auto& g : grad) std::fill(g.begin(), g.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        for (int c = 0; c < C; ++c) {
          double acc = clf.params[c][V];
          for (const auto& [feat, cnt] : enc.features[i]) acc += clf.params[c][feat] * cnt;
          z[c] = acc;
        }
        clf_detail::softmax_small(z);
        z[enc.gold[i]] -= 1.0;
        for (int c = 0; c < C; ++c) {
          grad[c][V] += z[c];
          for (const auto& [feat, cnt] : enc.features[i]) grad[c][feat] += z[c] * cnt;
        }
      }
      const double scale = spec.learning_rate / static_cast<double>(n);
      for (int c = 0; c < C; ++c)
        for (int j = 0; j <= V; ++j)
          clf.params[c][j] -= scale * grad[c][j] +
                              spec.learning_rate * spec.l2 * clf.params[c][j];
      if (!std::isfinite(clf.params[0][0]))
        throw std::runtime_error("train_classifier: diverged at epoch " + std::to_string(epoch));
    }
  } else {
    const int E = spec.embedding_dim, H = spec.hidden_dim;
    Rng rng = Rng::substream(spec.seed, fnv1a("clf-init"));
    auto init = [&rng](std::size_t size, double scale) {
      std::vector<double> w(size);
      for (auto& x : w) x = rng.next_gaussian() * scale;
      return w;
    };
    clf.params = {init(static_cast<std::size_t>(V) * E, 0.1),
                  init(static_cast<std::size_t>(H) * E, 0.2), std::vector<double>(H, 0.0),
                  init(static_cast<std::size_t>(C) * H, 0.2), std::vector<double>(C, 0.0)};
    std::vector<std::vector<double>> m(5), v(5), grad(5);
    for (int p = 0; p < 5; ++p) {
      m[p].assign(clf.params[p].size(), 0.0);
      v[p].assign(clf.params[p].size(), 0.0);
      grad[p].assign(clf.params[p].size(), 0.0);
    }
    std::vector<double> mean(E), hpre(H), hid(H), z(C), dz(C), dhid(H), dhpre(H), dmean(E);
    long step = 0;
    for (int epoch = 0; epoch < spec.epochs; ++epoch) {
      for (auto& g : grad) std::fill(g.begin(), g.end(), 0.0);
      double loss = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        std::fill(mean.begin(), mean.end(), 0.0);
        double total = 0.0;
        for (const auto& [feat, cnt] : enc.features[i]) {
          const double* e = clf.params[0].data() + static_cast<std::size_t>(feat) * E;
          for (int k = 0; k < E; ++k) mean[k] += e[k] * cnt;
          total += cnt;
        }
        if (total > 0.0)
          for (double& x : mean) x /= total;
        for (int h = 0; h < H; ++h) {
          const double* row = clf.params[1].data() + static_cast<std::size_t>(h) * E;
          double acc = clf.params[2][h];
          for (int k = 0; k < E; ++k) acc += row[k] * mean[k];
          hpre[h] = acc;
          hid[h] = std::tanh(acc);
        }
        for (int c = 0; c < C; ++c) {
          const double* row = clf.params[3].data() + static_cast<std::size_t>(c) * H;
          double acc = clf.params[4][c];
          for (int h = 0; h < H; ++h) acc += row[h] * hid[h];
          z[c] = acc;
        }
        clf_detail::softmax_small(z);
        loss -= std::log(std::max(z[enc.gold[i]], 1e-300));
        dz = z;
        dz[enc.gold[i]] -= 1.0;
        std::fill(dhid.begin(), dhid.end(), 0.0);
        for (int c = 0; c < C; ++c) {
          double* gw2 = grad[3].data() + static_cast<std::size_t>(c) * H;
          const double* row = clf.params[3].data() + static_cast<std::size_t>(c) * H;
          for (int h = 0; h < H; ++h) {
            gw2[h] += dz[c] * hid[h];
            dhid[h] += row[h] * dz[c];
          }
          grad[4][c] += dz[c];
        }
        for (int h = 0; h < H; ++h) dhpre[h] = dhid[h] * (1.0 - hid[h] * hid[h]);
        std::fill(dmean.begin(), dmean.end(), 0.0);
        for (int h = 0; h < H; ++h) {
          double* gw1 = grad[1].data() + static_cast<std::size_t>(h) * E;
          const double* row = clf.params[1].data() + static_cast<std::size_t>(h) * E;
          for (int k = 0; k < E; ++k) {
            gw1[k] += dhpre[h] * mean[k];
            dmean[k] += row[k] * dhpre[h];
          }
          grad[2][h] += dhpre[h];
        }
        if (total > 0.0) {
          for (const auto& [feat, cnt] : enc.features[i]) {
            double* ge = grad[0].data() + static_cast<std::size_t>(feat) * E;
            const double w = cnt / total;
            for (int k = 0; k < E; ++k) ge[k] += dmean[k] * w;
          }
        }
      }
      if (!std::isfinite(loss))
        throw std::runtime_error("train_classifier: diverged at epoch " + std::to_string(epoch));
      ++step;
      const double bc1 = 1.0 - std::pow(0.9, step);
      const double bc2 = 1.0 - std::pow(0.999, step);
      const double inv_n = 1.0 / static_cast<double>(n);
      for (int p = 0; p < 5; ++p)
        for (std::size_t j = 0; j < clf.params[p].size(); ++j) {
          const double g = grad[p][j] * inv_n + spec.l2 * clf.params[p][j];
          m[p][j] = 0.9 * m[p][j] + 0.1 * g;
          v[p][j] = 0.999 * v[p][j] + 0.001 * g * g;
          clf.params[p][j] -= spec.neural_lr * (m[p][j] / bc1) / (std::sqrt(v[p][j] / bc2) + 1e-8);
        }
    }
  }
  return clf;
}

// ---------------------------------------------------------------------------
// metric

inline EvalResult macro_f1(const std::vector<std::string>& gold,
                           const std::vector<std::string>& pred,
                           const std::vector<std::string>& label_set) {
  if (gold.size() != pred.size())
    throw std::invalid_argument("macro_f1: gold/pred length mismatch");
  std::unordered_map<std::string, int> index;
  for (int i = 0; i < static_cast<int>(label_set.size()); ++i) index.emplace(label_set[i], i);
  const int C = static_cast<int>(label_set.size());
  EvalResult r;
  r.labels = label_set;
  r.confusion.assign(C, std::vector<std::size_t>(C, 0));
  for (std::size_t i = 0; i < gold.size(); ++i) {
    auto g = index.find(gold[i]);
    auto p = index.find(pred[i]);
    if (g == index.end() || p == index.end())
      throw std::invalid_argument("macro_f1: label outside label_set");
    ++r.confusion[g->second][p->second];
  }
  r.precision.assign(C, 0.0);
  r.recall.assign(C, 0.0);
  r.f1.assign(C, 0.0);
  r.support.assign(C, 0);
  double sum_f1 = 0.0;
  for (int c = 0; c < C; ++c) {
    std::size_t tp = r.confusion[c][c], fp = 0, fn = 0;
    for (int o = 0; o < C; ++o) {
      if (o == c) continue;
      fp += r.confusion[o][c];
      fn += r.confusion[c][o];
    }
    r.support[c] = tp + fn;
    r.precision[c] = (tp + fp) ? static_cast<double>(tp) / (tp + fp) : 0.0;
    r.recall[c] = (tp + fn) ? static_cast<double>(tp) / (tp + fn) : 0.0;
    r.f1[c] = (r.precision[c] + r.recall[c] > 0.0)
                  ? 2.0 * r.precision[c] * r.recall[c] / (r.precision[c] + r.recall[c])
                  : 0.0;
    sum_f1 += r.f1[c];
  }
  r.macro_f1 = C ? sum_f1 / C : 0.0;
  return r;
}

inline EvalResult evaluate(const Classifier& clf, const Dataset& test) {
  std::vector<std::vector<std::string>> texts;
  std::vector<std::string> gold;
  for (const auto& ex : test.examples) {
    texts.push_back(ex.tokens);
    gold.push_back(ex.label);
  }
  // score against the classifier's label set; test labels must be covered
  std::vector<std::string> labels = clf.labels;
  for (const auto& l : test.label_set)
    if (std::find(labels.begin(), labels.end(), l) == labels.end()) labels.push_back(l);
  std::sort(labels.begin(), labels.end());
  return macro_f1(gold, clf.predict(texts), labels);
}

// ---------------------------------------------------------------------------
// persistence (train-clf / eval CLI)

inline void save_classifier(const Classifier& clf, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream out(dir + "/classifier.txt");
  if (!out) throw std::runtime_error("save_classifier: cannot write " + dir);
  out << "family = "
      << (clf.spec.family == ClassifierFamily::linear_bow ? "linear" : "neural") << '\n'
      << "epochs = " << clf.spec.epochs << '\n'
      << "learning_rate = " << clf.spec.learning_rate << '\n'
      << "l2 = " << clf.spec.l2 << '\n'
      << "embedding_dim = " << clf.spec.embedding_dim << '\n'
      << "hidden_dim = " << clf.spec.hidden_dim << '\n'
      << "neural_lr = " << clf.spec.neural_lr << '\n'
      << "seed = " << clf.spec.seed << '\n'
      << "majority = " << clf.majority_label << '\n';
  out << "labels =";
  for (const auto& l : clf.labels) out << ' ' << l;
  out << '\n';
  {
    std::ofstream vout(dir + "/features.txt");
    for (const auto& t : clf.feature_vocab) vout << t << '\n';
  }
  std::ofstream blob(dir + "/params.bin", std::ios::binary);
  std::uint64_t nparams = clf.params.size();
  blob.write(reinterpret_cast<const char*>(&nparams), sizeof(nparams));
  for (const auto& p : clf.params) {
    std::uint64_t sz = p.size();
    blob.write(reinterpret_cast<const char*>(&sz), sizeof(sz));
    blob.write(reinterpret_cast<const char*>(p.data()),
               static_cast<std::streamsize>(p.size() * sizeof(double)));
  }
  if (!blob) throw std::runtime_error("save_classifier: write failed");
}

inline Classifier load_classifier(const std::string& dir) {
  Classifier clf;
  std::ifstream in(dir + "/classifier.txt");
  if (!in) throw std::runtime_error("load_classifier: cannot open " + dir);
  std::string line;
  while (std::getline(in, line)) {
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      s.erase(0, s.find_first_not_of(' '));
      s.erase(s.find_last_not_of(' ') + 1);
    };
    trim(key);
    trim(value);
    if (key == "family")
      clf.spec.family = value == "linear" ? ClassifierFamily::linear_bow
                                          : ClassifierFamily::neural;
    else if (key == "epochs") clf.spec.epochs = std::stoi(value);
    else if (key == "learning_rate") clf.spec.learning_rate = std::stod(value);
    else if (key == "l2") clf.spec.l2 = std::stod(value);
    else if (key == "embedding_dim") clf.spec.embedding_dim = std::stoi(value);
    else if (key == "hidden_dim") clf.spec.hidden_dim = std::stoi(value);
    else if (key == "neural_lr") clf.spec.neural_lr = std::stod(value);
    else if (key == "seed") clf.spec.seed = std::stoull(value);
    else if (key == "majority") clf.majority_label = value;
    else if (key == "labels") {
      std::istringstream ls(value);
      std::string l;
      while (ls >> l) clf.labels.push_back(l);
    }
  }
  {
    std::ifstream vin(dir + "/features.txt");
    if (!vin) throw std::runtime_error("load_classifier: missing features.txt");
    while (std::getline(vin, line)) clf.feature_vocab.push_back(line);
  }
  std::ifstream blob(dir + "/params.bin", std::ios::binary);
  if (!blob) throw std::runtime_error("load_classifier: missing params.bin");
  std::uint64_t nparams = 0;
  blob.read(reinterpret_cast<char*>(&nparams), sizeof(nparams));
  clf.params.resize(nparams);
  for (auto& p : clf.params) {
    std::uint64_t sz = 0;
    blob.read(reinterpret_cast<char*>(&sz), sizeof(sz));
    p.resize(sz);
    blob.read(reinterpret_cast<char*>(p.data()),
              static_cast<std::streamsize>(sz * sizeof(double)));
  }
  if (!blob) throw std::runtime_error("load_classifier: truncated params.bin");
  return clf;
}

}  // namespace dager
