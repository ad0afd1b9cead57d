#pragma once

// Decoding strategies over an already-normalized next-token distribution.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "dager/rng.hpp"

namespace dager {

enum class DecodeKind { greedy, topk, nucleus };

struct DecodeStrategy {
  DecodeKind kind = DecodeKind::topk;
  int k = 10;       // topk
  double p = 0.9;   // nucleus
};

namespace detail {

inline void check_distribution(const std::vector<double>& dist) {
  if (dist.empty()) throw std::invalid_argument("sample_next: empty distribution");
  double sum = 0.0;
  for (double x : dist) {
    if (!std::isfinite(x) || x < 0.0)
      throw std::invalid_argument("sample_next: distribution has invalid entries");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-6)
    throw std::invalid_argument("sample_next: distribution not normalized");
}

// ids sorted by (probability desc, id asc) so ties resolve deterministically
inline std::vector<int> ranked_ids(const std::vector<double>& dist) {
  std::vector<int> ids(dist.size());
  std::iota(ids.begin(), ids.end(), 0);
  std::sort(ids.begin(), ids.end(), [&dist](int a, int b) {
    if (dist[a] != dist[b]) return dist[a] > dist[b];
    return a < b;
  });
  return ids;
}

inline int draw(const std::vector<int>& ids, const std::vector<double>& weights, double total,
                Rng& rng) {
  const double r = rng.next_double() * total;
  double cum = 0.0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    cum += weights[i];
    if (r < cum) return ids[i];
  }
  return ids.back();
}

}  // namespace detail

inline int sample_next(const std::vector<double>& dist, const DecodeStrategy& strategy,
                       Rng& rng) {
  detail::check_distribution(dist);
  switch (strategy.kind) {
    case DecodeKind::greedy: {
      int best = 0;
      for (int i = 1; i < static_cast<int>(dist.size()); ++i)
        if (dist[i] > dist[best]) best = i;  // strict >: lowest id wins ties
      return best;
    }
    case DecodeKind::topk: {
      if (strategy.k < 1) throw std::invalid_argument("sample_next: topk needs k >= 1");
      const auto ranked = detail::ranked_ids(dist);
      const std::size_t k = std::min<std::size_t>(strategy.k, ranked.size());
      std::vector<int> ids(ranked.begin(), ranked.begin() + k);
      std::vector<double> w(k);
      double total = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        w[i] = dist[ids[i]];
        total += w[i];
      }
      if (total <= 0.0) return ids.front();
      return detail::draw(ids, w, total, rng);
    }
    case DecodeKind::nucleus: {
      if (!(strategy.p > 0.0 && strategy.p <= 1.0))
        throw std::invalid_argument("sample_next: nucleus needs p in (0,1]");
      const auto ranked = detail::ranked_ids(dist);
      std::vector<int> ids;
      std::vector<double> w;
      double total = 0.0;
      for (int id : ranked) {
        ids.push_back(id);
        w.push_back(dist[id]);
        total += dist[id];
        if (total >= strategy.p) break;
      }
      return detail::draw(ids, w, total, rng);
    }
  }
  throw std::logic_error("sample_next: unknown strategy");
}

}  // namespace dager
