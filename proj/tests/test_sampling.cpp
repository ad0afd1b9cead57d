#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "dager/sampling.hpp"

using namespace dager;

TEST_CASE("greedy picks the argmax") {
  Rng rng(1);
  REQUIRE(sample_next({0.1, 0.7, 0.2}, {DecodeKind::greedy}, rng) == 1);
}

TEST_CASE("greedy breaks ties toward the lowest id") {
  Rng rng(1);
  REQUIRE(sample_next({0.5, 0.5, 0.0}, {DecodeKind::greedy}, rng) == 0);
}

TEST_CASE("topk(2) renormalizes over the two most probable ids") {
  const std::vector<double> dist = {0.1, 0.7, 0.2};
  DecodeStrategy topk{DecodeKind::topk, 2, 0.9};
  Rng rng(777);
  int counts[3] = {0, 0, 0};
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) ++counts[sample_next(dist, topk, rng)];
  REQUIRE(counts[0] == 0);  // id 0 excluded
  const double f1 = static_cast<double>(counts[1]) / draws;
  const double f2 = static_cast<double>(counts[2]) / draws;
  REQUIRE_THAT(f1, Catch::Matchers::WithinAbs(7.0 / 9.0, 0.02));
  REQUIRE_THAT(f2, Catch::Matchers::WithinAbs(2.0 / 9.0, 0.02));
}

TEST_CASE("nucleus keeps the smallest prefix reaching p") {
  // 0.5, 0.3 reach p=0.7 -> third token never sampled
  const std::vector<double> dist = {0.3, 0.5, 0.2};
  DecodeStrategy nucleus{DecodeKind::nucleus, 0, 0.7};
  Rng rng(31);
  for (int i = 0; i < 2000; ++i) {
    const int id = sample_next(dist, nucleus, rng);
    REQUIRE(id != 2);
  }
}

TEST_CASE("nucleus with tiny p degenerates to greedy") {
  const std::vector<double> dist = {0.3, 0.5, 0.2};
  DecodeStrategy nucleus{DecodeKind::nucleus, 0, 1e-9};
  Rng rng(3);
  for (int i = 0; i < 100; ++i) REQUIRE(sample_next(dist, nucleus, rng) == 1);
}

TEST_CASE("sampling is deterministic given the rng state") {
  const std::vector<double> dist = {0.25, 0.25, 0.25, 0.25};
  DecodeStrategy topk{DecodeKind::topk, 4, 0.9};
  Rng a(123), b(123);
  for (int i = 0; i < 50; ++i) REQUIRE(sample_next(dist, topk, a) == sample_next(dist, topk, b));
}

TEST_CASE("invalid distributions are rejected") {
  Rng rng(1);
  REQUIRE_THROWS(sample_next({0.5, 0.4}, {DecodeKind::greedy}, rng));            // not normalized
  REQUIRE_THROWS(sample_next({0.5, 0.5, -0.0001}, {DecodeKind::greedy}, rng));   // negative-ish
  REQUIRE_THROWS(sample_next({0.5, std::nan("")}, {DecodeKind::greedy}, rng));   // non-finite
  REQUIRE_THROWS(sample_next({}, {DecodeKind::greedy}, rng));                    // empty
  DecodeStrategy bad_k{DecodeKind::topk, 0, 0.9};
  REQUIRE_THROWS(sample_next({1.0}, bad_k, rng));
}

TEST_CASE("topk with k larger than the vocabulary samples everything") {
  const std::vector<double> dist = {0.5, 0.25, 0.25};
  DecodeStrategy topk{DecodeKind::topk, 100, 0.9};
  Rng rng(9);
  bool seen[3] = {false, false, false};
  for (int i = 0; i < 200; ++i) seen[sample_next(dist, topk, rng)] = true;
  REQUIRE((seen[0] && seen[1] && seen[2]));
}
