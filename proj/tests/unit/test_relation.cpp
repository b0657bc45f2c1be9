#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "../support/oracles.hpp"
#include "selftime/errors.hpp"
#include "selftime/relation.hpp"

using namespace selftime;
using namespace selftime::relation;

TEST_CASE("temporal_label examples") {
  CHECK(temporal_label(300, 3, 10, 90) == 0);
  CHECK(temporal_label(300, 3, 0, 250) == 2);
  CHECK(temporal_label(300, 3, 0, 100) == 0);  // inclusive threshold
  CHECK(temporal_label(300, 3, 0, 101) == 1);
  CHECK(temporal_label(300, 3, 0, 200) == 1);
  CHECK(temporal_label(300, 3, 0, 201) == 2);
  for (int c = 2; c <= 8; ++c) CHECK(temporal_label(100, c, 37, 37) == 0);
  CHECK_THROWS_AS(temporal_label(300, 1, 0, 0), InvalidArgument);
  CHECK_THROWS_AS(temporal_label(3, 5, 0, 1), InvalidArgument);
}

TEST_CASE("temporal_label agrees with the threshold scan") {
  RngStream rng(42, 0);
  for (int i = 0; i < 2000; ++i) {
    const auto t = static_cast<std::size_t>(rng.uniform_int(2, 1200));
    const int c = static_cast<int>(rng.uniform_int(2, std::min<std::int64_t>(12, static_cast<std::int64_t>(t))));
    const auto u = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(t) - 1));
    const auto v = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(t) - 1));
    REQUIRE(temporal_label(t, c, u, v) == testing::brute_force_label(t, c, u, v));
  }
}

TEST_CASE("label_histogram matches the exhaustive oracle") {
  for (auto [t, c, l] : std::vector<std::tuple<std::size_t, int, std::size_t>>{{300, 3, 60}, {128, 5, 20}, {50, 2, 50}}) {
    const auto hist = label_histogram(t, c, l);
    const auto p = testing::exact_label_distribution(t, c, l);
    double total = 0;
    for (auto h : hist) total += static_cast<double>(h);
    CHECK(total == static_cast<double>((t - l + 1) * (t - l + 1)));
    for (std::size_t k = 0; k < hist.size(); ++k) CHECK(static_cast<double>(hist[k]) / total == doctest::Approx(p[k]));
  }
}

TEST_CASE("top label reachable when T-L > (C-1)D") {
  const std::size_t t = 300, l = 60;
  const int c = 3;
  CHECK(t - l > static_cast<std::size_t>(c - 1) * (t / c));
  CHECK(label_histogram(t, c, l).back() > 0);
}

TEST_CASE("sample_piece_pair") {
  std::vector<double> x(300);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i) * 0.5;
  TemporalRelationConfig cfg{3, 0.2};
  CHECK(cfg.piece_length(300) == 60);
  RngStream rng(1, 1);
  for (int i = 0; i < 50; ++i) {
    const auto p = sample_piece_pair(x, cfg, rng);
    REQUIRE(p.piece_u.size() == 60);
    CHECK(p.start_u <= 240);
    CHECK(p.start_v <= 240);
    for (std::size_t k = 0; k < 60; ++k) {
      CHECK(p.piece_u[k] == x[p.start_u + k]);
      CHECK(p.piece_v[k] == x[p.start_v + k]);
    }
    CHECK(p.label == temporal_label(300, 3, p.start_u, p.start_v));
  }
  SUBCASE("L = T forces both starts to 0") {
    std::vector<double> y(40, 1.0);
    RngStream r(2, 2);
    const auto p = piece_pair_at(y, 40, 3, 0, 0);
    CHECK(p.label == 0);
    const auto q = sample_piece_pair(y, TemporalRelationConfig{3, 0.999}, r);
    CHECK(q.start_u == 0);
    CHECK(q.start_v == 0);
    CHECK(q.label == 0);
  }
  SUBCASE("stratified mode draws labels evenly") {
    RngStream r(3, 3);
    TemporalRelationConfig s{3, 0.2, 1, true};
    std::vector<int> counts(3, 0);
    for (int i = 0; i < 30000; ++i) counts[static_cast<std::size_t>(sample_piece_pair(x, s, r).label)]++;
    for (int n : counts) CHECK(std::abs(n / 30000.0 - 1.0 / 3.0) < 0.02);
  }
  CHECK_THROWS_AS(piece_pair_at(x, 400, 3, 0, 0), InvalidArgument);
}

TEST_CASE("build_inter_batch") {
  std::vector<Series> mb(2, Series(32));
  for (std::size_t i = 0; i < 32; ++i) {
    mb[0][i] = std::sin(0.3 * static_cast<double>(i));
    mb[1][i] = std::cos(0.2 * static_cast<double>(i));
  }
  RngStream rng(1, 1);
  const auto policy = augment::AugmentationPolicy::standard();
  const auto b = build_inter_batch(mb, 2, policy, rng);
  CHECK(b.pair_count() == 2 * 2 * 4);
  for (std::size_t a = 0; a < 2; ++a) {
    std::size_t pos = 0, neg = 0;
    for (std::size_t m = 0; m < b.pair_count(); ++m) {
      if (b.left[m] / 2 != a) continue;
      (b.labels[m] == 1.0f ? pos : neg)++;
      if (b.labels[m] == 1.0f) CHECK(b.right[m] / 2 == a);
      else CHECK(b.right[m] / 2 == b.partner_index[a]);
    }
    CHECK(pos == 4);
    CHECK(neg == 4);
  }
  SUBCASE("128 x 16 -> 65536 pairs, partners form a derangement") {
    std::vector<Series> big(128, Series(16, 0.0));
    for (std::size_t i = 0; i < 128; ++i) big[i][i % 16] = 1.0;
    RngStream r(2, 2);
    const auto bb = build_inter_batch(big, 16, policy, r);
    CHECK(bb.pair_count() == 65536);
    for (std::size_t m = 0; m < 128; ++m) CHECK(bb.partner_index[m] != bb.anchor_index[m]);
  }
  CHECK_THROWS_AS(build_inter_batch(std::vector<Series>(1, Series(32)), 2, policy, rng), InvalidArgument);
  SUBCASE("views depend on sample ids, not batch position") {
    std::vector<std::uint64_t> ids{7, 9}, swapped{9, 7};
    RngStream r1(5, 0), r2(5, 0);
    const auto a = build_inter_batch(mb, 3, policy, r1, ids);
    std::vector<Series> mb_swapped{mb[1], mb[0]};
    const auto c = build_inter_batch(mb_swapped, 3, policy, r2, swapped);
    for (std::size_t k = 0; k < 3; ++k) {
      const auto va = a.view(0, k), vc = c.view(1, k);
      CHECK(std::equal(va.begin(), va.end(), vc.begin()));
    }
  }
}

TEST_CASE("random_partners is always a derangement") {
  RngStream rng(3, 0);
  for (std::size_t n = 2; n < 40; ++n) {
    const auto p = random_partners(n, rng);
    std::set<std::uint32_t> seen(p.begin(), p.end());
    CHECK(seen.size() == n);
    for (std::size_t i = 0; i < n; ++i) CHECK(p[i] != i);
  }
}
