#include "tokroute/routing.h"

#include <gtest/gtest.h>

#include <random>

#include "tokroute/catalog.h"
#include "tokroute/synthetic.h"

namespace tokroute {
namespace {

TEST(VocabBreaksTest, Validation) {
  EXPECT_THROW(VocabBreaks({0}), ConfigError);
  EXPECT_THROW(VocabBreaks({1, 5}), ConfigError);
  EXPECT_THROW(VocabBreaks({0, 5, 5, 9}), ConfigError);
  EXPECT_THROW(VocabBreaks({0, 5, 3}), ConfigError);
  const VocabBreaks ok({0, 100, 150, 400});
  EXPECT_EQ(ok.num_modalities(), 3u);
  EXPECT_EQ(ok.vocab_size(), 400u);
}

TEST(RouteVocabTest, HalfOpenRanges) {
  const VocabBreaks breaks({0, 100, 150, 400});
  EXPECT_EQ(route_vocab(0, breaks), 0u);
  EXPECT_EQ(route_vocab(99, breaks), 0u);
  EXPECT_EQ(route_vocab(100, breaks), 1u);
  EXPECT_EQ(route_vocab(149, breaks), 1u);
  EXPECT_EQ(route_vocab(150, breaks), 2u);
  EXPECT_EQ(route_vocab(399, breaks), 2u);
  EXPECT_THROW(route_vocab(400, breaks), IndexError);
}

TEST(RouteVocabTest, SingleModalityNeedsNoComparison) {
  const VocabBreaks breaks({0, 10});
  std::size_t count = 0;
  EXPECT_EQ(route_vocab(7, breaks, &count), 0u);
  EXPECT_EQ(count, 0u);
}

TEST(RouteVocabTest, MatchesUpperBoundOracle) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::uint32_t> b{0};
    const int m = 1 + static_cast<int>(rng() % 9);
    for (int i = 0; i < m; ++i) b.push_back(b.back() + 1 + static_cast<std::uint32_t>(rng() % 50));
    const VocabBreaks breaks(b);
    for (std::uint32_t v = 0; v < breaks.vocab_size(); ++v) {
      const auto it = std::upper_bound(b.begin(), b.end(), v);
      EXPECT_EQ(route_vocab(v, breaks), static_cast<std::uint32_t>(it - b.begin() - 1));
    }
  }
}

// Comparison count never exceeds M - 1, for any token and any feature width.
TEST(RouteVocabTest, ComparisonBoundHoldsForRandomTokens) {
  for (std::size_t m : {2u, 3u, 4u, 8u}) {
    std::vector<std::uint32_t> b;
    for (std::size_t i = 0; i <= m; ++i) b.push_back(static_cast<std::uint32_t>(i * 1000));
    const VocabBreaks breaks(b);
    std::mt19937_64 rng(m);
    std::uniform_int_distribution<std::uint32_t> pick(0, breaks.vocab_size() - 1);
    std::size_t worst = 0;
    for (int i = 0; i < 100000; ++i) {
      std::size_t count = 0;
      route_vocab(pick(rng), breaks, &count);
      worst = std::max(worst, count);
    }
    EXPECT_LE(worst, m - 1);
  }
}

TEST(RouteBatchTest, ParallelMatchesSerial) {
  for (Scenario s : kAllScenarios) {
    const auto sb = make_scenario_batch(s, {4096, 4, 32, 4, 500, 3, 5});
    const auto vp = route_batch_vocab(sb.batch, sb.breaks);
    const auto vs = serial::route_batch_vocab(sb.batch, sb.breaks);
    EXPECT_EQ(vp.targets, vs.targets);
    EXPECT_EQ(vp.num_targets, 4u);
    EXPECT_EQ(vp.provenance, Provenance::vocab);
    const auto cp = route_batch_compositional(sb.batch, sb.breaks, 3);
    const auto cs = serial::route_batch_compositional(sb.batch, sb.breaks, 3);
    EXPECT_EQ(cp.targets, cs.targets);
    EXPECT_EQ(cp.num_targets, 12u);
    EXPECT_EQ(cp.provenance, Provenance::compositional);
  }
}

TEST(RouteBatchTest, CompositionalTargetsDecompose) {
  const auto sb = make_scenario_batch(Scenario::interleaved_balanced, {256, 4, 8, 3, 100, 5, 2});
  const auto d = route_batch_compositional(sb.batch, sb.breaks, 5);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto [a, m] = decompose_index(d.targets[i], 3);
    EXPECT_EQ(a, sb.batch.adapter_ids[i]);
    EXPECT_EQ(m, route_vocab(sb.batch.vocab_ids[i], sb.breaks));
  }
}

TEST(RouteBatchTest, ErrorsPropagateFromParallelLoop) {
  auto sb = make_scenario_batch(Scenario::separated, {64, 2, 4, 2, 10, 2, 0});
  sb.batch.vocab_ids[33] = 1000;
  EXPECT_THROW(route_batch_vocab(sb.batch, sb.breaks), IndexError);
  sb.batch.vocab_ids[33] = 0;
  sb.batch.adapter_ids[5] = 7;
  EXPECT_THROW(route_batch_compositional(sb.batch, sb.breaks, 2), IndexError);
}

TEST(RouteBatchTest, PerSequenceRouting) {
  const auto sb = make_scenario_batch(Scenario::interleaved_balanced, {40, 2, 4, 2, 10, 1, 0});
  const auto d = route_batch_per_sequence(sb.batch, {{0, 1}, {1, 0}, {2, 1}, {3, 1}}, 2);
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(d.targets[i], sb.batch.seq_ids[i] == 1 ? 0u : 1u);
  }
  EXPECT_EQ(d.provenance, Provenance::per_sequence);
  EXPECT_THROW(route_batch_per_sequence(sb.batch, {{0, 1}, {1, 0}, {2, 1}}, 2), ConfigError);
}

TEST(RoutingDecisionTest, ValidateCatchesOutOfRange) {
  RoutingDecision d{{0, 1, 2}, 3, Provenance::vocab};
  EXPECT_NO_THROW(d.validate());
  d.targets[1] = 3;
  EXPECT_THROW(d.validate(), IndexError);
}

TEST(ModalityMaskTest, SmallExample) {
  const RoutingDecision d{{1, 0, 1}, 2, Provenance::vocab};
  const auto mask = modality_mask(d);
  EXPECT_TRUE(mask(0, 2));
  EXPECT_FALSE(mask(0, 1));
  EXPECT_TRUE(mask(1, 1));
  EXPECT_EQ(stable_target_order(d), (std::vector<std::uint32_t>{1, 0, 2}));
}

// Under the stable sort-by-target permutation the mask is block diagonal,
// with one block per non-empty target in ascending target order.
TEST(ModalityMaskTest, BlockDiagonalAfterStableSort) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 200;
    const std::size_t k = 1 + rng() % 8;
    RoutingDecision d{std::vector<std::uint32_t>(n), k, Provenance::vocab};
    for (auto& t : d.targets) t = static_cast<std::uint32_t>(rng() % k);
    const auto mask = modality_mask(d);
    const auto order = stable_target_order(d);

    std::vector<std::size_t> hist(k, 0);
    for (auto t : d.targets) ++hist[t];
    std::vector<std::size_t> block_of(n);
    std::size_t pos = 0, block = 0;
    for (std::size_t j = 0; j < k; ++j) {
      if (hist[j] == 0) continue;
      for (std::size_t c = 0; c < hist[j]; ++c) block_of[pos++] = block;
      ++block;
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        ASSERT_EQ(mask(order[i], order[j]), block_of[i] == block_of[j]);
      }
    }
  }
}

}  // namespace
}  // namespace tokroute
