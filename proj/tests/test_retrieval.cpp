#include <set>

#include <gtest/gtest.h>

#include "crm/error.hpp"
#include "crm/retrieval.hpp"
#include "oracles.hpp"

using namespace crm;

TEST(ExactIndex, MatchesDoubleLoopOracle) {
  for (std::uint64_t seed : {1, 2, 3}) {
    const std::size_t n = 200 + 300 * seed;
    const auto vecs = oracle::random_matrix<float>(n, 16, seed);
    const auto index = build_index(vecs, {}, seed);
    const auto queries = oracle::random_matrix<float>(100, 16, seed + 100);
    for (std::size_t q = 0; q < 100; ++q) {
      const auto res = index.search(queries.row(q), 25);
      ASSERT_EQ(res.ids, oracle::topk(vecs, queries.row(q), 25));
      for (std::size_t i = 1; i < res.scores.size(); ++i) ASSERT_GE(res.scores[i - 1], res.scores[i]);
    }
  }
}

TEST(ExactIndex, TiesGoToSmallerId) {
  Matrix vecs(4, 2, std::vector<float>{1, 0, 0, 1, 1, 0, 1, 0});
  const auto index = build_index(vecs, {}, 0);
  std::vector<float> q = {1, 0};
  const auto res = index.search(q, 3);
  EXPECT_EQ(res.ids, (std::vector<ItemId>{1, 3, 4}));
}

TEST(ExactIndex, KLargerThanIndexReturnsAll) {
  const auto vecs = oracle::random_matrix<float>(5, 3, 1);
  const auto res = build_index(vecs, {}, 0).search(vecs.row(0), 50);
  EXPECT_EQ(res.ids.size(), 5u);
  EXPECT_EQ(res.k, 50u);
  std::vector<float> wrong(4);
  EXPECT_THROW(build_index(vecs, {}, 0).search(wrong, 3), ShapeError);
}

TEST(KMeans, ObjectiveNeverIncreases) {
  const auto pts = oracle::random_matrix<float>(800, 8, 5);
  const auto km = kmeans(pts, 16, 20, 3);
  ASSERT_EQ(km.objective_trace.size(), 21u);  // seeding assignment + one per Lloyd step
  for (std::size_t i = 1; i < km.objective_trace.size(); ++i) {
    EXPECT_LE(km.objective_trace[i], km.objective_trace[i - 1] * (1 + 1e-12));
  }
  EXPECT_EQ(km.assignment.size(), 800u);
  EXPECT_THROW(kmeans(pts, 0, 5, 1), ConfigError);
  EXPECT_THROW(kmeans(pts, 801, 5, 1), ConfigError);
}

TEST(IvfIndex, PostingsPartitionItems) {
  const auto vecs = oracle::random_matrix<float>(1000, 8, 2);
  IndexConfig cfg{IndexKind::ivf, 32, 4, 20};
  const auto index = build_index(vecs, cfg, 7);
  std::vector<int> seen(1000, 0);
  for (const auto& list : index.postings())
    for (auto r : list) ++seen[r];
  for (int s : seen) ASSERT_EQ(s, 1);
  EXPECT_EQ(index.centroids().rows(), 32u);
}

TEST(IvfIndex, FullProbeEqualsExact) {
  const auto vecs = oracle::random_matrix<float>(1000, 12, 4);
  IndexConfig cfg{IndexKind::ivf, 20, 3, 20};
  const auto ivf = build_index(vecs, cfg, 1);
  const auto exact = build_index(vecs, {}, 1);
  const auto queries = oracle::random_matrix<float>(50, 12, 9);
  for (std::size_t q = 0; q < 50; ++q) {
    const auto a = ivf.search(queries.row(q), 100, 20);
    const auto b = exact.search(queries.row(q), 100);
    ASSERT_EQ(a.ids, b.ids);
    ASSERT_EQ(a.scores, b.scores);
  }
}

TEST(IvfIndex, RecallGrowsWithProbes) {
  const auto vecs = oracle::random_matrix<float>(2000, 16, 6);
  IndexConfig cfg{IndexKind::ivf, 32, 1, 20};
  const auto ivf = build_index(vecs, cfg, 1);
  const auto exact = build_index(vecs, {}, 1);
  const auto queries = oracle::random_matrix<float>(30, 16, 7);
  double prev = -1;
  for (std::size_t probe : {1u, 4u, 16u, 32u}) {
    double r = 0;
    for (std::size_t q = 0; q < 30; ++q) r += recall_at_k(ivf.search(queries.row(q), 50, probe), exact.search(queries.row(q), 50));
    r /= 30;
    EXPECT_GE(r, prev);
    prev = r;
  }
  EXPECT_DOUBLE_EQ(prev, 1.0);
}

TEST(IvfIndex, CheckpointRoundTrip) {
  const auto vecs = oracle::random_matrix<float>(300, 8, 3);
  IndexConfig cfg{IndexKind::ivf, 10, 2, 20};
  const auto index = build_index(vecs, cfg, 5);
  const auto back = ItemIndex::from_checkpoint(Checkpoint::deserialize(index.to_checkpoint().serialize()));
  EXPECT_EQ(back.kind(), IndexKind::ivf);
  EXPECT_EQ(back.postings(), index.postings());
  EXPECT_EQ(back.search(vecs.row(3), 20).ids, index.search(vecs.row(3), 20).ids);
}

TEST(Recall, CountsOverlapAndChecksK) {
  RetrievalResult a{{1, 2, 3, 4}, {}, 4}, b{{4, 3, 9, 8}, {}, 4}, c{{1}, {}, 1};
  EXPECT_DOUBLE_EQ(recall_at_k(a, b), 0.5);
  EXPECT_THROW(recall_at_k(a, c), ConfigError);
  EXPECT_EQ(parse_index_kind("ivf"), IndexKind::ivf);
  EXPECT_THROW(parse_index_kind("hnsw"), ConfigError);
}
