#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "test_support.hpp"

using namespace recmia;
using namespace recmia::testing;

namespace {

constexpr RecommenderKind kAllKinds[] = {RecommenderKind::Popularity, RecommenderKind::ItemKNN,
                                         RecommenderKind::LatentFactor,
                                         RecommenderKind::SequentialCooccurrence};

RecommenderParams loose() {
  RecommenderParams p;
  p.strict_membership = false;
  return p;
}

// Popularity ranking by brute-force counting.
std::vector<ItemIndex> counting_oracle(const InteractionDataset& ds) {
  std::vector<std::size_t> count(ds.num_items(), 0);
  for (const auto& h : ds.histories)
    for (ItemIndex i : h) ++count[i];
  std::vector<ItemIndex> order;
  for (std::size_t c = ds.num_users() + 1; c-- > 0;)
    for (ItemIndex i = 0; i < ds.num_items(); ++i)
      if (count[i] == c) order.push_back(i);
  return order;
}

double jaccard(const std::vector<ItemIndex>& a, const std::vector<ItemIndex>& b) {
  std::set<ItemIndex> sa(a.begin(), a.end()), sb(b.begin(), b.end()), all = sa;
  all.insert(sb.begin(), sb.end());
  std::size_t common = 0;
  for (ItemIndex i : sa) common += sb.count(i);
  return all.empty() ? 0.0 : static_cast<double>(common) / static_cast<double>(all.size());
}

}  // namespace

TEST(Popularity, RankingByCountThenIndex) {
  // Item 7 is the most held; items 1 and 4 tie.
  const auto ds = make_dataset(9, {{7, 1, 4}, {7, 4, 1, 2}, {7, 8}, {7}});
  const auto m = Recommender::fit(RecommenderKind::Popularity, ds, {}, 1);
  const auto list = m.recommend({{}, 3});
  EXPECT_EQ(list.items, (std::vector<ItemIndex>{7, 1, 4}));
  EXPECT_EQ(popular_items(m, 1).items, (std::vector<ItemIndex>{7}));
  const auto full = popular_items(m, 9);
  EXPECT_EQ(full.items, counting_oracle(ds));
  EXPECT_FALSE(full.truncated);
  EXPECT_TRUE(popular_items(m, 10).truncated);
}

TEST(ItemKNN, BlockSimilarity) {
  const auto m = Recommender::fit(RecommenderKind::ItemKNN, two_block(), {}, 1);
  EXPECT_GT(m.similarity(0, 1), m.similarity(0, 5));
  EXPECT_NEAR(m.similarity(0, 1), 1.0, 1e-12);
  EXPECT_EQ(m.similarity(0, 5), 0.0);
}

TEST(ItemKNN, BlockOneRecommendations) {
  const auto m = Recommender::fit(RecommenderKind::ItemKNN, two_block(), loose(), 1);
  EXPECT_EQ(m.recommend({{0, 1}, 3}).items, (std::vector<ItemIndex>{2, 3, 4}));
}

TEST(ItemKNN, BruteForceCosineScores) {
  const auto ds = build_dataset(generate_synthetic(SynthConfig{}), 5);
  const auto m = Recommender::fit(RecommenderKind::ItemKNN, ds, loose(), 1);
  const std::size_t q = ds.num_items();
  std::vector<std::vector<int>> col(q, std::vector<int>(ds.num_users(), 0));
  for (std::size_t u = 0; u < ds.num_users(); ++u)
    for (ItemIndex i : ds.histories[u]) col[i][u] = 1;
  auto cos = [&](std::size_t a, std::size_t b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t u = 0; u < ds.num_users(); ++u) {
      ab += col[a][u] * col[b][u];
      aa += col[a][u];
      bb += col[b][u];
    }
    return aa == 0 || bb == 0 ? 0.0 : ab / std::sqrt(aa * bb);
  };
  for (ItemIndex a = 0; a < q; a += 3)
    for (ItemIndex b = 0; b < q; b += 5)
      if (a != b) {
        EXPECT_NEAR(m.similarity(a, b), cos(a, b), 1e-12);
      }
}

TEST(Recommend, FullCatalogHistoryIsShort) {
  const auto ds = two_block();
  std::vector<ItemIndex> all(10);
  std::iota(all.begin(), all.end(), ItemIndex{0});
  for (auto kind : kAllKinds) {
    const auto m = Recommender::fit(kind, ds, loose(), 1);
    const auto list = m.recommend({all, 3});
    EXPECT_TRUE(list.items.empty()) << to_string(kind);
    EXPECT_TRUE(list.truncated);
  }
}

TEST(Recommend, RejectsBadRequests) {
  const auto m = Recommender::fit(RecommenderKind::ItemKNN, two_block(), {}, 1);
  EXPECT_THROW(m.recommend({{10}, 3}), Error);
  EXPECT_THROW(m.recommend({{1, 1}, 3}), Error);
  EXPECT_THROW(m.recommend({{1}, 0}), Error);
}

TEST(Recommend, ColdStartEquivalence) {
  const auto ds = build_dataset(generate_synthetic(SynthConfig{}), 5);
  const auto pop = Recommender::fit(RecommenderKind::Popularity, ds, {}, 1);
  for (auto kind : kAllKinds)
    for (bool strict : {true, false}) {
      RecommenderParams p;
      p.strict_membership = strict;
      const auto m = Recommender::fit(kind, ds, p, 4);
      for (std::size_t n = 1; n <= ds.num_items() + 2; ++n)
        EXPECT_EQ(m.recommend({{}, n}), pop.recommend({{}, n})) << to_string(kind) << " n=" << n;
    }
}

TEST(Recommend, StrictModeServesNonMembersThePopularList) {
  const auto ds = two_block();
  const auto m = Recommender::fit(RecommenderKind::ItemKNN, ds, {}, 1);
  EXPECT_EQ(m.recommend({{0, 1}, 4}), m.popular(4));
  EXPECT_TRUE(m.is_member({4, 3, 2, 1, 0}));
  // A member in a different order is still the same account.
  const auto personal = m.recommend({{4, 3, 2, 1, 0}, 4});
  EXPECT_NE(personal, m.popular(4));
}

TEST(Recommend, ExclusionAndDeterminism) {
  const auto ds = build_dataset(generate_synthetic(SynthConfig{}), 5);
  for (auto kind : kAllKinds) {
    const auto a = Recommender::fit(kind, ds, loose(), 9);
    const auto b = Recommender::fit(kind, ds, loose(), 9);
    Rng rng(1);
    for (std::size_t u = 0; u < ds.num_users(); u += 7) {
      auto h = ds.histories[u];
      if (u % 2) h.resize(1 + rng.index(h.size()));
      const std::size_t n = 1 + rng.index(20);
      const auto list = a.recommend({h, n});
      EXPECT_EQ(list, b.recommend({h, n}));
      EXPECT_EQ(std::set<ItemIndex>(list.items.begin(), list.items.end()).size(), list.items.size());
      for (ItemIndex i : list.items)
        EXPECT_EQ(std::find(h.begin(), h.end(), i), h.end()) << to_string(kind);
    }
  }
}

TEST(Recommend, ScoresAreTopNWithIndexTieBreak) {
  const auto ds = build_dataset(generate_synthetic(SynthConfig{}), 5);
  for (auto kind : kAllKinds) {
    const auto m = Recommender::fit(kind, ds, loose(), 2);
    const auto& h = ds.histories[3];
    const auto s = m.score(h);
    std::vector<ItemIndex> order;
    for (ItemIndex i = 0; i < ds.num_items(); ++i)
      if (std::find(h.begin(), h.end(), i) == h.end()) order.push_back(i);
    std::stable_sort(order.begin(), order.end(), [&](ItemIndex a, ItemIndex b) { return s[a] > s[b]; });
    order.resize(12);
    EXPECT_EQ(m.recommend({h, 12}).items, order) << to_string(kind);
  }
}

TEST(Sequential, RecentItemsWeighMore) {
  // 0 is always followed by 1, 2 by 3; the later history item should win.
  const auto ds = make_dataset(5, {{0, 1}, {0, 1}, {2, 3}, {2, 3}, {4, 0, 1}});
  const auto m = Recommender::fit(RecommenderKind::SequentialCooccurrence, ds, loose(), 1);
  EXPECT_EQ(m.recommend({{0, 2}, 1}).items, (std::vector<ItemIndex>{3}));
  EXPECT_EQ(m.recommend({{2, 0}, 1}).items, (std::vector<ItemIndex>{1}));
}

TEST(Model, SerializationRoundTrip) {
  const auto ds = build_dataset(generate_synthetic(SynthConfig{}), 5);
  const auto dir = scratch_dir("model_roundtrip");
  for (auto kind : kAllKinds) {
    RecommenderParams p;
    p.knn_neighbors = 7;
    p.sequence_window = 2;
    const auto m = Recommender::fit(kind, ds, p, 5);
    const auto path = (dir / (to_string(kind) + ".bin")).string();
    save_model(m, path);
    const auto back = load_model(path);
    EXPECT_EQ(back.kind(), kind);
    for (std::size_t u = 0; u < ds.num_users(); u += 11)
      EXPECT_EQ(back.recommend({ds.histories[u], 10}), m.recommend({ds.histories[u], 10}));
  }
}

TEST(Model, KindNames) {
  for (auto kind : kAllKinds) EXPECT_EQ(parse_recommender_kind(to_string(kind)), kind);
  EXPECT_THROW(parse_recommender_kind("ncf"), Error);
}

TEST(Personalization, MembersLeanTowardTheirBlock) {
  const auto fx = make_fixture();
  const auto& members = fx.split.target_members;
  const auto pop = fx.target.popular(10).items;
  for (std::size_t u = 0; u < members.num_users(); ++u) {
    const auto& h = members.histories[u];
    // Block of the user = the block holding most of their non-popular items.
    std::size_t in_a = 0, in_b = 0;
    for (ItemIndex i : h) {
      const int id = std::stoi(fx.dataset.item_ids[i]) - 1;
      if (id < 30) ++in_a;
      else if (id < 60) ++in_b;
    }
    std::vector<ItemIndex> block;
    for (ItemIndex i = 0; i < fx.dataset.num_items(); ++i) {
      const int id = std::stoi(fx.dataset.item_ids[i]) - 1;
      if (id < 60 && (id < 30) == (in_a > in_b)) block.push_back(i);
    }
    const auto recs = fx.target.recommend({h, 10}).items;
    EXPECT_GT(jaccard(recs, block), jaccard(recs, pop)) << "member " << members.user_ids[u];
  }
}
