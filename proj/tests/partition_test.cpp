#include <gtest/gtest.h>

#include <set>

#include "test_support.hpp"

using namespace recmia;
using namespace recmia::testing;

namespace {

InteractionDataset users(std::size_t p) {
  std::vector<std::vector<ItemIndex>> h;
  for (std::size_t u = 0; u < p; ++u) h.push_back({static_cast<ItemIndex>(u % 7), 7});
  return make_dataset(8, h);
}

std::vector<std::string> ids(const InteractionDataset& ds) { return ds.user_ids; }

}  // namespace

TEST(ThreeWaySplit, Counts) {
  const auto s = three_way_split(users(100), SplitConfig{});
  EXPECT_EQ(s.feature_extraction_set.num_users(), 40u);
  EXPECT_EQ(s.shadow_set.num_users(), 30u);
  EXPECT_EQ(s.target_members.num_users(), 15u);
  EXPECT_EQ(s.target_nonmembers.num_users(), 15u);
}

TEST(ThreeWaySplit, Deterministic) {
  const auto ds = users(100);
  const auto a = three_way_split(ds, SplitConfig{});
  const auto b = three_way_split(ds, SplitConfig{});
  EXPECT_EQ(a.feature_extraction_set, b.feature_extraction_set);
  EXPECT_EQ(a.shadow_set, b.shadow_set);
  EXPECT_EQ(a.target_members, b.target_members);
  EXPECT_EQ(a.target_nonmembers, b.target_nonmembers);
}

TEST(ThreeWaySplit, SeedMatters) {
  const auto ds = users(100);
  SplitConfig other;
  other.seed = 2;
  EXPECT_NE(ids(three_way_split(ds, SplitConfig{}).target_members),
            ids(three_way_split(ds, other).target_members));
}

TEST(ThreeWaySplit, EmptyTargetRejected) {
  SplitConfig cfg;
  cfg.fractions = {1.0, 0.0, 0.0};
  EXPECT_THROW(three_way_split(users(100), cfg), Error);
}

TEST(ThreeWaySplit, BadConfigRejected) {
  SplitConfig cfg;
  cfg.fractions = {0.5, 0.3, 0.3};
  EXPECT_THROW(three_way_split(users(100), cfg), ConfigError);
  cfg = SplitConfig{};
  cfg.member_fraction = 1.0;
  EXPECT_THROW(three_way_split(users(100), cfg), ConfigError);
  cfg.member_fraction = 0.0;
  EXPECT_THROW(three_way_split(users(100), cfg), ConfigError);
}

TEST(ThreeWaySplit, DisjointAndCovering) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    for (std::size_t p : {10u, 37u, 100u, 251u}) {
      SplitConfig cfg;
      cfg.seed = seed;
      const auto ds = users(p);
      const auto s = three_way_split(ds, cfg);
      std::multiset<std::string> seen;
      for (const auto* part :
           {&s.feature_extraction_set, &s.shadow_set, &s.target_members, &s.target_nonmembers}) {
        EXPECT_EQ(part->num_items(), ds.num_items());
        for (std::size_t u = 0; u < part->num_users(); ++u) {
          seen.insert(part->user_ids[u]);
          // Histories travel with their user.
          EXPECT_EQ(part->histories[u], ds.histories[*ds.find_user(part->user_ids[u])]);
        }
      }
      EXPECT_EQ(seen.size(), p);
      EXPECT_EQ(std::set<std::string>(seen.begin(), seen.end()).size(), p);
    }
  }
}

TEST(ThreeWaySplit, ManifestRoundTrip) {
  const auto ds = users(60);
  const auto s = three_way_split(ds, SplitConfig{});
  const auto dir = scratch_dir("split_manifest");
  const auto path = (dir / "split.json").string();
  save_split(s, ds, path);
  const auto back = load_split(path, ds);
  EXPECT_EQ(back.target_members, s.target_members);
  EXPECT_EQ(back.target_nonmembers, s.target_nonmembers);
  EXPECT_EQ(back.shadow_set, s.shadow_set);
  EXPECT_THROW(load_split(path, users(61)), Error);
}
