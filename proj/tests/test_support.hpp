#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "recmia/recmia.hpp"

namespace recmia::testing {

namespace fs = std::filesystem;

// Fresh directory per test under the build tree.
inline fs::path scratch_dir(const std::string& name) {
  fs::path p = fs::path(RECMIA_TEST_TMP) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Users 0-4 hold items 0-4, users 5-9 hold items 5-9.
inline InteractionDataset two_block() {
  std::vector<std::vector<ItemIndex>> h;
  for (int u = 0; u < 10; ++u) {
    std::vector<ItemIndex> items;
    const ItemIndex base = u < 5 ? 0 : 5;
    for (ItemIndex i = 0; i < 5; ++i) items.push_back(base + i);
    h.push_back(items);
  }
  return make_dataset(10, h);
}

// Two blocks of five items (0-4, 5-9) over twelve users, with item 10
// held by everyone and item 5 also held by user 0. Popular list: 10, 5, 0, ...
inline InteractionDataset two_block_popular() {
  std::vector<std::vector<ItemIndex>> h;
  for (int u = 0; u < 12; ++u) {
    std::vector<ItemIndex> items;
    const ItemIndex base = u < 6 ? 0 : 5;
    for (ItemIndex i = 0; i < 5; ++i) items.push_back(base + i);
    items.push_back(10);
    if (u == 0) items.push_back(5);
    h.push_back(items);
  }
  return make_dataset(11, h);
}

// The end-to-end synthetic fixture: 2 blocks x 100 users x 30 items, 3 popular.
inline SynthConfig fixture_synth() {
  SynthConfig sc;
  sc.blocks = 2;
  sc.users_per_block = 100;
  sc.items_per_block = 30;
  sc.popular_items = 3;
  sc.seed = 7;
  return sc;
}

struct Fixture {
  InteractionDataset dataset;
  ExperimentSplit split;
  ItemFeatureMatrix features;
  Recommender target;
};

inline Fixture make_fixture(std::size_t latent_dim = 16,
                            RecommenderKind kind = RecommenderKind::ItemKNN) {
  auto ds = build_dataset(generate_synthetic(fixture_synth()), kDefaultMinInteractions);
  auto split = three_way_split(ds, SplitConfig{});
  FactorizationConfig fc;
  fc.latent_dim = latent_dim;
  auto fm = factorize(split.feature_extraction_set, fc).item_features;
  auto target = Recommender::fit(kind, split.target_members, RecommenderParams{}, 3);
  return {std::move(ds), std::move(split), std::move(fm), std::move(target)};
}

// Feature matrix with every row fitted.
inline ItemFeatureMatrix dense_features(const DenseMatrix& m) {
  return ItemFeatureMatrix(m, std::vector<bool>(m.rows(), true), 0);
}

inline DenseMatrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  DenseMatrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = rng.uniform(-1.0, 1.0);
  return m;
}

}  // namespace recmia::testing
