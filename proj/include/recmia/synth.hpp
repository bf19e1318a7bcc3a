#pragma once

#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "recmia/common.hpp"
#include "recmia/data.hpp"

namespace recmia {

// Block-structured implicit data: users of block b mostly interact with the
// items of block b, a little with other blocks, and often with a handful of
// globally popular items.
struct SynthConfig {
  std::size_t blocks = 2;
  std::size_t users_per_block = 50;
  std::size_t items_per_block = 20;
  std::size_t popular_items = 2;
  double in_block_prob = 0.5;
  double cross_block_prob = 0.02;
  double popular_prob = 0.8;
  std::uint64_t seed = 7;
  // Nonzero: relabel item ids with a seeded permutation, which keeps the
  // catalog but moves the block structure onto different ids.
  std::uint64_t item_permutation_seed = 0;

  void validate() const {
    if (blocks < 1 || users_per_block < 1 || items_per_block < 1)
      throw ConfigError("gen-synth needs at least one block, user and item per block");
    for (double p : {in_block_prob, cross_block_prob, popular_prob})
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("gen-synth probabilities must lie in [0, 1]");
  }

  std::size_t num_items() const { return blocks * items_per_block + popular_items; }
};

// Item k of block b has index b*items_per_block + k; popular items follow
// the blocks. Ids are 1-based decimal strings; timestamps order each user's
// interactions randomly.
inline std::vector<RawInteraction> generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const std::size_t q = cfg.num_items();
  std::vector<std::size_t> label(q);
  std::iota(label.begin(), label.end(), std::size_t{0});
  if (cfg.item_permutation_seed != 0) {
    Rng perm(cfg.item_permutation_seed);
    perm.shuffle(label);
  }

  std::vector<RawInteraction> out;
  std::size_t user = 0;
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    for (std::size_t k = 0; k < cfg.users_per_block; ++k, ++user) {
      std::vector<std::size_t> items;
      for (std::size_t i = 0; i < cfg.blocks * cfg.items_per_block; ++i) {
        const double p = i / cfg.items_per_block == b ? cfg.in_block_prob : cfg.cross_block_prob;
        if (rng.bernoulli(p)) items.push_back(i);
      }
      for (std::size_t j = 0; j < cfg.popular_items; ++j)
        if (rng.bernoulli(cfg.popular_prob)) items.push_back(cfg.blocks * cfg.items_per_block + j);
      rng.shuffle(items);
      for (std::size_t t = 0; t < items.size(); ++t) {
        out.push_back({std::to_string(user + 1), std::to_string(label[items[t]] + 1), 1.0,
                       static_cast<std::int64_t>(1'000'000'000 + user * 10'000 + t)});
      }
    }
  }
  return out;
}

inline void write_movielens(const std::vector<RawInteraction>& raw, std::ostream& out) {
  for (const auto& r : raw)
    out << r.user_id << "::" << r.item_id << "::" << r.rating << "::" << r.timestamp << '\n';
}

inline void write_movielens(const std::vector<RawInteraction>& raw, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  write_movielens(raw, out);
}

}  // namespace recmia
