#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "recmia/common.hpp"
#include "recmia/data.hpp"

namespace recmia {

struct SplitConfig {
  std::array<double, 3> fractions{0.4, 0.3, 0.3};  // feature extraction, shadow, target
  double member_fraction = 0.5;
  std::uint64_t seed = 1;
};

struct ExperimentSplit {
  InteractionDataset feature_extraction_set;
  InteractionDataset shadow_set;
  InteractionDataset target_members;
  InteractionDataset target_nonmembers;
  SplitConfig config;
};

// Users `users` of `ds`, in the given order, with the item space untouched.
inline InteractionDataset subset_users(const InteractionDataset& ds,
                                       const std::vector<UserIndex>& users) {
  InteractionDataset out;
  out.item_ids = ds.item_ids;
  out.user_ids.reserve(users.size());
  out.histories.reserve(users.size());
  for (UserIndex u : users) {
    if (u >= ds.num_users()) throw Error("user index out of range in subset_users");
    out.user_ids.push_back(ds.user_ids[u]);
    out.histories.push_back(ds.histories[u]);
  }
  return out;
}

inline void validate(const SplitConfig& cfg) {
  double sum = 0.0;
  for (double f : cfg.fractions) {
    if (!(f >= 0.0) || !std::isfinite(f)) throw ConfigError("split fractions must be nonnegative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
  if (!(cfg.member_fraction > 0.0 && cfg.member_fraction < 1.0))
    throw ConfigError("member_fraction must lie in (0, 1)");
}

inline ExperimentSplit three_way_split(const InteractionDataset& ds, const SplitConfig& cfg) {
  validate(cfg);
  const std::size_t p = ds.num_users();
  std::vector<UserIndex> order(p);
  for (std::size_t u = 0; u < p; ++u) order[u] = static_cast<UserIndex>(u);
  Rng rng(cfg.seed);
  rng.shuffle(order);

  const auto portion = [p](double f) {
    return static_cast<std::size_t>(std::llround(f * static_cast<double>(p)));
  };
  const std::size_t n_features = std::min(portion(cfg.fractions[0]), p);
  const std::size_t n_shadow = std::min(portion(cfg.fractions[1]), p - n_features);
  const std::size_t n_target = p - n_features - n_shadow;
  const auto n_members = static_cast<std::size_t>(
      std::llround(cfg.member_fraction * static_cast<double>(n_target)));
  const std::size_t n_nonmembers = n_target - std::min(n_members, n_target);

  auto require = [](std::size_t n, const char* name) {
    if (n == 0) throw Error(std::string("split leaves the ") + name + " subset empty");
  };
  require(n_features, "feature-extraction");
  require(n_shadow, "shadow");
  require(n_target, "target");
  require(n_members, "target-member");
  require(n_nonmembers, "target-nonmember");

  auto slice = [&](std::size_t begin, std::size_t count) {
    return subset_users(ds, std::vector<UserIndex>(order.begin() + begin,
                                                   order.begin() + begin + count));
  };
  ExperimentSplit split;
  split.config = cfg;
  split.feature_extraction_set = slice(0, n_features);
  split.shadow_set = slice(n_features, n_shadow);
  split.target_members = slice(n_features + n_shadow, n_members);
  split.target_nonmembers = slice(n_features + n_shadow + n_members, n_nonmembers);
  return split;
}

inline nlohmann::json split_manifest(const ExperimentSplit& split, const InteractionDataset& parent) {
  return {
      {"format", "recmia-split"},
      {"version", 1},
      {"seed", split.config.seed},
      {"fractions", split.config.fractions},
      {"member_fraction", split.config.member_fraction},
      {"dataset_fingerprint", Fingerprint().add(dataset_fingerprint(parent)).hex()},
      {"feature_extraction", split.feature_extraction_set.user_ids},
      {"shadow", split.shadow_set.user_ids},
      {"target_members", split.target_members.user_ids},
      {"target_nonmembers", split.target_nonmembers.user_ids},
  };
}

// Rebuilds a split from its manifest; the manifest must describe `parent`.
inline ExperimentSplit split_from_manifest(const nlohmann::json& j, const InteractionDataset& parent) {
  if (j.value("format", "") != "recmia-split") throw Error("not a recmia split manifest");
  if (j.value("version", 0) != 1) throw Error("unsupported split manifest version");
  if (j.at("dataset_fingerprint").get<std::string>() !=
      Fingerprint().add(dataset_fingerprint(parent)).hex())
    throw Error("split manifest was produced for a different dataset");
  ExperimentSplit split;
  split.config.seed = j.at("seed").get<std::uint64_t>();
  split.config.fractions = j.at("fractions").get<std::array<double, 3>>();
  split.config.member_fraction = j.at("member_fraction").get<double>();
  auto pick = [&](const char* key) {
    std::vector<UserIndex> users;
    for (const auto& id : j.at(key)) {
      const auto u = parent.find_user(id.get<std::string>());
      if (!u) throw Error("split manifest names unknown user '" + id.get<std::string>() + "'");
      users.push_back(*u);
    }
    return subset_users(parent, users);
  };
  split.feature_extraction_set = pick("feature_extraction");
  split.shadow_set = pick("shadow");
  split.target_members = pick("target_members");
  split.target_nonmembers = pick("target_nonmembers");
  return split;
}

inline void save_split(const ExperimentSplit& split, const InteractionDataset& parent,
                       const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << split_manifest(split, parent).dump(2) << '\n';
}

inline ExperimentSplit load_split(const std::string& path, const InteractionDataset& parent) {
  auto in = detail::open_input(path);
  return split_from_manifest(nlohmann::json::parse(in), parent);
}

}  // namespace recmia
