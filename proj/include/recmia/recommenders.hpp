#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "recmia/common.hpp"
#include "recmia/data.hpp"
#include "recmia/item_features.hpp"

namespace recmia {

enum class RecommenderKind { Popularity, ItemKNN, LatentFactor, SequentialCooccurrence };

inline std::string to_string(RecommenderKind kind) {
  switch (kind) {
    case RecommenderKind::Popularity: return "popularity";
    case RecommenderKind::ItemKNN: return "item_knn";
    case RecommenderKind::LatentFactor: return "latent_factor";
    case RecommenderKind::SequentialCooccurrence: return "sequential_cooccurrence";
  }
  return "unknown";
}

inline RecommenderKind parse_recommender_kind(const std::string& name) {
  for (auto kind : {RecommenderKind::Popularity, RecommenderKind::ItemKNN,
                    RecommenderKind::LatentFactor, RecommenderKind::SequentialCooccurrence})
    if (to_string(kind) == name) return kind;
  throw ConfigError("unknown recommender kind '" + name +
                    "' (expected popularity, item_knn, latent_factor or sequential_cooccurrence)");
}

struct RecommenderParams {
  // Only histories of training users get personalized lists; anything else
  // is answered like a new account, with the popularity list.
  bool strict_membership = true;
  std::size_t knn_neighbors = 100;
  FactorizationConfig latent{.latent_dim = 32};  // seed is taken from fit()
  std::size_t sequence_window = 1;

  void validate() const {
    if (knn_neighbors < 1) throw ConfigError("knn_neighbors must be >= 1");
    if (sequence_window < 1) throw ConfigError("sequence_window must be >= 1");
    latent.validate();
  }
};

inline void to_json(nlohmann::json& j, const RecommenderParams& p) {
  nlohmann::json latent = p.latent;
  latent.erase("seed");
  j = {{"strict_membership", p.strict_membership},
       {"knn_neighbors", p.knn_neighbors},
       {"latent", latent},
       {"sequence_window", p.sequence_window}};
}

inline void from_json(const nlohmann::json& j, RecommenderParams& p) {
  RecommenderParams d;
  p.strict_membership = j.value("strict_membership", d.strict_membership);
  p.knn_neighbors = j.value("knn_neighbors", d.knn_neighbors);
  p.latent = j.contains("latent") ? j.at("latent").get<FactorizationConfig>() : d.latent;
  p.sequence_window = j.value("sequence_window", d.sequence_window);
}

struct RecommendRequest {
  std::vector<ItemIndex> history;
  std::size_t n = 10;
};

struct RecommendationList {
  std::vector<ItemIndex> items;  // best first
  bool truncated = false;        // fewer than n candidates were available

  bool operator==(const RecommendationList&) const = default;
};

// What an attacker sees of a target system: histories in, top-n lists out.
class RecommendOracle {
 public:
  virtual ~RecommendOracle() = default;
  virtual RecommendationList recommend(const RecommendRequest& req) const = 0;
  virtual std::size_t num_items() const = 0;
};

inline RecommendationList popular_items(const RecommendOracle& oracle, std::size_t n) {
  return oracle.recommend({{}, n});
}

// Forwards to another oracle and counts queries.
class CountingOracle : public RecommendOracle {
 public:
  explicit CountingOracle(const RecommendOracle& inner) : inner_(inner) {}
  RecommendationList recommend(const RecommendRequest& req) const override {
    ++queries_;
    return inner_.recommend(req);
  }
  std::size_t num_items() const override { return inner_.num_items(); }
  std::size_t queries() const { return queries_; }

 private:
  const RecommendOracle& inner_;
  mutable std::size_t queries_ = 0;
};

namespace detail {

// Top-n of `scores` (higher first, ties by ascending index), skipping `excluded`.
inline RecommendationList top_n(const std::vector<double>& scores, const std::vector<bool>& excluded,
                                std::size_t n) {
  std::vector<ItemIndex> candidates;
  candidates.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (!excluded[i]) candidates.push_back(static_cast<ItemIndex>(i));
  RecommendationList out;
  const std::size_t k = std::min(n, candidates.size());
  out.truncated = k < n;
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                    candidates.end(), [&](ItemIndex a, ItemIndex b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;
                    });
  out.items.assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k));
  return out;
}

}  // namespace detail

class Recommender : public RecommendOracle {
 public:
  static Recommender fit(RecommenderKind kind, const InteractionDataset& train,
                         const RecommenderParams& params, std::uint64_t seed) {
    params.validate();
    if (train.empty() || train.num_interactions() == 0)
      throw Error("cannot fit a recommender on an empty dataset");
    Recommender m;
    m.kind_ = kind;
    m.params_ = params;
    m.seed_ = seed;
    m.num_items_ = train.num_items();
    m.training_ = train.histories;
    Fingerprint fp;
    fp.add(static_cast<std::uint64_t>(m.num_items_));
    for (const auto& h : train.histories) {
      fp.add(static_cast<std::uint64_t>(h.size()));
      for (ItemIndex i : h) fp.add(i);
    }
    m.training_fingerprint_ = fp.value();
    for (const auto& h : train.histories) {
      std::vector<ItemIndex> key(h);
      std::sort(key.begin(), key.end());
      m.members_.insert(std::move(key));
    }

    const auto counts = train.item_counts();
    m.popularity_.resize(m.num_items_);
    std::iota(m.popularity_.begin(), m.popularity_.end(), ItemIndex{0});
    std::stable_sort(m.popularity_.begin(), m.popularity_.end(),
                     [&](ItemIndex a, ItemIndex b) { return counts[a] > counts[b]; });
    m.popularity_score_.assign(counts.begin(), counts.end());

    switch (kind) {
      case RecommenderKind::Popularity: break;
      case RecommenderKind::ItemKNN: m.fit_item_knn(train); break;
      case RecommenderKind::LatentFactor: m.fit_latent_factor(train); break;
      case RecommenderKind::SequentialCooccurrence: m.fit_sequential(train); break;
    }
    return m;
  }

  RecommendationList recommend(const RecommendRequest& req) const override {
    if (req.n < 1) throw Error("recommend: n must be >= 1");
    std::vector<bool> excluded(num_items_, false);
    for (ItemIndex i : req.history) {
      if (i >= num_items_)
        throw Error("recommend: history item " + std::to_string(i) + " out of range");
      if (excluded[i]) throw Error("recommend: duplicate history item " + std::to_string(i));
      excluded[i] = true;
    }
    if (req.history.empty() || (params_.strict_membership && !is_member(req.history)))
      return popular(req.n);
    return detail::top_n(score(req.history), excluded, req.n);
  }

  std::size_t num_items() const override { return num_items_; }

  bool is_member(const std::vector<ItemIndex>& history) const {
    std::vector<ItemIndex> key(history);
    std::sort(key.begin(), key.end());
    return members_.contains(key);
  }

  RecommenderKind kind() const { return kind_; }
  const RecommenderParams& params() const { return params_; }
  std::uint64_t seed() const { return seed_; }
  std::uint64_t training_fingerprint() const { return training_fingerprint_; }
  const std::vector<std::vector<ItemIndex>>& training_histories() const { return training_; }

  // Cosine similarity of two items' binary user columns in the training data
  // (ItemKNN only; 0 outside the retained neighborhood).
  double similarity(ItemIndex a, ItemIndex b) const {
    if (kind_ != RecommenderKind::ItemKNN) throw Error("similarity() requires an ItemKNN model");
    for (const auto& [j, s] : neighbors_.at(a))
      if (j == b) return s;
    return 0.0;
  }

  // Scores of every catalog item for a history, before exclusion.
  std::vector<double> score(const std::vector<ItemIndex>& history) const {
    std::vector<double> s(num_items_, 0.0);
    switch (kind_) {
      case RecommenderKind::Popularity:
        s = popularity_score_;
        break;
      case RecommenderKind::ItemKNN:
        for (ItemIndex j : history)
          for (const auto& [c, sim] : neighbors_[j]) s[c] += sim;
        break;
      case RecommenderKind::LatentFactor: {
        const Vector centroid = mean_feature(item_factors_, history);
        for (std::size_t c = 0; c < num_items_; ++c)
          s[c] = dot(centroid, item_factors_.row(static_cast<ItemIndex>(c)));
        break;
      }
      case RecommenderKind::SequentialCooccurrence: {
        // Position j (0 = oldest) of an m-item history carries weight (j+1)/m.
        const double m = static_cast<double>(history.size());
        for (std::size_t j = 0; j < history.size(); ++j) {
          const double w = static_cast<double>(j + 1) / m;
          for (const auto& [c, count] : transitions_[history[j]]) s[c] += w * count;
        }
        break;
      }
    }
    return s;
  }

  RecommendationList popular(std::size_t n) const {
    RecommendationList out;
    const std::size_t k = std::min(n, popularity_.size());
    out.items.assign(popularity_.begin(), popularity_.begin() + static_cast<std::ptrdiff_t>(k));
    out.truncated = k < n;
    return out;
  }

 private:
  Recommender() = default;

  void fit_item_knn(const InteractionDataset& train) {
    std::vector<std::vector<UserIndex>> users_of(num_items_);
    for (std::size_t u = 0; u < train.num_users(); ++u)
      for (ItemIndex i : train.histories[u]) users_of[i].push_back(static_cast<UserIndex>(u));

    neighbors_.assign(num_items_, {});
    std::vector<double> co(num_items_, 0.0);
    std::vector<ItemIndex> touched;
    for (std::size_t i = 0; i < num_items_; ++i) {
      if (users_of[i].empty()) continue;
      touched.clear();
      for (UserIndex u : users_of[i])
        for (ItemIndex j : train.histories[u]) {
          if (j == i) continue;
          if (co[j] == 0.0) touched.push_back(j);
          co[j] += 1.0;
        }
      std::vector<std::pair<ItemIndex, double>> sims;
      sims.reserve(touched.size());
      const double di = static_cast<double>(users_of[i].size());
      for (ItemIndex j : touched) {
        const double dj = static_cast<double>(users_of[j].size());
        sims.emplace_back(j, co[j] / std::sqrt(di * dj));
        co[j] = 0.0;
      }
      const std::size_t k = std::min(params_.knn_neighbors, sims.size());
      std::partial_sort(sims.begin(), sims.begin() + static_cast<std::ptrdiff_t>(k), sims.end(),
                        [](const auto& a, const auto& b) {
                          if (a.second != b.second) return a.second > b.second;
                          return a.first < b.first;
                        });
      sims.resize(k);
      std::sort(sims.begin(), sims.end());
      neighbors_[i] = std::move(sims);
    }
  }

  void fit_latent_factor(const InteractionDataset& train) {
    FactorizationConfig cfg = params_.latent;
    cfg.seed = seed_;
    item_factors_ = factorize(train, cfg).item_features;
  }

  void fit_sequential(const InteractionDataset& train) {
    std::vector<std::unordered_map<ItemIndex, double>> counts(num_items_);
    for (const auto& h : train.histories)
      for (std::size_t t = 0; t < h.size(); ++t)
        for (std::size_t d = 1; d <= params_.sequence_window && t + d < h.size(); ++d)
          counts[h[t]][h[t + d]] += 1.0;
    transitions_.assign(num_items_, {});
    for (std::size_t i = 0; i < num_items_; ++i) {
      transitions_[i].assign(counts[i].begin(), counts[i].end());
      std::sort(transitions_[i].begin(), transitions_[i].end());
    }
  }

  RecommenderKind kind_ = RecommenderKind::Popularity;
  RecommenderParams params_;
  std::uint64_t seed_ = 0;
  std::size_t num_items_ = 0;
  std::uint64_t training_fingerprint_ = 0;
  std::vector<std::vector<ItemIndex>> training_;
  std::set<std::vector<ItemIndex>> members_;
  std::vector<ItemIndex> popularity_;
  std::vector<double> popularity_score_;
  std::vector<std::vector<std::pair<ItemIndex, double>>> neighbors_;
  ItemFeatureMatrix item_factors_;
  std::vector<std::vector<std::pair<ItemIndex, double>>> transitions_;
};

inline Recommender fit(RecommenderKind kind, const InteractionDataset& train,
                       const RecommenderParams& params, std::uint64_t seed) {
  return Recommender::fit(kind, train, params, seed);
}

inline RecommendationList recommend(const RecommendOracle& model, const RecommendRequest& req) {
  return model.recommend(req);
}

inline constexpr std::string_view kModelMagic = "RMIAMODL";
inline constexpr std::uint32_t kModelVersion = 1;

inline nlohmann::json model_metadata(const Recommender& m) {
  return {{"format", "recmia-model"},
          {"version", kModelVersion},
          {"kind", to_string(m.kind())},
          {"params", m.params()},
          {"seed", m.seed()},
          {"num_items", m.num_items()},
          {"training_fingerprint", Fingerprint().add(m.training_fingerprint()).hex()}};
}

// Layout: magic[8] | version u32 | metadata length u64 | metadata JSON |
// users u64 | per user: length u64, items u32... The fitted state is rebuilt
// on load from the stored training interactions, which fit() maps to a
// unique model for a given kind, params and seed.
inline void save_model(const Recommender& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  const std::string meta = model_metadata(m).dump();
  out.write(kModelMagic.data(), kModelMagic.size());
  detail::write_u32_le(out, kModelVersion);
  detail::write_u64_le(out, meta.size());
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  detail::write_u64_le(out, m.training_histories().size());
  for (const auto& h : m.training_histories()) {
    detail::write_u64_le(out, h.size());
    for (ItemIndex i : h) detail::write_u32_le(out, i);
  }
}

inline Recommender load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  detail::expect_magic(in, kModelMagic, path);
  const std::uint32_t version = detail::read_u32_le(in);
  if (version != kModelVersion)
    throw Error("'" + path + "' has model format version " + std::to_string(version) +
                ", expected " + std::to_string(kModelVersion));
  std::string meta(detail::read_u64_le(in), '\0');
  if (!in.read(meta.data(), static_cast<std::streamsize>(meta.size())))
    throw Error("truncated model file '" + path + "'");
  const auto j = nlohmann::json::parse(meta);
  const std::size_t q = j.at("num_items").get<std::size_t>();
  std::vector<std::vector<ItemIndex>> histories(detail::read_u64_le(in));
  for (auto& h : histories) {
    h.resize(detail::read_u64_le(in));
    for (auto& i : h) i = detail::read_u32_le(in);
  }
  InteractionDataset train = make_dataset(q, std::move(histories));
  Recommender m = Recommender::fit(parse_recommender_kind(j.at("kind").get<std::string>()), train,
                                   j.at("params").get<RecommenderParams>(),
                                   j.at("seed").get<std::uint64_t>());
  if (Fingerprint().add(m.training_fingerprint()).hex() != j.at("training_fingerprint"))
    throw Error("model file '" + path + "' failed its training fingerprint check");
  return m;
}

}  // namespace recmia
