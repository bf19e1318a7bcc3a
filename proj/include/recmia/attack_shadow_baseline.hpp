#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "recmia/attack_shadow_free.hpp"
#include "recmia/common.hpp"
#include "recmia/item_features.hpp"
#include "recmia/partition.hpp"
#include "recmia/recommenders.hpp"

namespace recmia {

struct ShadowConfig {
  RecommenderKind shadow_kind = RecommenderKind::ItemKNN;
  RecommenderParams shadow_params;
  std::size_t n = 10;
  std::size_t classifier_epochs = 1000;
  double classifier_lr = 1.0;
  std::uint64_t seed = 11;

  void validate() const {
    if (n < 1) throw ConfigError("shadow n must be >= 1");
    if (classifier_epochs < 1) throw ConfigError("classifier_epochs must be >= 1");
    if (!(classifier_lr > 0.0) || !std::isfinite(classifier_lr))
      throw ConfigError("classifier_lr must be positive");
    shadow_params.validate();
  }
};

inline void to_json(nlohmann::json& j, const ShadowConfig& c) {
  j = {{"shadow_kind", to_string(c.shadow_kind)},
       {"shadow_params", c.shadow_params},
       {"n", c.n},
       {"classifier_epochs", c.classifier_epochs},
       {"classifier_lr", c.classifier_lr},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, ShadowConfig& c) {
  ShadowConfig d;
  c.shadow_kind = parse_recommender_kind(j.value("shadow_kind", to_string(d.shadow_kind)));
  c.shadow_params = j.contains("shadow_params") ? j.at("shadow_params").get<RecommenderParams>()
                                                : d.shadow_params;
  c.n = j.value("n", d.n);
  c.classifier_epochs = j.value("classifier_epochs", d.classifier_epochs);
  c.classifier_lr = j.value("classifier_lr", d.classifier_lr);
  c.seed = j.value("seed", d.seed);
}

struct AttackClassifier {
  Vector weights;
  double bias = 0.0;
  std::vector<double> training_loss_trace;

  bool operator==(const AttackClassifier&) const = default;
};

// Mean history feature minus mean recommendation feature.
inline Vector member_feature(const ItemFeatureMatrix& fm, std::span<const ItemIndex> history,
                             std::span<const ItemIndex> recommendations) {
  if (history.empty()) throw Error("member_feature: empty history");
  if (recommendations.empty()) throw Error("member_feature: empty recommendation list");
  Vector v = mean_feature(fm, history);
  const Vector r = mean_feature(fm, recommendations);
  for (std::size_t k = 0; k < v.size(); ++k) v[k] -= r[k];
  return v;
}

inline double decision_value(const AttackClassifier& cls, std::span<const double> v) {
  return dot(cls.weights, v) + cls.bias;
}

inline Membership classify(const AttackClassifier& cls, std::span<const double> v) {
  return decision_value(cls, v) > 0.0 ? Membership::Member : Membership::NonMember;
}

inline Membership classify(const AttackClassifier& cls, const ItemFeatureMatrix& fm,
                           std::span<const ItemIndex> history,
                           std::span<const ItemIndex> recommendations) {
  return classify(cls, member_feature(fm, history, recommendations));
}

namespace detail {

inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }
inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace detail

// Mean binary cross-entropy of a linear model; labels are 0 or 1.
inline double logistic_loss(std::span<const double> weights, double bias,
                            const std::vector<Vector>& features, const std::vector<int>& labels) {
  double total = 0.0;
  for (std::size_t s = 0; s < features.size(); ++s) {
    const double z = dot(weights, features[s]) + bias;
    total += labels[s] ? detail::softplus(-z) : detail::softplus(z);
  }
  return total / static_cast<double>(features.size());
}

// Returns (d/dweights, d/dbias) of logistic_loss.
inline std::pair<Vector, double> logistic_gradient(std::span<const double> weights, double bias,
                                                   const std::vector<Vector>& features,
                                                   const std::vector<int>& labels) {
  Vector gw(weights.size(), 0.0);
  double gb = 0.0;
  const double inv = 1.0 / static_cast<double>(features.size());
  for (std::size_t s = 0; s < features.size(); ++s) {
    const double r = detail::sigmoid(dot(weights, features[s]) + bias) - labels[s];
    for (std::size_t k = 0; k < gw.size(); ++k) gw[k] += inv * r * features[s][k];
    gb += inv * r;
  }
  return {std::move(gw), gb};
}

// Full-batch gradient descent from zero weights.
inline AttackClassifier train_logistic(const std::vector<Vector>& features,
                                       const std::vector<int>& labels, std::size_t epochs,
                                       double lr) {
  if (features.empty()) throw Error("train_logistic: no training samples");
  if (features.size() != labels.size()) throw Error("train_logistic: label count mismatch");
  bool has_pos = false, has_neg = false;
  for (int y : labels) (y ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg) throw Error("train_logistic: training labels contain a single class");

  AttackClassifier cls;
  cls.weights.assign(features.front().size(), 0.0);
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    auto [gw, gb] = logistic_gradient(cls.weights, cls.bias, features, labels);
    for (std::size_t k = 0; k < gw.size(); ++k) cls.weights[k] -= lr * gw[k];
    cls.bias -= lr * gb;
    const double loss = logistic_loss(cls.weights, cls.bias, features, labels);
    if (!std::isfinite(loss))
      throw Error("attack classifier diverged at epoch " + std::to_string(epoch + 1) +
                  "; try a smaller classifier_lr");
    cls.training_loss_trace.push_back(loss);
  }
  return cls;
}

struct ShadowTraining {
  AttackClassifier classifier;
  std::vector<Vector> features;
  std::vector<int> labels;
  std::vector<std::string> feature_users;  // owner of each feature row
};

// Splits the shadow data in half by user, fits a shadow recommender on one
// half (members) and labels features of both halves by querying it.
inline ShadowTraining train_shadow_attack(const InteractionDataset& shadow_data,
                                          const ItemFeatureMatrix& fm, const ShadowConfig& cfg) {
  cfg.validate();
  if (shadow_data.num_users() < 2)
    throw Error("shadow data needs at least 2 users to form member and nonmember classes");
  Rng rng(cfg.seed);
  std::vector<UserIndex> order(shadow_data.num_users());
  for (std::size_t u = 0; u < order.size(); ++u) order[u] = static_cast<UserIndex>(u);
  rng.shuffle(order);
  const std::size_t half = (order.size() + 1) / 2;
  const std::vector<UserIndex> in_users(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(half));
  const std::vector<UserIndex> out_users(order.begin() + static_cast<std::ptrdiff_t>(half), order.end());

  const InteractionDataset shadow_train = subset_users(shadow_data, in_users);
  const Recommender shadow = Recommender::fit(cfg.shadow_kind, shadow_train, cfg.shadow_params, cfg.seed);

  struct Row {
    Vector v;
    std::string user;
  };
  auto featurize = [&](const std::vector<UserIndex>& users) {
    std::vector<Row> rows;
    for (UserIndex u : users) {
      const auto& h = shadow_data.histories[u];
      const auto recs = shadow.recommend({h, cfg.n});
      if (recs.items.empty()) continue;
      rows.push_back({member_feature(fm, h, recs.items), shadow_data.user_ids[u]});
    }
    return rows;
  };
  std::vector<Row> members = featurize(in_users);
  std::vector<Row> nonmembers = featurize(out_users);
  if (members.empty() || nonmembers.empty())
    throw Error("shadow training produced a single class; enlarge the shadow data");

  // Down-sample the larger class.
  auto& larger = members.size() > nonmembers.size() ? members : nonmembers;
  const std::size_t keep = std::min(members.size(), nonmembers.size());
  rng.shuffle(larger);
  larger.resize(keep);

  ShadowTraining out;
  for (auto* rows : {&members, &nonmembers}) {
    const int label = rows == &members ? 1 : 0;
    for (auto& r : *rows) {
      out.features.push_back(std::move(r.v));
      out.labels.push_back(label);
      out.feature_users.push_back(std::move(r.user));
    }
  }
  out.classifier = train_logistic(out.features, out.labels, cfg.classifier_epochs, cfg.classifier_lr);
  return out;
}

inline AttackClassifier train_attack_classifier(const ExperimentSplit& split,
                                                const ItemFeatureMatrix& fm,
                                                const ShadowConfig& cfg) {
  return train_shadow_attack(split.shadow_set, fm, cfg).classifier;
}

struct BaselineVerdict {
  std::string user;
  double score = 0.0;  // classifier decision value
  Membership decision = Membership::NonMember;

  bool operator==(const BaselineVerdict&) const = default;
};

inline std::vector<BaselineVerdict> attack_cohort_baseline(const RecommendOracle& target,
                                                           const ItemFeatureMatrix& fm,
                                                           const AttackClassifier& cls,
                                                           const std::vector<CohortUser>& users,
                                                           std::size_t n) {
  std::vector<BaselineVerdict> out;
  out.reserve(users.size());
  for (const auto& u : users) {
    const auto recs = target.recommend({u.history, n});
    const Vector v = member_feature(fm, u.history, recs.items);
    const double s = decision_value(cls, v);
    out.push_back({u.id, s, s > 0.0 ? Membership::Member : Membership::NonMember});
  }
  return out;
}

inline nlohmann::json classifier_to_json(const AttackClassifier& cls, const ShadowConfig& cfg,
                                         const ItemFeatureMatrix& fm) {
  return {{"format", "recmia-classifier"},
          {"version", 1},
          {"weights", cls.weights},
          {"bias", cls.bias},
          {"training_loss_trace", cls.training_loss_trace},
          {"config", cfg},
          {"feature_fingerprint", Fingerprint().add(fm.fingerprint()).hex()}};
}

inline AttackClassifier classifier_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "recmia-classifier") throw Error("not a recmia classifier document");
  AttackClassifier cls;
  cls.weights = j.at("weights").get<Vector>();
  cls.bias = j.at("bias").get<double>();
  cls.training_loss_trace = j.value("training_loss_trace", std::vector<double>{});
  return cls;
}

}  // namespace recmia
