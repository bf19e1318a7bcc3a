#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "recmia/common.hpp"
#include "recmia/item_features.hpp"
#include "recmia/recommenders.hpp"

namespace recmia {

enum class Membership { NonMember = 0, Member = 1 };

inline const char* to_string(Membership m) {
  return m == Membership::Member ? "member" : "nonmember";
}

inline Membership parse_membership(std::string_view s) {
  if (s == "member" || s == "1") return Membership::Member;
  if (s == "nonmember" || s == "0") return Membership::NonMember;
  throw Error("unknown membership label '" + std::string(s) + "'");
}

// Member iff the recommendations sit strictly closer to the user's history
// than to the popular items. Equal distances are nonmember.
inline Membership decide(double alpha1, double alpha2) {
  return alpha1 > alpha2 ? Membership::Member : Membership::NonMember;
}

struct AttackVerdict {
  std::string user;
  double alpha1 = 0.0;  // |v_p - v_t|
  double alpha2 = 0.0;  // |v_x - v_t|
  Membership decision = Membership::NonMember;
  Vector v_p, v_x, v_t;
  std::size_t unfitted_history_items = 0;

  bool operator==(const AttackVerdict&) const = default;
};

struct PopularProbe {
  RecommendationList items;
  Vector centroid;  // v_p
};

// Queries the target as a fresh account with no interactions.
inline PopularProbe probe_popular(const RecommendOracle& model, const ItemFeatureMatrix& fm,
                                  std::size_t n) {
  if (n < 1) throw Error("probe_popular: n must be >= 1");
  PopularProbe probe{popular_items(model, n), {}};
  if (probe.items.items.empty()) throw Error("probe_popular: target returned no items");
  probe.centroid = mean_feature(fm, probe.items.items);
  return probe;
}

struct ShadowFreeOptions {
  std::size_t n = 10;
  // Share of the victim's history the attacker knows (earliest items first).
  // The target is always queried as the victim's account, i.e. with the full
  // history; only v_x is computed from the known part.
  double known_history_fraction = 1.0;

  void validate() const {
    if (n < 1) throw ConfigError("shadow-free n must be >= 1");
    if (!(known_history_fraction > 0.0 && known_history_fraction <= 1.0))
      throw ConfigError("known_history_fraction must lie in (0, 1]");
  }
};

inline std::span<const ItemIndex> known_history(const std::vector<ItemIndex>& history,
                                                double fraction) {
  const auto m = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(history.size()) - 1e-12));
  return {history.data(), std::max<std::size_t>(1, std::min(m, history.size()))};
}

// One query to the target. `v_p` comes from a prior probe_popular with the same n.
inline AttackVerdict attack_user(const RecommendOracle& model, const ItemFeatureMatrix& fm,
                                 const Vector& v_p, const std::string& user,
                                 const std::vector<ItemIndex>& history, std::size_t n,
                                 double known_history_fraction = 1.0) {
  if (history.empty()) throw Error("attack_user: empty history for user '" + user + "'");
  if (v_p.size() != fm.latent_dim()) throw Error("attack_user: v_p has the wrong dimension");
  const RecommendationList recs = model.recommend({history, n});
  if (recs.items.empty())
    throw Error("attack_user: target returned no recommendations for user '" + user + "'");
  const auto known = known_history(history, known_history_fraction);

  AttackVerdict v;
  v.user = user;
  v.v_p = v_p;
  v.v_x = mean_feature(fm, known);
  v.v_t = mean_feature(fm, recs.items);
  v.alpha1 = l2_distance(v.v_p, v.v_t);
  v.alpha2 = l2_distance(v.v_x, v.v_t);
  v.decision = decide(v.alpha1, v.alpha2);
  v.unfitted_history_items = fm.count_unfitted(known);
  return v;
}

inline AttackVerdict attack_user(const RecommendOracle& model, const ItemFeatureMatrix& fm,
                                 const Vector& v_p, const std::vector<ItemIndex>& history,
                                 std::size_t n) {
  return attack_user(model, fm, v_p, std::string{}, history, n);
}

struct CohortUser {
  std::string id;
  std::vector<ItemIndex> history;
};

struct CohortFailure {
  std::size_t index;
  std::string user;
  std::string message;
};

struct CohortResult {
  std::vector<AttackVerdict> verdicts;  // input order, failed users omitted
  std::vector<std::size_t> indices;     // input position of each verdict
  std::vector<CohortFailure> failures;
  PopularProbe probe;
};

// Probes the popular list once, then attacks each user with one query.
inline CohortResult attack_cohort(const RecommendOracle& model, const ItemFeatureMatrix& fm,
                                  const std::vector<CohortUser>& users,
                                  const ShadowFreeOptions& opts) {
  opts.validate();
  CohortResult out;
  out.probe = probe_popular(model, fm, opts.n);
  for (std::size_t k = 0; k < users.size(); ++k) {
    try {
      out.verdicts.push_back(attack_user(model, fm, out.probe.centroid, users[k].id,
                                         users[k].history, opts.n, opts.known_history_fraction));
      out.indices.push_back(k);
    } catch (const Error& e) {
      out.failures.push_back({k, users[k].id, e.what()});
      log_info("attack failed for user ", users[k].id, ": ", e.what());
    }
  }
  return out;
}

inline CohortResult attack_cohort(const RecommendOracle& model, const ItemFeatureMatrix& fm,
                                  const std::vector<CohortUser>& users, std::size_t n) {
  return attack_cohort(model, fm, users, ShadowFreeOptions{.n = n});
}

}  // namespace recmia
