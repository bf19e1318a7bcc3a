#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"

using namespace recmia;
using namespace recmia::testing;

namespace {

// Answers every query with a fixed list.
class FixedOracle : public RecommendOracle {
 public:
  FixedOracle(std::size_t q, std::vector<ItemIndex> items) : q_(q), items_(std::move(items)) {}
  RecommendationList recommend(const RecommendRequest& req) const override {
    RecommendationList out;
    out.items.assign(items_.begin(), items_.begin() + static_cast<std::ptrdiff_t>(std::min(req.n, items_.size())));
    return out;
  }
  std::size_t num_items() const override { return q_; }

 private:
  std::size_t q_;
  std::vector<ItemIndex> items_;
};

// Echoes the history back, as if exclusion were off and the model memorized it.
class EchoOracle : public RecommendOracle {
 public:
  EchoOracle(std::size_t q, std::vector<ItemIndex> popular) : q_(q), popular_(std::move(popular)) {}
  RecommendationList recommend(const RecommendRequest& req) const override {
    if (req.history.empty()) return {popular_, false};
    return {req.history, false};
  }
  std::size_t num_items() const override { return q_; }

 private:
  std::size_t q_;
  std::vector<ItemIndex> popular_;
};

double norm_oracle(const Vector& a, const Vector& b) {
  double s = 0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

Vector mean_oracle(const ItemFeatureMatrix& fm, const std::vector<ItemIndex>& items) {
  Vector m(fm.latent_dim(), 0.0);
  for (std::size_t k = 0; k < m.size(); ++k) {
    for (ItemIndex i : items) m[k] += fm.vectors()(i, k);
    m[k] /= static_cast<double>(items.size());
  }
  return m;
}

// Random orthogonal matrix by Gram-Schmidt.
DenseMatrix random_orthogonal(std::size_t l, std::uint64_t seed) {
  auto q = random_matrix(l, l, seed);
  for (std::size_t r = 0; r < l; ++r) {
    for (std::size_t p = 0; p < r; ++p) {
      const double d = dot(q.row(r), q.row(p));
      for (std::size_t c = 0; c < l; ++c) q(r, c) -= d * q(p, c);
    }
    const double n = std::sqrt(dot(q.row(r), q.row(r)));
    for (std::size_t c = 0; c < l; ++c) q(r, c) /= n;
  }
  return q;
}

ItemFeatureMatrix transform(const ItemFeatureMatrix& fm, const DenseMatrix& q, double scale) {
  DenseMatrix out(fm.num_items(), fm.latent_dim());
  for (std::size_t i = 0; i < fm.num_items(); ++i)
    for (std::size_t r = 0; r < q.rows(); ++r)
      out(i, r) = scale * dot(q.row(r), fm.vectors().row(i));
  std::vector<bool> fitted(fm.num_items());
  for (std::size_t i = 0; i < fitted.size(); ++i) fitted[i] = fm.fitted(static_cast<ItemIndex>(i));
  return ItemFeatureMatrix(out, fitted, fm.fingerprint());
}

}  // namespace

TEST(Decide, SignRuleWithTieToNonmember) {
  EXPECT_EQ(decide(1.0, 0.5), Membership::Member);
  EXPECT_EQ(decide(0.5, 1.0), Membership::NonMember);
  EXPECT_EQ(decide(0.7, 0.7), Membership::NonMember);
  EXPECT_EQ(decide(0.0, 0.0), Membership::NonMember);
  Rng rng(17);
  for (int k = 0; k < 10000; ++k) {
    const double a = rng.uniform(0, 2), b = k % 10 == 0 ? a : rng.uniform(0, 2);
    EXPECT_EQ(decide(a, b) == Membership::Member, a - b > 0);
  }
}

TEST(ProbePopular, MatchesPopularityRanking) {
  const auto ds = two_block_popular();
  const auto m = Recommender::fit(RecommenderKind::Popularity, ds, {}, 1);
  FactorizationConfig cfg;
  cfg.latent_dim = 4;
  const auto fm = factorize(ds, cfg).item_features;
  const auto probe = probe_popular(m, fm, 5);
  EXPECT_EQ(probe.items, m.popular(5));
  EXPECT_EQ(probe.items.items.front(), 10u);
  EXPECT_EQ(probe.centroid, mean_oracle(fm, probe.items.items));
}

TEST(ProbePopular, ZeroFeaturesGiveZeroCentroid) {
  const auto ds = two_block_popular();
  const auto m = Recommender::fit(RecommenderKind::ItemKNN, ds, {}, 1);
  const auto fm = dense_features(DenseMatrix(11, 3));
  EXPECT_EQ(probe_popular(m, fm, 4).centroid, Vector(3, 0.0));
  EXPECT_THROW(probe_popular(FixedOracle(11, {}), fm, 4), Error);
}

TEST(AttackUser, PopularResponseIsNonmember) {
  const auto fm = dense_features(random_matrix(12, 4, 5));
  const FixedOracle oracle(12, {9, 3, 7, 1});
  const auto v_p = probe_popular(oracle, fm, 4).centroid;
  const auto v = attack_user(oracle, fm, v_p, {0, 2, 5}, 4);
  EXPECT_EQ(v.v_t, v_p);
  EXPECT_EQ(v.alpha1, 0.0);
  EXPECT_GT(v.alpha2, 0.0);
  EXPECT_EQ(v.decision, Membership::NonMember);
}

TEST(AttackUser, EchoedHistoryIsMember) {
  const auto fm = dense_features(random_matrix(12, 4, 6));
  const EchoOracle oracle(12, {9, 3, 7});
  const auto v_p = probe_popular(oracle, fm, 3).centroid;
  const auto v = attack_user(oracle, fm, v_p, {0, 2, 5}, 3);
  EXPECT_EQ(v.v_t, v.v_x);
  EXPECT_EQ(v.alpha2, 0.0);
  EXPECT_GT(v.alpha1, 0.0);
  EXPECT_EQ(v.decision, Membership::Member);
  // History equal to the popular list: both distances vanish, tie -> nonmember.
  const auto tie = attack_user(oracle, fm, v_p, {9, 3, 7}, 3);
  EXPECT_EQ(tie.alpha1, 0.0);
  EXPECT_EQ(tie.decision, Membership::NonMember);
}

TEST(AttackUser, BlockOneMember) {
  const auto ds = two_block_popular();
  RecommenderParams p;
  p.strict_membership = false;
  const auto m = Recommender::fit(RecommenderKind::ItemKNN, ds, p, 1);
  FactorizationConfig cfg;
  cfg.latent_dim = 4;
  cfg.epochs = 200;
  const auto fm = factorize(ds, cfg).item_features;
  const auto probe = probe_popular(m, fm, 3);
  EXPECT_EQ(probe.items.items, (std::vector<ItemIndex>{10, 5, 0}));
  const auto v = attack_user(m, fm, probe.centroid, {0, 1}, 3);
  EXPECT_EQ(m.recommend({{0, 1}, 3}).items, (std::vector<ItemIndex>{2, 3, 4}));
  const auto v_t = mean_oracle(fm, {2, 3, 4});
  const double a1 = norm_oracle(mean_oracle(fm, {10, 5, 0}), v_t);
  const double a2 = norm_oracle(mean_oracle(fm, {0, 1}), v_t);
  EXPECT_NEAR(v.alpha1, a1, 1e-12);
  EXPECT_NEAR(v.alpha2, a2, 1e-12);
  EXPECT_LT(a2, a1);
  EXPECT_EQ(v.decision, Membership::Member);
}

TEST(AttackUser, RejectsEmptyHistory) {
  const auto fm = dense_features(random_matrix(5, 2, 1));
  const FixedOracle oracle(5, {0, 1});
  EXPECT_THROW(attack_user(oracle, fm, Vector(2, 0.0), {}, 2), Error);
  EXPECT_THROW(attack_user(oracle, fm, Vector(3, 0.0), {1}, 2), Error);
}

TEST(AttackUser, KnownHistoryFractionOnlyShrinksVx) {
  const auto fm = dense_features(random_matrix(12, 3, 8));
  const EchoOracle oracle(12, {9});
  const std::vector<ItemIndex> h{0, 1, 2, 3};
  const auto v = attack_user(oracle, fm, Vector(3, 0.0), "u", h, 4, 0.5);
  EXPECT_EQ(v.v_x, mean_oracle(fm, {0, 1}));
  EXPECT_EQ(v.v_t, mean_oracle(fm, h));
  EXPECT_EQ(known_history(h, 0.01).size(), 1u);
  EXPECT_EQ(known_history(h, 0.6).size(), 3u);
}

TEST(AttackCohort, QueryBudget) {
  const auto fx = make_fixture(8);
  const auto users = target_cohort(fx.split);
  const CountingOracle counter(fx.target);
  const auto result = attack_cohort(counter, fx.features, users, 10);
  EXPECT_EQ(counter.queries(), users.size() + 1);
  EXPECT_EQ(result.verdicts.size(), users.size());

  const CountingOracle single(fx.target);
  attack_user(single, fx.features, result.probe.centroid, users[0].history, 10);
  EXPECT_EQ(single.queries(), 1u);
}

TEST(AttackCohort, EdgeCases) {
  const auto fx = make_fixture(8);
  EXPECT_TRUE(attack_cohort(fx.target, fx.features, {}, 10).verdicts.empty());
  const auto& h = fx.split.target_members.histories[0];
  const auto twice = attack_cohort(fx.target, fx.features, {{"a", h}, {"a", h}}, 10);
  ASSERT_EQ(twice.verdicts.size(), 2u);
  EXPECT_EQ(twice.verdicts[0].alpha1, twice.verdicts[1].alpha1);
  EXPECT_EQ(twice.verdicts[0].alpha2, twice.verdicts[1].alpha2);
  EXPECT_EQ(twice.verdicts[0].decision, twice.verdicts[1].decision);

  // A failing user is reported and the rest proceed.
  const auto mixed = attack_cohort(fx.target, fx.features, {{"a", h}, {"bad", {}}, {"c", h}}, 10);
  EXPECT_EQ(mixed.verdicts.size(), 2u);
  EXPECT_EQ(mixed.indices, (std::vector<std::size_t>{0, 2}));
  ASSERT_EQ(mixed.failures.size(), 1u);
  EXPECT_EQ(mixed.failures[0].user, "bad");
}

TEST(AttackCohort, FixtureAccuracy) {
  const auto fx = make_fixture();
  const auto run = run_shadow_free(fx.target, fx.features, fx.split, {});
  EXPECT_GE(run.report.accuracy, 0.9);
}

TEST(AttackCohort, IsometryAndScalingInvariance) {
  for (auto kind : {RecommenderKind::ItemKNN, RecommenderKind::SequentialCooccurrence}) {
    const auto fx = make_fixture(8, kind);
    const auto users = target_cohort(fx.split);
    const auto base = attack_cohort(fx.target, fx.features, users, 10);
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto q = random_orthogonal(8, seed);
      for (double c : {1.0, 0.01, 3.5, 1e3}) {
        const auto moved = attack_cohort(fx.target, transform(fx.features, q, c), users, 10);
        ASSERT_EQ(moved.verdicts.size(), base.verdicts.size());
        for (std::size_t k = 0; k < base.verdicts.size(); ++k) {
          const auto& a = base.verdicts[k];
          const auto& b = moved.verdicts[k];
          EXPECT_EQ(a.decision, b.decision);
          EXPECT_NEAR(b.alpha1, c * a.alpha1, 1e-9 * c);
          EXPECT_NEAR(b.alpha2, c * a.alpha2, 1e-9 * c);
        }
      }
    }
  }
}

TEST(AttackCohort, NonmembersOfStrictTargetsGetAlphaOneZero) {
  const auto fx = make_fixture(8);
  std::vector<CohortUser> outsiders;
  for (std::size_t u = 0; u < fx.split.target_nonmembers.num_users(); ++u)
    outsiders.push_back({fx.split.target_nonmembers.user_ids[u], fx.split.target_nonmembers.histories[u]});
  for (const auto& v : attack_cohort(fx.target, fx.features, outsiders, 10).verdicts) {
    EXPECT_EQ(v.alpha1, 0.0);
    EXPECT_EQ(v.decision, Membership::NonMember);
  }
}
