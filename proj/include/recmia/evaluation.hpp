#pragma once

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "recmia/attack_shadow_baseline.hpp"
#include "recmia/attack_shadow_free.hpp"
#include "recmia/common.hpp"
#include "recmia/item_features.hpp"
#include "recmia/partition.hpp"
#include "recmia/recommenders.hpp"

namespace recmia {

struct LabeledDecision {
  Membership decision;
  Membership truth;
};

struct MetricsReport {
  double accuracy = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t n_members = 0;
  std::size_t n_nonmembers = 0;
  double wall_time_seconds = 0.0;
  std::string config_fingerprint;

  // Field-wise equality ignoring wall time.
  bool same_outcome(const MetricsReport& o) const {
    return accuracy == o.accuracy && tpr == o.tpr && fpr == o.fpr && tp == o.tp && fp == o.fp &&
           tn == o.tn && fn == o.fn && n_members == o.n_members &&
           n_nonmembers == o.n_nonmembers && config_fingerprint == o.config_fingerprint;
  }
};

inline MetricsReport score(std::span<const LabeledDecision> decisions) {
  if (decisions.empty()) throw Error("score: no verdicts");
  MetricsReport r;
  for (const auto& d : decisions) {
    const bool predicted = d.decision == Membership::Member;
    if (d.truth == Membership::Member)
      ++(predicted ? r.tp : r.fn);
    else
      ++(predicted ? r.fp : r.tn);
  }
  r.n_members = r.tp + r.fn;
  r.n_nonmembers = r.tn + r.fp;
  if (r.n_members == 0) throw Error("score: ground truth has no member users");
  if (r.n_nonmembers == 0) throw Error("score: ground truth has no nonmember users");
  r.accuracy = static_cast<double>(r.tp + r.tn) / static_cast<double>(r.n_members + r.n_nonmembers);
  r.tpr = static_cast<double>(r.tp) / static_cast<double>(r.n_members);
  r.fpr = static_cast<double>(r.fp) / static_cast<double>(r.n_nonmembers);
  return r;
}

inline nlohmann::json metrics_to_json(const MetricsReport& r, bool include_time = false) {
  nlohmann::json j = {{"accuracy", r.accuracy},
                      {"tpr", r.tpr},
                      {"fpr", r.fpr},
                      {"tp", r.tp},
                      {"fp", r.fp},
                      {"tn", r.tn},
                      {"fn", r.fn},
                      {"n_members", r.n_members},
                      {"n_nonmembers", r.n_nonmembers},
                      {"config_fingerprint", r.config_fingerprint}};
  if (include_time) j["wall_time_seconds"] = r.wall_time_seconds;
  return j;
}

// Wall time of `run` on a monotonic clock, in seconds.
template <typename F>
double time_attack(F&& run) {
  const auto start = std::chrono::steady_clock::now();
  std::forward<F>(run)();
  const auto stop = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(stop - start).count();
}

struct LabeledVerdict {
  AttackVerdict verdict;
  Membership truth;
};

inline std::vector<LabeledDecision> decisions_of(std::span<const LabeledVerdict> verdicts) {
  std::vector<LabeledDecision> out;
  out.reserve(verdicts.size());
  for (const auto& v : verdicts) out.push_back({v.verdict.decision, v.truth});
  return out;
}

namespace detail {

inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  return out;
}

}  // namespace detail

inline void write_verdicts_csv(std::span<const LabeledVerdict> verdicts, const std::string& path) {
  auto out = detail::open_output(path);
  out << "user,alpha1,alpha2,alpha1_minus_alpha2,decision,ground_truth\n";
  for (const auto& lv : verdicts) {
    const auto& v = lv.verdict;
    out << v.user << ',' << detail::format_real(v.alpha1) << ',' << detail::format_real(v.alpha2)
        << ',' << detail::format_real(v.alpha1 - v.alpha2) << ',' << to_string(v.decision) << ','
        << to_string(lv.truth) << '\n';
  }
}

// Plot-ready (ground_truth, alpha1 - alpha2) rows.
inline void export_alpha_distribution(std::span<const LabeledVerdict> verdicts,
                                      const std::string& path) {
  if (verdicts.empty()) throw Error("export_alpha_distribution: no verdicts");
  auto out = detail::open_output(path);
  out << "ground_truth,alpha1_minus_alpha2\n";
  for (const auto& lv : verdicts)
    out << to_string(lv.truth) << ',' << detail::format_real(lv.verdict.alpha1 - lv.verdict.alpha2)
        << '\n';
}

struct LabeledBaselineVerdict {
  BaselineVerdict verdict;
  Membership truth;
};

inline void write_baseline_verdicts_csv(std::span<const LabeledBaselineVerdict> verdicts,
                                        const std::string& path) {
  auto out = detail::open_output(path);
  out << "user,score,decision,ground_truth\n";
  for (const auto& lv : verdicts)
    out << lv.verdict.user << ',' << detail::format_real(lv.verdict.score) << ','
        << to_string(lv.verdict.decision) << ',' << to_string(lv.truth) << '\n';
}

// Reads the decision and ground_truth columns of any verdict CSV.
inline std::vector<LabeledDecision> read_decisions_csv(const std::string& path) {
  auto in = detail::open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw Error("'" + path + "' is empty");
  const auto header = detail::split(detail::trim(line), ",");
  std::optional<std::size_t> dcol, tcol;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "decision") dcol = i;
    if (header[i] == "ground_truth") tcol = i;
  }
  if (!dcol || !tcol) throw Error("'" + path + "' lacks decision/ground_truth columns");
  std::vector<LabeledDecision> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split(detail::trim(line), ",");
    if (f.size() != header.size()) throw ParseError(line_no, "wrong field count in '" + path + "'");
    out.push_back({parse_membership(f[*dcol]), parse_membership(f[*tcol])});
  }
  return out;
}

struct TableRow {
  std::string attack;
  std::string recommender;
  MetricsReport report;
};

// Rows are attacks, column groups are recommender kinds.
inline std::string markdown_table(const std::vector<TableRow>& rows) {
  std::vector<std::string> kinds;
  std::vector<std::string> attacks;
  std::map<std::pair<std::string, std::string>, MetricsReport> cell;
  for (const auto& r : rows) {
    if (std::find(kinds.begin(), kinds.end(), r.recommender) == kinds.end())
      kinds.push_back(r.recommender);
    if (std::find(attacks.begin(), attacks.end(), r.attack) == attacks.end())
      attacks.push_back(r.attack);
    cell[{r.attack, r.recommender}] = r.report;
  }
  std::ostringstream out;
  out << std::fixed << std::setprecision(3);
  out << "| Attack |";
  for (const auto& k : kinds) out << ' ' << k << " Accuracy | " << k << " TPR | " << k << " FPR |";
  out << "\n|---|";
  for (std::size_t i = 0; i < kinds.size(); ++i) out << "---|---|---|";
  out << '\n';
  for (const auto& a : attacks) {
    out << "| " << a << " |";
    for (const auto& k : kinds) {
      auto it = cell.find({a, k});
      if (it == cell.end()) {
        out << " - | - | - |";
      } else {
        out << ' ' << it->second.accuracy << " | " << it->second.tpr << " | " << it->second.fpr
            << " |";
      }
    }
    out << '\n';
  }
  return out.str();
}

// Members first, then nonmembers.
inline std::vector<CohortUser> target_cohort(const ExperimentSplit& split,
                                             std::vector<Membership>* truths = nullptr) {
  std::vector<CohortUser> users;
  for (auto [ds, truth] : {std::pair{&split.target_members, Membership::Member},
                           std::pair{&split.target_nonmembers, Membership::NonMember}}) {
    for (std::size_t u = 0; u < ds->num_users(); ++u) {
      users.push_back({ds->user_ids[u], ds->histories[u]});
      if (truths) truths->push_back(truth);
    }
  }
  return users;
}

struct ShadowFreeRun {
  std::vector<LabeledVerdict> verdicts;
  std::vector<CohortFailure> failures;
  MetricsReport report;
};

// Attacks every target user (members and nonmembers) and scores the verdicts.
// `context` identifies everything upstream of the attack (split, target model).
inline ShadowFreeRun run_shadow_free(const RecommendOracle& target, const ItemFeatureMatrix& fm,
                                     const ExperimentSplit& split, const ShadowFreeOptions& opts,
                                     const std::string& context = {}) {
  std::vector<Membership> truths;
  const auto users = target_cohort(split, &truths);
  ShadowFreeRun run;
  CohortResult cohort;
  const double seconds = time_attack([&] { cohort = attack_cohort(target, fm, users, opts); });
  for (std::size_t k = 0; k < cohort.verdicts.size(); ++k)
    run.verdicts.push_back({std::move(cohort.verdicts[k]), truths[cohort.indices[k]]});
  run.failures = std::move(cohort.failures);
  const auto decisions = decisions_of(run.verdicts);
  run.report = score(decisions);
  run.report.wall_time_seconds = seconds;
  run.report.config_fingerprint = Fingerprint()
                                      .add(context)
                                      .add(fm.fingerprint())
                                      .add(static_cast<std::uint64_t>(opts.n))
                                      .add(opts.known_history_fraction)
                                      .hex();
  return run;
}

struct BaselineRun {
  ShadowTraining training;
  std::vector<LabeledBaselineVerdict> verdicts;
  MetricsReport report;
};

// Times shadow-model fitting, classifier training and inference together.
inline BaselineRun run_baseline(const RecommendOracle& target, const ItemFeatureMatrix& fm,
                                const InteractionDataset& shadow_data, const ExperimentSplit& split,
                                const ShadowConfig& cfg, const std::string& context = {}) {
  std::vector<Membership> truths;
  const auto users = target_cohort(split, &truths);
  BaselineRun run;
  std::vector<BaselineVerdict> verdicts;
  const double seconds = time_attack([&] {
    run.training = train_shadow_attack(shadow_data, fm, cfg);
    verdicts = attack_cohort_baseline(target, fm, run.training.classifier, users, cfg.n);
  });
  std::vector<LabeledDecision> decisions;
  for (std::size_t k = 0; k < verdicts.size(); ++k) {
    decisions.push_back({verdicts[k].decision, truths[k]});
    run.verdicts.push_back({std::move(verdicts[k]), truths[k]});
  }
  run.report = score(decisions);
  run.report.wall_time_seconds = seconds;
  run.report.config_fingerprint = Fingerprint()
                                      .add(context)
                                      .add(fm.fingerprint())
                                      .add(dataset_fingerprint(shadow_data))
                                      .add(nlohmann::json(cfg).dump())
                                      .hex();
  return run;
}

struct AblationRow {
  std::size_t value;
  MetricsReport report;
};

// Reruns the shadow-free attack for each n with the given target and features.
inline std::vector<AblationRow> ablate_n(const RecommendOracle& target, const ItemFeatureMatrix& fm,
                                         const ExperimentSplit& split, ShadowFreeOptions opts,
                                         const std::vector<std::size_t>& n_values,
                                         const std::string& context = {}) {
  if (n_values.empty()) throw Error("ablate_n: no n values");
  std::vector<AblationRow> rows;
  for (std::size_t n : n_values) {
    opts.n = n;
    rows.push_back({n, run_shadow_free(target, fm, split, opts, context).report});
  }
  return rows;
}

// Refits the item features with each latent dimension, then reruns the attack.
inline std::vector<AblationRow> ablate_l(const RecommendOracle& target, const ExperimentSplit& split,
                                         FactorizationConfig fcfg, const ShadowFreeOptions& opts,
                                         const std::vector<std::size_t>& l_values,
                                         const std::string& context = {}) {
  if (l_values.empty()) throw Error("ablate_l: no l values");
  std::vector<AblationRow> rows;
  for (std::size_t l : l_values) {
    fcfg.latent_dim = l;
    fcfg.validate();
    const auto fm = factorize(split.feature_extraction_set, fcfg).item_features;
    rows.push_back({l, run_shadow_free(target, fm, split, opts, context).report});
  }
  return rows;
}

inline void write_ablation_csv(const std::string& parameter, const std::vector<AblationRow>& rows,
                               std::ostream& out, bool header = true) {
  if (header) out << "parameter,value,accuracy,tpr,fpr,tp,fp,tn,fn,n_members,n_nonmembers,config_fingerprint\n";
  for (const auto& r : rows) {
    const auto& m = r.report;
    out << parameter << ',' << r.value << ',' << detail::format_real(m.accuracy) << ','
        << detail::format_real(m.tpr) << ',' << detail::format_real(m.fpr) << ',' << m.tp << ','
        << m.fp << ',' << m.tn << ',' << m.fn << ',' << m.n_members << ',' << m.n_nonmembers << ','
        << m.config_fingerprint << '\n';
  }
}

}  // namespace recmia
