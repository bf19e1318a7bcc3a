#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "recmia/attack_shadow_baseline.hpp"
#include "recmia/attack_shadow_free.hpp"
#include "recmia/data.hpp"
#include "recmia/evaluation.hpp"
#include "recmia/item_features.hpp"
#include "recmia/partition.hpp"
#include "recmia/recommenders.hpp"

namespace recmia {

namespace fs = std::filesystem;

// Failure of one pipeline stage; what() is prefixed with the stage name.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

template <typename F>
auto run_stage(const std::string& stage, F&& body) -> decltype(body()) {
  try {
    log_info("stage ", stage);
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

struct DatasetSource {
  std::string format = "movielens";  // movielens | movielens-tab | csv
  std::string path;
  CsvColumns columns;
  std::size_t min_interactions = kDefaultMinInteractions;
};

inline void to_json(nlohmann::json& j, const DatasetSource& s) {
  j = {{"format", s.format},
       {"path", s.path},
       {"min_interactions", s.min_interactions},
       {"columns",
        {{"user", s.columns.user},
         {"item", s.columns.item},
         {"rating", s.columns.rating},
         {"timestamp", s.columns.timestamp},
         {"delimiter", std::string(1, s.columns.delimiter)}}}};
}

inline void from_json(const nlohmann::json& j, DatasetSource& s) {
  DatasetSource d;
  s.format = j.value("format", d.format);
  s.path = j.at("path").get<std::string>();
  s.min_interactions = j.value("min_interactions", d.min_interactions);
  if (j.contains("columns")) {
    const auto& c = j.at("columns");
    s.columns.user = c.value("user", d.columns.user);
    s.columns.item = c.value("item", d.columns.item);
    s.columns.rating = c.value("rating", d.columns.rating);
    s.columns.timestamp = c.value("timestamp", d.columns.timestamp);
    const auto delim = c.value("delimiter", std::string(1, d.columns.delimiter));
    if (delim.size() != 1) throw ConfigError("csv delimiter must be a single character");
    s.columns.delimiter = delim[0];
  }
}

inline std::vector<RawInteraction> read_raw(const DatasetSource& src) {
  if (!fs::exists(src.path)) throw Error("dataset file '" + src.path + "' does not exist");
  if (src.format == "movielens") return parse_movielens(src.path, "::");
  if (src.format == "movielens-tab") return parse_movielens(src.path, "\t");
  if (src.format == "csv") return parse_csv(src.path, src.columns);
  throw ConfigError("unknown dataset format '" + src.format +
                    "' (expected movielens, movielens-tab or csv)");
}

inline InteractionDataset ingest(const DatasetSource& src) {
  return build_dataset(read_raw(src), src.min_interactions);
}

struct TargetConfig {
  RecommenderKind kind = RecommenderKind::ItemKNN;
  RecommenderParams params;
  std::uint64_t seed = 3;
};

inline void to_json(nlohmann::json& j, const TargetConfig& t) {
  j = {{"kind", to_string(t.kind)}, {"params", t.params}, {"seed", t.seed}};
}

inline void from_json(const nlohmann::json& j, TargetConfig& t) {
  TargetConfig d;
  t.kind = parse_recommender_kind(j.value("kind", to_string(d.kind)));
  t.params = j.contains("params") ? j.at("params").get<RecommenderParams>() : d.params;
  t.seed = j.value("seed", d.seed);
}

struct BaselineConfig {
  ShadowConfig shadow;
  // Absent: the split's shadow subset. Present: an external dataset mapped
  // onto the target catalog by item id.
  std::optional<DatasetSource> shadow_dataset;
};

struct ExperimentConfig {
  DatasetSource dataset;
  SplitConfig split;
  FactorizationConfig factorization{.latent_dim = 64};
  TargetConfig target;
  ShadowFreeOptions shadow_free;
  std::optional<BaselineConfig> baseline;
  std::string output_dir = "out";

  void validate() const {
    recmia::validate(split);
    factorization.validate();
    target.params.validate();
    shadow_free.validate();
    if (!fs::exists(dataset.path))
      throw ConfigError("dataset path '" + dataset.path + "' does not exist");
    if (baseline) {
      baseline->shadow.validate();
      if (baseline->shadow_dataset && !fs::exists(baseline->shadow_dataset->path))
        throw ConfigError("shadow dataset path '" + baseline->shadow_dataset->path +
                          "' does not exist");
    }
  }
};

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j = {
      {"dataset", c.dataset},
      {"split",
       {{"fractions", c.split.fractions},
        {"member_fraction", c.split.member_fraction},
        {"seed", c.split.seed}}},
      {"factorization", c.factorization},
      {"target", c.target},
      {"attacks",
       {{"shadow_free",
         {{"n", c.shadow_free.n}, {"known_history_fraction", c.shadow_free.known_history_fraction}}}}},
      {"output_dir", c.output_dir}};
  if (c.baseline) {
    nlohmann::json b = c.baseline->shadow;
    if (c.baseline->shadow_dataset) b["shadow_dataset"] = *c.baseline->shadow_dataset;
    j["attacks"]["baseline"] = b;
  }
  return j;
}

// Relative paths are resolved against `base_dir` (the config file's directory).
inline ExperimentConfig config_from_json(const nlohmann::json& j, const fs::path& base_dir = {}) {
  auto resolve = [&](const std::string& p) {
    if (p.empty() || fs::path(p).is_absolute() || base_dir.empty()) return p;
    return (base_dir / p).lexically_normal().string();
  };
  ExperimentConfig c;
  try {
    c.dataset = j.at("dataset").get<DatasetSource>();
    c.dataset.path = resolve(c.dataset.path);
    if (j.contains("split")) {
      const auto& s = j.at("split");
      c.split.fractions = s.value("fractions", c.split.fractions);
      c.split.member_fraction = s.value("member_fraction", c.split.member_fraction);
      c.split.seed = s.value("seed", c.split.seed);
    }
    if (j.contains("factorization")) {
      FactorizationConfig f = j.at("factorization").get<FactorizationConfig>();
      if (!j.at("factorization").contains("latent_dim")) f.latent_dim = c.factorization.latent_dim;
      c.factorization = f;
    }
    if (j.contains("target")) c.target = j.at("target").get<TargetConfig>();
    if (j.contains("attacks")) {
      const auto& a = j.at("attacks");
      if (a.contains("shadow_free")) {
        const auto& sf = a.at("shadow_free");
        c.shadow_free.n = sf.value("n", c.shadow_free.n);
        c.shadow_free.known_history_fraction =
            sf.value("known_history_fraction", c.shadow_free.known_history_fraction);
      }
      if (a.contains("baseline") && !a.at("baseline").is_null()) {
        BaselineConfig b;
        b.shadow = a.at("baseline").get<ShadowConfig>();
        if (a.at("baseline").contains("shadow_dataset") &&
            !a.at("baseline").at("shadow_dataset").is_null()) {
          b.shadow_dataset = a.at("baseline").at("shadow_dataset").get<DatasetSource>();
          b.shadow_dataset->path = resolve(b.shadow_dataset->path);
        }
        c.baseline = b;
      }
    }
    c.output_dir = resolve(j.value("output_dir", c.output_dir));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed experiment config: ") + e.what());
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  if (!fs::exists(path)) throw ConfigError("config file '" + path + "' does not exist");
  auto in = detail::open_input(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j, fs::path(path).parent_path());
}

// Hash of every seed, fraction and hyperparameter; paths are left out.
inline std::string config_fingerprint(const ExperimentConfig& c) {
  auto j = config_to_json(c);
  j["dataset"].erase("path");
  j.erase("output_dir");
  if (j["attacks"].contains("baseline") && j["attacks"]["baseline"].contains("shadow_dataset"))
    j["attacks"]["baseline"]["shadow_dataset"].erase("path");
  return Fingerprint().add(j.dump()).hex();
}

// File names inside an output directory.
struct ArtifactPaths {
  fs::path dir;
  std::string dataset() const { return (dir / "dataset.json").string(); }
  std::string split() const { return (dir / "split.json").string(); }
  std::string features() const { return (dir / "features.bin").string(); }
  std::string model() const { return (dir / "model.bin").string(); }
  std::string sf_verdicts() const { return (dir / "sf_verdicts.csv").string(); }
  std::string sf_metrics() const { return (dir / "sf_metrics.json").string(); }
  std::string sf_timing() const { return (dir / "sf_timing.json").string(); }
  std::string alpha_distribution() const { return (dir / "alpha_distribution.csv").string(); }
  std::string baseline_verdicts() const { return (dir / "baseline_verdicts.csv").string(); }
  std::string baseline_metrics() const { return (dir / "baseline_metrics.json").string(); }
  std::string baseline_timing() const { return (dir / "baseline_timing.json").string(); }
  std::string classifier() const { return (dir / "classifier.json").string(); }
  std::string metrics() const { return (dir / "metrics.json").string(); }
  std::string timing() const { return (dir / "timing.json").string(); }
  std::string table() const { return (dir / "table.md").string(); }
  std::string ablation() const { return (dir / "ablation.csv").string(); }
};

inline void require_artifact(const std::string& path, const std::string& what,
                             const std::string& producer) {
  if (!fs::exists(path))
    throw Error("missing " + what + " '" + path + "' (produce it with `recmia " + producer + "`)");
}

inline void write_json(const nlohmann::json& j, const std::string& path) {
  auto out = detail::open_output(path);
  out << j.dump(2) << '\n';
}

// Identifies everything upstream of an attack so reports stay traceable.
inline std::string attack_context(const std::string& split_path, const std::string& model_path) {
  Fingerprint fp;
  for (const auto& p : {split_path, model_path}) {
    if (p.empty()) continue;
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    fp.add(ss.str());
  }
  return fp.hex();
}

inline void stage_ingest(const DatasetSource& src, const std::string& out) {
  run_stage("ingest", [&] {
    const auto ds = ingest(src);
    save_dataset(ds, out);
    log_info("ingested ", ds.num_users(), " users, ", ds.num_items(), " items, ",
             ds.num_interactions(), " interactions");
  });
}

inline void stage_split(const std::string& dataset_path, const SplitConfig& cfg,
                        const std::string& out) {
  run_stage("split", [&] {
    require_artifact(dataset_path, "dataset", "ingest");
    const auto ds = load_dataset(dataset_path);
    save_split(three_way_split(ds, cfg), ds, out);
  });
}

inline void stage_factorize(const std::string& dataset_path, const std::string& split_path,
                            const FactorizationConfig& cfg, const std::string& out) {
  run_stage("factorize", [&] {
    require_artifact(dataset_path, "dataset", "ingest");
    require_artifact(split_path, "split manifest", "split");
    const auto ds = load_dataset(dataset_path);
    const auto split = load_split(split_path, ds);
    const auto result = factorize(split.feature_extraction_set, cfg);
    nlohmann::json hp = cfg;
    hp["loss_trace"] = result.loss_trace;
    save_item_features(result.item_features, out, hp);
  });
}

inline void stage_fit(const std::string& dataset_path, const std::string& split_path,
                      const TargetConfig& target, const std::string& out) {
  run_stage("fit", [&] {
    require_artifact(dataset_path, "dataset", "ingest");
    require_artifact(split_path, "split manifest", "split");
    const auto ds = load_dataset(dataset_path);
    const auto split = load_split(split_path, ds);
    save_model(Recommender::fit(target.kind, split.target_members, target.params, target.seed), out);
  });
}

struct AttackInputs {
  std::string dataset;
  std::string split;
  std::string features;
  std::string model;
};

inline ShadowFreeRun stage_attack_sf(const AttackInputs& in, const RecommendOracle* oracle,
                                     const ShadowFreeOptions& opts, const ArtifactPaths& out) {
  return run_stage("attack-sf", [&] {
    require_artifact(in.dataset, "dataset", "ingest");
    require_artifact(in.split, "split manifest", "split");
    require_artifact(in.features, "item feature matrix", "factorize");
    if (!oracle) require_artifact(in.model, "target model", "fit");
    const auto ds = load_dataset(in.dataset);
    const auto split = load_split(in.split, ds);
    const auto fm = load_item_features(in.features);
    const bool own_model = oracle == nullptr;
    std::optional<Recommender> local;
    if (own_model) {
      local = load_model(in.model);
      oracle = &*local;
    }
    const std::string context = attack_context(in.split, own_model ? in.model : std::string{});
    auto run = run_shadow_free(*oracle, fm, split, opts, context);
    write_verdicts_csv(run.verdicts, out.sf_verdicts());
    export_alpha_distribution(run.verdicts, out.alpha_distribution());
    nlohmann::json failures = nlohmann::json::array();
    for (const auto& f : run.failures) failures.push_back({{"user", f.user}, {"error", f.message}});
    write_json({{"attack", "shadow_free"},
                {"n", opts.n},
                {"known_history_fraction", opts.known_history_fraction},
                {"metrics", metrics_to_json(run.report)},
                {"failures", failures}},
               out.sf_metrics());
    write_json({{"wall_time_seconds", run.report.wall_time_seconds}}, out.sf_timing());
    return run;
  });
}

inline BaselineRun stage_attack_shadow(const AttackInputs& in, const BaselineConfig& cfg,
                                       const ArtifactPaths& out) {
  return run_stage("attack-shadow", [&] {
    require_artifact(in.dataset, "dataset", "ingest");
    require_artifact(in.split, "split manifest", "split");
    require_artifact(in.features, "item feature matrix", "factorize");
    require_artifact(in.model, "target model", "fit");
    const auto ds = load_dataset(in.dataset);
    const auto split = load_split(in.split, ds);
    const auto fm = load_item_features(in.features);
    const auto target = load_model(in.model);
    InteractionDataset shadow_data =
        cfg.shadow_dataset ? align_items(ingest(*cfg.shadow_dataset), ds) : split.shadow_set;
    auto run = run_baseline(target, fm, shadow_data, split, cfg.shadow,
                            attack_context(in.split, in.model));
    write_baseline_verdicts_csv(run.verdicts, out.baseline_verdicts());
    write_json(classifier_to_json(run.training.classifier, cfg.shadow, fm), out.classifier());
    write_json({{"attack", "shadow_training"},
                {"shadow_kind", to_string(cfg.shadow.shadow_kind)},
                {"external_shadow_data", cfg.shadow_dataset.has_value()},
                {"metrics", metrics_to_json(run.report)}},
               out.baseline_metrics());
    write_json({{"wall_time_seconds", run.report.wall_time_seconds}}, out.baseline_timing());
    return run;
  });
}

inline MetricsReport stage_score(const std::string& verdicts_path, const std::string& out) {
  return run_stage("score", [&] {
    require_artifact(verdicts_path, "verdict file", "attack-sf");
    const auto decisions = read_decisions_csv(verdicts_path);
    auto report = score(decisions);
    report.config_fingerprint = Fingerprint().add(verdicts_path).hex();
    if (!out.empty()) write_json(metrics_to_json(report), out);
    return report;
  });
}

inline void stage_ablate(const AttackInputs& in, const FactorizationConfig& fcfg,
                         const ShadowFreeOptions& opts, const std::vector<std::size_t>& n_values,
                         const std::vector<std::size_t>& l_values, const std::string& out) {
  run_stage("ablate", [&] {
    require_artifact(in.dataset, "dataset", "ingest");
    require_artifact(in.split, "split manifest", "split");
    require_artifact(in.features, "item feature matrix", "factorize");
    require_artifact(in.model, "target model", "fit");
    const auto ds = load_dataset(in.dataset);
    const auto split = load_split(in.split, ds);
    const auto fm = load_item_features(in.features);
    const auto target = load_model(in.model);
    const std::string context = attack_context(in.split, in.model);
    auto file = detail::open_output(out);
    bool header = true;
    if (!n_values.empty()) {
      write_ablation_csv("n", ablate_n(target, fm, split, opts, n_values, context), file, header);
      header = false;
    }
    if (!l_values.empty())
      write_ablation_csv("l", ablate_l(target, split, fcfg, opts, l_values, context), file, header);
  });
}

struct ExperimentResult {
  ShadowFreeRun shadow_free;
  std::optional<BaselineRun> baseline;
};

// ingest -> split -> factorize -> fit -> attacks -> reports, all through
// artifacts in cfg.output_dir. Artifacts of completed stages are kept when a
// later stage fails.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  run_stage("config", [&] { cfg.validate(); });
  const ArtifactPaths out{cfg.output_dir};
  run_stage("output", [&] { fs::create_directories(out.dir); });
  write_json(config_to_json(cfg), (out.dir / "config.json").string());

  stage_ingest(cfg.dataset, out.dataset());
  stage_split(out.dataset(), cfg.split, out.split());
  stage_factorize(out.dataset(), out.split(), cfg.factorization, out.features());
  stage_fit(out.dataset(), out.split(), cfg.target, out.model());
  const AttackInputs in{out.dataset(), out.split(), out.features(), out.model()};

  ExperimentResult result;
  result.shadow_free = stage_attack_sf(in, nullptr, cfg.shadow_free, out);
  if (cfg.baseline) result.baseline = stage_attack_shadow(in, *cfg.baseline, out);

  run_stage("report", [&] {
    const std::string kind = to_string(cfg.target.kind);
    nlohmann::json metrics = {{"config_fingerprint", config_fingerprint(cfg)},
                              {"target", kind},
                              {"shadow_free", metrics_to_json(result.shadow_free.report)}};
    nlohmann::json timing = {{"shadow_free", result.shadow_free.report.wall_time_seconds}};
    std::vector<TableRow> rows{{"SF-MIA", kind, result.shadow_free.report}};
    if (result.baseline) {
      metrics["baseline"] = metrics_to_json(result.baseline->report);
      timing["baseline"] = result.baseline->report.wall_time_seconds;
      rows.push_back({"ST-MIA", kind, result.baseline->report});
    }
    write_json(metrics, out.metrics());
    write_json(timing, out.timing());
    auto table = detail::open_output(out.table());
    table << markdown_table(rows);
  });
  return result;
}

}  // namespace recmia
