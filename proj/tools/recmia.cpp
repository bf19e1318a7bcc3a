// recmia: membership inference against top-n recommenders, one pipeline
// stage per subcommand plus `run` for a whole experiment.

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "recmia/recmia.hpp"

namespace {

using namespace recmia;

std::vector<std::string> split_command(const std::string& cmd) {
  std::istringstream in(cmd);
  std::vector<std::string> argv;
  for (std::string tok; in >> tok;) argv.push_back(tok);
  return argv;
}

FactorizationConfig features_hyperparameters(const std::string& features_path) {
  auto in = detail::open_input(features_path + ".json");
  const auto side = nlohmann::json::parse(in);
  return side.at("hyperparameters").get<FactorizationConfig>();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"recmia: shadow-free and shadow-training membership inference on recommenders"};
  app.require_subcommand(1);

  // gen-synth
  SynthConfig synth;
  std::string synth_out;
  auto* gen = app.add_subcommand("gen-synth", "write a block-structured synthetic dataset (MovieLens format)");
  gen->add_option("--blocks", synth.blocks)->capture_default_str();
  gen->add_option("--users-per-block", synth.users_per_block)->capture_default_str();
  gen->add_option("--items-per-block", synth.items_per_block)->capture_default_str();
  gen->add_option("--popular-items", synth.popular_items)->capture_default_str();
  gen->add_option("--in-block-prob", synth.in_block_prob)->capture_default_str();
  gen->add_option("--cross-block-prob", synth.cross_block_prob)->capture_default_str();
  gen->add_option("--popular-prob", synth.popular_prob)->capture_default_str();
  gen->add_option("--permute-items-seed", synth.item_permutation_seed,
                  "relabel items with a seeded permutation (0 = identity)")
      ->capture_default_str();
  gen->add_option("--seed", synth.seed)->capture_default_str();
  gen->add_option("-o,--out", synth_out)->required();

  // ingest
  DatasetSource source;
  std::string ingest_out, delimiter = ",";
  auto* ing = app.add_subcommand("ingest", "parse, filter and binarize an interaction file");
  ing->add_option("--format", source.format, "movielens | movielens-tab | csv")->capture_default_str();
  ing->add_option("-i,--input", source.path)->required();
  ing->add_option("--min-interactions", source.min_interactions)->capture_default_str();
  ing->add_option("--user-col", source.columns.user)->capture_default_str();
  ing->add_option("--item-col", source.columns.item)->capture_default_str();
  ing->add_option("--rating-col", source.columns.rating)->capture_default_str();
  ing->add_option("--timestamp-col", source.columns.timestamp);
  ing->add_option("--delimiter", delimiter)->capture_default_str();
  ing->add_option("-o,--out", ingest_out)->required();

  // split
  SplitConfig split_cfg;
  std::string split_dataset, split_out;
  std::vector<double> fractions{0.4, 0.3, 0.3};
  auto* spl = app.add_subcommand("split", "partition users into feature/shadow/target subsets");
  spl->add_option("--dataset", split_dataset)->required();
  spl->add_option("--fractions", fractions, "feature-extraction shadow target")->expected(3)->capture_default_str();
  spl->add_option("--member-fraction", split_cfg.member_fraction)->capture_default_str();
  spl->add_option("--seed", split_cfg.seed)->capture_default_str();
  spl->add_option("-o,--out", split_out)->required();

  // factorize
  FactorizationConfig fcfg;
  std::string fac_dataset, fac_split, fac_out;
  auto* fac = app.add_subcommand("factorize", "learn item features on the feature-extraction subset");
  fac->add_option("--dataset", fac_dataset)->required();
  fac->add_option("--split", fac_split)->required();
  fac->add_option("--latent-dim", fcfg.latent_dim)->capture_default_str();
  fac->add_option("--learning-rate", fcfg.learning_rate)->capture_default_str();
  fac->add_option("--regularization", fcfg.regularization)->capture_default_str();
  fac->add_option("--epochs", fcfg.epochs)->capture_default_str();
  fac->add_option("--negatives", fcfg.negatives_per_positive)->capture_default_str();
  fac->add_option("--seed", fcfg.seed)->capture_default_str();
  fac->add_option("-o,--out", fac_out)->required();

  // fit
  TargetConfig target;
  std::string fit_dataset, fit_split, fit_out, kind_name = "item_knn", params_json = "{}";
  auto* fitc = app.add_subcommand("fit", "fit the target recommender on the target members");
  fitc->add_option("--dataset", fit_dataset)->required();
  fitc->add_option("--split", fit_split)->required();
  fitc->add_option("--kind", kind_name, "popularity | item_knn | latent_factor | sequential_cooccurrence")
      ->capture_default_str();
  fitc->add_option("--params", params_json, "recommender params as JSON")->capture_default_str();
  fitc->add_option("--seed", target.seed)->capture_default_str();
  fitc->add_option("-o,--out", fit_out)->required();

  // attack-sf
  AttackInputs inputs;
  ShadowFreeOptions sf;
  std::string out_dir = ".", oracle_cmd;
  auto* asf = app.add_subcommand("attack-sf", "run the shadow-free attack on the target cohort");
  asf->add_option("--dataset", inputs.dataset)->required();
  asf->add_option("--split", inputs.split)->required();
  asf->add_option("--features", inputs.features)->required();
  asf->add_option("--model", inputs.model, "target model file");
  asf->add_option("--oracle-cmd", oracle_cmd, "query an out-of-process oracle instead of --model");
  asf->add_option("--n", sf.n)->capture_default_str();
  asf->add_option("--known-history-fraction", sf.known_history_fraction)->capture_default_str();
  asf->add_option("--out-dir", out_dir)->capture_default_str();

  // attack-shadow
  BaselineConfig baseline;
  std::string shadow_kind = "item_knn", shadow_params = "{}";
  DatasetSource shadow_source;
  auto* ash = app.add_subcommand("attack-shadow", "run the shadow-training baseline attack");
  ash->add_option("--dataset", inputs.dataset)->required();
  ash->add_option("--split", inputs.split)->required();
  ash->add_option("--features", inputs.features)->required();
  ash->add_option("--model", inputs.model)->required();
  ash->add_option("--shadow-kind", shadow_kind)->capture_default_str();
  ash->add_option("--shadow-params", shadow_params)->capture_default_str();
  ash->add_option("--n", baseline.shadow.n)->capture_default_str();
  ash->add_option("--epochs", baseline.shadow.classifier_epochs)->capture_default_str();
  ash->add_option("--lr", baseline.shadow.classifier_lr)->capture_default_str();
  ash->add_option("--seed", baseline.shadow.seed)->capture_default_str();
  ash->add_option("--shadow-dataset", shadow_source.path, "external shadow data (default: split's shadow subset)");
  ash->add_option("--shadow-format", shadow_source.format)->capture_default_str();
  ash->add_option("--shadow-min-interactions", shadow_source.min_interactions)->capture_default_str();
  ash->add_option("--out-dir", out_dir)->capture_default_str();

  // score
  std::string verdicts_path, score_out;
  auto* sco = app.add_subcommand("score", "accuracy/TPR/FPR of a verdict CSV");
  sco->add_option("--verdicts", verdicts_path)->required();
  sco->add_option("-o,--out", score_out);

  // ablate
  std::vector<std::size_t> n_values, l_values;
  std::string ablate_out;
  auto* abl = app.add_subcommand("ablate", "sweep n and/or l for the shadow-free attack");
  abl->add_option("--dataset", inputs.dataset)->required();
  abl->add_option("--split", inputs.split)->required();
  abl->add_option("--features", inputs.features)->required();
  abl->add_option("--model", inputs.model)->required();
  abl->add_option("--n-values", n_values)->delimiter(',');
  abl->add_option("--l-values", l_values)->delimiter(',');
  abl->add_option("--n", sf.n, "n used while sweeping l")->capture_default_str();
  abl->add_option("-o,--out", ablate_out)->required();

  // serve-oracle
  std::string serve_model;
  auto* srv = app.add_subcommand("serve-oracle", "answer line-delimited JSON recommend queries on stdin");
  srv->add_option("--model", serve_model)->required();

  // run
  std::string config_path;
  auto* run = app.add_subcommand("run", "run a full experiment from a JSON config");
  run->add_option("-c,--config", config_path)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      run_stage("gen-synth", [&] { write_movielens(generate_synthetic(synth), synth_out); });
    } else if (ing->parsed()) {
      if (delimiter.size() != 1) throw ConfigError("--delimiter must be a single character");
      source.columns.delimiter = delimiter[0];
      stage_ingest(source, ingest_out);
    } else if (spl->parsed()) {
      split_cfg.fractions = {fractions[0], fractions[1], fractions[2]};
      stage_split(split_dataset, split_cfg, split_out);
    } else if (fac->parsed()) {
      stage_factorize(fac_dataset, fac_split, fcfg, fac_out);
    } else if (fitc->parsed()) {
      run_stage("fit", [&] {
        target.kind = parse_recommender_kind(kind_name);
        target.params = nlohmann::json::parse(params_json).get<RecommenderParams>();
      });
      stage_fit(fit_dataset, fit_split, target, fit_out);
    } else if (asf->parsed()) {
      fs::create_directories(out_dir);
      std::unique_ptr<SubprocessOracle> remote;
      if (!oracle_cmd.empty()) {
        remote = std::make_unique<SubprocessOracle>(split_command(oracle_cmd));
      } else if (inputs.model.empty()) {
        throw StageError("attack-sf", "either --model or --oracle-cmd is required");
      }
      const auto r = stage_attack_sf(inputs, remote.get(), sf, ArtifactPaths{out_dir});
      std::cout << metrics_to_json(r.report, true).dump(2) << '\n';
    } else if (ash->parsed()) {
      fs::create_directories(out_dir);
      run_stage("attack-shadow", [&] {
        baseline.shadow.shadow_kind = parse_recommender_kind(shadow_kind);
        baseline.shadow.shadow_params = nlohmann::json::parse(shadow_params).get<RecommenderParams>();
      });
      if (!shadow_source.path.empty()) baseline.shadow_dataset = shadow_source;
      const auto r = stage_attack_shadow(inputs, baseline, ArtifactPaths{out_dir});
      std::cout << metrics_to_json(r.report, true).dump(2) << '\n';
    } else if (sco->parsed()) {
      std::cout << metrics_to_json(stage_score(verdicts_path, score_out)).dump(2) << '\n';
    } else if (abl->parsed()) {
      const auto hp = run_stage("ablate", [&] { return features_hyperparameters(inputs.features); });
      stage_ablate(inputs, hp, sf, n_values, l_values, ablate_out);
    } else if (srv->parsed()) {
      const auto model = run_stage("serve-oracle", [&] { return load_model(serve_model); });
      serve_oracle(model, std::cin, std::cout);
    } else if (run->parsed()) {
      const auto cfg = run_stage("config", [&] { return load_config(config_path); });
      const auto result = run_experiment(cfg);
      std::cout << "shadow-free: accuracy " << result.shadow_free.report.accuracy << ", tpr "
                << result.shadow_free.report.tpr << ", fpr " << result.shadow_free.report.fpr
                << '\n';
      if (result.baseline)
        std::cout << "baseline:    accuracy " << result.baseline->report.accuracy << ", tpr "
                  << result.baseline->report.tpr << ", fpr " << result.baseline->report.fpr
                  << '\n';
      std::cout << "reports in " << cfg.output_dir << '\n';
    }
  } catch (const StageError& e) {
    std::cerr << "error in stage " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
