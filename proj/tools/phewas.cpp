// Command-line front end for the multi-agent imaging-phenotype association
// engine. Subcommands cover synthetic cohort generation, input validation,
// the full three-stage run, phenotype-set metrics, disease-classification
// evaluation, set comparison and transcript replay.
//
// Exit codes: 0 success, 1 validation/configuration error, 2 I/O or
// remote-endpoint failure. Progress goes to stderr; stdout stays
// machine-readable.

#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "phewas/classify.hpp"
#include "phewas/consensus.hpp"
#include "phewas/data_io.hpp"
#include "phewas/domain.hpp"
#include "phewas/errors.hpp"
#include "phewas/metrics.hpp"
#include "phewas/pipeline.hpp"
#include "phewas/remote.hpp"

namespace {

using phewas::Json;

Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw phewas::TransportError("cannot open: " + path);
  try {
    return Json::parse(in);
  } catch (const std::exception& e) {
    throw phewas::SchemaError("invalid JSON in " + path + ": " + e.what());
  }
}

phewas::PhenotypeCatalog load_catalog(const std::string& path) {
  if (path.empty()) return phewas::build_default_catalog();
  return phewas::PhenotypeCatalog::from_json(load_json_file(path));
}

std::vector<std::string> split_ids(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

phewas::classify::ClassifierKind classifier_from_string(const std::string& s) {
  if (s == "lda" || s == "LDA") return phewas::classify::ClassifierKind::LDA;
  if (s == "adaboost" || s == "AdaBoost")
    return phewas::classify::ClassifierKind::AdaBoost;
  if (s == "svm" || s == "SVM")
    return phewas::classify::ClassifierKind::LinearSVM;
  throw phewas::ValidationError("unknown classifier: " + s +
                                " (expected lda, adaboost or svm)");
}

struct RunOptions {
  std::string input;
  std::string catalog_path;
  std::string output_dir;
  std::string config_path;
  std::string validate_path;
  std::uint64_t seed = 0;
  int jobs = 1;
  int max_rounds = 10;
  double alpha = 0.05;
  double rho = 0.3;
};

int cmd_run(const RunOptions& opt) {
  phewas::pipeline::PipelineConfig config;
  std::string remote_endpoint;
  double remote_timeout_s = 30.0;
  int remote_retries = 2;
  if (!opt.config_path.empty()) {
    const Json j = load_json_file(opt.config_path);
    config = phewas::pipeline::PipelineConfig::from_json(j);
    remote_endpoint = j.value("remote_endpoint", std::string{});
    remote_timeout_s = j.value("remote_timeout_s", 30.0);
    remote_retries = j.value("remote_retries", 2);
  }
  // Command-line flags win over the config file.
  config.seed = opt.seed;
  config.jobs = opt.jobs;
  config.consensus.max_rounds = opt.max_rounds;
  config.consensus.thresholds.alpha = opt.alpha;
  config.consensus.thresholds.rho = opt.rho;
  config.output_dir = opt.output_dir;

  const auto catalog = load_catalog(opt.catalog_path);
  std::cerr << "loading cohort from " << opt.input << "\n";
  const auto cohort = phewas::io::load_cohort_csv(opt.input);
  std::cerr << "cohort: " << cohort.size() << " participants, "
            << cohort.phenotype_columns().size() << " phenotypes, "
            << cohort.factor_columns().size() << " factors\n";

  std::optional<phewas::Cohort> validation;
  if (!opt.validate_path.empty())
    validation = phewas::io::load_cohort_csv(opt.validate_path);

  auto panel = phewas::agent::make_scripted_panel(config.seed);
  phewas::agent::RemoteTransport transport;
  if (!remote_endpoint.empty()) {
    for (auto& a : panel) {
      a.backend = phewas::agent::BackendKind::Remote;
      a.remote = phewas::agent::RemoteConfig{remote_endpoint, remote_timeout_s,
                                             remote_retries};
    }
    transport = phewas::remote::make_http_transport();
    std::cerr << "remote backend: " << remote_endpoint << "\n";
  }

  const auto outputs = phewas::pipeline::run_pipeline(
      config, cohort, catalog, panel, transport,
      validation ? &*validation : nullptr);
  std::cerr << "consensus: " << outputs.consensus_result.rounds_used
            << " rounds, converged="
            << (outputs.consensus_result.converged ? "true" : "false") << "\n";
  std::cout << outputs.report.report.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-agent cardiac phenotype-association engine"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic cohort CSV");
  std::string synth_spec_path, synth_out, synth_catalog;
  std::optional<std::uint64_t> synth_seed;
  synth->add_option("--spec", synth_spec_path, "Generator spec JSON")
      ->required();
  synth->add_option("--out", synth_out, "Output CSV path")->required();
  synth->add_option("--catalog", synth_catalog, "Catalog JSON (default built-in)");
  synth->add_option("--seed", synth_seed, "Override the spec's seed");

  // ingest-check
  auto* ingest = app.add_subcommand("ingest-check",
                                    "Validate a cohort CSV and print a summary");
  std::string ingest_input;
  ingest->add_option("--cohort", ingest_input, "Cohort CSV")->required();

  // run
  auto* run = app.add_subcommand("run", "Run the full three-stage pipeline");
  RunOptions run_opt;
  run->add_option("--cohort", run_opt.input, "Cohort CSV")->required();
  run->add_option("--out", run_opt.output_dir, "Output directory")->required();
  run->add_option("--catalog", run_opt.catalog_path, "Catalog JSON");
  run->add_option("--config", run_opt.config_path,
                  "Pipeline config JSON (remote endpoints live here)");
  run->add_option("--validate", run_opt.validate_path,
                  "Validation cohort CSV for re-scoring");
  run->add_option("--seed", run_opt.seed, "Run seed");
  run->add_option("--jobs", run_opt.jobs, "Worker threads");
  run->add_option("--max-rounds", run_opt.max_rounds, "Discussion round cap");
  run->add_option("--alpha", run_opt.alpha, "Adjusted-p threshold");
  run->add_option("--rho", run_opt.rho, "Relevance threshold");

  // metrics
  auto* metrics_cmd =
      app.add_subcommand("metrics", "Score a phenotype set on a cohort");
  std::string metrics_input, metrics_ids, metrics_set, metrics_catalog;
  metrics_cmd->add_option("--cohort", metrics_input, "Cohort CSV")->required();
  metrics_cmd->add_option("--set", metrics_set,
                          "File with one phenotype id per line");
  metrics_cmd->add_option("--phenotypes", metrics_ids,
                          "Comma-separated phenotype ids");
  metrics_cmd->add_option("--catalog", metrics_catalog, "Catalog JSON");

  // diagnose
  auto* diag = app.add_subcommand(
      "diagnose", "Cross-validated disease classification for a phenotype set");
  std::string diag_input, diag_ids, diag_factors, diag_disease, diag_catalog;
  std::string diag_classifier = "all";
  std::uint64_t diag_seed = 0;
  diag->add_option("--cohort", diag_input, "Cohort CSV")->required();
  diag->add_option("--phenotypes", diag_ids, "Comma-separated phenotype ids")
      ->required();
  diag->add_option("--factors", diag_factors, "Comma-separated factor ids");
  diag->add_option("--disease", diag_disease,
                   "Disease column name (default: all in cohort)");
  diag->add_option("--classifier", diag_classifier,
                   "lda | adaboost | svm | all");
  diag->add_option("--catalog", diag_catalog, "Catalog JSON");
  diag->add_option("--seed", diag_seed, "Fold seed");

  // compare
  auto* cmp = app.add_subcommand(
      "compare", "Compare two phenotype sets across diseases and classifiers");
  std::string cmp_input, cmp_a, cmp_b, cmp_factors, cmp_catalog, cmp_diseases;
  std::uint64_t cmp_seed = 0;
  cmp->add_option("--cohort", cmp_input, "Cohort CSV")->required();
  cmp->add_option("--set-a", cmp_a, "Baseline phenotype ids")->required();
  cmp->add_option("--set-b", cmp_b, "Comparison phenotype ids")->required();
  cmp->add_option("--factors", cmp_factors, "Shared factor ids");
  cmp->add_option("--diseases", cmp_diseases,
                  "Comma-separated disease names (default: all in cohort)");
  cmp->add_option("--catalog", cmp_catalog, "Catalog JSON");
  cmp->add_option("--seed", cmp_seed, "Fold seed");

  // replay
  auto* replay = app.add_subcommand(
      "replay", "Recompute a consensus result from a persisted transcript");
  std::string replay_path;
  replay->add_option("--transcript", replay_path, "transcript.json")
      ->required();

  // catalog
  auto* cat = app.add_subcommand("catalog", "Print the built-in catalog");
  std::string cat_out;
  cat->add_option("--out", cat_out, "Write to file instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      auto spec = phewas::io::synth_spec_from_json(load_json_file(synth_spec_path));
      if (synth_seed) spec.seed = *synth_seed;
      const auto catalog = load_catalog(synth_catalog);
      phewas::io::SynthReport report;
      const auto cohort =
          phewas::io::generate_synthetic_cohort(spec, catalog, &report);
      phewas::io::write_cohort_csv(cohort, synth_out);
      std::cerr << "wrote " << cohort.size() << " participants to "
                << synth_out << "\n";
      std::cout << Json{{"n_participants", cohort.size()},
                        {"digest", cohort.digest()},
                        {"pd_repair_delta", report.pd_repair_delta}}
                       .dump(2)
                << "\n";
    } else if (ingest->parsed()) {
      const auto cohort = phewas::io::load_cohort_csv(ingest_input);
      Json factors = Json::array();
      for (const auto& f : cohort.factor_meta())
        factors.push_back({{"id", f.id},
                           {"kind", phewas::to_string(f.kind)},
                           {"levels", f.levels}});
      Json phenos = Json::array();
      for (const auto& c : cohort.phenotype_columns()) phenos.push_back(c.id);
      std::cout << Json{{"n_participants", cohort.size()},
                        {"digest", cohort.digest()},
                        {"phenotypes", phenos},
                        {"factors", factors},
                        {"diseases", cohort.disease_names()}}
                       .dump(2)
                << "\n";
    } else if (run->parsed()) {
      return cmd_run(run_opt);
    } else if (metrics_cmd->parsed()) {
      const auto catalog = load_catalog(metrics_catalog);
      const auto cohort = phewas::io::load_cohort_csv(metrics_input);
      std::vector<std::string> ids = split_ids(metrics_ids);
      if (!metrics_set.empty()) {
        std::ifstream in(metrics_set);
        if (!in)
          throw phewas::TransportError("cannot open: " + metrics_set);
        std::string line;
        while (std::getline(in, line)) {
          while (!line.empty() && (line.back() == '\r' || line.back() == ' '))
            line.pop_back();
          if (!line.empty()) ids.push_back(line);
        }
      }
      if (ids.empty())
        throw phewas::ValidationError("metrics: provide --set or --phenotypes");
      const auto report = phewas::metrics::evaluate_set(ids, cohort, catalog);
      std::cout << report.to_json().dump(2) << "\n";
    } else if (diag->parsed()) {
      const auto catalog = load_catalog(diag_catalog);
      const auto cohort = phewas::io::load_cohort_csv(diag_input);
      const auto fm = phewas::classify::build_feature_matrix(
          cohort, split_ids(diag_ids), split_ids(diag_factors), catalog);
      std::vector<std::string> diseases;
      if (diag_disease.empty())
        diseases = cohort.disease_names();
      else
        diseases.push_back(diag_disease);
      std::vector<phewas::classify::ClassifierSpec> specs;
      if (diag_classifier == "all") {
        specs.resize(3);
        specs[0].kind = phewas::classify::ClassifierKind::LDA;
        specs[1].kind = phewas::classify::ClassifierKind::AdaBoost;
        specs[2].kind = phewas::classify::ClassifierKind::LinearSVM;
      } else {
        specs.resize(1);
        specs[0].kind = classifier_from_string(diag_classifier);
      }
      Json reports = Json::array();
      for (const auto& disease : diseases) {
        const auto& labels_col = cohort.disease(disease);
        std::vector<int> labels;
        for (std::size_t r : fm.rows) labels.push_back(labels_col[r]);
        for (const auto& spec : specs)
          reports.push_back(
              phewas::classify::cross_validate(fm, labels, disease, spec, 5,
                                               diag_seed)
                  .to_json());
      }
      std::cout << reports.dump(2) << "\n";
    } else if (cmp->parsed()) {
      const auto catalog = load_catalog(cmp_catalog);
      const auto cohort = phewas::io::load_cohort_csv(cmp_input);
      const auto factors = split_ids(cmp_factors);
      const auto fm_a = phewas::classify::build_feature_matrix(
          cohort, split_ids(cmp_a), factors, catalog);
      const auto fm_b = phewas::classify::build_feature_matrix(
          cohort, split_ids(cmp_b), factors, catalog);
      std::vector<std::string> diseases = split_ids(cmp_diseases);
      if (diseases.empty()) diseases = cohort.disease_names();
      std::vector<phewas::classify::ClassifierSpec> specs(3);
      specs[0].kind = phewas::classify::ClassifierKind::LDA;
      specs[1].kind = phewas::classify::ClassifierKind::AdaBoost;
      specs[2].kind = phewas::classify::ClassifierKind::LinearSVM;
      const auto report = phewas::classify::compare_phenotype_sets(
          cohort, fm_a, fm_b, diseases, specs, 5, cmp_seed);
      std::cout << report.to_json().dump(2) << "\n";
    } else if (replay->parsed()) {
      const auto persisted =
          phewas::consensus::PersistedTranscript::from_json(
              load_json_file(replay_path));
      const auto result = phewas::consensus::replay(persisted);
      const Json replayed = result.core_to_json();
      const bool match = replayed.dump() == persisted.result_core.dump();
      std::cout << Json{{"match", match}, {"result", replayed}}.dump(2) << "\n";
      if (!match) {
        std::cerr << "replay mismatch against persisted result\n";
        return 1;
      }
    } else if (cat->parsed()) {
      const auto catalog = phewas::build_default_catalog();
      const std::string text = catalog.to_json().dump(2) + "\n";
      if (cat_out.empty()) {
        std::cout << text;
      } else {
        std::ofstream out(cat_out, std::ios::binary);
        if (!out) throw phewas::TransportError("cannot write: " + cat_out);
        out << text;
      }
    }
  } catch (const phewas::TransportError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const phewas::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
