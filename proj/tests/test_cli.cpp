#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

// End-to-end tests of the installed binary; PHEWAS_CLI_PATH is injected by
// the build system.

namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

const fs::path kWork = fs::temp_directory_path() / "phewas_cli_test";

int run_cli(const std::string& args, const fs::path& stdout_file) {
  const std::string cmd = std::string(PHEWAS_CLI_PATH) + " " + args + " > " +
                          stdout_file.string() + " 2> " +
                          (kWork / "stderr.txt").string();
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

void write(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

// A small cohort spec covering all six structures with planted effects.
const char* kSpec = R"({
  "seed": 17,
  "n_participants": 500,
  "phenotypes": [
    {"id": "LVEF", "mean": 60, "sd": 6},
    {"id": "LVEDV", "mean": 140, "sd": 30},
    {"id": "RVEF", "mean": 57, "sd": 6},
    {"id": "LAEF", "mean": 60, "sd": 8},
    {"id": "RAEF", "mean": 55, "sd": 8},
    {"id": "AAo_distensibility", "mean": 2.0, "sd": 0.8},
    {"id": "DAo_distensibility", "mean": 2.5, "sd": 0.9}
  ],
  "factors": [
    {"id": "age", "kind": "Continuous"},
    {"id": "bmi", "kind": "Continuous"},
    {"id": "sex", "kind": "Binary"}
  ],
  "planted_associations": [
    {"phenotype": "LVEF", "factor": "bmi", "r": -0.45},
    {"phenotype": "RVEF", "factor": "age", "r": -0.35},
    {"phenotype": "LVEF", "factor": "age", "r": -0.30}
  ],
  "disease_models": {
    "Hypertension": {"intercept": -0.5, "coefficients": {"LVEF": -0.8, "age": 0.5}},
    "Stroke": {"intercept": -1.0, "coefficients": {"age": 0.8}}
  }
})";

struct Fixture {
  Fixture() {
    fs::create_directories(kWork);
    write(kWork / "spec.json", kSpec);
  }
};

}  // namespace

TEST_CASE("synth, ingest-check and run cover the full file contract") {
  Fixture fx;
  const auto csv = kWork / "cohort.csv";

  REQUIRE(run_cli("synth --spec " + (kWork / "spec.json").string() +
                      " --out " + csv.string(),
                  kWork / "synth.json") == 0);
  const Json synth = Json::parse(slurp(kWork / "synth.json"));
  CHECK(synth.at("n_participants") == 500);
  REQUIRE(fs::exists(csv));

  REQUIRE(run_cli("ingest-check --cohort " + csv.string(),
                  kWork / "ingest.json") == 0);
  const Json ingest = Json::parse(slurp(kWork / "ingest.json"));
  CHECK(ingest.at("n_participants") == 500);
  // loading is itself deterministic (the digest differs from the in-memory
  // cohort because CSV cells carry 9 significant digits)
  REQUIRE(run_cli("ingest-check --cohort " + csv.string(),
                  kWork / "ingest2.json") == 0);
  CHECK(Json::parse(slurp(kWork / "ingest2.json")) == ingest);
  CHECK(ingest.at("phenotypes").size() == 7);
  CHECK(ingest.at("diseases") ==
        Json::array({"Hypertension", "Stroke"}));

  const auto out_a = kWork / "run_a";
  const auto out_b = kWork / "run_b";
  const std::string run_args = "run --cohort " + csv.string() +
                               " --seed 17 --max-rounds 10 --alpha 0.05 "
                               "--rho 0.3 --out ";
  REQUIRE(run_cli(run_args + out_a.string(), kWork / "run_a.json") == 0);
  REQUIRE(run_cli(run_args + out_b.string() + " --jobs 4",
                  kWork / "run_b.json") == 0);
  for (const auto* name : {"stage1.json", "stage2.json", "transcript.json",
                           "report.json", "associations.csv"})
    CHECK(fs::exists(out_a / name));
  // independent runs with different job counts agree on everything except
  // the recorded job count itself
  CHECK(slurp(out_a / "associations.csv") == slurp(out_b / "associations.csv"));
  Json rep_a = Json::parse(slurp(out_a / "report.json"));
  Json rep_b = Json::parse(slurp(out_b / "report.json"));
  for (auto* r : {&rep_a, &rep_b}) {
    r->erase("config");
    r->erase("config_digest");
  }
  CHECK(rep_a == rep_b);
  // and a byte-for-byte identical rerun of the same invocation
  const auto out_c = kWork / "run_c";
  REQUIRE(run_cli(run_args + out_c.string(), kWork / "run_c.json") == 0);
  CHECK(slurp(out_a / "report.json") == slurp(out_c / "report.json"));
  // stdout carries the same report that was written to disk
  CHECK(Json::parse(slurp(kWork / "run_a.json")) ==
        Json::parse(slurp(out_a / "report.json")));

  const Json report = Json::parse(slurp(out_a / "report.json"));
  CHECK(report.at("consensus").at("converged") == true);
  CHECK(report.at("cohort_digest") == ingest.at("digest"));

  // replay agrees with the recorded result
  REQUIRE(run_cli("replay --transcript " +
                      (out_a / "transcript.json").string(),
                  kWork / "replay.json") == 0);
  CHECK(Json::parse(slurp(kWork / "replay.json")).at("match") == true);

  // a tampered transcript is flagged and exits 1
  Json tampered = Json::parse(slurp(out_a / "transcript.json"));
  tampered["result"]["final_phenotype_ids"].push_back("LVM");
  write(kWork / "tampered.json", tampered.dump(2));
  CHECK(run_cli("replay --transcript " + (kWork / "tampered.json").string(),
                kWork / "replay2.json") == 1);
  CHECK(Json::parse(slurp(kWork / "replay2.json")).at("match") == false);
}

TEST_CASE("metrics accepts a set file or an inline list") {
  Fixture fx;
  const auto csv = kWork / "cohort.csv";
  if (!fs::exists(csv))
    REQUIRE(run_cli("synth --spec " + (kWork / "spec.json").string() +
                        " --out " + csv.string(),
                    kWork / "synth.json") == 0);

  write(kWork / "set.txt", "LVEF\nLVEDV\nRVEF\n");
  REQUIRE(run_cli("metrics --cohort " + csv.string() + " --set " +
                      (kWork / "set.txt").string(),
                  kWork / "metrics.json") == 0);
  const Json m = Json::parse(slurp(kWork / "metrics.json"));
  CHECK(m.at("k") == 3);
  CHECK(m.at("k_valid") == 3);
  CHECK(m.at("q_score").get<double>() > 0.0);

  REQUIRE(run_cli("metrics --cohort " + csv.string() +
                      " --phenotypes LVEF,LVEDV,RVEF",
                  kWork / "metrics2.json") == 0);
  CHECK(Json::parse(slurp(kWork / "metrics2.json")) == m);

  // neither form supplied: validation error
  CHECK(run_cli("metrics --cohort " + csv.string(), kWork / "x.json") == 1);
}

TEST_CASE("diagnose and compare emit their JSON contracts") {
  Fixture fx;
  const auto csv = kWork / "cohort.csv";
  if (!fs::exists(csv))
    REQUIRE(run_cli("synth --spec " + (kWork / "spec.json").string() +
                        " --out " + csv.string(),
                    kWork / "synth.json") == 0);

  REQUIRE(run_cli("diagnose --cohort " + csv.string() +
                      " --phenotypes LVEF,LVEDV --classifier lda --seed 3",
                  kWork / "diag.json") == 0);
  const Json diag = Json::parse(slurp(kWork / "diag.json"));
  REQUIRE(diag.is_array());
  REQUIRE(diag.size() == 2);  // both cohort diseases, one classifier
  for (const auto& r : diag) {
    CHECK(r.at("classifier") == "LDA");
    CHECK(r.at("fold_auc").size() == 5);
  }

  REQUIRE(run_cli("compare --cohort " + csv.string() +
                      " --set-a LVEDV --set-b LVEF,LVEDV "
                      "--diseases Hypertension --seed 3",
                  kWork / "cmp.json") == 0);
  const Json cmp = Json::parse(slurp(kWork / "cmp.json"));
  CHECK(cmp.at("cells").size() == 3);      // three classifiers, one disease
  CHECK(cmp.at("summaries").size() == 3);
  // adding the disease-driving LVEF must help every classifier
  for (const auto& cell : cmp.at("cells"))
    CHECK(cell.at("delta_auc").get<double>() > 0.0);

  CHECK(run_cli("diagnose --cohort " + csv.string() +
                    " --phenotypes LVEF --classifier forest",
                kWork / "x.json") == 1);
}

TEST_CASE("exit codes distinguish validation from transport failures") {
  Fixture fx;
  // missing input file: I/O error
  CHECK(run_cli("ingest-check --cohort " + (kWork / "no_such.csv").string(),
                kWork / "x.json") == 2);
  CHECK(run_cli("run --cohort " + (kWork / "no_such.csv").string() +
                    " --out " + (kWork / "o").string(),
                kWork / "x.json") == 2);
  // malformed spec JSON: validation error
  write(kWork / "broken.json", "{not json");
  CHECK(run_cli("synth --spec " + (kWork / "broken.json").string() +
                    " --out " + (kWork / "x.csv").string(),
                kWork / "x.json") == 1);
  // CSV with an unparseable cell: validation error
  write(kWork / "bad.csv", "participant_id,pheno.LVEF\nP0,abc\n");
  CHECK(run_cli("ingest-check --cohort " + (kWork / "bad.csv").string(),
                kWork / "x.json") == 1);
  // unreachable remote endpoint configured for the run: transport error
  const auto csv = kWork / "cohort.csv";
  if (!fs::exists(csv))
    REQUIRE(run_cli("synth --spec " + (kWork / "spec.json").string() +
                        " --out " + csv.string(),
                    kWork / "synth.json") == 0);
  write(kWork / "remote.json",
        R"({"remote_endpoint": "http://127.0.0.1:1/opinion",)"
        R"( "remote_timeout_s": 0.3, "remote_retries": 0})");
  // unreachable agents fall back to the scripted policy, so the run still
  // succeeds and records the fallback in the transcript
  REQUIRE(run_cli("run --cohort " + csv.string() + " --config " +
                      (kWork / "remote.json").string() + " --out " +
                      (kWork / "run_fb").string(),
                  kWork / "run_fb.json") == 0);
  const Json transcript = Json::parse(slurp(kWork / "run_fb" / "transcript.json"));
  CHECK(!transcript.at("rounds").at(0).at("fallback_agents").empty());
}

TEST_CASE("catalog subcommand prints the built-in catalog") {
  Fixture fx;
  REQUIRE(run_cli("catalog", kWork / "catalog.json") == 0);
  const Json catalog = Json::parse(slurp(kWork / "catalog.json"));
  REQUIRE(catalog.is_array());
  CHECK(catalog.size() == 26);
}
