#pragma once

// Three-stage orchestration: per-specialist phenotype valuation, local and
// global factor-effect discovery, collaborative consensus, then report
// generation. Stage artifacts are plain JSON files under the output
// directory; report.json and associations.csv are byte-deterministic for
// scripted panels. Wall-clock timings go to a sidecar file and stderr so
// they never perturb the deterministic outputs.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "phewas/agent.hpp"
#include "phewas/consensus.hpp"
#include "phewas/data_io.hpp"
#include "phewas/domain.hpp"
#include "phewas/errors.hpp"
#include "phewas/memory.hpp"
#include "phewas/metrics.hpp"
#include "phewas/stats.hpp"

namespace phewas::pipeline {

struct PipelineConfig {
  std::uint64_t seed = 0;
  consensus::ConsensusConfig consensus;
  double coverage_w_s = 0.5;
  double coverage_w_f = 0.5;
  int jobs = 1;
  std::string output_dir;

  void validate() const {
    const auto& t = consensus.thresholds;
    if (t.alpha <= 0.0 || t.alpha >= 1.0)
      throw ValidationError("config: alpha must be in (0,1)");
    if (t.rho < 0.0 || t.rho >= 1.0)
      throw ValidationError("config: rho must be in [0,1)");
    if (std::fabs(coverage_w_s + coverage_w_f - 1.0) > 1e-12 ||
        coverage_w_s < 0.0 || coverage_w_f < 0.0)
      throw ValidationError("config: coverage weights must sum to 1");
    if (consensus.max_rounds < 1)
      throw ValidationError("config: max_rounds must be >= 1");
  }

  Json to_json() const {
    return {{"seed", seed},
            {"consensus", consensus.to_json()},
            {"coverage_w_s", coverage_w_s},
            {"coverage_w_f", coverage_w_f},
            {"jobs", jobs}};
  }
  static PipelineConfig from_json(const Json& j) {
    PipelineConfig c;
    c.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("consensus"))
      c.consensus = consensus::ConsensusConfig::from_json(j.at("consensus"));
    c.coverage_w_s = j.value("coverage_w_s", 0.5);
    c.coverage_w_f = j.value("coverage_w_f", 0.5);
    c.jobs = j.value("jobs", 1);
    return c;
  }
};

// Run fn(i) for i in [0, n), optionally across worker threads; results are
// indexed so the merge order is fixed regardless of scheduling.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  std::size_t per = (n + static_cast<std::size_t>(jobs) - 1) /
                    static_cast<std::size_t>(jobs);
  for (int w = 0; w < jobs; ++w) {
    const std::size_t lo = static_cast<std::size_t>(w) * per;
    const std::size_t hi = std::min(n, lo + per);
    if (lo >= hi) break;
    workers.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : workers) t.join();
}

// Stage I: one valuation per specialist, partitioning the catalog.
inline std::vector<agent::PhenotypeValuation> run_stage1(
    const PipelineConfig& config, const Cohort& cohort,
    const PhenotypeCatalog& catalog, const std::vector<agent::AgentRole>& panel) {
  std::vector<const agent::AgentRole*> specialists;
  for (const auto& a : panel)
    if (!a.is_coordinator()) specialists.push_back(&a);
  if (specialists.size() != kNumStructures)
    throw ValidationError("run_stage1: panel must have all six specialists");
  std::vector<agent::PhenotypeValuation> out(specialists.size());
  std::exception_ptr err;
  parallel_for(specialists.size(), config.jobs, [&](std::size_t i) {
    try {
      out[i] = agent::evaluate_phenotypes(*specialists[i], cohort, catalog);
    } catch (...) {
      err = std::current_exception();
    }
  });
  if (err) std::rethrow_exception(err);
  return out;
}

struct Stage2Result {
  std::vector<agent::FactorEffectSet> local;
  std::vector<Association> global;  // E_G
};

inline Stage2Result run_stage2(
    const PipelineConfig& config, const Cohort& cohort,
    const std::vector<agent::PhenotypeValuation>& valuations,
    const std::vector<agent::AgentRole>& panel) {
  std::vector<std::string> factor_ids;
  for (const auto& f : cohort.factor_meta()) factor_ids.push_back(f.id);
  std::vector<const agent::AgentRole*> specialists;
  for (const auto& a : panel)
    if (!a.is_coordinator()) specialists.push_back(&a);
  if (specialists.size() != valuations.size())
    throw ValidationError("run_stage2: valuation per specialist required");
  Stage2Result result;
  result.local.resize(specialists.size());
  std::exception_ptr err;
  parallel_for(specialists.size(), config.jobs, [&](std::size_t i) {
    try {
      result.local[i] = agent::assess_factors(*specialists[i], valuations[i],
                                              cohort, factor_ids);
    } catch (...) {
      err = std::current_exception();
    }
  });
  if (err) std::rethrow_exception(err);
  result.global = consensus::merge_global_effects(result.local);
  return result;
}

inline std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

// Memory retrievals feeding the aggregation: top-1 case per agent for the
// current cohort context, taken before the discussion mutates anything.
inline consensus::AggregationInputs build_aggregation_inputs(
    const Stage2Result& stage2, const std::vector<agent::AgentRole>& panel,
    const Cohort& cohort) {
  consensus::AggregationInputs inputs;
  inputs.evidence = stage2.global;
  for (const auto& a : panel) {
    if (!a.memory_bank || a.memory_bank->size() == 0) continue;
    memory::EmbeddingSpec espec;
    espec.dimension = a.memory_bank->dimension();
    const auto query = memory::embed_deterministic(
        espec, a.agent_id + " cohort " + cohort.digest(), {});
    for (const auto& hit : a.memory_bank->retrieve(query, 1))
      for (const auto& id : hit.item.recommended_phenotype_ids)
        inputs.memory_supported_phenotype_ids.insert(id);
  }
  return inputs;
}

inline consensus::ConsensusResult run_stage3(
    const PipelineConfig& config, std::vector<agent::AgentRole>& panel,
    const std::vector<agent::PhenotypeValuation>& valuations,
    const Stage2Result& stage2, const Cohort& cohort,
    const PhenotypeCatalog& catalog,
    const agent::RemoteTransport& transport = nullptr) {
  consensus::PanelProducts products;
  std::size_t vi = 0;
  for (const auto& a : panel) {
    if (a.is_coordinator()) continue;
    products.valuations[a.agent_id] = valuations[vi];
    products.effects[a.agent_id] = stage2.local[vi];
    ++vi;
  }
  const auto inputs = build_aggregation_inputs(stage2, panel, cohort);
  auto result = consensus::run_consensus(panel, products, inputs, catalog,
                                         config.consensus, transport);

  // Stage III experience update: each agent stores one case for this run.
  const std::string stamp = utc_timestamp();
  for (auto& a : panel) {
    if (!a.memory_bank) continue;
    memory::MemoryCase c;
    c.case_id = "run-" + cohort.digest().substr(0, 12) + "-" + a.agent_id +
                "-" + std::to_string(a.memory_bank->size());
    c.summary = a.agent_id + " cohort " + cohort.digest() + " consensus of " +
                std::to_string(result.final_phenotype_ids.size()) +
                " phenotypes, " +
                std::to_string(result.final_confounder_ids.size()) +
                " confounders";
    c.recommended_phenotype_ids = result.final_phenotype_ids;
    c.outcome_note = result.converged ? "converged" : "round cap reached";
    c.created_at = stamp;
    memory::EmbeddingSpec espec;
    espec.dimension = a.memory_bank->dimension();
    c.embedding = memory::embed_deterministic(espec, c.summary,
                                              c.recommended_phenotype_ids);
    a.memory_bank->store(std::move(c));
  }
  return result;
}

inline std::string stars(double p_adjusted) {
  if (p_adjusted < 0.01) return "**";
  if (p_adjusted < 0.05) return "*";
  return "";
}

struct PheWASReport {
  Json report;           // report.json content
  std::string matrix_csv;  // associations.csv content
};

// Deterministic report: association grid over the final phenotypes and all
// cohort factors, cells "strength|p_adjusted|stars" taken from the global
// evidence.
inline PheWASReport generate_report(const consensus::ConsensusResult& result,
                                    const Stage2Result& stage2,
                                    const metrics::MetricReport& metric_report,
                                    const PipelineConfig& config,
                                    const Cohort& cohort) {
  std::map<std::pair<std::string, std::string>, const Association*> evidence;
  for (const auto& a : stage2.global)
    evidence[{a.phenotype_id, a.factor_id}] = &a;

  std::vector<std::string> factors;
  for (const auto& f : cohort.factor_meta()) factors.push_back(f.id);

  std::string csv = "phenotype";
  for (const auto& f : factors) csv += "," + f;
  csv += "\n";
  Json matrix_cells = Json::array();
  for (const auto& pid : result.final_phenotype_ids) {
    csv += pid;
    for (const auto& fid : factors) {
      csv += ",";
      auto it = evidence.find({pid, fid});
      if (it != evidence.end()) {
        const Association& a = *it->second;
        csv += io::format_number(a.strength) + "|" +
               io::format_number(a.p_adjusted) + "|" + stars(a.p_adjusted);
        matrix_cells.push_back({{"phenotype_id", pid},
                                {"factor_id", fid},
                                {"strength", a.strength},
                                {"p_adjusted", a.p_adjusted},
                                {"stars", stars(a.p_adjusted)}});
      }
    }
    csv += "\n";
  }

  rng::Digest config_digest;
  config_digest.mix(config.to_json().dump());

  PheWASReport out;
  out.report = {{"config_digest", config_digest.hex()},
                {"config", config.to_json()},
                {"cohort_digest", cohort.digest()},
                {"consensus", result.core_to_json()},
                {"metrics", metric_report.to_json()},
                {"matrix",
                 {{"phenotypes", result.final_phenotype_ids},
                  {"factors", factors},
                  {"cells", matrix_cells}}},
                {"transcript_file", "transcript.json"}};
  out.matrix_csv = std::move(csv);
  return out;
}

// Re-score retained associations on a separate validation cohort (the
// association set is not re-selected, only re-measured).
inline std::vector<Association> rescore_associations(
    const consensus::ConsensusResult& result, const Cohort& validation) {
  std::set<std::string> phenos, factors;
  for (const auto& wa : result.associations) {
    phenos.insert(wa.assoc.phenotype_id);
    factors.insert(wa.assoc.factor_id);
  }
  std::vector<Association> out;
  if (phenos.empty()) return out;
  const auto scan = stats::association_scan(
      validation, {phenos.begin(), phenos.end()},
      {factors.begin(), factors.end()});
  std::map<std::pair<std::string, std::string>, Association> scanned;
  for (const auto& a : scan.associations)
    scanned[{a.phenotype_id, a.factor_id}] = a;
  for (const auto& wa : result.associations) {
    auto it = scanned.find({wa.assoc.phenotype_id, wa.assoc.factor_id});
    if (it == scanned.end()) continue;
    Association a = it->second;
    a.relevance = wa.assoc.relevance;
    out.push_back(std::move(a));
  }
  return out;
}

struct PipelineOutputs {
  std::vector<agent::PhenotypeValuation> valuations;
  Stage2Result stage2;
  consensus::ConsensusResult consensus_result;
  metrics::MetricReport metric_report;
  PheWASReport report;
};

inline void write_text(const std::filesystem::path& path,
                       const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw TransportError("cannot write: " + path.string());
  out << content;
  if (!out) throw TransportError("write failed: " + path.string());
}

// End-to-end run; when config.output_dir is set, writes stage1.json,
// stage2.json, transcript.json, report.json and associations.csv there.
inline PipelineOutputs run_pipeline(
    const PipelineConfig& config, const Cohort& cohort,
    const PhenotypeCatalog& catalog, std::vector<agent::AgentRole>& panel,
    const agent::RemoteTransport& transport = nullptr,
    const Cohort* validation = nullptr) {
  config.validate();
  using Clock = std::chrono::steady_clock;
  auto ms_since = [](Clock::time_point t0) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() -
                                                                 t0)
        .count();
  };

  PipelineOutputs out;
  const auto t0 = Clock::now();
  out.valuations = run_stage1(config, cohort, catalog, panel);
  const auto stage1_ms = ms_since(t0);

  const auto t1 = Clock::now();
  out.stage2 = run_stage2(config, cohort, out.valuations, panel);
  const auto stage2_ms = ms_since(t1);

  const auto t2 = Clock::now();
  const auto inputs = build_aggregation_inputs(out.stage2, panel, cohort);
  out.consensus_result = run_stage3(config, panel, out.valuations, out.stage2,
                                    cohort, catalog, transport);
  const auto stage3_ms = ms_since(t2);

  out.metric_report = metrics::evaluate_set(
      out.consensus_result.final_phenotype_ids, cohort, catalog,
      config.coverage_w_s, config.coverage_w_f);
  out.report = generate_report(out.consensus_result, out.stage2,
                               out.metric_report, config, cohort);
  if (validation) {
    Json v = Json::array();
    for (const auto& a : rescore_associations(out.consensus_result, *validation))
      v.push_back(a.to_json());
    out.report.report["validation"] = {
        {"cohort_digest", validation->digest()},
        {"associations", v}};
  }

  if (!config.output_dir.empty()) {
    const std::filesystem::path dir(config.output_dir);
    std::filesystem::create_directories(dir);

    Json stage1 = Json::array();
    for (const auto& v : out.valuations) stage1.push_back(v.to_json());
    write_text(dir / "stage1.json",
               Json{{"valuations", stage1}}.dump(2) + "\n");

    Json local = Json::array();
    for (const auto& e : out.stage2.local) local.push_back(e.to_json());
    Json global = Json::array();
    for (const auto& a : out.stage2.global) global.push_back(a.to_json());
    write_text(dir / "stage2.json",
               Json{{"local", local}, {"global", global}}.dump(2) + "\n");

    consensus::PersistedTranscript persisted;
    persisted.config = config.consensus;
    persisted.inputs = inputs;
    persisted.transcript = out.consensus_result.transcript;
    persisted.result_core = out.consensus_result.core_to_json();
    write_text(dir / "transcript.json", persisted.to_json().dump(2) + "\n");

    write_text(dir / "report.json", out.report.report.dump(2) + "\n");
    write_text(dir / "associations.csv", out.report.matrix_csv);
    write_text(dir / "timings.json",
               Json{{"stage1_ms", stage1_ms},
                    {"stage2_ms", stage2_ms},
                    {"stage3_ms", stage3_ms}}
                       .dump(2) +
                   "\n");
  }
  return out;
}

}  // namespace phewas::pipeline
