#pragma once

// Agent abstraction: six structure specialists plus a coordinator. Each
// agent evaluates its phenotypes, assesses factor effects and forms one
// opinion per discussion round, conditioned on prior rounds only. The
// scripted backend is the deterministic correctness reference; a remote
// backend speaks the JSON wire protocol and falls back to the scripted
// policy on failure.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "phewas/domain.hpp"
#include "phewas/errors.hpp"
#include "phewas/memory.hpp"
#include "phewas/prng.hpp"
#include "phewas/stats.hpp"

namespace phewas::agent {

struct Thresholds {
  double alpha = 0.05;      // statistical confidence cut (strict <)
  double rho = 0.3;         // on-topic relevance cut (strict >)
  double theta_rec = 0.6;   // overall-score floor for recommendation
  int theta_conf = 3;       // distinct structures for a confounder proposal
};

// Scripted policy parameters. The overrides exist for protocol test
// scenarios (preconfigured agreement, forced oscillation).
struct ScriptedPolicy {
  std::uint64_t seed = 0;
  std::map<std::string, double> clinical_relevance_overrides;
  std::optional<std::vector<std::string>> fixed_recommendations;
  std::optional<std::pair<std::vector<std::string>, std::vector<std::string>>>
      oscillation;  // alternate between the two sets by round parity
};

struct RemoteConfig {
  std::string endpoint;
  double timeout_s = 30.0;
  int retries = 2;
};

enum class BackendKind { Scripted, Remote };

struct AgentRole {
  std::string agent_id;
  std::optional<Structure> specialty;  // nullopt => coordinator
  BackendKind backend = BackendKind::Scripted;
  ScriptedPolicy policy;
  std::optional<RemoteConfig> remote;
  std::shared_ptr<memory::MemoryBank> memory_bank;

  bool is_coordinator() const { return !specialty.has_value(); }
};

inline std::vector<AgentRole> make_scripted_panel(
    std::uint64_t seed, std::size_t embedding_dim = memory::kDefaultDimension) {
  std::vector<AgentRole> panel;
  for (int s = 0; s < kNumStructures; ++s) {
    AgentRole a;
    a.agent_id = std::string("specialist-") +
                 kStructureNames[s];
    a.specialty = static_cast<Structure>(s);
    a.policy.seed = seed;
    a.memory_bank =
        std::make_shared<memory::MemoryBank>(a.agent_id, embedding_dim);
    panel.push_back(std::move(a));
  }
  AgentRole coord;
  coord.agent_id = "coordinator";
  coord.policy.seed = seed;
  coord.memory_bank =
      std::make_shared<memory::MemoryBank>(coord.agent_id, embedding_dim);
  panel.push_back(std::move(coord));
  return panel;
}

struct ValuationEntry {
  std::string phenotype_id;
  double significance_score = 0.0;
  double clinical_relevance = 0.0;
  bool distribution_ok = false;
  double stability = 0.0;
  double overall = 0.0;

  Json to_json() const {
    return {{"phenotype_id", phenotype_id},
            {"significance_score", significance_score},
            {"clinical_relevance", clinical_relevance},
            {"distribution_ok", distribution_ok},
            {"stability", stability},
            {"overall", overall}};
  }
};

struct PhenotypeValuation {
  std::string agent_id;
  std::vector<ValuationEntry> entries;
  std::vector<stats::ToolEvidence> evidence;

  const ValuationEntry* find(const std::string& phenotype_id) const {
    for (const auto& e : entries)
      if (e.phenotype_id == phenotype_id) return &e;
    return nullptr;
  }

  Json to_json() const {
    Json entries_j = Json::array();
    for (const auto& e : entries) entries_j.push_back(e.to_json());
    Json evidence_j = Json::array();
    for (const auto& e : evidence) evidence_j.push_back(e.to_json());
    return {{"agent_id", agent_id},
            {"entries", entries_j},
            {"evidence", evidence_j}};
  }
};

struct FactorEffectSet {
  std::string agent_id;
  std::vector<Association> entries;
  std::vector<std::string> scope;  // phenotype ids examined
  std::vector<stats::ScanWarning> warnings;

  Json to_json() const {
    Json entries_j = Json::array();
    for (const auto& e : entries) entries_j.push_back(e.to_json());
    return {{"agent_id", agent_id},
            {"entries", entries_j},
            {"scope", scope}};
  }
};

struct EndorsedAssociation {
  std::string phenotype_id;
  std::string factor_id;
  double relevance = 0.0;

  Json to_json() const {
    return {{"phenotype_id", phenotype_id},
            {"factor_id", factor_id},
            {"relevance", relevance}};
  }
};

struct Opinion {
  std::string agent_id;
  int round = 1;
  std::vector<std::string> recommended_phenotype_ids;
  std::vector<EndorsedAssociation> endorsed_associations;
  std::vector<std::string> proposed_confounders;
  double confidence = 0.0;
  std::string rationale;
  std::vector<std::string> cited_memory_case_ids;

  Json to_json() const {
    Json endorsed = Json::array();
    for (const auto& e : endorsed_associations) endorsed.push_back(e.to_json());
    return {{"agent_id", agent_id},
            {"round", round},
            {"recommended_phenotype_ids", recommended_phenotype_ids},
            {"endorsed_associations", endorsed},
            {"proposed_confounders", proposed_confounders},
            {"confidence", confidence},
            {"rationale", rationale},
            {"cited_memory_case_ids", cited_memory_case_ids}};
  }

  static Opinion from_json(const Json& j) {
    Opinion o;
    o.agent_id = j.at("agent_id").get<std::string>();
    o.round = j.at("round").get<int>();
    o.recommended_phenotype_ids =
        j.at("recommended_phenotype_ids").get<std::vector<std::string>>();
    for (const auto& e : j.at("endorsed_associations"))
      o.endorsed_associations.push_back({e.at("phenotype_id").get<std::string>(),
                                         e.at("factor_id").get<std::string>(),
                                         e.at("relevance").get<double>()});
    o.proposed_confounders =
        j.at("proposed_confounders").get<std::vector<std::string>>();
    o.confidence = j.at("confidence").get<double>();
    o.rationale = j.at("rationale").get<std::string>();
    o.cited_memory_case_ids =
        j.at("cited_memory_case_ids").get<std::vector<std::string>>();
    return o;
  }
};

struct DiscussionRound {
  int round = 1;
  std::vector<Opinion> opinions;  // fixed panel order, coordinator last
  bool convergence_flag = false;
  std::vector<std::string> fallback_agents;  // remote failures this round

  Json to_json() const {
    Json ops = Json::array();
    for (const auto& o : opinions) ops.push_back(o.to_json());
    return {{"round", round},
            {"opinions", ops},
            {"convergence_flag", convergence_flag},
            {"fallback_agents", fallback_agents}};
  }
  static DiscussionRound from_json(const Json& j) {
    DiscussionRound r;
    r.round = j.at("round").get<int>();
    for (const auto& o : j.at("opinions"))
      r.opinions.push_back(Opinion::from_json(o));
    r.convergence_flag = j.at("convergence_flag").get<bool>();
    r.fallback_agents =
        j.at("fallback_agents").get<std::vector<std::string>>();
    return r;
  }
};

struct DiscussionTranscript {
  std::vector<DiscussionRound> rounds;

  Json to_json() const {
    Json arr = Json::array();
    for (const auto& r : rounds) arr.push_back(r.to_json());
    return arr;
  }
  static DiscussionTranscript from_json(const Json& arr) {
    DiscussionTranscript t;
    for (const auto& r : arr) t.rounds.push_back(DiscussionRound::from_json(r));
    return t;
  }
};

// Default scripted clinical-relevance table, keyed by function category.
inline double default_clinical_relevance(Function f) {
  switch (f) {
    case Function::EjectionFraction: return 0.90;
    case Function::CardiacOutput: return 0.85;
    case Function::Volume: return 0.80;
    case Function::StrokeVolume: return 0.80;
    case Function::Distensibility: return 0.75;
    case Function::Mass: return 0.70;
    case Function::Area: return 0.70;
    case Function::Strain: return 0.65;
    case Function::WallThickness: return 0.60;
  }
  return 0.5;
}

namespace detail {

// Bootstrap stability of the column mean: 1 - (bootstrap sd of the mean
// over 100 seeded resamples) / (sample sd), clamped to [0,1].
inline double bootstrap_stability(const std::vector<double>& x,
                                  std::uint64_t seed,
                                  const std::string& phenotype_id) {
  constexpr int kResamples = 100;
  const std::size_t n = x.size();
  const double sd = stats::sample_sd(x);
  if (sd <= 0.0) return 0.0;
  const std::uint64_t stream = rng::fnv1a("bootstrap." + phenotype_id);
  std::vector<double> means;
  means.reserve(kResamples);
  std::uint64_t ctr = 0;
  for (int b = 0; b < kResamples; ++b) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t idx = static_cast<std::size_t>(
          rng::at(seed, stream, ctr++) % n);
      s += x[idx];
    }
    means.push_back(s / static_cast<double>(n));
  }
  const double boot_sd = stats::sample_sd(means);
  return std::clamp(1.0 - boot_sd / sd, 0.0, 1.0);
}

}  // namespace detail

// Stage I valuation over the agent's specialty slice of the catalog.
inline PhenotypeValuation evaluate_phenotypes(const AgentRole& agent,
                                              const Cohort& cohort,
                                              const PhenotypeCatalog& catalog) {
  if (agent.is_coordinator())
    throw ValidationError("evaluate_phenotypes: coordinator has no specialty");
  const auto slice = catalog.for_structure(*agent.specialty);
  if (slice.empty())
    throw ValidationError("evaluate_phenotypes: catalog has no entries for " +
                          to_string(*agent.specialty));
  std::vector<std::string> factor_ids;
  for (const auto& f : cohort.factor_meta()) factor_ids.push_back(f.id);

  PhenotypeValuation val;
  val.agent_id = agent.agent_id;
  for (const auto& pheno : slice) {
    if (!cohort.has_phenotype(pheno.id)) continue;
    const auto& col = cohort.column(pheno.id);
    ValuationEntry entry;
    entry.phenotype_id = pheno.id;
    entry.clinical_relevance = default_clinical_relevance(pheno.function);
    if (auto it = agent.policy.clinical_relevance_overrides.find(pheno.id);
        it != agent.policy.clinical_relevance_overrides.end())
      entry.clinical_relevance = it->second;

    try {
      const auto summary = stats::distribution_summary(col.values, col.missing);
      val.evidence.push_back({"distribution_summary", pheno.id, "",
                              summary.to_json(), summary.n});
      const double missing_frac =
          static_cast<double>(summary.missing_count) /
          static_cast<double>(cohort.size());
      const double skew_proxy =
          summary.sd > 0.0 ? (summary.mean - summary.median) / summary.sd
                           : std::numeric_limits<double>::infinity();
      entry.distribution_ok =
          std::fabs(skew_proxy) < 1.0 && missing_frac <= 0.20;
      if (summary.sd <= 0.0)
        throw DegenerateInputError("constant column");

      std::vector<double> x;
      for (std::size_t i = 0; i < cohort.size(); ++i)
        if (!col.missing[i]) x.push_back(col.values[i]);
      entry.stability =
          detail::bootstrap_stability(x, agent.policy.seed, pheno.id);

      double min_p = 1.0;
      if (!factor_ids.empty()) {
        const auto scan =
            stats::association_scan(cohort, {pheno.id}, factor_ids);
        for (const auto& a : scan.associations) {
          min_p = std::min(min_p, a.p_raw);
          val.evidence.push_back({"association", a.phenotype_id, a.factor_id,
                                  a.to_json(), a.n_complete});
        }
      }
      entry.significance_score = std::clamp(1.0 - min_p, 0.0, 1.0);
    } catch (const DegenerateInputError&) {
      entry.distribution_ok = false;
      entry.significance_score = 0.0;
      entry.stability = 0.0;
    }
    entry.overall = (entry.significance_score + entry.clinical_relevance +
                     (entry.distribution_ok ? 1.0 : 0.0) + entry.stability) /
                    4.0;
    val.entries.push_back(std::move(entry));
  }
  if (val.entries.empty())
    throw ValidationError(
        "evaluate_phenotypes: no cohort columns for specialty " +
        to_string(*agent.specialty));
  return val;
}

// Scripted relevance: |strength| on a scale where 0.5 saturates, weighted
// by the phenotype's overall valuation.
inline double scripted_relevance(double strength, double overall) {
  return std::clamp(std::min(1.0, std::fabs(strength) / 0.5) * overall, 0.0,
                    1.0);
}

// Stage II local assessment: the agent's phenotypes against all factors.
inline FactorEffectSet assess_factors(const AgentRole& agent,
                                      const PhenotypeValuation& valuation,
                                      const Cohort& cohort,
                                      const std::vector<std::string>& factor_ids) {
  if (valuation.agent_id != agent.agent_id)
    throw ValidationError("assess_factors: valuation from different agent");
  if (factor_ids.empty())
    throw ValidationError("assess_factors: empty factor list");
  FactorEffectSet effects;
  effects.agent_id = agent.agent_id;
  for (const auto& e : valuation.entries)
    effects.scope.push_back(e.phenotype_id);
  auto scan = stats::association_scan(cohort, effects.scope, factor_ids);
  effects.warnings = std::move(scan.warnings);
  for (auto& a : scan.associations) {
    const ValuationEntry* v = valuation.find(a.phenotype_id);
    a.relevance = scripted_relevance(a.strength, v ? v->overall : 0.0);
    effects.entries.push_back(std::move(a));
  }
  return effects;
}

namespace detail {

// Distinct structures whose phenotypes a factor is significantly
// associated with, over (prior-round endorsements) union (own effects).
inline std::map<std::string, std::set<Structure>> factor_structure_breadth(
    const FactorEffectSet& own, const DiscussionTranscript& history,
    const PhenotypeCatalog& catalog, double alpha) {
  std::map<std::string, std::set<Structure>> breadth;
  auto add = [&](const std::string& factor_id, const std::string& pheno_id) {
    if (const Phenotype* p = catalog.find(pheno_id))
      breadth[factor_id].insert(p->structure);
  };
  for (const auto& a : own.entries)
    if (a.p_adjusted < alpha) add(a.factor_id, a.phenotype_id);
  if (!history.rounds.empty())
    for (const auto& op : history.rounds.back().opinions)
      for (const auto& e : op.endorsed_associations)
        add(e.factor_id, e.phenotype_id);
  return breadth;
}

}  // namespace detail

// Scripted opinion formation (the g_i of the discussion round). Depends on
// prior rounds only, never on same-round peers.
inline Opinion form_opinion_scripted(const AgentRole& agent,
                                     const PhenotypeValuation& valuation,
                                     const FactorEffectSet& effects,
                                     const DiscussionTranscript& history,
                                     int round, const Thresholds& thresholds,
                                     const PhenotypeCatalog& catalog) {
  if (round < 1) throw ValidationError("form_opinion: round must be >= 1");
  for (const auto& r : history.rounds)
    if (r.round >= round)
      throw ValidationError("form_opinion: history contains current round");

  Opinion op;
  op.agent_id = agent.agent_id;
  op.round = round;

  // Memory context: top-1 retrieval against the current scope.
  if (agent.memory_bank && agent.memory_bank->size() > 0) {
    std::string query_text = agent.agent_id;
    std::vector<std::string> scope_ids = effects.scope;
    memory::EmbeddingSpec espec;
    espec.dimension = agent.memory_bank->dimension();
    const auto query = memory::embed_deterministic(espec, query_text, scope_ids);
    for (const auto& hit : agent.memory_bank->retrieve(query, 1))
      op.cited_memory_case_ids.push_back(hit.item.case_id);
  }

  std::set<std::string> recommended;
  if (agent.policy.oscillation) {
    const auto& osc = *agent.policy.oscillation;
    const auto& pick = (round % 2 == 1) ? osc.first : osc.second;
    recommended.insert(pick.begin(), pick.end());
  } else if (agent.policy.fixed_recommendations) {
    recommended.insert(agent.policy.fixed_recommendations->begin(),
                       agent.policy.fixed_recommendations->end());
  } else if (agent.is_coordinator()) {
    // The coordinator summarizes: it re-proposes everything recommended by
    // at least one specialist in the previous round.
    if (!history.rounds.empty())
      for (const auto& prev : history.rounds.back().opinions)
        if (prev.agent_id != agent.agent_id)
          recommended.insert(prev.recommended_phenotype_ids.begin(),
                             prev.recommended_phenotype_ids.end());
  } else {
    for (const auto& e : valuation.entries)
      if (e.overall >= thresholds.theta_rec) recommended.insert(e.phenotype_id);
    // Compromise rule: adopt anything recommended by at least half of the
    // prior round's opinions.
    if (!history.rounds.empty()) {
      const auto& prev = history.rounds.back().opinions;
      std::map<std::string, std::size_t> votes;
      for (const auto& o : prev)
        for (const auto& id : o.recommended_phenotype_ids) ++votes[id];
      for (const auto& [id, v] : votes)
        if (2 * v >= prev.size()) recommended.insert(id);
    }
  }
  op.recommended_phenotype_ids.assign(recommended.begin(), recommended.end());

  if (agent.is_coordinator()) {
    // Summarize prior-round endorsements, averaging duplicate relevance.
    std::map<std::pair<std::string, std::string>, std::pair<double, int>> acc;
    if (!history.rounds.empty())
      for (const auto& prev : history.rounds.back().opinions)
        for (const auto& e : prev.endorsed_associations) {
          auto& slot = acc[{e.phenotype_id, e.factor_id}];
          slot.first += e.relevance;
          slot.second += 1;
        }
    for (const auto& [key, v] : acc)
      op.endorsed_associations.push_back(
          {key.first, key.second, v.first / v.second});
  } else {
    for (const auto& a : effects.entries)
      if (a.p_adjusted < thresholds.alpha && a.relevance > thresholds.rho)
        op.endorsed_associations.push_back(
            {a.phenotype_id, a.factor_id, a.relevance});
  }

  const auto breadth = detail::factor_structure_breadth(
      effects, history, catalog, thresholds.alpha);
  for (const auto& [factor_id, structures] : breadth)
    if (static_cast<int>(structures.size()) >= thresholds.theta_conf)
      op.proposed_confounders.push_back(factor_id);
  std::sort(op.proposed_confounders.begin(), op.proposed_confounders.end());

  double conf_sum = 0.0;
  std::size_t conf_n = 0;
  for (const auto& id : op.recommended_phenotype_ids)
    if (const ValuationEntry* v = valuation.find(id)) {
      conf_sum += v->overall;
      ++conf_n;
    }
  op.confidence = conf_n > 0 ? conf_sum / static_cast<double>(conf_n) : 0.5;
  op.rationale = agent.agent_id + " round " + std::to_string(round) + ": " +
                 std::to_string(op.recommended_phenotype_ids.size()) +
                 " recommended, " +
                 std::to_string(op.endorsed_associations.size()) +
                 " endorsed, " +
                 std::to_string(op.proposed_confounders.size()) +
                 " confounders";
  return op;
}

// Remote transport hook: posts a wire-protocol request, returns the parsed
// response body. Throws TransportError after retries are exhausted.
using RemoteTransport =
    std::function<Json(const RemoteConfig&, const Json& request)>;

struct OpinionOutcome {
  Opinion opinion;
  bool fallback_used = false;
  int hallucination_count = 0;
};

inline Json build_wire_request(const AgentRole& agent,
                               const PhenotypeValuation& valuation,
                               const FactorEffectSet& effects,
                               const DiscussionTranscript& history, int round,
                               const PhenotypeCatalog& catalog) {
  Json transcript_tail = Json::array();
  const std::size_t take = std::min<std::size_t>(2, history.rounds.size());
  for (std::size_t i = history.rounds.size() - take; i < history.rounds.size();
       ++i)
    transcript_tail.push_back(history.rounds[i].to_json());
  Json memory_summaries = Json::array();
  Json catalog_ids = Json::array();
  for (const auto& p : catalog.entries()) catalog_ids.push_back(p.id);
  return {{"role", agent.is_coordinator() ? "coordinator" : "specialist"},
          {"specialty",
           agent.is_coordinator() ? "" : to_string(*agent.specialty)},
          {"round", round},
          {"valuation_digest", valuation.to_json()},
          {"effects_digest", effects.to_json()},
          {"transcript_tail", transcript_tail},
          {"retrieved_memory_summaries", memory_summaries},
          {"catalog_ids", catalog_ids}};
}

// Parse and validate a remote opinion; unknown catalog ids are stripped and
// counted as hallucinations. Throws ValidationError on schema violations.
inline OpinionOutcome parse_remote_opinion(const Json& response,
                                           const AgentRole& agent, int round,
                                           const PhenotypeCatalog& catalog) {
  OpinionOutcome out;
  Opinion& op = out.opinion;
  op.agent_id = agent.agent_id;
  op.round = round;
  if (!response.is_object())
    throw ValidationError("remote opinion: response is not an object");
  const auto& rec = response.at("recommended_phenotype_ids");
  if (!rec.is_array())
    throw ValidationError("remote opinion: recommended_phenotype_ids");
  for (const auto& id_j : rec) {
    const std::string id = id_j.get<std::string>();
    if (catalog.find(id))
      op.recommended_phenotype_ids.push_back(id);
    else
      ++out.hallucination_count;
  }
  for (const auto& e : response.at("endorsed_associations")) {
    const std::string pid = e.at("phenotype_id").get<std::string>();
    const double rel = e.at("relevance").get<double>();
    if (rel < 0.0 || rel > 1.0)
      throw ValidationError("remote opinion: relevance out of range");
    if (!catalog.find(pid)) {
      ++out.hallucination_count;
      continue;
    }
    op.endorsed_associations.push_back(
        {pid, e.at("factor_id").get<std::string>(), rel});
  }
  op.proposed_confounders =
      response.at("proposed_confounders").get<std::vector<std::string>>();
  op.confidence = response.at("confidence").get<double>();
  if (op.confidence < 0.0 || op.confidence > 1.0)
    throw ValidationError("remote opinion: confidence out of range");
  op.rationale = response.at("rationale").get<std::string>();
  return out;
}

inline OpinionOutcome form_opinion(const AgentRole& agent,
                                   const PhenotypeValuation& valuation,
                                   const FactorEffectSet& effects,
                                   const DiscussionTranscript& history,
                                   int round, const Thresholds& thresholds,
                                   const PhenotypeCatalog& catalog,
                                   const RemoteTransport& transport = nullptr) {
  if (agent.backend == BackendKind::Remote) {
    if (!agent.remote)
      throw ValidationError("remote backend without endpoint configuration");
    try {
      if (!transport) throw TransportError("no remote transport configured");
      const Json request = build_wire_request(agent, valuation, effects,
                                              history, round, catalog);
      const Json response = transport(*agent.remote, request);
      return parse_remote_opinion(response, agent, round, catalog);
    } catch (const std::exception&) {
      OpinionOutcome out;
      out.opinion = form_opinion_scripted(agent, valuation, effects, history,
                                          round, thresholds, catalog);
      out.fallback_used = true;
      return out;
    }
  }
  OpinionOutcome out;
  out.opinion = form_opinion_scripted(agent, valuation, effects, history,
                                      round, thresholds, catalog);
  return out;
}

}  // namespace phewas::agent
