#pragma once

// Multi-round discussion protocol: one opinion per agent per round,
// conditioned on prior rounds only; convergence detection; hard round cap
// with forced aggregation; the final threshold-based aggregation and the
// global factor-effect merge.

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "phewas/agent.hpp"
#include "phewas/domain.hpp"
#include "phewas/errors.hpp"

namespace phewas::consensus {

using agent::AgentRole;
using agent::DiscussionRound;
using agent::DiscussionTranscript;
using agent::Opinion;
using agent::Thresholds;

struct ConsensusConfig {
  int max_rounds = 10;
  Thresholds thresholds;
  double jaccard_threshold = 1.0;  // exact stability by default

  Json to_json() const {
    return {{"max_rounds", max_rounds},
            {"alpha", thresholds.alpha},
            {"rho", thresholds.rho},
            {"theta_rec", thresholds.theta_rec},
            {"theta_conf", thresholds.theta_conf},
            {"jaccard_threshold", jaccard_threshold}};
  }
  static ConsensusConfig from_json(const Json& j) {
    ConsensusConfig c;
    c.max_rounds = j.at("max_rounds").get<int>();
    c.thresholds.alpha = j.at("alpha").get<double>();
    c.thresholds.rho = j.at("rho").get<double>();
    c.thresholds.theta_rec = j.at("theta_rec").get<double>();
    c.thresholds.theta_conf = j.at("theta_conf").get<int>();
    c.jaccard_threshold = j.at("jaccard_threshold").get<double>();
    return c;
  }
};

struct WeightedAssociation {
  Association assoc;  // relevance filled
  double weight = 0.0;
  bool memory_support = false;

  Json to_json() const {
    Json j = assoc.to_json();
    j["weight"] = weight;
    j["memory_support"] = memory_support;
    return j;
  }
  static WeightedAssociation from_json(const Json& j) {
    WeightedAssociation w;
    w.assoc = Association::from_json(j);
    w.weight = j.at("weight").get<double>();
    w.memory_support = j.at("memory_support").get<bool>();
    return w;
  }
};

struct ConsensusResult {
  std::vector<std::string> final_phenotype_ids;
  std::vector<std::string> final_confounder_ids;
  std::vector<WeightedAssociation> associations;
  int rounds_used = 0;
  bool converged = false;
  DiscussionTranscript transcript;
  int hallucination_event_count = 0;

  Json core_to_json() const {
    Json assoc = Json::array();
    for (const auto& a : associations) assoc.push_back(a.to_json());
    return {{"final_phenotype_ids", final_phenotype_ids},
            {"final_confounder_ids", final_confounder_ids},
            {"associations", assoc},
            {"rounds_used", rounds_used},
            {"converged", converged},
            {"hallucination_event_count", hallucination_event_count}};
  }
};

// Union of local effect sets keyed by (phenotype, factor). Duplicate keys
// keep the entry with the largest n_complete and average relevance. Sorted
// by (p_adjusted asc, |strength| desc, key) for a deterministic order.
inline std::vector<Association> merge_global_effects(
    const std::vector<agent::FactorEffectSet>& local_effects) {
  if (local_effects.empty())
    throw ValidationError("merge_global_effects: no local effect sets");
  std::map<std::pair<std::string, std::string>,
           std::pair<Association, std::pair<double, int>>>
      merged;
  for (const auto& local : local_effects) {
    for (const auto& a : local.entries) {
      auto key = std::make_pair(a.phenotype_id, a.factor_id);
      auto it = merged.find(key);
      if (it == merged.end()) {
        merged.emplace(key, std::make_pair(a, std::make_pair(a.relevance, 1)));
      } else {
        auto& [best, rel_acc] = it->second;
        if (a.n_complete > best.n_complete) {
          const auto acc = rel_acc;
          best = a;
          rel_acc = acc;
        }
        rel_acc.first += a.relevance;
        rel_acc.second += 1;
      }
    }
  }
  std::vector<Association> out;
  out.reserve(merged.size());
  for (auto& [key, v] : merged) {
    Association a = v.first;
    a.relevance = v.second.first / v.second.second;
    out.push_back(std::move(a));
  }
  std::sort(out.begin(), out.end(), [](const Association& a,
                                       const Association& b) {
    if (a.p_adjusted != b.p_adjusted) return a.p_adjusted < b.p_adjusted;
    const double sa = std::fabs(a.strength), sb = std::fabs(b.strength);
    if (sa != sb) return sa > sb;
    return std::tie(a.phenotype_id, a.factor_id) <
           std::tie(b.phenotype_id, b.factor_id);
  });
  return out;
}

namespace detail {

inline double jaccard(const std::set<std::string>& a,
                      const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& x : a) inter += b.count(x);
  const std::size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace detail

// Converged iff every agent's recommended set is Jaccard-stable between the
// two rounds AND the union of recommendations is unchanged.
inline bool check_convergence(const DiscussionRound& current,
                              const DiscussionRound& previous,
                              double jaccard_threshold) {
  if (jaccard_threshold <= 0.0 || jaccard_threshold > 1.0)
    throw ValidationError("check_convergence: threshold must be in (0,1]");
  std::map<std::string, std::set<std::string>> cur, prev;
  std::set<std::string> cur_union, prev_union;
  for (const auto& o : current.opinions) {
    cur[o.agent_id].insert(o.recommended_phenotype_ids.begin(),
                           o.recommended_phenotype_ids.end());
    cur_union.insert(o.recommended_phenotype_ids.begin(),
                     o.recommended_phenotype_ids.end());
  }
  for (const auto& o : previous.opinions) {
    prev[o.agent_id].insert(o.recommended_phenotype_ids.begin(),
                            o.recommended_phenotype_ids.end());
    prev_union.insert(o.recommended_phenotype_ids.begin(),
                      o.recommended_phenotype_ids.end());
  }
  for (const auto& [agent_id, cur_set] : cur) {
    auto it = prev.find(agent_id);
    if (it == prev.end()) return false;
    if (detail::jaccard(cur_set, it->second) < jaccard_threshold) return false;
  }
  return cur_union == prev_union;
}

struct PanelProducts {
  std::map<std::string, agent::PhenotypeValuation> valuations;
  std::map<std::string, agent::FactorEffectSet> effects;

  const agent::PhenotypeValuation& valuation_for(const AgentRole& a) const {
    static const agent::PhenotypeValuation empty;
    auto it = valuations.find(a.agent_id);
    if (it != valuations.end()) return it->second;
    if (!a.is_coordinator())
      throw ValidationError("missing valuation for agent " + a.agent_id);
    return empty;
  }
  const agent::FactorEffectSet& effects_for(const AgentRole& a) const {
    static const agent::FactorEffectSet empty;
    auto it = effects.find(a.agent_id);
    if (it != effects.end()) return it->second;
    if (!a.is_coordinator())
      throw ValidationError("missing effects for agent " + a.agent_id);
    return empty;
  }
};

struct ProtocolState {
  DiscussionTranscript transcript;
  int hallucination_event_count = 0;
};

// One full round: an opinion per agent in fixed order, coordinator last.
inline void run_round(const std::vector<AgentRole>& panel,
                      const PanelProducts& products, ProtocolState& state,
                      int round, const Thresholds& thresholds,
                      const PhenotypeCatalog& catalog,
                      const agent::RemoteTransport& transport = nullptr) {
  if (round != static_cast<int>(state.transcript.rounds.size()) + 1)
    throw ValidationError("run_round: rounds must advance sequentially");
  DiscussionRound record;
  record.round = round;
  std::vector<const AgentRole*> order;
  for (const auto& a : panel)
    if (!a.is_coordinator()) order.push_back(&a);
  for (const auto& a : panel)
    if (a.is_coordinator()) order.push_back(&a);
  for (const AgentRole* a : order) {
    auto outcome = agent::form_opinion(
        *a, products.valuation_for(*a), products.effects_for(*a),
        state.transcript, round, thresholds, catalog, transport);
    state.hallucination_event_count += outcome.hallucination_count;
    if (outcome.fallback_used) record.fallback_agents.push_back(a->agent_id);
    record.opinions.push_back(std::move(outcome.opinion));
  }
  state.transcript.rounds.push_back(std::move(record));
}

struct AggregationInputs {
  // Merged global evidence E_G keyed by (phenotype, factor).
  std::vector<Association> evidence;
  // Phenotypes recommended by memory cases cited in the final round.
  std::set<std::string> memory_supported_phenotype_ids;
};

// Final aggregation: join the last round's endorsements with the tool
// evidence, keep pairs with p_adjusted < alpha (strict) AND relevance > rho
// (strict), then derive the final phenotype and confounder sets. Weights
// rank retained associations only; inclusion is purely the two thresholds.
inline ConsensusResult aggregate_f_ap(const DiscussionTranscript& transcript,
                                      const AggregationInputs& inputs,
                                      double alpha, double rho) {
  if (transcript.rounds.empty())
    throw ValidationError("aggregate_f_ap: empty transcript");
  const DiscussionRound& last = transcript.rounds.back();

  std::map<std::pair<std::string, std::string>, const Association*> evidence;
  for (const auto& a : inputs.evidence)
    evidence[{a.phenotype_id, a.factor_id}] = &a;

  // Candidate relevance: average over this round's endorsers of the pair.
  std::map<std::pair<std::string, std::string>, std::pair<double, int>> cand;
  for (const auto& o : last.opinions)
    for (const auto& e : o.endorsed_associations) {
      auto& slot = cand[{e.phenotype_id, e.factor_id}];
      slot.first += e.relevance;
      slot.second += 1;
    }

  ConsensusResult result;
  std::set<std::string> final_phenos;
  for (const auto& [key, rel_acc] : cand) {
    auto ev = evidence.find(key);
    if (ev == evidence.end()) continue;  // no statistical backing
    const double relevance = rel_acc.first / rel_acc.second;
    const Association& stats_entry = *ev->second;
    if (!(stats_entry.p_adjusted < alpha) || !(relevance > rho)) continue;
    WeightedAssociation wa;
    wa.assoc = stats_entry;
    wa.assoc.relevance = relevance;
    wa.memory_support =
        inputs.memory_supported_phenotype_ids.count(key.first) > 0;
    wa.weight = (1.0 - stats_entry.p_adjusted) * relevance *
                (wa.memory_support ? 1.1 : 1.0);
    final_phenos.insert(key.first);
    result.associations.push_back(std::move(wa));
  }
  std::sort(result.associations.begin(), result.associations.end(),
            [](const WeightedAssociation& a, const WeightedAssociation& b) {
              if (a.weight != b.weight) return a.weight > b.weight;
              return std::tie(a.assoc.phenotype_id, a.assoc.factor_id) <
                     std::tie(b.assoc.phenotype_id, b.assoc.factor_id);
            });

  // Phenotypes recommended by a strict majority of final-round specialists.
  std::map<std::string, std::size_t> votes;
  std::size_t n_specialists = 0;
  for (const auto& o : last.opinions) {
    if (o.agent_id == "coordinator") continue;
    ++n_specialists;
    for (const auto& id : o.recommended_phenotype_ids) ++votes[id];
  }
  for (const auto& [id, v] : votes)
    if (2 * v > n_specialists) final_phenos.insert(id);

  // Confounders proposed by at least two agents in the final round.
  std::map<std::string, std::size_t> conf_votes;
  for (const auto& o : last.opinions)
    for (const auto& id : o.proposed_confounders) ++conf_votes[id];
  for (const auto& [id, v] : conf_votes)
    if (v >= 2) result.final_confounder_ids.push_back(id);
  std::sort(result.final_confounder_ids.begin(),
            result.final_confounder_ids.end());

  result.final_phenotype_ids.assign(final_phenos.begin(), final_phenos.end());
  return result;
}

inline ConsensusResult run_consensus(
    const std::vector<AgentRole>& panel, const PanelProducts& products,
    const AggregationInputs& inputs, const PhenotypeCatalog& catalog,
    const ConsensusConfig& config,
    const agent::RemoteTransport& transport = nullptr) {
  if (config.max_rounds < 1)
    throw ValidationError("run_consensus: max_rounds must be >= 1");
  ProtocolState state;
  bool converged = false;
  int rounds_used = 0;
  for (int round = 1; round <= config.max_rounds; ++round) {
    run_round(panel, products, state, round, config.thresholds, catalog,
              transport);
    rounds_used = round;
    if (round >= 2 &&
        check_convergence(state.transcript.rounds[round - 1],
                          state.transcript.rounds[round - 2],
                          config.jaccard_threshold)) {
      state.transcript.rounds.back().convergence_flag = true;
      converged = true;
      break;
    }
  }
  ConsensusResult result = aggregate_f_ap(
      state.transcript, inputs, config.thresholds.alpha, config.thresholds.rho);
  result.rounds_used = rounds_used;
  result.converged = converged;
  result.hallucination_event_count = state.hallucination_event_count;
  result.transcript = std::move(state.transcript);
  return result;
}

// ---------------------------------------------------------------------------
// Transcript persistence: the unit of replay and audit.
// ---------------------------------------------------------------------------

struct PersistedTranscript {
  ConsensusConfig config;
  AggregationInputs inputs;
  DiscussionTranscript transcript;
  Json result_core;

  Json to_json() const {
    Json evidence = Json::array();
    for (const auto& a : inputs.evidence) evidence.push_back(a.to_json());
    return {{"config", config.to_json()},
            {"evidence", evidence},
            {"memory_supported_phenotype_ids",
             std::vector<std::string>(
                 inputs.memory_supported_phenotype_ids.begin(),
                 inputs.memory_supported_phenotype_ids.end())},
            {"rounds", transcript.to_json()},
            {"result", result_core}};
  }

  static PersistedTranscript from_json(const Json& j) {
    PersistedTranscript p;
    p.config = ConsensusConfig::from_json(j.at("config"));
    for (const auto& a : j.at("evidence"))
      p.inputs.evidence.push_back(Association::from_json(a));
    for (const auto& id : j.at("memory_supported_phenotype_ids"))
      p.inputs.memory_supported_phenotype_ids.insert(id.get<std::string>());
    p.transcript = DiscussionTranscript::from_json(j.at("rounds"));
    p.result_core = j.at("result");
    return p;
  }
};

// Recompute the core result fields from a persisted transcript.
inline ConsensusResult replay(const PersistedTranscript& persisted) {
  ConsensusResult result =
      aggregate_f_ap(persisted.transcript, persisted.inputs,
                     persisted.config.thresholds.alpha,
                     persisted.config.thresholds.rho);
  result.rounds_used = static_cast<int>(persisted.transcript.rounds.size());
  result.converged = !persisted.transcript.rounds.empty() &&
                     persisted.transcript.rounds.back().convergence_flag;
  result.transcript = persisted.transcript;
  if (persisted.result_core.contains("hallucination_event_count"))
    result.hallucination_event_count =
        persisted.result_core["hallucination_event_count"].get<int>();
  return result;
}

}  // namespace phewas::consensus
