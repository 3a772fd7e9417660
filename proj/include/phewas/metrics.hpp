#pragma once

// Phenotype-set evaluation: the independence/validity score q, its
// complement reported as "dependency", and structure/function coverage.
//
// Note on directionality: q is high for independent, fully-valid sets;
// dependency = 1 - q is the lower-is-better presentation. Both are
// reported.

#include <cmath>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "phewas/domain.hpp"
#include "phewas/errors.hpp"
#include "phewas/stats.hpp"

namespace phewas::metrics {

struct MetricReport {
  double q_score = 0.0;
  double dependency = 0.0;
  double coverage = 0.0;
  std::size_t k = 0;        // |P|
  std::size_t k_valid = 0;  // |P_valid|
  std::size_t structures_covered = 0;
  std::size_t combos_covered = 0;

  Json to_json() const {
    return {{"q_score", q_score},
            {"dependency", dependency},
            {"coverage", coverage},
            {"k", k},
            {"k_valid", k_valid},
            {"structures_covered", structures_covered},
            {"combos_covered", combos_covered}};
  }
};

// A phenotype id is valid when it exactly matches a catalog entry AND is a
// cohort column with nonzero variance over its non-missing values.
inline bool is_valid_phenotype(const std::string& id, const Cohort& cohort,
                               const PhenotypeCatalog& catalog) {
  if (!catalog.find(id)) return false;
  if (!cohort.has_phenotype(id)) return false;
  const auto& col = cohort.column(id);
  std::vector<double> x;
  for (std::size_t i = 0; i < col.values.size(); ++i)
    if (!col.missing[i]) x.push_back(col.values[i]);
  return x.size() >= 2 && stats::sample_sd(x) > 0.0;
}

struct QScore {
  double q = 0.0;
  std::size_t k_valid = 0;
};

// q = [1 - (2 / K(K-1)) * sum of pairwise |corr| over valid phenotypes]
//     * |P_valid| / |P|,
// with the bracket defined as 1 when fewer than two valid phenotypes exist.
// Correlations use pairwise-complete cases.
inline QScore q_score(const std::vector<std::string>& phenotype_ids,
                      const Cohort& cohort, const PhenotypeCatalog& catalog) {
  const std::size_t k = phenotype_ids.size();
  if (k < 2) throw ValidationError("q_score: need at least two ids");
  std::vector<std::string> valid;
  for (const auto& id : phenotype_ids)
    if (is_valid_phenotype(id, cohort, catalog)) valid.push_back(id);

  double bracket = 1.0;
  if (valid.size() >= 2) {
    double sum_abs = 0.0;
    for (std::size_t i = 0; i + 1 < valid.size(); ++i) {
      const auto& a = cohort.column(valid[i]);
      for (std::size_t j = i + 1; j < valid.size(); ++j) {
        const auto& b = cohort.column(valid[j]);
        std::vector<double> x, y;
        for (std::size_t r = 0; r < cohort.size(); ++r) {
          if (a.missing[r] || b.missing[r]) continue;
          x.push_back(a.values[r]);
          y.push_back(b.values[r]);
        }
        if (x.size() >= 3) {
          try {
            sum_abs += std::fabs(stats::pearson_corr(x, y));
          } catch (const DegenerateInputError&) {
            // zero variance on the overlap: contributes no dependence
          }
        }
      }
    }
    bracket = 1.0 - 2.0 * sum_abs /
                        (static_cast<double>(k) * static_cast<double>(k - 1));
  }
  QScore out;
  out.k_valid = valid.size();
  out.q = std::clamp(bracket, 0.0, 1.0) *
          (static_cast<double>(valid.size()) / static_cast<double>(k));
  return out;
}

inline double dependency(double q) {
  if (q < 0.0 || q > 1.0) throw ValidationError("dependency: q outside [0,1]");
  return 1.0 - q;
}

// Weighted coverage of anatomical structures and (structure, function)
// combinations; invalid ids are ignored. F_total is the catalog's grid.
inline double coverage(const std::vector<std::string>& phenotype_ids,
                       const PhenotypeCatalog& catalog, double w_s = 0.5,
                       double w_f = 0.5, std::size_t* structures_out = nullptr,
                       std::size_t* combos_out = nullptr) {
  if (w_s < 0.0 || w_f < 0.0 || std::fabs(w_s + w_f - 1.0) > 1e-12)
    throw ValidationError("coverage: weights must be >= 0 and sum to 1");
  if (catalog.grid().empty())
    throw ValidationError("coverage: catalog declares no combinations");
  std::set<Structure> structures;
  std::set<std::pair<Structure, Function>> combos;
  for (const auto& id : phenotype_ids) {
    if (const Phenotype* p = catalog.find(id)) {
      structures.insert(p->structure);
      combos.emplace(p->structure, p->function);
    }
  }
  if (structures_out) *structures_out = structures.size();
  if (combos_out) *combos_out = combos.size();
  return w_s * static_cast<double>(structures.size()) /
             static_cast<double>(kNumStructures) +
         w_f * static_cast<double>(combos.size()) /
             static_cast<double>(catalog.grid().size());
}

inline MetricReport evaluate_set(const std::vector<std::string>& phenotype_ids,
                                 const Cohort& cohort,
                                 const PhenotypeCatalog& catalog,
                                 double w_s = 0.5, double w_f = 0.5) {
  MetricReport r;
  r.k = phenotype_ids.size();
  if (phenotype_ids.size() >= 2) {
    const QScore qs = q_score(phenotype_ids, cohort, catalog);
    r.q_score = qs.q;
    r.k_valid = qs.k_valid;
  } else {
    // Degenerate sets: no pairwise structure to score.
    r.q_score = 0.0;
    for (const auto& id : phenotype_ids)
      if (is_valid_phenotype(id, cohort, catalog)) ++r.k_valid;
  }
  r.dependency = dependency(r.q_score);
  std::vector<std::string> valid_ids;
  for (const auto& id : phenotype_ids)
    if (is_valid_phenotype(id, cohort, catalog)) valid_ids.push_back(id);
  r.coverage = coverage(valid_ids, catalog, w_s, w_f, &r.structures_covered,
                        &r.combos_covered);
  return r;
}

}  // namespace phewas::metrics
