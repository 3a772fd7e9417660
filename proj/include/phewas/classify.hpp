#pragma once

// Diagnosis evaluation harness: feature assembly from a consensus result,
// Fisher LDA, AdaBoost over decision stumps, a linear SVM trained by
// seeded subgradient descent, Mann-Whitney AUC, recall and stratified
// 5-fold cross-validation. All randomness is counter-based and derived
// from (seed, disease, classifier, fold).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "phewas/consensus.hpp"
#include "phewas/domain.hpp"
#include "phewas/errors.hpp"
#include "phewas/linalg.hpp"
#include "phewas/prng.hpp"
#include "phewas/stats.hpp"

namespace phewas::classify {

// ---------------------------------------------------------------------------
// Feature assembly
// ---------------------------------------------------------------------------

struct FeatureMatrix {
  std::vector<std::size_t> rows;          // cohort row per matrix row
  std::vector<std::string> participant_ids;
  std::vector<std::vector<double>> x;     // row-major
  std::vector<std::string> column_names;  // provenance
  std::vector<bool> column_continuous;    // standardize these only
  std::size_t excluded_count = 0;         // rows dropped for missingness
};

// Deterministic column order: phenotypes in catalog order, then factors in
// cohort factor order; categorical factors one-hot with first level dropped.
// Participants missing any selected column are excluded (listwise).
inline FeatureMatrix build_feature_matrix(
    const Cohort& cohort, const std::vector<std::string>& phenotype_ids,
    const std::vector<std::string>& factor_ids,
    const PhenotypeCatalog& catalog) {
  if (phenotype_ids.empty() && factor_ids.empty())
    throw ValidationError("build_feature_matrix: no features selected");
  std::set<std::string> pheno_set(phenotype_ids.begin(), phenotype_ids.end());
  std::set<std::string> factor_set(factor_ids.begin(), factor_ids.end());
  for (const auto& id : phenotype_ids)
    if (!cohort.has_phenotype(id))
      throw SchemaError("build_feature_matrix: phenotype column absent: " + id);
  for (const auto& id : factor_ids)
    if (!cohort.has_factor(id))
      throw SchemaError("build_feature_matrix: factor column absent: " + id);

  std::vector<std::string> ordered_phenos;
  for (const auto& p : catalog.entries())
    if (pheno_set.count(p.id)) ordered_phenos.push_back(p.id);
  // Selected phenotypes outside the catalog go last, sorted, so the order
  // stays a pure function of the inputs.
  {
    std::vector<std::string> extra;
    for (const auto& id : pheno_set)
      if (!catalog.find(id)) extra.push_back(id);
    std::sort(extra.begin(), extra.end());
    ordered_phenos.insert(ordered_phenos.end(), extra.begin(), extra.end());
  }
  std::vector<std::string> ordered_factors;
  for (const auto& f : cohort.factor_meta())
    if (factor_set.count(f.id)) ordered_factors.push_back(f.id);

  std::vector<std::string> all_cols = ordered_phenos;
  all_cols.insert(all_cols.end(), ordered_factors.begin(),
                  ordered_factors.end());
  const auto keep = complete_cases(cohort, all_cols);

  FeatureMatrix fm;
  fm.rows = keep;
  fm.excluded_count = cohort.size() - keep.size();
  for (std::size_t r : keep)
    fm.participant_ids.push_back(cohort.participant_ids()[r]);

  for (const auto& id : ordered_phenos) {
    fm.column_names.push_back("pheno." + id);
    fm.column_continuous.push_back(true);
  }
  struct FactorEncoding {
    std::string id;
    FactorKind kind;
    std::vector<long long> levels;  // Categorical: sorted, first dropped
  };
  std::vector<FactorEncoding> encodings;
  for (const auto& id : ordered_factors) {
    const Factor& meta = cohort.factor(id);
    FactorEncoding enc{id, meta.kind, {}};
    if (meta.kind == FactorKind::Categorical) {
      std::set<long long> levels;
      const auto& col = cohort.column(id);
      for (std::size_t r : keep)
        levels.insert(static_cast<long long>(std::llround(col.values[r])));
      enc.levels.assign(levels.begin(), levels.end());
      for (std::size_t k = 1; k < enc.levels.size(); ++k) {
        fm.column_names.push_back("factor." + id + "=" +
                                  std::to_string(enc.levels[k]));
        fm.column_continuous.push_back(false);
      }
    } else if (meta.kind == FactorKind::Binary) {
      fm.column_names.push_back("factor." + id);
      fm.column_continuous.push_back(false);
    } else {
      fm.column_names.push_back("factor." + id);
      fm.column_continuous.push_back(true);
    }
    encodings.push_back(std::move(enc));
  }

  fm.x.reserve(keep.size());
  for (std::size_t r : keep) {
    std::vector<double> row;
    row.reserve(fm.column_names.size());
    for (const auto& id : ordered_phenos)
      row.push_back(cohort.column(id).values[r]);
    for (const auto& enc : encodings) {
      const double v = cohort.column(enc.id).values[r];
      if (enc.kind == FactorKind::Categorical) {
        const long long lvl = static_cast<long long>(std::llround(v));
        for (std::size_t k = 1; k < enc.levels.size(); ++k)
          row.push_back(lvl == enc.levels[k] ? 1.0 : 0.0);
      } else {
        row.push_back(v);
      }
    }
    fm.x.push_back(std::move(row));
  }
  return fm;
}

inline FeatureMatrix build_feature_matrix(
    const Cohort& cohort, const consensus::ConsensusResult& result,
    const PhenotypeCatalog& catalog) {
  return build_feature_matrix(cohort, result.final_phenotype_ids,
                              result.final_confounder_ids, catalog);
}

// ---------------------------------------------------------------------------
// Classifiers
// ---------------------------------------------------------------------------

enum class ClassifierKind { LDA, AdaBoost, LinearSVM };
inline std::string to_string(ClassifierKind k) {
  switch (k) {
    case ClassifierKind::LDA: return "LDA";
    case ClassifierKind::AdaBoost: return "AdaBoost";
    case ClassifierKind::LinearSVM: return "SVM";
  }
  return "?";
}

struct ClassifierSpec {
  ClassifierKind kind = ClassifierKind::LDA;
  int adaboost_rounds = 100;
  double svm_lambda = 1e-3;
  int svm_epochs = 20;
  std::uint64_t seed = 0;
};

struct Scorer {
  std::function<double(const std::vector<double>&)> score;
  double threshold = 0.0;  // predict positive when score > threshold
};

inline void check_two_classes(const std::vector<int>& y) {
  bool has0 = false, has1 = false;
  for (int v : y) (v ? has1 : has0) = true;
  if (!has0 || !has1)
    throw ValidationError("classifier: both classes must be present");
}

struct LdaModel {
  std::vector<double> w;
  double threshold = 0.0;
};

// Two-class Fisher discriminant: w = (S_W + eps I)^-1 (mu1 - mu0), scored
// by w.x and thresholded at the midpoint of the projected class means.
inline LdaModel train_lda(const std::vector<std::vector<double>>& x,
                          const std::vector<int>& y, double eps = -1.0) {
  check_two_classes(y);
  const std::size_t n = x.size();
  const std::size_t d = x[0].size();
  std::vector<double> mu0(d, 0.0), mu1(d, 0.0);
  std::size_t n0 = 0, n1 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    auto& mu = y[i] ? mu1 : mu0;
    (y[i] ? n1 : n0) += 1;
    for (std::size_t j = 0; j < d; ++j) mu[j] += x[i][j];
  }
  for (std::size_t j = 0; j < d; ++j) {
    mu0[j] /= static_cast<double>(n0);
    mu1[j] /= static_cast<double>(n1);
  }
  linalg::Matrix sw(d, d);
  std::vector<double> diff(d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& mu = y[i] ? mu1 : mu0;
    for (std::size_t j = 0; j < d; ++j) diff[j] = x[i][j] - mu[j];
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) sw(a, b) += diff[a] * diff[b];
  }
  if (eps < 0.0) {
    double tr = 0.0;
    for (std::size_t j = 0; j < d; ++j) tr += sw(j, j);
    eps = 1e-6 * tr / static_cast<double>(d);
    if (eps <= 0.0) eps = 1e-9;
  }
  for (std::size_t j = 0; j < d; ++j) sw(j, j) += eps;
  std::vector<double> delta(d);
  for (std::size_t j = 0; j < d; ++j) delta[j] = mu1[j] - mu0[j];
  LdaModel model;
  model.w = linalg::solve(sw, delta);
  double p0 = 0.0, p1 = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    p0 += model.w[j] * mu0[j];
    p1 += model.w[j] * mu1[j];
  }
  model.threshold = 0.5 * (p0 + p1);
  return model;
}

inline Scorer lda_scorer(const LdaModel& model) {
  Scorer s;
  s.threshold = model.threshold;
  s.score = [w = model.w](const std::vector<double>& x) {
    double v = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) v += w[j] * x[j];
    return v;
  };
  return s;
}

struct Stump {
  std::size_t feature = 0;
  double threshold = 0.0;
  int polarity = 1;  // +1: predict +1 when x > threshold

  int predict(const std::vector<double>& x) const {
    const double v = x[feature] - threshold;
    return (polarity > 0 ? v > 0.0 : v <= 0.0) ? 1 : -1;
  }
};

struct AdaBoostModel {
  std::vector<Stump> stumps;
  std::vector<double> alphas;
  std::vector<double> round_errors;  // weighted error per accepted round
};

// AdaBoost with depth-1 stumps over all (feature, threshold, polarity)
// candidates; alpha_t = 0.5 ln((1-err)/err); stops early when a round's
// weighted error reaches 0 or 0.5.
inline AdaBoostModel train_adaboost(const std::vector<std::vector<double>>& x,
                                    const std::vector<int>& y, int rounds) {
  check_two_classes(y);
  if (rounds < 1) throw ValidationError("adaboost: rounds must be >= 1");
  const std::size_t n = x.size();
  const std::size_t d = x[0].size();
  std::vector<int> ypm(n);
  for (std::size_t i = 0; i < n; ++i) ypm[i] = y[i] ? 1 : -1;

  // Per-feature sort order, computed once.
  std::vector<std::vector<std::size_t>> order(d);
  for (std::size_t f = 0; f < d; ++f) {
    order[f].resize(n);
    std::iota(order[f].begin(), order[f].end(), std::size_t{0});
    std::stable_sort(order[f].begin(), order[f].end(),
                     [&](std::size_t a, std::size_t b) {
                       return x[a][f] < x[b][f];
                     });
  }

  std::vector<double> w(n, 1.0 / static_cast<double>(n));
  AdaBoostModel model;
  for (int t = 0; t < rounds; ++t) {
    Stump best;
    double best_err = std::numeric_limits<double>::infinity();
    for (std::size_t f = 0; f < d; ++f) {
      // err(theta below all points, polarity +1) = weighted share of
      // negatives; sweeping the threshold up flips one point at a time.
      double pos_w = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (ypm[i] > 0) pos_w += w[i];
      double err_plus = 1.0 - pos_w;  // all predicted +1
      auto consider = [&](double err, double theta) {
        if (err < best_err) {
          best_err = err;
          best = {f, theta, +1};
        }
        if (1.0 - err < best_err) {
          best_err = 1.0 - err;
          best = {f, theta, -1};
        }
      };
      consider(err_plus, x[order[f][0]][f] - 1.0);
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = order[f][k];
        // point i moves to the "<= threshold" side (predicted -1)
        err_plus += (ypm[i] > 0) ? w[i] : -w[i];
        const double here = x[i][f];
        const double next =
            (k + 1 < n) ? x[order[f][k + 1]][f] : here + 1.0;
        if (next > here) consider(err_plus, 0.5 * (here + next));
      }
    }
    if (best_err >= 0.5) break;
    const double err = std::max(best_err, 1e-12);
    const double alpha = 0.5 * std::log((1.0 - err) / err);
    model.stumps.push_back(best);
    model.alphas.push_back(alpha);
    model.round_errors.push_back(best_err);
    if (best_err <= 0.0) break;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const int h = best.predict(x[i]);
      w[i] *= std::exp(-alpha * h * ypm[i]);
      sum += w[i];
    }
    for (double& wi : w) wi /= sum;
  }
  if (model.stumps.empty())
    throw DegenerateInputError("adaboost: no stump beat chance");
  return model;
}

inline Scorer adaboost_scorer(const AdaBoostModel& model) {
  Scorer s;
  s.threshold = 0.0;
  s.score = [stumps = model.stumps,
             alphas = model.alphas](const std::vector<double>& x) {
    double v = 0.0;
    for (std::size_t t = 0; t < stumps.size(); ++t)
      v += alphas[t] * stumps[t].predict(x);
    return v;
  };
  return s;
}

struct SvmModel {
  std::vector<double> w;
  double bias = 0.0;
  std::vector<double> epoch_objectives;
};

inline double svm_objective(const std::vector<std::vector<double>>& x,
                            const std::vector<int>& ypm,
                            const std::vector<double>& w, double bias,
                            double lambda) {
  double reg = 0.0;
  for (double v : w) reg += v * v;
  double hinge = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double margin = bias;
    for (std::size_t j = 0; j < w.size(); ++j) margin += w[j] * x[i][j];
    hinge += std::max(0.0, 1.0 - ypm[i] * margin);
  }
  return 0.5 * lambda * reg + hinge / static_cast<double>(x.size());
}

// Primal hinge loss by seeded stochastic subgradient descent with the
// schedule eta_t = 1/(lambda t); bias updated unregularized. The recorded
// per-epoch objective is evaluated at the epoch's averaged weights.
inline SvmModel train_linear_svm(const std::vector<std::vector<double>>& x,
                                 const std::vector<int>& y, double lambda,
                                 int epochs, std::uint64_t seed = 0) {
  check_two_classes(y);
  if (lambda <= 0.0) throw ValidationError("svm: lambda must be positive");
  if (epochs < 1) throw ValidationError("svm: epochs must be >= 1");
  const std::size_t n = x.size();
  const std::size_t d = x[0].size();
  std::vector<int> ypm(n);
  for (std::size_t i = 0; i < n; ++i) ypm[i] = y[i] ? 1 : -1;
  std::vector<double> w(d, 0.0);
  double bias = 0.0;
  SvmModel model;
  std::uint64_t t = 0;
  const std::uint64_t stream = rng::fnv1a("svm.shuffle");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (int e = 0; e < epochs; ++e) {
    // Seeded Fisher-Yates shuffle per epoch.
    for (std::size_t i = n - 1; i > 0; --i) {
      const std::size_t j = static_cast<std::size_t>(
          rng::at(seed, stream, static_cast<std::uint64_t>(e) * n + i) %
          (i + 1));
      std::swap(idx[i], idx[j]);
    }
    std::vector<double> w_sum(d, 0.0);
    double bias_sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = idx[k];
      ++t;
      const double eta = 1.0 / (lambda * static_cast<double>(t));
      double margin = bias;
      for (std::size_t j = 0; j < d; ++j) margin += w[j] * x[i][j];
      const double scale = 1.0 - eta * lambda;
      for (std::size_t j = 0; j < d; ++j) w[j] *= scale;
      if (ypm[i] * margin < 1.0) {
        for (std::size_t j = 0; j < d; ++j) w[j] += eta * ypm[i] * x[i][j];
        bias += eta * ypm[i];
      }
      for (std::size_t j = 0; j < d; ++j) w_sum[j] += w[j];
      bias_sum += bias;
    }
    std::vector<double> w_avg(d);
    for (std::size_t j = 0; j < d; ++j)
      w_avg[j] = w_sum[j] / static_cast<double>(n);
    model.epoch_objectives.push_back(
        svm_objective(x, ypm, w_avg, bias_sum / static_cast<double>(n),
                      lambda));
  }
  model.w = std::move(w);
  model.bias = bias;
  return model;
}

inline Scorer svm_scorer(const SvmModel& model) {
  Scorer s;
  s.threshold = 0.0;
  s.score = [w = model.w, b = model.bias](const std::vector<double>& x) {
    double v = b;
    for (std::size_t j = 0; j < w.size(); ++j) v += w[j] * x[j];
    return v;
  };
  return s;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

// Mann-Whitney AUC via mid-ranks; ties count one half.
inline double auc(const std::vector<double>& scores,
                  const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw ValidationError("auc: length mismatch");
  check_two_classes(labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return scores[a] < scores[b];
                   });
  std::vector<double> rank(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double rank_sum_pos = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t k = 0; k < n; ++k)
    if (labels[k]) {
      rank_sum_pos += rank[k];
      ++n_pos;
    }
  const std::size_t n_neg = n - n_pos;
  return (rank_sum_pos -
          static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) /
              2.0) /
         (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

inline double recall(const std::vector<int>& predictions,
                     const std::vector<int>& labels) {
  if (predictions.size() != labels.size())
    throw ValidationError("recall: length mismatch");
  std::size_t tp = 0, fn = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!labels[i]) continue;
    (predictions[i] ? tp : fn) += 1;
  }
  if (tp + fn == 0) throw ValidationError("recall: no positive labels");
  return static_cast<double>(tp) / static_cast<double>(tp + fn);
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

struct CVReport {
  std::string disease;
  std::string classifier;
  std::vector<double> fold_auc;
  std::vector<double> fold_recall;
  double mean_auc = 0.0, sd_auc = 0.0;
  double mean_recall = 0.0, sd_recall = 0.0;
  std::string fold_digest;
  double positive_fraction = 0.0;

  Json to_json() const {
    return {{"disease", disease},
            {"classifier", classifier},
            {"fold_auc", fold_auc},
            {"fold_recall", fold_recall},
            {"mean_auc", mean_auc},
            {"sd_auc", sd_auc},
            {"mean_recall", mean_recall},
            {"sd_recall", sd_recall},
            {"fold_digest", fold_digest},
            {"positive_fraction", positive_fraction}};
  }
};

// Deterministic stratified fold assignment: shuffle each class with a
// seeded Fisher-Yates, deal round-robin.
inline std::vector<int> stratified_folds(const std::vector<int>& labels,
                                         int k, std::uint64_t seed,
                                         const std::string& salt) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i)
    (labels[i] ? pos : neg).push_back(i);
  if (static_cast<int>(pos.size()) < k || static_cast<int>(neg.size()) < k)
    throw ValidationError("cross_validate: need >= k samples of each class");
  const std::uint64_t stream = rng::fnv1a("strat." + salt);
  auto shuffle = [&](std::vector<std::size_t>& v, std::uint64_t offset) {
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      const std::size_t j = static_cast<std::size_t>(
          rng::at(seed, stream, offset + i) % (i + 1));
      std::swap(v[i], v[j]);
    }
  };
  shuffle(pos, 0);
  shuffle(neg, 1u << 30);
  std::vector<int> fold(labels.size(), 0);
  for (std::size_t i = 0; i < pos.size(); ++i)
    fold[pos[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < neg.size(); ++i)
    fold[neg[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  return fold;
}

namespace detail {

struct Standardizer {
  std::vector<double> mean, sd;
  const std::vector<bool>* continuous = nullptr;

  static Standardizer fit(const std::vector<std::vector<double>>& x,
                          const std::vector<std::size_t>& rows,
                          const std::vector<bool>& continuous) {
    Standardizer s;
    s.continuous = &continuous;
    const std::size_t d = x.empty() ? 0 : x[0].size();
    s.mean.assign(d, 0.0);
    s.sd.assign(d, 1.0);
    for (std::size_t j = 0; j < d; ++j) {
      if (!continuous[j]) continue;
      double m = 0.0;
      for (std::size_t r : rows) m += x[r][j];
      m /= static_cast<double>(rows.size());
      double v = 0.0;
      for (std::size_t r : rows) v += (x[r][j] - m) * (x[r][j] - m);
      v /= static_cast<double>(rows.size() > 1 ? rows.size() - 1 : 1);
      s.mean[j] = m;
      s.sd[j] = v > 0.0 ? std::sqrt(v) : 1.0;
    }
    return s;
  }

  std::vector<double> apply(const std::vector<double>& row) const {
    std::vector<double> out(row.size());
    for (std::size_t j = 0; j < row.size(); ++j)
      out[j] = (*continuous)[j] ? (row[j] - mean[j]) / sd[j] : row[j];
    return out;
  }
};

inline void finish_stats(CVReport& report) {
  report.mean_auc = stats::mean(report.fold_auc);
  report.sd_auc = stats::sample_sd(report.fold_auc);
  report.mean_recall = stats::mean(report.fold_recall);
  report.sd_recall = stats::sample_sd(report.fold_recall);
}

}  // namespace detail

inline Scorer train_classifier(const std::vector<std::vector<double>>& x,
                               const std::vector<int>& y,
                               const ClassifierSpec& spec,
                               std::uint64_t cell_seed) {
  switch (spec.kind) {
    case ClassifierKind::LDA:
      return lda_scorer(train_lda(x, y));
    case ClassifierKind::AdaBoost:
      return adaboost_scorer(train_adaboost(x, y, spec.adaboost_rounds));
    case ClassifierKind::LinearSVM:
      return svm_scorer(
          train_linear_svm(x, y, spec.svm_lambda, spec.svm_epochs, cell_seed));
  }
  throw ValidationError("unknown classifier kind");
}

inline CVReport cross_validate(const FeatureMatrix& features,
                               const std::vector<int>& labels,
                               const std::string& disease,
                               const ClassifierSpec& spec, int k = 5,
                               std::uint64_t seed = 0) {
  if (features.x.size() != labels.size())
    throw ValidationError("cross_validate: feature/label size mismatch");
  if (k < 2) throw ValidationError("cross_validate: k must be >= 2");
  const auto fold = stratified_folds(labels, k, seed, disease);
  rng::Digest digest;
  digest.mix(disease);
  for (int f : fold) digest.mix(static_cast<std::uint64_t>(f));

  CVReport report;
  report.disease = disease;
  report.classifier = to_string(spec.kind);
  report.fold_digest = digest.hex();
  std::size_t n_pos = 0;
  for (int v : labels) n_pos += static_cast<std::size_t>(v);
  report.positive_fraction =
      static_cast<double>(n_pos) / static_cast<double>(labels.size());

  for (int f = 0; f < k; ++f) {
    std::vector<std::size_t> train_rows, test_rows;
    for (std::size_t i = 0; i < labels.size(); ++i)
      (fold[i] == f ? test_rows : train_rows).push_back(i);
    const auto standardizer =
        detail::Standardizer::fit(features.x, train_rows,
                                  features.column_continuous);
    std::vector<std::vector<double>> x_train;
    std::vector<int> y_train;
    for (std::size_t i : train_rows) {
      x_train.push_back(standardizer.apply(features.x[i]));
      y_train.push_back(labels[i]);
    }
    rng::Digest cell;
    cell.mix(seed);
    cell.mix(disease);
    cell.mix(report.classifier);
    cell.mix(static_cast<std::uint64_t>(f));
    const Scorer scorer = train_classifier(x_train, y_train, spec,
                                           cell.value());
    std::vector<double> scores;
    std::vector<int> preds, y_test;
    for (std::size_t i : test_rows) {
      const double s = scorer.score(standardizer.apply(features.x[i]));
      scores.push_back(s);
      preds.push_back(s > scorer.threshold ? 1 : 0);
      y_test.push_back(labels[i]);
    }
    report.fold_auc.push_back(auc(scores, y_test));
    report.fold_recall.push_back(recall(preds, y_test));
  }
  detail::finish_stats(report);
  return report;
}

// ---------------------------------------------------------------------------
// Phenotype-set comparison harness
// ---------------------------------------------------------------------------

struct ComparisonCell {
  std::string disease;
  std::string classifier;
  double auc_a = 0.0, auc_b = 0.0;
  double recall_a = 0.0, recall_b = 0.0;
  double delta_auc = 0.0;    // b - a
  double delta_recall = 0.0;

  Json to_json() const {
    return {{"disease", disease},     {"classifier", classifier},
            {"auc_a", auc_a},         {"auc_b", auc_b},
            {"recall_a", recall_a},   {"recall_b", recall_b},
            {"delta_auc", delta_auc}, {"delta_recall", delta_recall}};
  }
};

struct ComparisonSummary {
  std::string classifier;
  double mean_delta_auc = 0.0, sd_delta_auc = 0.0;
  double mean_delta_recall = 0.0, sd_delta_recall = 0.0;

  Json to_json() const {
    return {{"classifier", classifier},
            {"mean_delta_auc", mean_delta_auc},
            {"sd_delta_auc", sd_delta_auc},
            {"mean_delta_recall", mean_delta_recall},
            {"sd_delta_recall", sd_delta_recall}};
  }
};

struct ComparisonReport {
  std::vector<ComparisonCell> cells;
  std::vector<ComparisonSummary> summaries;

  Json to_json() const {
    Json cells_j = Json::array();
    for (const auto& c : cells) cells_j.push_back(c.to_json());
    Json sums_j = Json::array();
    for (const auto& s : summaries) sums_j.push_back(s.to_json());
    return {{"cells", cells_j}, {"summaries", sums_j}};
  }
};

// Per-disease, per-classifier deltas between two feature sets, with
// mean +/- sd summary rows per classifier.
inline ComparisonReport compare_phenotype_sets(
    const Cohort& cohort, const FeatureMatrix& set_a,
    const FeatureMatrix& set_b, const std::vector<std::string>& diseases,
    const std::vector<ClassifierSpec>& specs, int k = 5,
    std::uint64_t seed = 0) {
  ComparisonReport report;
  auto labels_for = [&](const FeatureMatrix& fm, const std::string& disease) {
    const auto& col = cohort.disease(disease);
    std::vector<int> y;
    y.reserve(fm.rows.size());
    for (std::size_t r : fm.rows) y.push_back(col[r]);
    return y;
  };
  for (const auto& spec : specs) {
    std::vector<double> dauc, drecall;
    for (const auto& disease : diseases) {
      const auto ra =
          cross_validate(set_a, labels_for(set_a, disease), disease, spec, k,
                         seed);
      const auto rb =
          cross_validate(set_b, labels_for(set_b, disease), disease, spec, k,
                         seed);
      ComparisonCell cell;
      cell.disease = disease;
      cell.classifier = to_string(spec.kind);
      cell.auc_a = ra.mean_auc;
      cell.auc_b = rb.mean_auc;
      cell.recall_a = ra.mean_recall;
      cell.recall_b = rb.mean_recall;
      cell.delta_auc = rb.mean_auc - ra.mean_auc;
      cell.delta_recall = rb.mean_recall - ra.mean_recall;
      dauc.push_back(cell.delta_auc);
      drecall.push_back(cell.delta_recall);
      report.cells.push_back(std::move(cell));
    }
    ComparisonSummary summary;
    summary.classifier = to_string(spec.kind);
    summary.mean_delta_auc = stats::mean(dauc);
    summary.sd_delta_auc = stats::sample_sd(dauc);
    summary.mean_delta_recall = stats::mean(drecall);
    summary.sd_delta_recall = stats::sample_sd(drecall);
    report.summaries.push_back(std::move(summary));
  }
  return report;
}

}  // namespace phewas::classify
