#pragma once

// Agent tool suite: correlation, significance tests, effect sizes,
// distribution summaries, multiple-testing correction and the full
// phenotype x factor association scan.
//
// p-values go through the regularized incomplete beta function, evaluated
// with the Lentz continued fraction to absolute accuracy ~1e-10, so results
// are reproducible without an external numerics dependency.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "phewas/domain.hpp"
#include "phewas/errors.hpp"

namespace phewas::stats {

namespace detail {

inline double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace detail

// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0))
    throw DegenerateInputError("incomplete_beta: a, b must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) -
                          std::lgamma(b) + a * std::log(x) +
                          b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0))
    return front * detail::betacf(a, b, x) / a;
  return 1.0 - front * detail::betacf(b, a, 1.0 - x) / b;
}

// Two-sided p-value for Student's t with nu degrees of freedom.
inline double student_t_two_sided_p(double t, double nu) {
  if (nu <= 0.0) throw DegenerateInputError("t test: dof must be positive");
  if (!std::isfinite(t)) return 0.0;
  const double x = nu / (nu + t * t);
  return std::clamp(incomplete_beta(nu / 2.0, 0.5, x), 0.0, 1.0);
}

// Upper-tail p-value for the F distribution with (d1, d2) dof.
inline double f_upper_p(double f, double d1, double d2) {
  if (d1 <= 0.0 || d2 <= 0.0)
    throw DegenerateInputError("F test: dof must be positive");
  if (f <= 0.0) return 1.0;
  if (!std::isfinite(f)) return 0.0;
  const double x = d2 / (d2 + d1 * f);
  return std::clamp(incomplete_beta(d2 / 2.0, d1 / 2.0, x), 0.0, 1.0);
}

inline double mean(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

inline double sample_sd(const std::vector<double>& x) {
  if (x.size() < 2) return 0.0;
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(x.size() - 1));
}

inline double pearson_corr(const std::vector<double>& x,
                           const std::vector<double>& y) {
  if (x.size() != y.size())
    throw DegenerateInputError("pearson_corr: length mismatch");
  const std::size_t n = x.size();
  if (n < 3) throw DegenerateInputError("pearson_corr: need n >= 3");
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0)
    throw DegenerateInputError("pearson_corr: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// Two-sided p of r under H0: rho = 0, via t = r sqrt(n-2)/sqrt(1-r^2).
inline double corr_p_value(double r, std::size_t n) {
  if (std::fabs(r) > 1.0)
    throw DegenerateInputError("corr_p_value: |r| must be <= 1");
  if (n < 4) throw DegenerateInputError("corr_p_value: need n >= 4");
  const double nu = static_cast<double>(n - 2);
  if (std::fabs(r) >= 1.0) return 0.0;
  const double t = r * std::sqrt(nu) / std::sqrt(1.0 - r * r);
  return student_t_two_sided_p(t, nu);
}

inline double effect_size_cohens_d(const std::vector<double>& group_a,
                                   const std::vector<double>& group_b) {
  const std::size_t na = group_a.size(), nb = group_b.size();
  if (na < 2 || nb < 2)
    throw DegenerateInputError("cohens_d: each group needs n >= 2");
  const double ma = mean(group_a), mb = mean(group_b);
  double ssa = 0.0, ssb = 0.0;
  for (double v : group_a) ssa += (v - ma) * (v - ma);
  for (double v : group_b) ssb += (v - mb) * (v - mb);
  const double pooled_var =
      (ssa + ssb) / static_cast<double>(na + nb - 2);
  if (pooled_var <= 0.0)
    throw DegenerateInputError("cohens_d: zero pooled variance");
  return (ma - mb) / std::sqrt(pooled_var);
}

struct DistributionSummary {
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;
  double min = 0.0;
  double max = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  std::size_t missing_count = 0;

  Json to_json() const {
    return {{"n", n},   {"mean", mean},     {"sd", sd},
            {"min", min}, {"max", max},     {"q1", q1},
            {"median", median}, {"q3", q3}, {"missing_count", missing_count}};
  }
};

// Quantile by linear interpolation between closest ranks of sorted data.
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double pos = p * static_cast<double>(n - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, n - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline DistributionSummary distribution_summary(
    const std::vector<double>& values, const std::vector<std::uint8_t>& missing) {
  if (values.size() != missing.size())
    throw DegenerateInputError("distribution_summary: mask length mismatch");
  std::vector<double> x;
  std::size_t miss = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (missing[i])
      ++miss;
    else
      x.push_back(values[i]);
  }
  if (x.empty())
    throw DegenerateInputError("distribution_summary: all values missing");
  DistributionSummary s;
  s.n = x.size();
  s.missing_count = miss;
  s.mean = mean(x);
  s.sd = sample_sd(x);
  std::sort(x.begin(), x.end());
  s.min = x.front();
  s.max = x.back();
  s.q1 = quantile_sorted(x, 0.25);
  s.median = quantile_sorted(x, 0.5);
  s.q3 = quantile_sorted(x, 0.75);
  return s;
}

inline DistributionSummary distribution_summary(
    const std::vector<double>& values) {
  return distribution_summary(values,
                              std::vector<std::uint8_t>(values.size(), 0));
}

inline std::vector<double> bonferroni_adjust(const std::vector<double>& p) {
  const double k = static_cast<double>(p.size());
  std::vector<double> out;
  out.reserve(p.size());
  for (double v : p) {
    if (v < 0.0 || v > 1.0)
      throw ValidationError("bonferroni_adjust: p-value outside [0,1]");
    out.push_back(std::min(1.0, v * k));
  }
  return out;
}

// One-way ANOVA over groups; returns (F, p, eta_squared).
struct AnovaResult {
  double f = 0.0;
  double p = 1.0;
  double eta_squared = 0.0;
};

inline AnovaResult one_way_anova(const std::vector<std::vector<double>>& groups) {
  std::size_t total_n = 0;
  std::size_t k = 0;
  for (const auto& g : groups)
    if (!g.empty()) {
      total_n += g.size();
      ++k;
    }
  if (k < 2) throw DegenerateInputError("anova: need >= 2 non-empty groups");
  if (total_n < k + 2)
    throw DegenerateInputError("anova: too few observations");
  double grand = 0.0;
  for (const auto& g : groups)
    for (double v : g) grand += v;
  grand /= static_cast<double>(total_n);
  double ss_between = 0.0, ss_within = 0.0;
  for (const auto& g : groups) {
    if (g.empty()) continue;
    const double m = mean(g);
    ss_between += static_cast<double>(g.size()) * (m - grand) * (m - grand);
    for (double v : g) ss_within += (v - m) * (v - m);
  }
  const double ss_total = ss_between + ss_within;
  if (ss_total <= 0.0)
    throw DegenerateInputError("anova: zero total variance");
  AnovaResult r;
  const double d1 = static_cast<double>(k - 1);
  const double d2 = static_cast<double>(total_n - k);
  if (ss_within <= 0.0) {
    r.f = std::numeric_limits<double>::infinity();
    r.p = 0.0;
  } else {
    r.f = (ss_between / d1) / (ss_within / d2);
    r.p = f_upper_p(r.f, d1, d2);
  }
  r.eta_squared = ss_between / ss_total;
  return r;
}

struct ToolEvidence {
  std::string tool_name;
  std::string phenotype_id;
  std::string factor_id;
  Json payload;
  std::size_t n_used = 0;

  Json to_json() const {
    return {{"tool_name", tool_name},
            {"phenotype_id", phenotype_id},
            {"factor_id", factor_id},
            {"payload", payload},
            {"n_used", n_used}};
  }
};

struct ScanWarning {
  std::string phenotype_id;
  std::string factor_id;
  std::string reason;
};

struct ScanResult {
  std::vector<Association> associations;
  std::vector<ScanWarning> warnings;
};

// Full association scan. Continuous factors: Pearson r + t test. Binary
// factors: point-biserial r plus Cohen's d as effect size. Categorical
// factors: one-way ANOVA, strength = sqrt(eta^2) with sign 0. Pairs are
// dropped (with a warning) below 10 complete cases or on zero variance.
// p_adjusted is Bonferroni over the computed associations of this scan.
inline ScanResult association_scan(const Cohort& cohort,
                                   const std::vector<std::string>& phenotypes,
                                   const std::vector<std::string>& factors) {
  ScanResult result;
  for (const auto& pid : phenotypes)
    if (!cohort.has_phenotype(pid))
      throw SchemaError("association_scan: unknown phenotype: " + pid);
  for (const auto& fid : factors)
    if (!cohort.has_factor(fid))
      throw SchemaError("association_scan: unknown factor: " + fid);

  for (const auto& pid : phenotypes) {
    const auto& pcol = cohort.column(pid);
    for (const auto& fid : factors) {
      const auto& fcol = cohort.column(fid);
      const Factor& fmeta = cohort.factor(fid);
      std::vector<double> x, y;
      for (std::size_t i = 0; i < cohort.size(); ++i) {
        if (pcol.missing[i] || fcol.missing[i]) continue;
        x.push_back(pcol.values[i]);
        y.push_back(fcol.values[i]);
      }
      if (x.size() < 10) {
        result.warnings.push_back({pid, fid, "fewer than 10 complete cases"});
        continue;
      }
      Association a;
      a.phenotype_id = pid;
      a.factor_id = fid;
      a.n_complete = x.size();
      try {
        if (fmeta.kind == FactorKind::Categorical) {
          std::map<long long, std::vector<double>> by_level;
          for (std::size_t i = 0; i < x.size(); ++i)
            by_level[static_cast<long long>(std::llround(y[i]))].push_back(
                x[i]);
          std::vector<std::vector<double>> groups;
          for (auto& [lvl, g] : by_level) groups.push_back(std::move(g));
          const AnovaResult an = one_way_anova(groups);
          a.strength = std::sqrt(std::clamp(an.eta_squared, 0.0, 1.0));
          a.p_raw = an.p;
          a.effect_size = an.eta_squared;
        } else {
          const double r = pearson_corr(x, y);
          a.strength = r;
          a.p_raw = corr_p_value(r, x.size());
          if (fmeta.kind == FactorKind::Binary) {
            std::vector<double> g0, g1;
            for (std::size_t i = 0; i < x.size(); ++i)
              (y[i] > 0.5 ? g1 : g0).push_back(x[i]);
            a.effect_size = effect_size_cohens_d(g1, g0);
          } else {
            a.effect_size = r;
          }
        }
      } catch (const DegenerateInputError& e) {
        result.warnings.push_back({pid, fid, e.what()});
        continue;
      }
      result.associations.push_back(std::move(a));
    }
  }
  const double k = static_cast<double>(result.associations.size());
  for (auto& a : result.associations)
    a.p_adjusted = std::min(1.0, a.p_raw * k);
  return result;
}

}  // namespace phewas::stats
