#pragma once

// Shared test utilities: independent reference implementations (numeric
// t-distribution CDF, brute-force AUC) and small cohort builders. The
// reference oracles deliberately avoid the library's incomplete-beta code
// path.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "phewas/domain.hpp"
#include "phewas/prng.hpp"

namespace testutil {

// Student-t density.
inline double t_pdf(double x, double nu) {
  const double ln_c = std::lgamma((nu + 1.0) / 2.0) -
                      std::lgamma(nu / 2.0) -
                      0.5 * std::log(nu * 3.14159265358979323846);
  return std::exp(ln_c - (nu + 1.0) / 2.0 * std::log1p(x * x / nu));
}

inline double simpson(double (*f)(double, double), double nu, double a,
                      double b, int n) {
  const double h = (b - a) / n;
  double s = f(a, nu) + f(b, nu);
  for (int i = 1; i < n; ++i)
    s += f(a + i * h, nu) * ((i % 2) ? 4.0 : 2.0);
  return s * h / 3.0;
}

// Adaptive-depth Simpson integral of the t density on [0, t].
inline double t_integral_0_to(double t, double nu) {
  double prev = simpson(&t_pdf, nu, 0.0, t, 64);
  for (int n = 128; n <= 1 << 20; n *= 2) {
    const double cur = simpson(&t_pdf, nu, 0.0, t, n);
    if (std::fabs(cur - prev) < 1e-13) return cur;
    prev = cur;
  }
  return prev;
}

// Independent two-sided p-value reference: 1 - 2 * integral_0^{|t|} f.
inline double t_two_sided_p_reference(double t, double nu) {
  const double at = std::fabs(t);
  if (at == 0.0) return 1.0;
  // Integrate the body; beyond the point where the density is negligible
  // the integral saturates at 0.5.
  const double upper = std::min(at, 2000.0);
  const double body = t_integral_0_to(upper, nu);
  return std::max(0.0, 1.0 - 2.0 * body);
}

// O(P*N) pairwise AUC with half-credit ties.
inline double auc_brute_force(const std::vector<double>& scores,
                              const std::vector<int>& labels) {
  double wins = 0.0;
  std::size_t n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    ++n_pos;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      if (scores[i] > scores[j])
        wins += 1.0;
      else if (scores[i] == scores[j])
        wins += 0.5;
    }
  }
  for (int l : labels) n_neg += (l == 0);
  return wins / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

inline std::vector<double> normal_column(std::uint64_t seed,
                                         const std::string& stream_name,
                                         std::size_t n, double mean = 0.0,
                                         double sd = 1.0) {
  const std::uint64_t stream = phewas::rng::fnv1a(stream_name);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = mean + sd * phewas::rng::normal(seed, stream, i);
  return out;
}

// Cohort of independent standard-normal phenotype and factor columns.
inline phewas::Cohort null_cohort(std::uint64_t seed, std::size_t n,
                                  const std::vector<std::string>& pheno_ids,
                                  const std::vector<std::string>& factor_ids) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("P" + std::to_string(i));
  std::vector<phewas::NumericColumn> phenos, factors;
  std::vector<phewas::Factor> meta;
  for (const auto& id : pheno_ids)
    phenos.push_back({id, normal_column(seed, "p." + id, n),
                      std::vector<std::uint8_t>(n, 0)});
  for (const auto& id : factor_ids) {
    factors.push_back({id, normal_column(seed, "f." + id, n),
                       std::vector<std::uint8_t>(n, 0)});
    phewas::Factor f;
    f.id = id;
    f.name = id;
    meta.push_back(f);
  }
  return phewas::Cohort::create(std::move(ids), std::move(phenos),
                                std::move(factors), std::move(meta), {}, {});
}

// Exact-sample-correlation pair: returns y with sample corr(x, y) == r up
// to floating point, built by orthogonalizing a noise vector against x.
inline std::vector<double> correlated_with(const std::vector<double>& x,
                                           const std::vector<double>& noise,
                                           double r) {
  const std::size_t n = x.size();
  double mx = 0.0, mz = 0.0;
  for (double v : x) mx += v;
  mx /= n;
  std::vector<double> xc(n), zc(n);
  for (std::size_t i = 0; i < n; ++i) xc[i] = x[i] - mx;
  for (double v : noise) mz += v;
  mz /= n;
  for (std::size_t i = 0; i < n; ++i) zc[i] = noise[i] - mz;
  double xx = 0.0, xz = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    xx += xc[i] * xc[i];
    xz += xc[i] * zc[i];
  }
  for (std::size_t i = 0; i < n; ++i) zc[i] -= xz / xx * xc[i];
  double zz = 0.0;
  for (std::size_t i = 0; i < n; ++i) zz += zc[i] * zc[i];
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i)
    y[i] = r * xc[i] / std::sqrt(xx) +
           std::sqrt(1.0 - r * r) * zc[i] / std::sqrt(zz);
  return y;
}

}  // namespace testutil
