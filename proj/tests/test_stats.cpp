#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "phewas/stats.hpp"

using namespace phewas;

TEST_CASE("incomplete beta closed forms") {
  CHECK(stats::incomplete_beta(1, 1, 0.5) == doctest::Approx(0.5).epsilon(1e-12));
  // I_x(a,1) = x^a and I_x(1,b) = 1-(1-x)^b
  for (double x : {0.1, 0.3, 0.7, 0.95}) {
    CHECK(stats::incomplete_beta(3.0, 1.0, x) ==
          doctest::Approx(std::pow(x, 3.0)).epsilon(1e-10));
    CHECK(stats::incomplete_beta(1.0, 2.5, x) ==
          doctest::Approx(1.0 - std::pow(1.0 - x, 2.5)).epsilon(1e-10));
    // symmetry I_x(a,b) = 1 - I_{1-x}(b,a)
    CHECK(stats::incomplete_beta(2.0, 5.0, x) ==
          doctest::Approx(1.0 - stats::incomplete_beta(5.0, 2.0, 1.0 - x))
              .epsilon(1e-10));
  }
  CHECK(stats::incomplete_beta(2, 3, 0.0) == 0.0);
  CHECK(stats::incomplete_beta(2, 3, 1.0) == 1.0);
  CHECK_THROWS_AS(stats::incomplete_beta(0.0, 1.0, 0.5), DegenerateInputError);
}

TEST_CASE("student t two sided p closed forms") {
  CHECK(stats::student_t_two_sided_p(0.0, 10.0) == doctest::Approx(1.0));
  // nu=1 is Cauchy: p = 1 - (2/pi) atan(|t|)
  for (double t : {0.5, 1.0, 2.0, 7.5}) {
    CHECK(stats::student_t_two_sided_p(t, 1.0) ==
          doctest::Approx(1.0 - 2.0 / 3.14159265358979323846 * std::atan(t))
              .epsilon(1e-10));
    // nu=2 closed form: p = 1 - t / sqrt(2 + t^2)
    CHECK(stats::student_t_two_sided_p(t, 2.0) ==
          doctest::Approx(1.0 - t / std::sqrt(2.0 + t * t)).epsilon(1e-10));
  }
  // symmetric in t
  CHECK(stats::student_t_two_sided_p(-1.7, 6.0) ==
        stats::student_t_two_sided_p(1.7, 6.0));
  CHECK_THROWS_AS(stats::student_t_two_sided_p(1.0, 0.0),
                  DegenerateInputError);
}

TEST_CASE("t p-values match the numeric-integration reference") {
  std::uint64_t s = 99;
  for (int i = 0; i < 50; ++i) {
    const double t = -6.0 + 12.0 * rng::uniform(s, 1, i);
    const double nu = 2.0 + 60.0 * rng::uniform(s, 2, i);
    const double ref = testutil::t_two_sided_p_reference(t, nu);
    CHECK(stats::student_t_two_sided_p(t, nu) ==
          doctest::Approx(ref).epsilon(0).scale(1).epsilon(1e-8));
  }
}

TEST_CASE("F upper tail consistent with t and closed form") {
  // F(1, nu) is the square of t(nu)
  for (double f : {0.3, 1.0, 4.2}) {
    for (double nu : {3.0, 11.0, 40.0}) {
      CHECK(stats::f_upper_p(f, 1.0, nu) ==
            doctest::Approx(stats::student_t_two_sided_p(std::sqrt(f), nu))
                .epsilon(1e-9));
      // F(2, d2) upper tail = (1 + 2 f / d2)^(-d2/2)
      CHECK(stats::f_upper_p(f, 2.0, nu) ==
            doctest::Approx(std::pow(1.0 + 2.0 * f / nu, -nu / 2.0))
                .epsilon(1e-9));
    }
  }
  CHECK(stats::f_upper_p(0.0, 2, 5) == 1.0);
  CHECK_THROWS_AS(stats::f_upper_p(1.0, 0, 5), DegenerateInputError);
}

TEST_CASE("pearson correlation examples") {
  CHECK(stats::pearson_corr({1, 2, 3}, {2, 4, 6}) == doctest::Approx(1.0));
  CHECK(stats::pearson_corr({1, 2, 3}, {3, 2, 1}) == doctest::Approx(-1.0));
  CHECK(stats::pearson_corr({1, 2, 3, 4}, {1, 3, 2, 4}) ==
        doctest::Approx(0.8).epsilon(1e-12));
  CHECK_THROWS_AS(stats::pearson_corr({1, 2}, {1, 2}), DegenerateInputError);
  CHECK_THROWS_AS(stats::pearson_corr({1, 1, 1}, {1, 2, 3}),
                  DegenerateInputError);
  CHECK_THROWS_AS(stats::pearson_corr({1, 2, 3}, {1, 2}),
                  DegenerateInputError);
}

TEST_CASE("pearson symmetry and affine invariance") {
  const auto x = testutil::normal_column(5, "x", 60);
  const auto y = testutil::normal_column(5, "y", 60);
  const double r = stats::pearson_corr(x, y);
  CHECK(stats::pearson_corr(y, x) == doctest::Approx(r).epsilon(1e-12));
  std::vector<double> x2(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) x2[i] = 3.5 * x[i] - 11.0;
  CHECK(stats::pearson_corr(x2, y) == doctest::Approx(r).epsilon(1e-9));
}

TEST_CASE("corr p-value examples and monotonicity") {
  CHECK(stats::corr_p_value(0.0, 100) == doctest::Approx(1.0));
  CHECK(stats::corr_p_value(1.0, 10) == 0.0);
  CHECK(stats::corr_p_value(0.9, 20) < 1e-6);
  CHECK_THROWS_AS(stats::corr_p_value(0.5, 3), DegenerateInputError);
  CHECK_THROWS_AS(stats::corr_p_value(1.5, 30), DegenerateInputError);
  double prev = 1.1;
  for (double r : {0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 0.95}) {
    const double p = stats::corr_p_value(r, 30);
    CHECK(p < prev);
    prev = p;
  }
  prev = 1.1;
  for (std::size_t n : {5, 10, 20, 50, 200}) {
    const double p = stats::corr_p_value(0.3, n);
    CHECK(p < prev);
    prev = p;
  }
}

TEST_CASE("cohens d") {
  CHECK(stats::effect_size_cohens_d({1, 2, 3}, {1, 2, 3}) ==
        doctest::Approx(0.0));
  CHECK_THROWS_AS(stats::effect_size_cohens_d({0, 0}, {0, 0}),
                  DegenerateInputError);
  CHECK_THROWS_AS(stats::effect_size_cohens_d({1.0}, {1, 2}),
                  DegenerateInputError);
  const auto a = testutil::normal_column(11, "a", 4000, 1.0, 1.0);
  const auto b = testutil::normal_column(11, "b", 4000, 0.0, 1.0);
  CHECK(stats::effect_size_cohens_d(a, b) == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("distribution summary") {
  const std::vector<double> v = {5, 1, 3, 9, 7};
  const auto s = stats::distribution_summary(v);
  CHECK(s.n == 5);
  CHECK(s.min == 1);
  CHECK(s.max == 9);
  CHECK(s.median == 5);
  CHECK(s.q1 == 3);
  CHECK(s.q3 == 7);
  CHECK(s.mean == doctest::Approx(5.0));
  const auto sm = stats::distribution_summary({1, 2, 100}, {0, 0, 1});
  CHECK(sm.n == 2);
  CHECK(sm.missing_count == 1);
  CHECK(sm.max == 2);
  CHECK_THROWS_AS(stats::distribution_summary({1.0}, {1}),
                  DegenerateInputError);
}

TEST_CASE("bonferroni") {
  const auto out = stats::bonferroni_adjust({0.01, 0.2, 0.9});
  CHECK(out[0] == doctest::Approx(0.03));
  CHECK(out[1] == doctest::Approx(0.6));
  CHECK(out[2] == 1.0);
  const std::vector<double> in = {0.001, 0.4, 0.77};
  const auto adj = stats::bonferroni_adjust(in);
  for (std::size_t i = 0; i < in.size(); ++i) CHECK(adj[i] >= in[i]);
  const auto ones = stats::bonferroni_adjust({1.0, 1.0});
  CHECK(stats::bonferroni_adjust(ones) == ones);
  CHECK_THROWS_AS(stats::bonferroni_adjust({1.5}), ValidationError);
}

TEST_CASE("one-way anova vs two-sample t") {
  const auto a = testutil::normal_column(3, "ga", 40, 0.0);
  const auto b = testutil::normal_column(3, "gb", 40, 0.7);
  const auto an = stats::one_way_anova({a, b});
  // With two groups, F = t^2 and the p-values coincide.
  std::vector<double> x = a, y(a.size(), 0.0);
  x.insert(x.end(), b.begin(), b.end());
  y.insert(y.end(), b.size(), 1.0);
  const double r = stats::pearson_corr(x, y);
  CHECK(an.p == doctest::Approx(stats::corr_p_value(r, x.size())).epsilon(1e-9));
  CHECK(an.eta_squared == doctest::Approx(r * r).epsilon(1e-9));
  CHECK_THROWS_AS(stats::one_way_anova({{1, 2, 3}}), DegenerateInputError);
  CHECK_THROWS_AS(stats::one_way_anova({{1, 1}, {1, 1}}),
                  DegenerateInputError);
}

namespace {

phewas::Cohort tiny_scan_cohort() {
  const std::size_t n = 16;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("P" + std::to_string(i));
  auto mk = [&](const std::string& id, std::vector<double> v,
               std::vector<std::uint8_t> m = {}) {
    if (m.empty()) m.assign(n, 0);
    return phewas::NumericColumn{id, std::move(v), std::move(m)};
  };
  std::vector<double> a, b;
  for (std::size_t i = 0; i < n; ++i) {
    a.push_back(static_cast<double>(i));
    b.push_back(static_cast<double>((i * 7) % 16));
  }
  std::vector<double> f1 = a, f2;
  for (std::size_t i = 0; i < n; ++i) f2.push_back(i % 2 ? 1.0 : 0.0);
  phewas::Factor m1{"f1", "f1", phewas::FactorCategory::Demographics,
                    phewas::FactorKind::Continuous, 0};
  phewas::Factor m2{"f2", "f2", phewas::FactorCategory::Demographics,
                    phewas::FactorKind::Binary, 0};
  return phewas::Cohort::create(ids, {mk("pa", a), mk("pb", b)},
                                {mk("f1", f1), mk("f2", f2)}, {m1, m2}, {},
                                {});
}

}  // namespace

TEST_CASE("association scan cardinality and adjustment") {
  const auto cohort = tiny_scan_cohort();
  const auto res = stats::association_scan(cohort, {"pa", "pb"}, {"f1", "f2"});
  CHECK(res.associations.size() == 4);
  CHECK(res.warnings.empty());
  for (const auto& a : res.associations)
    CHECK(a.p_adjusted == doctest::Approx(std::min(1.0, a.p_raw * 4)));
  // pa vs f1 is a perfect correlation
  CHECK(res.associations[0].phenotype_id == "pa");
  CHECK(res.associations[0].strength == doctest::Approx(1.0));
  CHECK_THROWS_AS(stats::association_scan(cohort, {"nope"}, {"f1"}),
                  SchemaError);
  CHECK_THROWS_AS(stats::association_scan(cohort, {"pa"}, {"nope"}),
                  SchemaError);
}

TEST_CASE("association scan skips thin and degenerate pairs with warnings") {
  const std::size_t n = 16;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("P" + std::to_string(i));
  std::vector<std::uint8_t> mostly_missing(n, 1);
  for (std::size_t i = 0; i < 5; ++i) mostly_missing[i] = 0;
  phewas::NumericColumn thin{"thin", std::vector<double>(n, 1.0),
                             mostly_missing};
  phewas::NumericColumn flat{"flat", std::vector<double>(n, 2.0),
                             std::vector<std::uint8_t>(n, 0)};
  std::vector<double> f(n);
  for (std::size_t i = 0; i < n; ++i) f[i] = static_cast<double>(i);
  phewas::Factor meta{"f", "f", phewas::FactorCategory::Demographics,
                      phewas::FactorKind::Continuous, 0};
  const auto cohort = phewas::Cohort::create(
      ids, {thin, flat}, {{"f", f, std::vector<std::uint8_t>(n, 0)}}, {meta},
      {}, {});
  const auto res = stats::association_scan(cohort, {"thin", "flat"}, {"f"});
  CHECK(res.associations.empty());
  REQUIRE(res.warnings.size() == 2);
  CHECK(res.warnings[0].phenotype_id == "thin");
  CHECK(res.warnings[1].phenotype_id == "flat");
}
