#include <doctest.h>

#include <cmath>

#include "misanthrope/diagnostics.hpp"
#include "misanthrope/errors.hpp"
#include "misanthrope/initial.hpp"
#include "oracles.hpp"

using namespace misanthrope;

namespace {

std::vector<double> log_grid(double a, double b, int n) {
  std::vector<double> t(n);
  for (int i = 0; i < n; ++i) t[i] = a * std::pow(b / a, i / (n - 1.0));
  return t;
}

Ensembles multinomial_at_zero(const std::vector<std::size_t>& sizes, std::size_t replicas, double horizon,
                              std::vector<double> times) {
  Ensembles out;
  for (auto L : sizes) {
    EnsembleOptions opt;
    opt.replicas = replicas;
    opt.master_seed = derive_seed(21, L);
    opt.horizon = horizon;
    opt.record_times = times;
    out[L] = run_ensemble([L](std::uint64_t s) { return multinomial_sample(L, static_cast<Level>(L), s); },
                          RateKernel::walkers(), opt);
  }
  return out;
}

}  // namespace

TEST_SUITE("diagnostics") {
  TEST_CASE("total variation is a metric") {
    const std::vector<double> p{0.5, 0.5}, q{0.2, 0.3, 0.5}, r{1.0};
    CHECK(total_variation(p, p) == 0.0);
    CHECK(total_variation(p, q) == doctest::Approx(0.5));
    CHECK(total_variation(p, q) == total_variation(q, p));
    CHECK(total_variation(p, r) <= total_variation(p, q) + total_variation(q, r) + 1e-15);
    CHECK(total_variation(r, std::vector<double>{0.0, 1.0}) == doctest::Approx(1.0));
  }

  TEST_CASE("line fit") {
    const std::vector<double> x{0, 1, 2, 3}, y{1, 3, 5, 7};
    const auto f = fit_line(x, y);
    CHECK(f.slope == doctest::Approx(2.0));
    CHECK(f.intercept == doctest::Approx(1.0));
    CHECK(f.rss == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(f.slope_se == doctest::Approx(0.0).epsilon(1e-12));
  }

  TEST_CASE("coarsening fits classify synthetic series") {
    const auto t = log_grid(0.1, 1000.0, 61);
    std::vector<double> m2(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) m2[i] = 3.0 * std::pow(t[i], 0.5);
    const auto w = default_window(t);
    CHECK(w.t_begin == doctest::Approx(10.0));
    CHECK(w.t_end == doctest::Approx(1000.0));
    const auto pl = coarsening_fit(t, m2);
    CHECK(pl.exponent == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(pl.regime == Regime::PowerLaw);
    CHECK(pl.ci_low <= 0.5);
    CHECK(pl.ci_high >= 0.5);

    std::vector<double> lt(51), ex(51), sat(51);
    for (int i = 0; i <= 50; ++i) {
      lt[i] = 0.1 * i;
      ex[i] = std::exp(2.0 * lt[i]);
    }
    const auto e = coarsening_fit(lt, ex);
    CHECK(e.regime == Regime::Exponential);
    CHECK(e.exponential_rate == doctest::Approx(2.0).epsilon(1e-6));

    for (int i = 0; i <= 50; ++i) {
      lt[i] = 2.0 * i;
      sat[i] = 5.0 - std::exp(-lt[i]);
    }
    CHECK(coarsening_fit(lt, sat).regime == Regime::Saturated);
    CHECK(coarsening_fit(t, m2, std::nullopt, 0.5).regime == Regime::FiniteTimeBlowup);

    CHECK_THROWS_AS(coarsening_fit(t, m2, FitWindow{10.0, 12.0}), InvalidArgument);
    CHECK_THROWS_AS(coarsening_fit(std::vector<double>{1, 2}, std::vector<double>{1}), InvalidArgument);
  }

  TEST_CASE("phase split") {
    const auto kernel = RateKernel::zrp(5.0, 1.0);
    const auto fam = stationary_weights(kernel, 4096);
    const auto sub = marginal(fam, 0.5).probabilities;
    const auto s = phase_split(sub, fam);
    CHECK(s.condensed_density <= 1e-6);
    CHECK(s.bulk_density == doctest::Approx(density(fam, 0.5)).epsilon(1e-8));

    const auto crit = marginal(fam, 1.0).probabilities;
    std::vector<double> f(151, 0.0);
    for (std::size_t k = 0; k < f.size() && k < crit.size(); ++k) f[k] = 0.9 * crit[k];
    f[100] += 0.1;
    const auto b = phase_split(f, fam);
    CHECK(b.cutoff < 100);
    CHECK(b.condensed_density == doctest::Approx(10.0).epsilon(1e-4));
    CHECK(b.bulk_density == doctest::Approx(0.9 / 3.0).epsilon(1e-2));
    double m1 = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) m1 += static_cast<double>(k) * f[k];
    CHECK(b.bulk_density + b.condensed_density == doctest::Approx(m1).epsilon(1e-14));

    const auto z = phase_split(std::vector<double>{1.0}, fam);
    CHECK(z.bulk_density == 0.0);
    CHECK(z.condensed_density == 0.0);
  }

  TEST_CASE("variance scaling of multinomial snapshots") {
    const auto ens = multinomial_at_zero({50, 100, 200, 400}, 400, 0.0, {0.0});
    const auto v = variance_scaling(ens, [](Level k) { return k == 0 ? 1.0 : 0.0; }, 0.0);
    REQUIRE_FALSE(v.degenerate);
    CHECK(v.fit.slope == doctest::Approx(-1.0).epsilon(0.15));
    const auto c = variance_scaling(ens, [](Level) { return 2.0; }, 0.0);
    CHECK(c.degenerate);
    CHECK_THROWS_AS(variance_scaling(ens, [](Level k) { return double(k); }, 0.5), InvalidArgument);
  }

  TEST_CASE("law of large numbers against the stationary walker solution") {
    const std::vector<double> times{0.0, 1.0};
    const auto ens = multinomial_at_zero({100, 400, 1600, 6400}, 20, 1.0, times);
    const auto sol = integrate(oracle::poisson(1.0, 40), RateKernel::walkers(), 1.0, SolverConfig{}, times);
    const auto rep = lln_report(ens, sol, times);
    REQUIRE(rep.sizes.size() == 4);
    CHECK(rep.strictly_decreasing);
    CHECK(rep.decay.slope == doctest::Approx(-0.5).epsilon(0.2));

    std::map<std::size_t, MeanFieldSolution> per;
    for (const auto& [L, e] : ens) per[L] = sol;
    CHECK(lln_report(ens, per, times).sup_tv == rep.sup_tv);
  }

  // With N = L the 1/L term of cov(1{eta_1 = k}, 1{eta_2 = l}) carries (k - 1)(l - 1), so use k = l = 0.
  TEST_CASE("two-site covariance decays like 1/L for multinomial snapshots") {
    const auto ens = multinomial_at_zero({25, 50, 100, 200}, 4000, 0.0, {0.0});
    std::map<std::size_t, TwoSiteStatistics> stats;
    for (const auto& [L, e] : ens) stats[L] = two_site_statistics(e, 0.0, 0, 0);
    const auto rep = chaos_decay(stats);
    CHECK(rep.decay.slope == doctest::Approx(-1.0).epsilon(0.3));
    CHECK(rep.abs_covariance.front() > rep.abs_covariance.back());
  }
}
