#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "misanthrope/errors.hpp"
#include "misanthrope/initial.hpp"
#include "misanthrope/rng.hpp"
#include "oracles.hpp"

using namespace misanthrope;

TEST_SUITE("init") {
  TEST_CASE("level distributions") {
    const auto d = LevelDistribution::delta(3);
    CHECK(d.mean() == 3.0);
    CHECK(d.second_moment() == 9.0);
    CHECK(d.finite_support());
    const auto u = LevelDistribution::uniform(1, 3);
    CHECK(u.mean() == doctest::Approx(2.0));
    CHECK(u.second_moment() == doctest::Approx(14.0 / 3.0));
    const auto p = LevelDistribution::poisson(2.0);
    CHECK(p.mean() == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(p.second_moment() == doctest::Approx(6.0).epsilon(1e-10));
    const auto g = LevelDistribution::geometric(0.5);
    CHECK(g.mean() == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(LevelDistribution::parse("poisson(1.5)").mean() == doctest::Approx(1.5).epsilon(1e-10));
    CHECK(LevelDistribution::parse("uniform(0,4)").max_level() == 4);
    CHECK_THROWS_AS(LevelDistribution::parse("gauss(1)"), InvalidArgument);
    CHECK_THROWS_AS(LevelDistribution::parse("poisson(-1)"), InvalidArgument);
    CHECK_THROWS_AS(LevelDistribution::geometric(1.0), InvalidArgument);
    CHECK_THROWS_AS(LevelDistribution::uniform(3, 1), InvalidArgument);
  }

  TEST_CASE("product samples") {
    const auto s = product_sample(1000, LevelDistribution::delta(2), 1);
    CHECK(s.configuration.sites() == 1000);
    CHECK(s.configuration.particles() == 2000);
    CHECK(s.in_bounds);
    CHECK(s.bounds.alpha1 == doctest::Approx(4.0));
    CHECK(s.bounds.alpha2 == doctest::Approx(16.0));

    const auto marg = LevelDistribution::poisson(1.0);
    const auto big = product_sample(200000, marg, 4);
    const auto h = big.configuration.histogram();
    std::vector<double> emp(h.size());
    for (std::size_t k = 0; k < h.size(); ++k) emp[k] = static_cast<double>(h[k]) / 200000.0;
    CHECK(oracle::tv(emp, oracle::poisson(1.0, 30)) <= 0.01);
  }

  TEST_CASE("multinomial samples are close to product Poisson") {
    CHECK(multinomial_sample(10, 25, 3).particles() == 25);
    CHECK(multinomial_sample(10, 0, 3).particles() == 0);
    for (std::size_t L : {50u, 200u}) {
      const double rho = 1.0;
      const auto N = static_cast<Level>(rho * L);
      // Exact one-site law is Binomial(N, 1/L).
      std::vector<double> bin(static_cast<std::size_t>(N) + 1);
      for (Level k = 0; k <= N; ++k) bin[static_cast<std::size_t>(k)] = oracle::binomial_pmf(N, 1.0 / L, k);
      CHECK(oracle::tv(bin, oracle::poisson(rho, N)) <= 2.0 * rho / L);
    }
  }

  TEST_CASE("one-site frequency of multinomial sampling matches the binomial") {
    const std::size_t L = 10;
    const Level N = 20;
    const int R = 100000;
    std::vector<double> freq(N + 1, 0.0);
    for (int r = 0; r < R; ++r) {
      const auto c = multinomial_sample(L, N, derive_seed(8, r));
      freq[static_cast<std::size_t>(c.occupation(0))] += 1.0 / R;
    }
    for (Level k = 0; k <= 6; ++k) {
      const double p = oracle::binomial_pmf(N, 1.0 / L, k);
      CHECK(std::fabs(freq[static_cast<std::size_t>(k)] - p) <= 4.0 * std::sqrt(p * (1 - p) / R));
    }
  }

  TEST_CASE("conditioned samples satisfy their constraints") {
    const auto marg = LevelDistribution::poisson(1.0);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto s = conditioned_product_sample(100, 100, marg, 8.0, seed);
      CHECK(s.configuration.particles() == 100);
      CHECK(static_cast<double>(s.configuration.sum_of_squares()) <= 800.0);
      CHECK(s.attempts >= 1);
    }
    CHECK_THROWS_AS(conditioned_product_sample(100, 100, marg, 1.0, 1, 1000), SamplingExhausted);
  }

  TEST_CASE("deterministic profiles") {
    const auto c = deterministic_profile({{0, 2}, {3, 1}, {1, 1}}, 4);
    CHECK(std::vector<Level>(c.occupations().begin(), c.occupations().end()) == std::vector<Level>{0, 0, 1, 3});
    CHECK_THROWS_AS(deterministic_profile({{0, 2}}, 4), InvalidArgument);
  }

  TEST_CASE("initial specs") {
    const auto p = InitialSpec::parse("product:poisson(0.5)");
    CHECK(p.mode() == InitialSpec::Mode::Product);
    CHECK(p.density(100) == doctest::Approx(0.5).epsilon(1e-10));
    CHECK_FALSE(p.size_dependent());
    CHECK(oracle::tv(p.meanfield_limit(), oracle::poisson(0.5, 40)) <= 1e-12);

    const auto m = InitialSpec::parse("multinomial:N=100");
    CHECK(m.size_dependent());
    CHECK(m.density(50) == doctest::Approx(2.0));
    CHECK(oracle::tv(m.meanfield_initial(50), oracle::poisson(2.0, 60)) <= 1e-12);
    CHECK_THROWS_AS(m.meanfield_limit(), InvalidArgument);
    CHECK(m.sample(50, 1).particles() == 100);

    const auto mr = InitialSpec::parse("multinomial:rho=1.5");
    CHECK_FALSE(mr.size_dependent());
    CHECK(mr.sample(100, 1).particles() == 150);

    const auto cnd = InitialSpec::parse("conditioned:poisson(1),N=50");
    CHECK(cnd.sample(50, 2).particles() == 50);

    const auto dir = std::filesystem::temp_directory_path() / "misanthrope_init_test";
    std::filesystem::create_directories(dir);
    {
      std::ofstream(dir / "profile.csv") << "k,count\n0,3\n2,1\n";
    }
    const auto prof = InitialSpec::parse("profile:@profile.csv", dir);
    CHECK(prof.sample(4, 0).particles() == 2);
    CHECK_THROWS_AS(prof.sample(5, 0), InvalidArgument);
    std::filesystem::remove_all(dir);

    CHECK_THROWS_AS(InitialSpec::parse("product"), InvalidArgument);
    CHECK_THROWS_AS(InitialSpec::parse("lattice:poisson(1)"), InvalidArgument);
    CHECK_THROWS_AS(InitialSpec::parse("multinomial:N=10,rho=1"), InvalidArgument);
    CHECK_THROWS_AS(InitialSpec::parse("conditioned:poisson(1)"), InvalidArgument);
  }

  TEST_CASE("sampling is deterministic in the seed") {
    const auto spec = InitialSpec::parse("product:geometric(0.4)");
    const auto a = spec.sample(500, 42), b = spec.sample(500, 42), c = spec.sample(500, 43);
    CHECK(std::equal(a.occupations().begin(), a.occupations().end(), b.occupations().begin()));
    CHECK_FALSE(std::equal(a.occupations().begin(), a.occupations().end(), c.occupations().begin()));
  }
}
