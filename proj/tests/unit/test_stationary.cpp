#include <doctest.h>

#include <cmath>
#include <limits>

#include "misanthrope/errors.hpp"
#include "misanthrope/meanfield.hpp"
#include "misanthrope/stationary.hpp"
#include "oracles.hpp"

using namespace misanthrope;

TEST_SUITE("stationary") {
  TEST_CASE("weights") {
    const auto zrp3 = StationaryFamily::compute(RateKernel::zrp(3.0, 1.0), 256);
    CHECK(zrp3.weight(0) == 1.0);
    CHECK(zrp3.weight(2) == doctest::Approx(0.1).epsilon(1e-14));
    for (Level n = 0; n <= 256; ++n) {
      CHECK(zrp3.weight(n) > 0.0);
      CHECK(zrp3.log_weight(n) == doctest::Approx(oracle::zrp_log_weight(3.0, n)).epsilon(1e-12));
    }
    const auto inc = StationaryFamily::compute(RateKernel::inclusion(1.0), 128);
    for (Level n = 0; n <= 128; ++n) CHECK(inc.weight(n) == doctest::Approx(1.0).epsilon(1e-13));
  }

  TEST_CASE("ECP with d = 0 is the degenerate family") {
    const auto f = StationaryFamily::compute(RateKernel::ecp(2.0, 0.0), 64);
    CHECK(f.degenerate());
    CHECK(f.weight(0) == 1.0);
    CHECK(f.critical().rho_c == 0.0);
  }

  TEST_CASE("partition function") {
    const auto inc = StationaryFamily::compute(RateKernel::inclusion(1.0), 4096);
    CHECK(partition_function(inc, 0.0).value == 1.0);
    CHECK(partition_function(inc, 0.5).value == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(partition_function(inc, 1.5).diverges);

    // z(1) for ZRP(b=5): partial sums to 10^6 plus the integral tail of A n^-5.
    const auto zrp5 = StationaryFamily::compute(RateKernel::zrp(5.0, 1.0), 4096);
    const auto z = partition_function(zrp5, 1.0);
    CHECK_FALSE(z.diverges);
    double ref = 0.0;
    for (long n = 0; n <= 1000000; ++n) ref += std::exp(oracle::zrp_log_weight(5.0, n));
    ref += 120.0 * std::pow(1000000.5, -4.0) / 4.0;
    CHECK(z.value == doctest::Approx(ref).epsilon(1e-10));
    CHECK(ref == doctest::Approx(1.25).epsilon(1e-10));  // b/(b-1)
  }

  TEST_CASE("density") {
    const auto inc = StationaryFamily::compute(RateKernel::inclusion(1.0), 4096);
    CHECK(density(inc, 0.0) == 0.0);
    CHECK(density(inc, 0.5) == doctest::Approx(1.0).epsilon(1e-12));
    const auto zrp15 = StationaryFamily::compute(RateKernel::zrp(1.5, 1.0), 4096);
    CHECK(std::isinf(density(zrp15, 1.0)));
  }

  TEST_CASE("density is monotone in the fugacity") {
    for (const auto& kernel : {RateKernel::zrp(4.0, 1.0), RateKernel::ecp(3.0, 1.0), RateKernel::inclusion(0.5),
                               RateKernel::zrp(5.0, 0.5)}) {
      const auto fam = StationaryFamily::compute(kernel, 4096);
      const double top = std::isfinite(fam.critical().phi_c) ? fam.critical().phi_c : 10.0;
      double prev = -1.0;
      for (int i = 0; i <= 50; ++i) {
        const double r = density(fam, top * i / 50.0);
        CHECK(r >= prev);
        prev = r;
      }
    }
  }

  TEST_CASE("critical points") {
    for (double b : {3.0, 4.0, 5.0}) {
      const auto fam = StationaryFamily::compute(RateKernel::zrp(b, 1.0), 4096);
      CHECK(fam.critical().phi_c == doctest::Approx(1.0).epsilon(1e-6));
      CHECK(fam.critical().rho_c == doctest::Approx(oracle::zrp_critical_density(b, 1000000)).epsilon(1e-6));
    }
    const auto zrp4 = StationaryFamily::compute(RateKernel::zrp(4.0, 1.0), 4096);
    CHECK(std::fabs(zrp4.critical().rho_c - 0.5) <= 0.01);
    CHECK(zrp4.critical().tail_class == TailClass::PowerLaw);

    const auto ecp3 = StationaryFamily::compute(RateKernel::ecp(3.0, 1.0), 4096);
    CHECK(ecp3.critical().phi_c == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(std::isfinite(ecp3.critical().rho_c));

    CHECK(std::isinf(StationaryFamily::compute(RateKernel::zrp(1.0, 1.0), 4096).critical().rho_c));
    CHECK(std::isinf(StationaryFamily::compute(RateKernel::zrp(1.5, 1.0), 4096).critical().rho_c));

    // gamma < 1: stretched-exponential tail, finite rho_c at phi_c = 1.
    const auto zrp_s = StationaryFamily::compute(RateKernel::zrp(5.0, 0.5), 4096);
    CHECK(zrp_s.critical().phi_c == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(zrp_s.critical().tail_class == TailClass::StretchedExponential);
    CHECK(std::isfinite(zrp_s.critical().rho_c));

    // Independent walkers: Poisson weights, entire partition function.
    CHECK(std::isinf(StationaryFamily::compute(RateKernel::walkers(), 4096).critical().phi_c));
  }

  TEST_CASE("density inversion") {
    const auto inc = StationaryFamily::compute(RateKernel::inclusion(1.0), 4096);
    CHECK(invert_density(inc, 0.0) == 0.0);
    CHECK(invert_density(inc, 1.0) == doctest::Approx(0.5).epsilon(1e-10));
    const auto zrp4 = StationaryFamily::compute(RateKernel::zrp(4.0, 1.0), 4096);
    CHECK_THROWS_AS(invert_density(zrp4, 0.6), SupercriticalDensity);
    try {
      invert_density(zrp4, 0.6);
    } catch (const SupercriticalDensity& e) {
      CHECK(e.rho_c() == doctest::Approx(0.5).epsilon(1e-6));
    }
  }

  TEST_CASE("inversion undoes density below 0.99 phi_c") {
    for (const auto& kernel : {RateKernel::zrp(4.0, 1.0), RateKernel::ecp(3.0, 1.0), RateKernel::inclusion(1.0)}) {
      const auto fam = StationaryFamily::compute(kernel, 4096);
      for (int i = 0; i <= 20; ++i) {
        const double phi = 0.99 * fam.critical().phi_c * i / 20.0;
        CHECK(invert_density(fam, density(fam, phi)) == doctest::Approx(phi).epsilon(1e-9));
      }
    }
  }

  TEST_CASE("marginals") {
    const auto inc = StationaryFamily::compute(RateKernel::inclusion(1.0), 4096);
    const auto d0 = marginal(inc, 0.0);
    CHECK(d0.probabilities.size() >= 1);
    CHECK(d0.probabilities[0] == 1.0);
    const auto g = marginal(inc, 0.5);
    double s = 0.0;
    for (std::size_t k = 0; k < g.probabilities.size(); ++k) {
      CHECK(g.probabilities[k] == doctest::Approx(std::pow(0.5, k + 1.0)).epsilon(1e-12));
      s += g.probabilities[k];
    }
    CHECK(std::fabs(s + g.tail_mass - 1.0) <= 1e-12);

    const auto zrp3 = StationaryFamily::compute(RateKernel::zrp(3.0, 1.0), 4096);
    const auto m = marginal(zrp3, 0.5);
    CHECK(m.probabilities[2] == doctest::Approx(0.1 * 0.25 / partition_function(zrp3, 0.5).value).epsilon(1e-12));
  }

  TEST_CASE("marginal recursion") {
    for (const auto& kernel : {RateKernel::zrp(4.0, 1.0), RateKernel::zrp(5.0, 0.5), RateKernel::ecp(3.0, 2.0),
                               RateKernel::inclusion(0.5)}) {
      const auto fam = StationaryFamily::compute(kernel, 4096);
      const double phi = 0.5 * std::min(1.0, fam.critical().phi_c);
      const auto m = marginal(fam, phi);
      const double kappa = fam.fugacity_scale();
      for (std::size_t k = 1; k < m.probabilities.size(); ++k) {
        if (m.probabilities[k] < 1e-250) break;
        const Level kl = static_cast<Level>(k);
        const double lhs = kernel.rate(kl, 0) / kernel.rate(1, kl - 1) * m.probabilities[k];
        const double rhs = kappa * phi * m.probabilities[k - 1];
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("marginal truncation below double resolution stays finite") {
    const auto kernel = RateKernel::ecp(2.5, 1.0);
    const auto fam = stationary_weights(kernel, 4096);
    for (double phi : {0.2, 0.5, 0.8}) {
      const auto m = marginal(fam, phi, 1e-20);
      CHECK(m.probabilities.size() < 400);
      CHECK(m.tail_mass < 1e-20);
      CHECK(detailed_balance_residual(m.probabilities, kernel) <= 1e-13);
    }
  }
}
