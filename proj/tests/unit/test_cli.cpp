#include <doctest.h>

#include "cli_harness.hpp"
#include "config.hpp"

using namespace misanthrope::cli;

namespace {

bool mentions(const std::vector<std::string>& errors, const std::string& needle) {
  for (const auto& e : errors)
    if (e.find(needle) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("mode names") {
    CHECK(parse_mode("coarsen") == Mode::Coarsen);
    CHECK_FALSE(parse_mode("run").has_value());
    CHECK(std::string(to_string(Mode::Compare)) == "compare");
  }

  TEST_CASE("valid configurations") {
    const auto r = validate(
        "mode: simulate\nkernel: zrp:b=4,gamma=1\ninitial: multinomial:rho=0.8\nseed: 7\n"
        "simulate:\n  sizes: [100, 200]\n  replicas: 3\n  horizon: 2\n",
        Mode::Simulate);
    REQUIRE(r.ok());
    CHECK(r.config->sizes == std::vector<std::size_t>{100, 200});
    CHECK(r.config->replicas == 3);
    CHECK(r.config->record_times.size() == 11);
    CHECK(r.config->record_times.back() == doctest::Approx(2.0));
    CHECK(r.config->seed == 7);

    const auto m = validate(
        "kernel: ecp:lambda=2.5,d=0\ninitial: product:poisson(1)\nsolver:\n  max_K: 128\n  stop_at_max_K: false\n"
        "meanfield:\n  horizon: 1\n",
        Mode::Meanfield);
    REQUIRE(m.ok());
    CHECK(m.config->solver.max_K == 128);
    CHECK_FALSE(m.config->solver.stop_at_max_K);
  }

  TEST_CASE("invalid configurations list every problem") {
    const auto e = validate("", Mode::Simulate);
    CHECK_FALSE(e.ok());
    CHECK(e.errors.size() >= 3);
    CHECK(mentions(e.errors, "kernel"));
    CHECK(mentions(e.errors, "initial"));

    const auto b = validate(
        "kernel: ecp:lambda=-1\ninitial: product:poisson(1)\nbogus: 1\n"
        "compare:\n  sizes: [100, 200]\n  replicas: 1\n  horizon: 1\n",
        Mode::Compare);
    CHECK_FALSE(b.ok());
    CHECK(mentions(b.errors, "lambda"));
    CHECK(mentions(b.errors, "bogus"));
    CHECK(mentions(b.errors, "replicas"));

    CHECK_FALSE(validate("mode: meanfield\nkernel: walkers\ninitial: product:poisson(1)\n", Mode::Simulate).ok());
    CHECK_FALSE(validate("kernel: [1, 2\n", Mode::Simulate).ok());
  }

  TEST_CASE("stationary run writes the critical point") {
    const auto dir = harness::scratch("cli_stationary");
    harness::write_text(dir / "s.yaml",
                        "kernel: zrp:b=4,gamma=1\ninitial: product:poisson(1)\nstationary:\n  n_max: 2048\n"
                        "  phi: [0.25, 0.5]\n");
    const auto r = harness::invoke({"stationary", "--config", (dir / "s.yaml").string(), "--out", (dir / "o").string()});
    REQUIRE(r.code == 0);
    const auto crit = harness::read_text(dir / "o" / "critical_point.txt");
    CHECK(crit.find("phi_c") != std::string::npos);
    CHECK(std::filesystem::exists(dir / "o" / "stationary_family.csv"));
    CHECK(std::filesystem::exists(dir / "o" / "manifest.json"));
  }

  TEST_CASE("meanfield blow-up is reported") {
    const auto dir = harness::scratch("cli_blowup");
    harness::write_text(dir / "m.yaml",
                        "kernel: ecp:lambda=2.5,d=0\ninitial: product:poisson(1)\nsolver:\n  max_K: 128\n"
                        "  stop_at_max_K: false\n  blowup_m2_threshold: 50\nmeanfield:\n  horizon: 1\n");
    const auto r = harness::invoke({"meanfield", "-c", (dir / "m.yaml").string(), "-o", (dir / "o").string()});
    REQUIRE(r.code == 0);
    CHECK(std::filesystem::exists(dir / "o" / "blowup_report.txt"));
    CHECK(std::filesystem::exists(dir / "o" / "meanfield_moments.csv"));
  }

  TEST_CASE("exit codes") {
    const auto dir = harness::scratch("cli_codes");
    harness::write_text(dir / "empty.yaml", "");
    CHECK(harness::invoke({"simulate", "-c", (dir / "empty.yaml").string(), "-o", (dir / "o").string()}).code == 1);
    CHECK(harness::invoke({"simulate", "-c", (dir / "missing.yaml").string()}).code == 1);
    CHECK(harness::invoke({"teleport", "-c", (dir / "empty.yaml").string()}).code == 1);
    CHECK(harness::invoke({"--version"}).code == 0);
  }

  TEST_CASE("identical inputs give identical outputs") {
    const auto dir = harness::scratch("cli_determinism");
    harness::write_text(dir / "s.yaml",
                        "kernel: ecp:lambda=1.5,d=1\ninitial: multinomial:rho=1\nseed: 12\n"
                        "simulate:\n  sizes: [50, 100]\n  replicas: 3\n  horizon: 1\n");
    const auto cfg = (dir / "s.yaml").string();
    REQUIRE(harness::invoke({"simulate", "-c", cfg, "-o", (dir / "a").string(), "--threads", "1"}).code == 0);
    REQUIRE(harness::invoke({"simulate", "-c", cfg, "-o", (dir / "b").string(), "--threads", "2"}).code == 0);
    const auto a = harness::snapshot(dir / "a"), b = harness::snapshot(dir / "b");
    CHECK(a.size() > 3);
    CHECK(a == b);
    REQUIRE(harness::invoke({"simulate", "-c", cfg, "-o", (dir / "c").string(), "--seed", "13"}).code == 0);
    CHECK(harness::snapshot(dir / "c") != a);
  }
}
