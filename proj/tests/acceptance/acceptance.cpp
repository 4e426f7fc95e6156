// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cli_harness.hpp"
#include "misanthrope/diagnostics.hpp"
#include "misanthrope/initial.hpp"
#include "misanthrope/meanfield.hpp"
#include "misanthrope/stationary.hpp"
#include "oracles.hpp"

using namespace misanthrope;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> t(n);
  for (int i = 0; i < n; ++i) t[i] = a + (b - a) * i / (n - 1.0);
  return t;
}

// The coarsen-mode default record grid.
std::vector<double> coarsen_grid(double horizon) {
  const double start = std::min(0.1, horizon / 100.0);
  std::vector<double> t(61);
  for (int i = 0; i < 61; ++i) t[i] = start * std::pow(horizon / start, i / 60.0);
  t.back() = horizon;
  return t;
}

std::vector<double> poisson_f0(double mean) {
  auto f = oracle::poisson(mean, 60);
  double s = 0.0;
  for (double x : f) s += x;
  for (double& x : f) x /= s;
  return f;
}

std::vector<double> m2_series(const MeanFieldSolution& sol) {
  std::vector<double> m;
  for (const auto& r : sol.records) m.push_back(r.m2 + r.leaked_m2);
  return m;
}

std::vector<double> record_times(const MeanFieldSolution& sol) {
  std::vector<double> t;
  for (const auto& r : sol.records) t.push_back(r.t);
  return t;
}

// 1. exact six-state chain vs 1e5 replicas
Outcome ac1() {
  const oracle::SmallChain chain(3, 2, oracle::zrp(2.0, 1.0));
  std::vector<double> p0(chain.states.size(), 0.0);
  p0[chain.index.at({2, 0, 0})] = 1.0;
  EnsembleOptions opt;
  opt.replicas = 100000;
  opt.master_seed = 1;
  opt.horizon = 2.0;
  opt.record_times = {0.5, 1.0, 2.0};
  opt.run.tracked_sites = {0, 1, 2};
  const auto ens = run_ensemble([](std::uint64_t) { return Configuration({2, 0, 0}); }, RateKernel::zrp(2.0, 1.0), opt);
  Outcome o{true, "TV"};
  for (std::size_t j = 0; j < opt.record_times.size(); ++j) {
    std::vector<double> emp(chain.states.size(), 0.0);
    for (const auto& tr : ens)
      emp[chain.index.at(std::vector<long>(tr.tracked[j].begin(), tr.tracked[j].end()))] += 1.0 / opt.replicas;
    const double tv = oracle::tv(emp, chain.evolve(p0, opt.record_times[j]));
    o.pass = o.pass && tv <= 0.01;
    o.detail += fmt(" t=%g:%.4f", opt.record_times[j], tv);
  }
  return o;
}

// 2. independent walkers keep Poisson(1)
Outcome ac2() {
  const auto kernel = RateKernel::walkers();
  const auto f0 = poisson_f0(1.0);
  const auto times = linspace(0.0, 10.0, 101);
  SolverConfig cfg;
  cfg.rel_tol = 1e-10;
  cfg.abs_tol = 1e-14;
  const auto sol = integrate(f0, kernel, 10.0, cfg, times);
  const auto ref = oracle::poisson(1.0, 80);
  double worst = 0.0;
  for (const auto& r : sol.records) worst = std::max(worst, oracle::tv(r.f, ref));

  EnsembleOptions opt;
  opt.replicas = 50;
  opt.master_seed = 2;
  opt.horizon = 5.0;
  opt.record_times = {5.0};
  const auto marg = LevelDistribution::poisson(1.0);
  const auto ens = run_ensemble([&](std::uint64_t s) { return product_sample(1000, marg, s).configuration; }, kernel,
                                opt);
  const double tv_sim = oracle::tv(ensemble_marginal(ens, 5.0), ref);
  return {worst <= 1e-6 && tv_sim <= 0.02, fmt("ode sup TV=%.2e sim TV(t=5)=%.4f", worst, tv_sim)};
}

// 3. conservation and the second-moment envelope
Outcome ac3() {
  Outcome o{true, ""};
  const std::vector<RateKernel> kernels{RateKernel::zrp(4.0, 1.0), RateKernel::inclusion(1.0),
                                        RateKernel::ecp(1.5, 1.0)};
  const double rho = 1.0;
  const auto times = linspace(0.0, 10.0, 41);
  for (const auto& kernel : kernels) {
    const auto sol = integrate(poisson_f0(rho), kernel, 10.0, SolverConfig{}, times);
    double d0 = 0.0, d1 = 0.0;
    for (const auto& r : sol.records) {
      d0 = std::max(d0, std::fabs(r.m0 + r.leaked_mass - 1.0));
      d1 = std::max(d1, std::fabs(r.m1 + r.leaked_m1 - rho));
    }
    const bool ode_ok = sol.reason == StopReason::Horizon && d0 <= 1e-6 && d1 <= 1e-6;

    const std::size_t L = 1000;
    const auto N = static_cast<Level>(rho * L);
    Simulation sim(multinomial_sample(L, N, 3), kernel, 4);
    const auto tr = sim.run_until(10.0, times);
    bool m1_exact = tr.times.size() == times.size();
    for (double m : tr.m1) m1_exact = m1_exact && m == static_cast<double>(N) / L;

    std::string env = "n/a";
    bool env_ok = true;
    const auto cert = check_sublinear(kernel, 256);
    if (cert.certificate) {
      const double a1 = 2.0 * rho, a2 = 4.0 * tr.m2.front();
      const double C = 2.0 * cert.certificate->c1 * a1 * (a1 + cert.certificate->c2);
      double ratio = 0.0;
      for (std::size_t i = 0; i < tr.times.size(); ++i)
        ratio = std::max(ratio, tr.m2[i] / gronwall_envelope(a2, C, tr.times[i]));
      env_ok = ratio <= 1.0;
      env = fmt("%.2e", ratio);
    }
    o.pass = o.pass && ode_ok && m1_exact && env_ok;
    o.detail += fmt("%s[dm0=%.1e dm1=%.1e m1exact=%d m2/env=%s] ", kernel.spec().c_str(), d0, d1, int(m1_exact),
                    env.c_str());
  }
  return o;
}

// 4. stationarity and detailed balance of the product-measure family
Outcome ac4() {
  const std::vector<RateKernel> presets{
      RateKernel::zrp(3.0, 1.0),      RateKernel::zrp(4.0, 1.0),  RateKernel::zrp(5.0, 1.0),
      RateKernel::zrp(2.0, 0.5),      RateKernel::inclusion(0.5), RateKernel::inclusion(1.0),
      RateKernel::inclusion(2.0),     RateKernel::ecp(1.5, 1.0),  RateKernel::ecp(2.5, 1.0),
      RateKernel::walkers()};
  Outcome o{true, ""};
  double worst_s = 0.0, worst_d = 0.0, worst_tail = 0.0;
  int cases = 0;
  for (const auto& kernel : presets) {
    if (!check_misanthrope_condition(kernel, 64)) continue;
    const auto fam = stationary_weights(kernel, 1 << 14);
    if (fam.degenerate()) continue;
    std::vector<double> phis{0.2, 0.5};
    const double pc = fam.critical().phi_c;
    if (std::isfinite(pc)) phis.push_back(0.8 * pc);
    for (double phi : phis) {
      const auto m = marginal(fam, phi, 1e-20);
      const double s = stationarity_residual(m.probabilities, kernel);
      const double d = detailed_balance_residual(m.probabilities, kernel);
      worst_s = std::max(worst_s, s);
      worst_d = std::max(worst_d, d);
      worst_tail = std::max(worst_tail, m.tail_mass);
      const bool ok = s <= 1e-8 && d <= 1e-10 && m.tail_mass < 1e-12;
      if (!ok) o.detail += fmt("%s@phi=%g[s=%.1e d=%.1e tail=%.1e] ", kernel.spec().c_str(), phi, s, d, m.tail_mass);
      o.pass = o.pass && ok;
      ++cases;
    }
  }
  o.detail += fmt("%d cases, max stat=%.2e max db=%.2e max tail=%.1e", cases, worst_s, worst_d, worst_tail);
  return o;
}

// 5-7 share one sweep.
struct Sweep {
  Ensembles ensembles;
  std::map<std::size_t, MeanFieldSolution> solutions;
  std::vector<double> times;
};

const Sweep& sweep() {
  static const Sweep s = [] {
    Sweep sw;
    sw.times = linspace(0.0, 5.0, 21);
    const auto kernel = RateKernel::zrp(4.0, 1.0);
    const double rho = 0.3;
    for (std::size_t L : {100u, 400u, 1600u}) {
      const auto N = static_cast<Level>(std::floor(rho * L));
      EnsembleOptions opt;
      opt.replicas = 20;
      opt.master_seed = derive_seed(5, L);
      opt.horizon = 5.0;
      opt.record_times = sw.times;
      sw.ensembles[L] = run_ensemble([&](std::uint64_t seed) { return multinomial_sample(L, N, seed); }, kernel, opt);
      sw.solutions[L] = integrate(poisson_f0(static_cast<double>(N) / L), kernel, 5.0, SolverConfig{}, sw.times);
    }
    return sw;
  }();
  return s;
}

Outcome ac5() {
  const auto& sw = sweep();
  const auto rep = lln_report(sw.ensembles, sw.solutions, sw.times);
  std::string d = "sup TV";
  for (std::size_t i = 0; i < rep.sizes.size(); ++i) d += fmt(" L=%zu:%.4f", rep.sizes[i], rep.sup_tv[i]);
  d += fmt(" slope=%.3f", rep.decay.slope);
  return {rep.strictly_decreasing && rep.decay.slope >= -0.8 && rep.decay.slope <= -0.2, d};
}

Outcome ac6() {
  const auto v = variance_scaling(sweep().ensembles, [](Level k) { return k == 1 ? 1.0 : 0.0; }, 1.0);
  std::string d = "Var";
  for (std::size_t i = 0; i < v.sizes.size(); ++i) d += fmt(" L=%zu:%.3e", v.sizes[i], v.variance[i]);
  d += fmt(" slope=%.3f", v.fit.slope);
  return {!v.degenerate && v.fit.slope >= -1.4 && v.fit.slope <= -0.6, d};
}

Outcome ac7() {
  std::map<std::size_t, TwoSiteStatistics> stats;
  for (const auto& [L, e] : sweep().ensembles) stats[L] = two_site_statistics(e, 1.0, 1, 1);
  const auto rep = chaos_decay(stats);
  std::string d = "|cov|";
  for (std::size_t i = 0; i < rep.sizes.size(); ++i)
    d += fmt(" L=%zu:%.3e(se %.1e)", rep.sizes[i], rep.abs_covariance[i], rep.standard_error[i]);
  return {rep.monotone_decreasing, d};
}

// 8. ZRP critical values
Outcome ac8() {
  Outcome o{true, "phi_c"};
  for (double b : {3.0, 4.0, 5.0}) {
    const auto fam = stationary_weights(RateKernel::zrp(b, 1.0), 1 << 16);
    const double pc = fam.critical().phi_c;
    o.pass = o.pass && std::fabs(pc - 1.0) <= 1e-6;
    o.detail += fmt(" b=%g:%.9f", b, pc);
  }
  const double rc = critical_point(stationary_weights(RateKernel::zrp(4.0, 1.0), 1 << 16)).rho_c;
  const double oracle_rc = oracle::zrp_critical_density(4.0, 1000000);
  const auto c15 = critical_point(stationary_weights(RateKernel::zrp(1.5, 1.0), 1 << 16));
  o.pass = o.pass && std::fabs(rc - oracle_rc) <= 0.01 && std::fabs(rc - 0.5) <= 0.01 && std::isinf(c15.rho_c);
  o.detail += fmt(" rho_c(4)=%.6f oracle=%.6f rho_c(1.5)=%g", rc, oracle_rc, c15.rho_c);
  return o;
}

// 9. coarsening exponent
Outcome ac9() {
  const auto times = coarsen_grid(1000.0);
  SolverConfig cfg;
  cfg.record_distributions = false;
  const auto sol = integrate(poisson_f0(1.0), RateKernel::zrp(5.0, 1.0), 1000.0, cfg, times);
  const auto rep = coarsening_fit(record_times(sol), m2_series(sol), std::nullopt, sol.blowup_time);
  return {sol.reason == StopReason::Horizon && std::fabs(rep.exponent - 0.5) <= 0.1,
          fmt("window [%g,%g] exponent=%.4f +- %.4f K=%lld regime=%s", rep.window.t_begin, rep.window.t_end,
              rep.exponent, rep.exponent_se, static_cast<long long>(sol.max_K_used), to_string(rep.regime))};
}

// 10. ECP regimes with d = 0
Outcome ac10() {
  Outcome o{true, ""};
  const auto f0 = poisson_f0(1.0);
  SolverConfig base;
  base.record_distributions = false;

  {
    const auto times = coarsen_grid(100.0);
    const auto sol = integrate(f0, RateKernel::ecp(1.0, 0.0), 100.0, base, times);
    const auto rep = coarsening_fit(record_times(sol), m2_series(sol), std::nullopt, sol.blowup_time);
    const bool ok = rep.regime == Regime::PowerLaw && std::fabs(rep.exponent - 1.0) <= 0.15;
    o.pass = o.pass && ok;
    o.detail += fmt("l=1: exponent %.3f %s; ", rep.exponent, to_string(rep.regime));
  }
  {
    const auto times = coarsen_grid(2.0);
    const auto sol = integrate(f0, RateKernel::ecp(1.5, 0.0), 2.0, base, times);
    const auto rep = coarsening_fit(record_times(sol), m2_series(sol), std::nullopt, sol.blowup_time);
    const bool ok = rep.regime == Regime::Exponential;
    o.pass = o.pass && ok;
    o.detail += fmt("l=1.5: %s rate %.3f; ", to_string(rep.regime), rep.exponential_rate);
  }
  auto flag_times = [&](double lambda, std::vector<Level> Ks) {
    std::vector<double> tc;
    for (Level K : Ks) {
      SolverConfig cfg = base;
      cfg.max_K = K;
      cfg.K_init = std::min<Level>(64, K);
      cfg.stop_at_max_K = false;
      cfg.blowup_m2_threshold = 50.0;
      const auto sol = integrate(f0, RateKernel::ecp(lambda, 0.0), 2.0, cfg, {});
      tc.push_back(sol.blowup_time.value_or(NAN));
    }
    return tc;
  };
  {
    const auto tc = flag_times(1.75, {256, 512, 1024});
    const double c1 = std::fabs(tc[1] - tc[0]) / tc[1], c2 = std::fabs(tc[2] - tc[1]) / tc[2];
    const bool ok = std::isfinite(tc[0]) && std::isfinite(tc[1]) && std::isfinite(tc[2]) && c1 < 0.1 && c2 < 0.1;
    o.pass = o.pass && ok;
    o.detail += fmt("l=1.75: t_c %.4f %.4f %.4f (changes %.1f%% %.1f%%); ", tc[0], tc[1], tc[2], 100 * c1, 100 * c2);
  }
  {
    const auto tc = flag_times(2.5, {64, 128, 256});
    const bool ok = std::isfinite(tc[0]) && tc[1] < tc[0] && tc[2] < tc[1];
    o.pass = o.pass && ok;
    o.detail += fmt("l=2.5: t_c %.4f %.4f %.4f", tc[0], tc[1], tc[2]);
  }
  return o;
}

// 11. byte-identical outputs across repeated CLI runs
Outcome ac11() {
  const std::map<std::string, std::string> configs{
      {"simulate",
       "kernel: ecp:lambda=1.5,d=1\ninitial: multinomial:rho=1\nseed: 3\n"
       "simulate:\n  sizes: [50, 200]\n  replicas: 4\n  horizon: 2\n"},
      {"meanfield", "kernel: zrp:b=4,gamma=1\ninitial: product:poisson(0.8)\nmeanfield:\n  horizon: 5\n"},
      {"stationary", "kernel: zrp:b=4,gamma=1\ninitial: product:poisson(1)\nstationary:\n  n_max: 4096\n"},
      {"compare",
       "kernel: zrp:b=4,gamma=1\ninitial: multinomial:rho=0.3\nseed: 9\n"
       "compare:\n  sizes: [50, 100, 200]\n  replicas: 5\n  horizon: 2\n"},
      {"coarsen", "kernel: zrp:b=5,gamma=1\ninitial: product:poisson(1)\ncoarsen:\n  horizon: 20\n"},
  };
  Outcome o{true, ""};
  const auto dir = harness::scratch("acceptance_determinism");
  for (const auto& [mode, text] : configs) {
    const auto cfg = dir / (mode + ".yaml");
    harness::write_text(cfg, text);
    const auto a = harness::invoke({mode, "-c", cfg.string(), "-o", (dir / (mode + "_a")).string(), "--threads", "1"});
    const auto b = harness::invoke({mode, "-c", cfg.string(), "-o", (dir / (mode + "_b")).string(), "--threads", "2"});
    bool same = a.code == 0 && b.code == 0;
    std::size_t files = 0;
    if (same) {
      const auto sa = harness::snapshot(dir / (mode + "_a"));
      same = sa == harness::snapshot(dir / (mode + "_b"));
      files = sa.size();
    }
    o.pass = o.pass && same;
    o.detail += fmt("%s:%s(%zu files) ", mode.c_str(), same ? "identical" : "DIFFER", files);
  }
  std::filesystem::remove_all(dir);
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"AC1 exact six-state oracle", ac1},  {"AC2 walkers fixed point", ac2},   {"AC3 conservation", ac3},
      {"AC4 stationarity", ac4},            {"AC5 LLN trend", ac5},             {"AC6 variance scaling", ac6},
      {"AC7 chaos decay", ac7},             {"AC8 critical values", ac8},       {"AC9 coarsening exponent", ac9},
      {"AC10 ECP regimes", ac10},           {"AC11 determinism", ac11}};
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %s (%.1fs): %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), secs, o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed ? 1 : 0;
}
