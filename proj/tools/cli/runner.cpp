#include "runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "misanthrope/diagnostics.hpp"
#include "misanthrope/errors.hpp"
#include "misanthrope/initial.hpp"
#include "misanthrope/io.hpp"
#include "misanthrope/kernels.hpp"
#include "misanthrope/meanfield.hpp"
#include "misanthrope/rng.hpp"
#include "misanthrope/simulation.hpp"
#include "misanthrope/stationary.hpp"
#include "misanthrope/trajectory.hpp"

#ifndef MISANTHROPE_VERSION
#define MISANTHROPE_VERSION "unknown"
#endif

namespace misanthrope::cli {

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

class Artifacts {
 public:
  explicit Artifacts(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  std::ofstream open(const std::string& name) {
    std::ofstream out(dir_ / name, std::ios::binary);
    if (!out) throw Error("cannot write " + (dir_ / name).string());
    names_.push_back(name);
    return out;
  }

  const fs::path& dir() const { return dir_; }
  std::vector<std::string> names() const {
    auto n = names_;
    std::sort(n.begin(), n.end());
    return n;
  }

 private:
  fs::path dir_;
  std::vector<std::string> names_;
};

std::string tag(std::size_t L, std::size_t r) { return "L" + std::to_string(L) + "_r" + std::to_string(r); }

// Seed for the ensemble at size L; replicas derive from it.
std::uint64_t ensemble_seed(std::uint64_t master, std::size_t L) { return derive_seed(master, L); }

std::vector<double> initial_law(const ExperimentConfig& cfg, const InitialSpec& init) {
  return cfg.sizes.empty() ? init.meanfield_limit() : init.meanfield_initial(cfg.sizes.front());
}

void write_text_record(std::ostream& out, const std::vector<std::pair<std::string, std::string>>& entries) {
  for (const auto& [k, v] : entries) out << k << ": " << v << '\n';
}

std::string yes_no(bool b) { return b ? "true" : "false"; }

void run_simulate(const ExperimentConfig& cfg, Artifacts& art, std::size_t threads, json& seeds, std::ostream& log) {
  const auto kernel = RateKernel::parse(cfg.kernel, cfg.base_dir);
  const auto init = InitialSpec::parse(cfg.initial, cfg.base_dir);

  auto summary = art.open("simulate_summary.csv");
  write_csv_header(summary, "simulate_summary v1",
                   "L,replica,init_seed,dynamics_seed,particles,jumps,acceptance_rate,truncated,in_omega");

  for (std::size_t L : cfg.sizes) {
    const auto bounds = init.bounds(L);
    std::mutex mu;
    std::map<std::uint64_t, bool> in_omega;
    const InitialSampler sampler = [&](std::uint64_t seed) {
      auto c = init.sample(L, seed);
      const bool inside = bounds.contains(c);
      std::lock_guard<std::mutex> lock(mu);
      in_omega[seed] = inside;
      return c;
    };
    EnsembleOptions opt;
    opt.replicas = cfg.replicas;
    opt.master_seed = ensemble_seed(cfg.seed, L);
    opt.horizon = cfg.horizon;
    opt.record_times = cfg.record_times;
    opt.threads = threads;
    opt.run.jump_cap = cfg.jump_cap;
    opt.run.keep_final = cfg.write_final;
    const auto ensemble = run_ensemble(sampler, kernel, opt);

    json size_seeds = json::object();
    size_seeds["ensemble_seed"] = opt.master_seed;
    json reps = json::array();
    for (std::size_t r = 0; r < ensemble.size(); ++r) {
      const auto& tr = ensemble[r];
      const auto init_seed = derive_seed(opt.master_seed, 2 * r);
      const auto dyn_seed = derive_seed(opt.master_seed, 2 * r + 1);
      reps.push_back({{"replica", r}, {"init_seed", init_seed}, {"dynamics_seed", dyn_seed}});
      {
        auto out = art.open("trajectory_" + tag(L, r) + ".csv");
        write_trajectory_csv(out, tr);
      }
      {
        auto out = art.open("moments_" + tag(L, r) + ".csv");
        write_moments_csv(out, tr);
      }
      if (cfg.write_final) {
        auto out = art.open("final_" + tag(L, r) + ".csv");
        write_configuration_csv(out, Configuration(tr.final_occupations));
      }
      summary << L << ',' << r << ',' << init_seed << ',' << dyn_seed << ',' << tr.particles << ',' << tr.jumps
              << ',' << format_double(tr.acceptance_rate) << ',' << (tr.truncated ? 1 : 0) << ','
              << (in_omega[init_seed] ? 1 : 0) << '\n';
      if (tr.truncated) log << "warning: L=" << L << " replica " << r << " hit the jump cap\n";
    }
    size_seeds["replicas"] = std::move(reps);
    seeds[std::to_string(L)] = std::move(size_seeds);
    log << "simulate: L=" << L << ", " << ensemble.size() << " replicas done\n";
  }
}

void write_blowup(Artifacts& art, const ExperimentConfig& cfg, const MeanFieldSolution& sol) {
  auto out = art.open("blowup_report.txt");
  write_blowup_report(out, cfg.kernel, sol);
}

void run_meanfield(const ExperimentConfig& cfg, Artifacts& art, std::ostream& log) {
  const auto kernel = RateKernel::parse(cfg.kernel, cfg.base_dir);
  const auto init = InitialSpec::parse(cfg.initial, cfg.base_dir);
  const auto f0 = initial_law(cfg, init);
  const auto sol = integrate(f0, kernel, cfg.horizon, cfg.solver, cfg.record_times);
  {
    auto out = art.open("meanfield_solution.csv");
    write_solution_csv(out, sol);
  }
  {
    auto out = art.open("meanfield_moments.csv");
    write_moments_csv(out, sol);
  }
  {
    auto out = art.open("meanfield_summary.txt");
    const auto& s = sol.final_state;
    write_text_record(out, {{"kernel", cfg.kernel},
                            {"initial", cfg.initial},
                            {"stop_reason", to_string(sol.reason)},
                            {"t_final", format_double(s.t)},
                            {"K", std::to_string(sol.max_K_used)},
                            {"steps", std::to_string(sol.steps)},
                            {"rejected_steps", std::to_string(sol.rejected)},
                            {"m0", format_double(s.m0)},
                            {"m1", format_double(s.m1)},
                            {"m2", format_double(s.m2)},
                            {"leaked_mass", format_double(s.leaked_mass)},
                            {"blowup_time", sol.blowup_time ? format_double(*sol.blowup_time) : "none"}});
  }
  if (sol.blew_up()) {
    write_blowup(art, cfg, sol);
    log << "meanfield: blow-up flagged at t=" << format_double(*sol.blowup_time) << '\n';
  }
  log << "meanfield: stopped (" << to_string(sol.reason) << ") at t=" << format_double(sol.final_state.t) << '\n';
}

void run_stationary(const ExperimentConfig& cfg, Artifacts& art, std::ostream& log) {
  const auto kernel = RateKernel::parse(cfg.kernel, cfg.base_dir);
  const auto family = StationaryFamily::compute(kernel, cfg.n_max);
  const auto& cp = family.critical();
  {
    auto out = art.open("stationary_family.csv");
    write_family_csv(out, family);
  }

  std::vector<std::pair<double, std::string>> marginals;  // phi, origin
  for (double phi : cfg.phis) marginals.emplace_back(phi, "phi");
  for (double rho : cfg.densities) marginals.emplace_back(invert_density(family, rho), "density " + format_double(rho));

  auto rec = art.open("critical_point.txt");
  write_text_record(rec, {{"kernel", kernel.spec()},
                          {"phi_c", format_double(cp.phi_c)},
                          {"rho_c", format_double(cp.rho_c)},
                          {"z_c", format_double(cp.z_c)},
                          {"tail_class", to_string(cp.tail_class)},
                          {"tail_exponent", format_double(cp.tail_exponent)},
                          {"low_confidence", yes_no(cp.low_confidence)},
                          {"degenerate", yes_no(family.degenerate())},
                          {"fugacity_scale", format_double(family.fugacity_scale())}});
  for (std::size_t i = 0; i < marginals.size(); ++i) {
    const auto [phi, origin] = marginals[i];
    const auto m = marginal(family, phi);
    const auto name = "marginal_" + std::to_string(i) + ".csv";
    auto out = art.open(name);
    write_csv_header(out, "stationary_marginal v1", "n,f_n");
    for (std::size_t n = 0; n < m.probabilities.size(); ++n) {
      out << n << ',' << format_double(m.probabilities[n]) << '\n';
    }
    rec << "marginal_" << i << ": {file: " << name << ", from: " << origin << ", phi: " << format_double(phi)
        << ", density: " << format_double(density(family, phi)) << ", tail_mass: " << format_double(m.tail_mass)
        << "}\n";
  }
  log << "stationary: phi_c=" << format_double(cp.phi_c) << " rho_c=" << format_double(cp.rho_c) << '\n';
}

void run_compare(const ExperimentConfig& cfg, Artifacts& art, std::size_t threads, json& seeds, std::ostream& log) {
  const auto kernel = RateKernel::parse(cfg.kernel, cfg.base_dir);
  const auto init = InitialSpec::parse(cfg.initial, cfg.base_dir);

  SolverConfig solver = cfg.solver;
  solver.record_distributions = true;

  Ensembles ensembles;
  std::map<std::size_t, MeanFieldSolution> solutions;
  std::map<std::size_t, TwoSiteStatistics> two_site;
  for (std::size_t L : cfg.sizes) {
    solutions.emplace(L, integrate(init.meanfield_initial(L), kernel, cfg.horizon, solver, cfg.record_times));
    const auto& sol = solutions.at(L);
    if (sol.reason != StopReason::Horizon) {
      throw Error("mean-field solution for L = " + std::to_string(L) + " stopped early (" + to_string(sol.reason) +
                  ")");
    }
    EnsembleOptions opt;
    opt.replicas = cfg.replicas;
    opt.master_seed = ensemble_seed(cfg.seed, L);
    opt.horizon = cfg.horizon;
    opt.record_times = cfg.record_times;
    opt.threads = threads;
    auto ensemble = run_ensemble([&](std::uint64_t seed) { return init.sample(L, seed); }, kernel, opt);
    for (const auto& tr : ensemble) {
      if (tr.truncated) throw Error("jump cap hit at L = " + std::to_string(L));
    }
    two_site.emplace(L, two_site_statistics(ensemble, cfg.statistics_time, cfg.covariance_k, cfg.covariance_l));
    seeds[std::to_string(L)] = {{"ensemble_seed", opt.master_seed}, {"replicas", cfg.replicas}};
    ensembles.emplace(L, std::move(ensemble));
    log << "compare: L=" << L << " done\n";
  }

  const auto lln = lln_report(ensembles, solutions, cfg.record_times);
  const Level h_level = cfg.observable_level;
  const auto var = variance_scaling(
      ensembles, [h_level](Level k) { return k == h_level ? 1.0 : 0.0; }, cfg.statistics_time);
  const auto chaos = chaos_decay(two_site);
  {
    auto out = art.open("lln_report.csv");
    write_convergence_csv(out, lln);
  }
  {
    auto out = art.open("variance_scaling.csv");
    write_variance_csv(out, var);
  }
  {
    auto out = art.open("chaos_decay.csv");
    write_chaos_csv(out, chaos);
  }
  auto out = art.open("compare_summary.txt");
  write_text_record(out, {{"kernel", cfg.kernel},
                          {"initial", cfg.initial},
                          {"replicas", std::to_string(cfg.replicas)},
                          {"sup_tv_strictly_decreasing", yes_no(lln.strictly_decreasing)},
                          {"sup_tv_slope", format_double(lln.decay.slope)},
                          {"variance_time", format_double(cfg.statistics_time)},
                          {"variance_level", std::to_string(cfg.observable_level)},
                          {"variance_slope", format_double(var.fit.slope)},
                          {"variance_degenerate", yes_no(var.degenerate)},
                          {"covariance_levels", "[" + std::to_string(cfg.covariance_k) + ", " +
                                                    std::to_string(cfg.covariance_l) + "]"},
                          {"covariance_monotone_decreasing", yes_no(chaos.monotone_decreasing)},
                          {"covariance_slope", format_double(chaos.decay.slope)}});
}

void run_coarsen(const ExperimentConfig& cfg, Artifacts& art, std::ostream& log) {
  const auto kernel = RateKernel::parse(cfg.kernel, cfg.base_dir);
  const auto init = InitialSpec::parse(cfg.initial, cfg.base_dir);
  SolverConfig solver = cfg.solver;
  solver.record_distributions = false;
  const auto f0 = initial_law(cfg, init);
  const auto sol = integrate(f0, kernel, cfg.horizon, solver, cfg.record_times);
  {
    auto out = art.open("coarsening_moments.csv");
    write_moments_csv(out, sol);
  }
  std::vector<double> t, m2;
  for (const auto& r : sol.records) {
    if (r.t > 0.0) {
      t.push_back(r.t);
      m2.push_back(r.m2);
    }
  }
  auto out = art.open("coarsening_report.txt");
  write_text_record(out, {{"kernel", cfg.kernel},
                          {"initial", cfg.initial},
                          {"stop_reason", to_string(sol.reason)},
                          {"t_final", format_double(sol.final_state.t)},
                          {"K", std::to_string(sol.max_K_used)}});
  write_coarsening_summary(out, coarsening_fit(t, m2, cfg.fit_window, sol.blowup_time));

  // Bulk/condensate split of the final state when the kernel has stationary product measures.
  try {
    const auto family = StationaryFamily::compute(kernel, 4096);
    const auto split = phase_split(sol.final_f, family);
    write_text_record(out, {{"rho_c", format_double(family.critical().rho_c)},
                            {"final_bulk_density", format_double(split.bulk_density)},
                            {"final_condensed_density", format_double(split.condensed_density)},
                            {"phase_cutoff", std::to_string(split.cutoff)}});
  } catch (const InvalidArgument&) {
  } catch (const DegenerateKernel&) {
  }
  if (sol.blew_up()) write_blowup(art, cfg, sol);
  log << "coarsen: stopped (" << to_string(sol.reason) << ") at t=" << format_double(sol.final_state.t) << '\n';
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

}  // namespace

void run(const ExperimentConfig& cfg, const fs::path& out_dir, std::size_t threads, std::ostream& log) {
  const auto started = utc_now();
  const auto t0 = std::chrono::steady_clock::now();
  Artifacts art(out_dir);
  json seeds = json::object();

  switch (cfg.mode) {
    case Mode::Simulate:
      run_simulate(cfg, art, threads, seeds, log);
      break;
    case Mode::Meanfield:
      run_meanfield(cfg, art, log);
      break;
    case Mode::Stationary:
      run_stationary(cfg, art, log);
      break;
    case Mode::Compare:
      run_compare(cfg, art, threads, seeds, log);
      break;
    case Mode::Coarsen:
      run_coarsen(cfg, art, log);
      break;
  }

  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json manifest = json::object();
  manifest["tool"] = "misanthrope";
  manifest["version"] = MISANTHROPE_VERSION;
  manifest["mode"] = to_string(cfg.mode);
  manifest["kernel"] = cfg.kernel;
  manifest["initial"] = cfg.initial;
  manifest["master_seed"] = cfg.seed;
  manifest["seeds"] = seeds;
  manifest["config"] = cfg.source_text;
  manifest["outputs"] = art.names();
  manifest["wall_clock"] = {{"started_utc", started}, {"elapsed_seconds", elapsed}};
  std::ofstream out(out_dir / "manifest.json", std::ios::binary);
  out << manifest.dump(2) << '\n';
}

int main_entry(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Misanthrope process experiments on the complete graph"};
  app.set_version_flag("--version", std::string(MISANTHROPE_VERSION));
  std::string mode_name;
  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  app.add_option("mode", mode_name, "simulate | meanfield | stationary | compare | coarsen")
      ->required()
      ->check(CLI::IsMember({"simulate", "meanfield", "stationary", "compare", "coarsen"}));
  app.add_option("--config,-c", config_path, "YAML experiment file")->required();
  app.add_option("--out,-o", out_dir, "output directory (default: config 'output' or ./out)");
  app.add_option("--seed", seed, "master seed, overrides the config");
  app.add_option("--threads", threads, "worker threads for replica ensembles")->check(CLI::PositiveNumber);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  std::ifstream in(config_path, std::ios::binary);
  if (!in) {
    err << "config: cannot read " << config_path << '\n';
    return kConfigError;
  }
  std::ostringstream text;
  text << in.rdbuf();

  const auto mode = parse_mode(mode_name);
  auto result = validate(text.str(), mode, fs::path(config_path).parent_path());
  if (!result.ok()) {
    err << "invalid configuration (" << result.errors.size() << " problem"
        << (result.errors.size() == 1 ? "" : "s") << "):\n";
    for (const auto& e : result.errors) err << "  " << e << '\n';
    return kConfigError;
  }
  auto cfg = std::move(*result.config);
  if (seed) cfg.seed = *seed;
  const fs::path dir = out_dir ? fs::path(*out_dir) : cfg.output ? *cfg.output : fs::path("out");
  std::size_t n_threads = threads ? *threads : cfg.threads ? *cfg.threads : 0;
  if (n_threads == 0) n_threads = std::max(1u, std::thread::hardware_concurrency());

  try {
    run(cfg, dir, n_threads, out);
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternalError;
  }
  out << "outputs written to " << dir.string() << '\n';
  return kOk;
}

}  // namespace misanthrope::cli
