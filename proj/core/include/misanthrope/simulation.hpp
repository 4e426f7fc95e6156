#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "misanthrope/configuration.hpp"
#include "misanthrope/fenwick.hpp"
#include "misanthrope/kernels.hpp"
#include "misanthrope/rng.hpp"

namespace misanthrope {

struct JumpEvent {
  double dt = 0.0;  // +inf when the state is absorbing
  Site source = 0;
  Site target = 0;

  bool progressed() const noexcept { return std::isfinite(dt); }
};

// U = sum_x u(eta_x), V = sum_x v(eta_x), D = sum_x u(eta_x) v(eta_x) for one term.
struct TermAggregates {
  double U = 0.0;
  double V = 0.0;
  double D = 0.0;
};

struct RunOptions {
  std::uint64_t jump_cap = 1'000'000'000;
  // Occupations of these sites are stored at every record.
  std::vector<Site> tracked_sites;
  // Copy the occupations at the end of the run into the trajectory.
  bool keep_final = false;
};

// Records of one run; the state at record time t is the one after the last
// jump at or before t.
struct EmpiricalTrajectory {
  std::size_t sites = 0;
  Level particles = 0;
  std::uint64_t seed = 0;
  std::size_t replica = 0;
  std::vector<double> times;
  std::vector<std::vector<std::int64_t>> counts;  // N_k at each record
  std::vector<double> m1;
  std::vector<double> m2;
  std::vector<std::vector<Level>> tracked;
  std::vector<Level> final_occupations;  // with RunOptions::keep_final
  bool truncated = false;  // jump cap hit; later records are missing
  std::uint64_t jumps = 0;
  double acceptance_rate = 1.0;

  // F_k = N_k / L at record i.
  std::vector<double> empirical(std::size_t i) const;
  std::optional<std::size_t> find(double t) const;
};

// Exact continuous-time simulation on the complete graph, q(x,y) = 1/(L-1).
//
// Waiting times use the exact total rate sum_t (U_t V_t - D_t)/(L-1). The
// jump pair is drawn by thinning against sum_t U_t V_t: pick a term, a source
// level with weight N_k u_t(k), a target level with weight N_l v_t(l), uniform
// sites inside the levels, and reject x == y. Table kernels skip thinning and
// scan the occupied levels (O(M) per jump).
class Simulation {
 public:
  // Throws InvalidArgument when L < 2 or the kernel is degenerate up to the
  // initial maximum occupation, and for table kernels whose cap is below N.
  Simulation(Configuration initial, RateKernel kernel, std::uint64_t seed);

  const Configuration& configuration() const noexcept { return config_; }
  const RateKernel& kernel() const noexcept { return kernel_; }
  double time() const noexcept { return clock_; }
  std::uint64_t jumps() const noexcept { return jumps_; }
  std::uint64_t proposals() const noexcept { return proposals_; }
  double acceptance_rate() const noexcept {
    return proposals_ ? static_cast<double>(jumps_) / static_cast<double>(proposals_) : 1.0;
  }

  // sum_{x != y} c(eta_x, eta_y) / (L-1).
  double total_rate() const;
  // sum_t U_t V_t / (L-1); equals total_rate() for table kernels.
  double envelope_rate() const;

  // One jump. In an absorbing state returns dt = +inf and the clock becomes +inf.
  JumpEvent step();

  EmpiricalTrajectory run_until(double horizon, std::span<const double> record_times,
                                const RunOptions& options = {});

  std::vector<TermAggregates> aggregates() const { return aggregates_; }
  // Aggregates recomputed from the histogram, for consistency checks.
  std::vector<TermAggregates> recompute_aggregates() const;

  // Interval (in jumps) between full aggregate refreshes.
  static constexpr std::uint64_t kResyncInterval = std::uint64_t{1} << 16;

 private:
  double u(std::size_t t, Level k);
  double v(std::size_t t, Level k);
  void ensure_levels(Level k);
  void resync();
  void refresh_level(Level k);
  JumpEvent apply_jump();
  std::pair<Site, Site> choose_separable();
  std::pair<Site, Site> choose_table();
  Site uniform_site_at(Level k);

  Configuration config_;
  RateKernel kernel_;
  Rng rng_;
  double clock_ = 0.0;
  std::uint64_t jumps_ = 0;
  std::uint64_t proposals_ = 0;
  double inv_pairs_ = 0.0;  // 1/(L-1)

  std::vector<TermAggregates> aggregates_;
  std::vector<std::vector<double>> u_cache_;
  std::vector<std::vector<double>> v_cache_;
  std::vector<Fenwick> u_tree_;
  std::vector<Fenwick> v_tree_;
  std::vector<bool> v_constant_;

  // Table path: row sums S_k = sum_l c(k,l) N_l.
  std::vector<double> row_sum_;
};

// Draws the initial configuration of one replica from its seed.
using InitialSampler = std::function<Configuration(std::uint64_t seed)>;

struct EnsembleOptions {
  std::size_t replicas = 1;
  std::uint64_t master_seed = 0;
  double horizon = 0.0;
  std::vector<double> record_times;
  std::size_t threads = 1;
  RunOptions run;
};

// Replica r draws its initial state with derive_seed(master, 2r) and its
// dynamics with derive_seed(master, 2r+1); results do not depend on threads.
std::vector<EmpiricalTrajectory> run_ensemble(const InitialSampler& initial, const RateKernel& kernel,
                                              const EnsembleOptions& options);

}  // namespace misanthrope
