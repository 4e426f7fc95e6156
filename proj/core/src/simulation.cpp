#include "misanthrope/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <limits>
#include <mutex>
#include <string>
#include <thread>

#include "misanthrope/errors.hpp"

namespace misanthrope {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::size_t level_capacity(Level max_level) {
  std::size_t c = 16;
  while (c < static_cast<std::size_t>(max_level) + 2) c *= 2;
  return c;
}

}  // namespace

std::vector<double> EmpiricalTrajectory::empirical(std::size_t i) const {
  const auto& n = counts.at(i);
  std::vector<double> f(n.size());
  for (std::size_t k = 0; k < n.size(); ++k) f[k] = static_cast<double>(n[k]) / static_cast<double>(sites);
  return f;
}

std::optional<std::size_t> EmpiricalTrajectory::find(double t) const {
  const auto it = std::lower_bound(times.begin(), times.end(), t);
  if (it == times.end() || *it != t) return std::nullopt;
  return static_cast<std::size_t>(it - times.begin());
}

Simulation::Simulation(Configuration initial, RateKernel kernel, std::uint64_t seed)
    : config_(std::move(initial)), kernel_(std::move(kernel)), rng_(seed) {
  const std::size_t L = config_.sites();
  if (L < 2) throw InvalidArgument("simulation needs at least 2 sites, got " + std::to_string(L));
  inv_pairs_ = 1.0 / static_cast<double>(L - 1);

  if (kernel_.is_table() && *kernel_.level_cap() < config_.particles()) {
    throw InvalidArgument("table kernel cap " + std::to_string(*kernel_.level_cap()) + " is below the particle count " +
                          std::to_string(config_.particles()));
  }
  if (config_.particles() > 0) {
    const auto check = check_nondegenerate(kernel_, std::clamp<Level>(config_.max_level(), 1, 64));
    if (!check) throw InvalidArgument("kernel " + kernel_.spec() + " is degenerate: " + check.detail);
    const auto hist = config_.histogram();
    for (Level k = 1; k < static_cast<Level>(hist.size()); ++k) {
      for (Level l = 0; l < static_cast<Level>(hist.size()); ++l) {
        if (hist[k] > 0 && hist[l] > 0 && !(kernel_.rate(k, l) > 0.0)) {
          throw InvalidArgument("kernel " + kernel_.spec() + " has c(" + std::to_string(k) + "," + std::to_string(l) +
                                ") <= 0");
        }
      }
    }
  }

  if (kernel_.is_table()) {
    row_sum_.assign(static_cast<std::size_t>(*kernel_.level_cap()) + 1, 0.0);
  } else {
    const auto terms = kernel_.terms();
    aggregates_.resize(terms.size());
    u_cache_.resize(terms.size());
    v_cache_.resize(terms.size());
    u_tree_.resize(terms.size());
    v_tree_.resize(terms.size());
    for (const auto& term : terms) v_constant_.push_back(term.target.is_constant());
    const std::size_t cap = level_capacity(config_.max_level());
    for (std::size_t t = 0; t < terms.size(); ++t) {
      u_tree_[t].resize(cap);
      if (!v_constant_[t]) v_tree_[t].resize(cap);
    }
  }
  resync();
}

double Simulation::u(std::size_t t, Level k) {
  auto& cache = u_cache_[t];
  if (static_cast<std::size_t>(k) >= cache.size()) {
    const std::size_t old = cache.size();
    cache.resize(std::max<std::size_t>(2 * old, static_cast<std::size_t>(k) + 1));
    for (std::size_t j = old; j < cache.size(); ++j) cache[j] = kernel_.terms()[t].departure(static_cast<Level>(j));
  }
  return cache[static_cast<std::size_t>(k)];
}

double Simulation::v(std::size_t t, Level k) {
  auto& cache = v_cache_[t];
  if (static_cast<std::size_t>(k) >= cache.size()) {
    const std::size_t old = cache.size();
    cache.resize(std::max<std::size_t>(2 * old, static_cast<std::size_t>(k) + 1));
    for (std::size_t j = old; j < cache.size(); ++j) cache[j] = kernel_.terms()[t].target(static_cast<Level>(j));
  }
  return cache[static_cast<std::size_t>(k)];
}

void Simulation::ensure_levels(Level k) {
  if (kernel_.is_table() || u_tree_.empty() || static_cast<std::size_t>(k) < u_tree_[0].size()) return;
  const std::size_t cap = level_capacity(k);
  for (std::size_t t = 0; t < u_tree_.size(); ++t) {
    u_tree_[t].resize(cap);
    if (!v_constant_[t]) v_tree_[t].resize(cap);
  }
  for (Level j = 0; j <= config_.max_level(); ++j) refresh_level(j);
}

void Simulation::refresh_level(Level k) {
  if (k < 0) return;
  const double n = static_cast<double>(config_.count(k));
  for (std::size_t t = 0; t < u_tree_.size(); ++t) {
    u_tree_[t].set(static_cast<std::size_t>(k), n * u(t, k));
    if (!v_constant_[t]) v_tree_[t].set(static_cast<std::size_t>(k), n * v(t, k));
  }
}

void Simulation::resync() {
  const auto hist = config_.histogram();
  if (kernel_.is_table()) {
    for (std::size_t j = 0; j < row_sum_.size(); ++j) {
      double s = 0.0;
      for (std::size_t l = 0; l < hist.size(); ++l) {
        if (hist[l] > 0) s += kernel_.rate(static_cast<Level>(j), static_cast<Level>(l)) * static_cast<double>(hist[l]);
      }
      row_sum_[j] = s;
    }
    return;
  }
  aggregates_ = recompute_aggregates();
  for (std::size_t t = 0; t < u_tree_.size(); ++t) {
    for (std::size_t k = 0; k < u_tree_[t].size(); ++k) {
      const double n = k < hist.size() ? static_cast<double>(hist[k]) : 0.0;
      u_tree_[t].set(k, n * u(t, static_cast<Level>(k)));
      if (!v_constant_[t]) v_tree_[t].set(k, n * v(t, static_cast<Level>(k)));
    }
    u_tree_[t].rebuild();
    if (!v_constant_[t]) v_tree_[t].rebuild();
  }
}

std::vector<TermAggregates> Simulation::recompute_aggregates() const {
  const auto hist = config_.histogram();
  const auto terms = kernel_.terms();
  std::vector<TermAggregates> out(terms.size());
  for (std::size_t t = 0; t < terms.size(); ++t) {
    for (std::size_t k = 0; k < hist.size(); ++k) {
      if (hist[k] == 0) continue;
      const double n = static_cast<double>(hist[k]);
      const double uk = terms[t].departure(static_cast<Level>(k));
      const double vk = terms[t].target(static_cast<Level>(k));
      out[t].U += n * uk;
      out[t].V += n * vk;
      out[t].D += n * uk * vk;
    }
  }
  return out;
}

double Simulation::total_rate() const {
  if (config_.particles() == 0) return 0.0;
  double s = 0.0;
  if (kernel_.is_table()) {
    const Level top = config_.max_level();
    for (Level k = 1; k <= top; ++k) {
      const auto n = config_.count(k);
      if (n > 0) s += static_cast<double>(n) * std::max(0.0, row_sum_[k] - kernel_.rate(k, k));
    }
  } else {
    for (const auto& a : aggregates_) s += a.U * a.V - a.D;
  }
  return std::max(0.0, s * inv_pairs_);
}

double Simulation::envelope_rate() const {
  if (kernel_.is_table()) return total_rate();
  double s = 0.0;
  for (const auto& a : aggregates_) s += a.U * a.V;
  return s * inv_pairs_;
}

Site Simulation::uniform_site_at(Level k) {
  return config_.site_at(k, rng_.below(static_cast<std::uint64_t>(config_.count(k))));
}

std::pair<Site, Site> Simulation::choose_separable() {
  const std::size_t T = u_tree_.size();
  const double L = static_cast<double>(config_.sites());
  for (;;) {
    ++proposals_;
    double env = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      const double vt = v_constant_[t] ? L * v(t, 0) : v_tree_[t].total();
      env += u_tree_[t].total() * vt;
    }
    double r = rng_.uniform() * env;
    std::size_t t = 0;
    for (; t + 1 < T; ++t) {
      const double vt = v_constant_[t] ? L * v(t, 0) : v_tree_[t].total();
      const double w = u_tree_[t].total() * vt;
      if (r < w) break;
      r -= w;
    }
    const auto& ut = u_tree_[t];
    const std::size_t k = ut.find(rng_.uniform() * ut.total());
    if (k >= ut.size() || ut.value(k) <= 0.0) continue;
    const Site x = uniform_site_at(static_cast<Level>(k));
    Site y;
    if (v_constant_[t]) {
      y = static_cast<Site>(rng_.below(config_.sites()));
    } else {
      const auto& vt = v_tree_[t];
      const std::size_t l = vt.find(rng_.uniform() * vt.total());
      if (l >= vt.size() || vt.value(l) <= 0.0) continue;
      y = uniform_site_at(static_cast<Level>(l));
    }
    if (x == y) continue;
    return {x, y};
  }
}

std::pair<Site, Site> Simulation::choose_table() {
  ++proposals_;
  const Level top = config_.max_level();
  double total = 0.0;
  for (Level k = 1; k <= top; ++k) {
    total += static_cast<double>(config_.count(k)) * std::max(0.0, row_sum_[k] - kernel_.rate(k, k));
  }
  double r = rng_.uniform() * total;
  Level k = 1;
  for (; k < top; ++k) {
    const double w = static_cast<double>(config_.count(k)) * std::max(0.0, row_sum_[k] - kernel_.rate(k, k));
    if (r < w) break;
    r -= w;
  }
  while (config_.count(k) == 0 && k > 1) --k;

  double row = 0.0;
  for (Level l = 0; l <= top; ++l) {
    row += kernel_.rate(k, l) * static_cast<double>(config_.count(l) - (l == k ? 1 : 0));
  }
  r = rng_.uniform() * row;
  Level l = 0;
  Level last_valid = 0;
  for (; l <= top; ++l) {
    const double w = kernel_.rate(k, l) * static_cast<double>(config_.count(l) - (l == k ? 1 : 0));
    if (w > 0.0) last_valid = l;
    if (w > 0.0 && r < w) break;
    r -= w;
  }
  if (l > top) l = last_valid;

  const Site x = uniform_site_at(k);
  Site y;
  if (l == k) {
    // Uniform over the other sites of the bucket.
    const auto n = static_cast<std::uint64_t>(config_.count(k));
    auto i = rng_.below(n - 1);
    y = config_.site_at(k, i);
    if (y == x) y = config_.site_at(k, n - 1);
  } else {
    y = uniform_site_at(l);
  }
  return {x, y};
}

JumpEvent Simulation::apply_jump() {
  const auto [x, y] = kernel_.is_table() ? choose_table() : choose_separable();
  const Level k = config_.occupation(x);
  const Level l = config_.occupation(y);
  ensure_levels(l + 1);
  if (kernel_.is_table()) {
    config_.move(x, y);
    for (std::size_t j = 0; j < row_sum_.size(); ++j) {
      const auto J = static_cast<Level>(j);
      row_sum_[j] += kernel_.rate(J, k - 1) - kernel_.rate(J, k) + kernel_.rate(J, l + 1) - kernel_.rate(J, l);
    }
  } else {
    for (std::size_t t = 0; t < aggregates_.size(); ++t) {
      auto& a = aggregates_[t];
      const double uk = u(t, k), uk1 = u(t, k - 1), ul = u(t, l), ul1 = u(t, l + 1);
      const double vk = v(t, k), vk1 = v(t, k - 1), vl = v(t, l), vl1 = v(t, l + 1);
      a.U += (uk1 - uk) + (ul1 - ul);
      a.V += (vk1 - vk) + (vl1 - vl);
      a.D += (uk1 * vk1 - uk * vk) + (ul1 * vl1 - ul * vl);
    }
    config_.move(x, y);
    refresh_level(k);
    refresh_level(k - 1);
    refresh_level(l);
    refresh_level(l + 1);
  }
  ++jumps_;
  if (jumps_ % kResyncInterval == 0) resync();
  return {0.0, x, y};
}

JumpEvent Simulation::step() {
  const double rate = total_rate();
  if (!(rate > 0.0)) {
    clock_ = kInf;
    return {kInf, 0, 0};
  }
  const double dt = rng_.exponential(rate);
  clock_ += dt;
  auto event = apply_jump();
  event.dt = dt;
  return event;
}

EmpiricalTrajectory Simulation::run_until(double horizon, std::span<const double> record_times,
                                          const RunOptions& options) {
  if (!(horizon >= clock_)) throw InvalidArgument("horizon lies before the current time");
  for (std::size_t i = 0; i < record_times.size(); ++i) {
    const double t = record_times[i];
    if (!(t >= clock_ && t <= horizon)) throw InvalidArgument("record time outside [now, horizon]");
    if (i > 0 && !(t > record_times[i - 1])) throw InvalidArgument("record times must be strictly increasing");
  }
  for (Site s : options.tracked_sites) {
    if (s >= config_.sites()) throw InvalidArgument("tracked site out of range");
  }

  EmpiricalTrajectory traj;
  traj.sites = config_.sites();
  traj.particles = config_.particles();
  const double L = static_cast<double>(config_.sites());
  const double m1 = static_cast<double>(config_.particles()) / L;
  auto record = [&](double t) {
    traj.times.push_back(t);
    traj.counts.push_back(config_.histogram());
    traj.m1.push_back(m1);
    traj.m2.push_back(static_cast<double>(config_.sum_of_squares()) / L);
    if (!options.tracked_sites.empty()) {
      std::vector<Level> occ;
      occ.reserve(options.tracked_sites.size());
      for (Site s : options.tracked_sites) occ.push_back(config_.occupation(s));
      traj.tracked.push_back(std::move(occ));
    }
  };

  std::size_t next = 0;
  std::uint64_t run_jumps = 0;
  for (;;) {
    const double rate = total_rate();
    const double t_next = rate > 0.0 ? clock_ + rng_.exponential(rate) : kInf;
    while (next < record_times.size() && record_times[next] < t_next) record(record_times[next++]);
    if (t_next > horizon) {
      clock_ = horizon;
      break;
    }
    if (run_jumps >= options.jump_cap) {
      traj.truncated = true;
      clock_ = t_next;
      break;
    }
    clock_ = t_next;
    apply_jump();
    ++run_jumps;
  }
  traj.jumps = run_jumps;
  traj.acceptance_rate = acceptance_rate();
  if (options.keep_final) {
    const auto occ = config_.occupations();
    traj.final_occupations.assign(occ.begin(), occ.end());
  }
  return traj;
}

std::vector<EmpiricalTrajectory> run_ensemble(const InitialSampler& initial, const RateKernel& kernel,
                                              const EnsembleOptions& options) {
  std::vector<EmpiricalTrajectory> out(options.replicas);
  std::atomic<std::size_t> cursor{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t r = cursor.fetch_add(1);
      if (r >= options.replicas) return;
      try {
        const std::uint64_t seed = derive_seed(options.master_seed, 2 * r + 1);
        Simulation sim(initial(derive_seed(options.master_seed, 2 * r)), kernel, seed);
        auto traj = sim.run_until(options.horizon, options.record_times, options.run);
        traj.seed = seed;
        traj.replica = r;
        out[r] = std::move(traj);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        cursor = options.replicas;
        return;
      }
    }
  };
  const std::size_t n = std::clamp<std::size_t>(options.threads, 1, std::max<std::size_t>(1, options.replicas));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace misanthrope
