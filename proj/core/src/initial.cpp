#include "misanthrope/initial.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "misanthrope/errors.hpp"
#include "misanthrope/io.hpp"

namespace misanthrope {

namespace {

constexpr double kTailCut = 1e-17;

// Splits on commas that are not inside parentheses.
std::vector<std::string> split_top_level(std::string_view text) {
  std::vector<std::string> parts;
  int depth = 0;
  std::string current;
  for (char c : text) {
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if (c == ',' && depth == 0) {
      parts.emplace_back(trim(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  parts.emplace_back(trim(current));
  return parts;
}

double parse_number(std::string_view text, const std::string& field) {
  const auto v = parse_double(text);
  if (!v) throw InvalidArgument(field + ": expected a number, got '" + std::string(text) + "'");
  return *v;
}

Level parse_level(std::string_view text, const std::string& field) {
  const auto v = parse_integer(text);
  if (!v || *v < 0) throw InvalidArgument(field + ": expected a non-negative integer, got '" + std::string(text) + "'");
  return static_cast<Level>(*v);
}

}  // namespace

LevelDistribution::LevelDistribution(std::vector<double> p, bool finite, std::string spec)
    : p_(std::move(p)), finite_(finite), spec_(std::move(spec)) {
  while (p_.size() > 1 && p_.back() == 0.0) p_.pop_back();
  const double total = std::accumulate(p_.begin(), p_.end(), 0.0);
  if (!(total > 0.0)) throw InvalidArgument("distribution has no mass");
  cdf_.resize(p_.size());
  double c = 0.0;
  for (std::size_t k = 0; k < p_.size(); ++k) {
    p_[k] /= total;
    c += p_[k];
    cdf_[k] = c;
    m1_ += static_cast<double>(k) * p_[k];
    m2_ += static_cast<double>(k) * static_cast<double>(k) * p_[k];
  }
  cdf_.back() = 1.0;
}

LevelDistribution LevelDistribution::poisson(double mean) {
  if (!(mean >= 0.0) || !std::isfinite(mean)) throw InvalidArgument("poisson mean must be finite and >= 0");
  if (mean == 0.0) return LevelDistribution({1.0}, false, "poisson(0)");
  std::vector<double> p;
  const double log_mean = std::log(mean);
  for (Level k = 0;; ++k) {
    const double kd = static_cast<double>(k);
    const double lp = -mean + kd * log_mean - std::lgamma(kd + 1.0);
    p.push_back(std::exp(lp));
    if (kd > mean && p.back() < kTailCut) break;
  }
  return LevelDistribution(std::move(p), false, "poisson(" + format_double(mean) + ")");
}

LevelDistribution LevelDistribution::delta(Level k) {
  if (k < 0) throw InvalidArgument("delta level must be >= 0");
  std::vector<double> p(static_cast<std::size_t>(k) + 1, 0.0);
  p.back() = 1.0;
  return LevelDistribution(std::move(p), true, "delta(" + std::to_string(k) + ")");
}

LevelDistribution LevelDistribution::geometric(double q) {
  if (!(q >= 0.0 && q < 1.0)) throw InvalidArgument("geometric ratio must lie in [0, 1)");
  std::vector<double> p;
  double x = 1.0 - q;
  do {
    p.push_back(x);
    x *= q;
  } while (x >= kTailCut);
  return LevelDistribution(std::move(p), false, "geometric(" + format_double(q) + ")");
}

LevelDistribution LevelDistribution::uniform(Level lo, Level hi) {
  if (lo < 0 || hi < lo) throw InvalidArgument("uniform needs 0 <= lo <= hi");
  std::vector<double> p(static_cast<std::size_t>(hi) + 1, 0.0);
  for (Level k = lo; k <= hi; ++k) p[static_cast<std::size_t>(k)] = 1.0;
  return LevelDistribution(std::move(p), true, "uniform(" + std::to_string(lo) + "," + std::to_string(hi) + ")");
}

LevelDistribution LevelDistribution::table(std::vector<double> probabilities) {
  if (probabilities.empty()) throw InvalidArgument("empty probability table");
  for (double x : probabilities) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw InvalidArgument("probabilities must be finite and >= 0");
  }
  return LevelDistribution(std::move(probabilities), true, "table");
}

LevelDistribution LevelDistribution::parse(std::string_view spec) {
  spec = trim(spec);
  const auto open = spec.find('(');
  if (open == std::string_view::npos || spec.back() != ')') {
    throw InvalidArgument("marginal: expected name(args), got '" + std::string(spec) + "'");
  }
  const std::string name(trim(spec.substr(0, open)));
  const auto args = split_top_level(spec.substr(open + 1, spec.size() - open - 2));
  auto want = [&](std::size_t n) {
    if (args.size() != n || (n > 0 && args[0].empty())) {
      throw InvalidArgument("marginal " + name + ": expected " + std::to_string(n) + " argument(s)");
    }
  };
  if (name == "poisson") {
    want(1);
    return poisson(parse_number(args[0], "poisson mean"));
  }
  if (name == "delta") {
    want(1);
    return delta(parse_level(args[0], "delta level"));
  }
  if (name == "geometric") {
    want(1);
    return geometric(parse_number(args[0], "geometric ratio"));
  }
  if (name == "uniform") {
    want(2);
    return uniform(parse_level(args[0], "uniform lo"), parse_level(args[1], "uniform hi"));
  }
  throw InvalidArgument("marginal: unknown distribution '" + name + "'");
}

Level LevelDistribution::sample(Rng& rng) const {
  const double u = rng.uniform();
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  return static_cast<Level>(std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), p_.size() - 1));
}

MomentBounds MomentBounds::defaults_for(const LevelDistribution& marginal) {
  return {2.0 * marginal.mean(), 4.0 * marginal.second_moment()};
}

bool MomentBounds::contains(const Configuration& config) const {
  const double L = static_cast<double>(config.sites());
  return static_cast<double>(config.particles()) <= alpha1 * L &&
         static_cast<double>(config.sum_of_squares()) <= alpha2 * L;
}

ProductSample product_sample(std::size_t L, const LevelDistribution& marginal, std::uint64_t seed,
                             std::optional<MomentBounds> bounds) {
  Rng rng(seed);
  std::vector<Level> occ(L);
  for (auto& x : occ) x = marginal.sample(rng);
  ProductSample out{Configuration(std::move(occ)), bounds.value_or(MomentBounds::defaults_for(marginal)), true};
  out.in_bounds = out.bounds.contains(out.configuration);
  return out;
}

Configuration multinomial_sample(std::size_t L, Level N, std::uint64_t seed) {
  if (L < 1) throw InvalidArgument("multinomial sample needs L >= 1");
  if (N < 0) throw InvalidArgument("multinomial N must be >= 0");
  Rng rng(seed);
  std::vector<Level> occ(L, 0);
  for (Level i = 0; i < N; ++i) ++occ[rng.below(L)];
  return Configuration(std::move(occ));
}

ConditionedSample conditioned_product_sample(std::size_t L, Level N, const LevelDistribution& marginal,
                                             double alpha2, std::uint64_t seed, std::uint64_t max_attempts) {
  if (L < 1) throw InvalidArgument("conditioned sample needs L >= 1");
  if (N < 0) throw InvalidArgument("conditioned N must be >= 0");
  const double Ld = static_cast<double>(L);
  if (marginal.finite_support() && static_cast<double>(marginal.max_level()) * Ld < static_cast<double>(N)) {
    throw InvalidArgument("conditioned sample impossible: max level " + std::to_string(marginal.max_level()) +
                          " times L = " + std::to_string(L) + " is below N = " + std::to_string(N));
  }
  // sum eta^2 >= N^2 / L for any configuration with sum eta = N.
  const double min_squares = static_cast<double>(N) * static_cast<double>(N) / Ld;
  if (min_squares > alpha2 * Ld * (1.0 + 1e-12)) {
    throw InvalidArgument("conditioned sample impossible: alpha2 = " + format_double(alpha2) +
                          " is below (N/L)^2");
  }
  Rng rng(seed);
  std::vector<Level> occ(L);
  const double max_squares = alpha2 * Ld;
  for (std::uint64_t attempt = 1; attempt <= max_attempts; ++attempt) {
    Level sum = 0;
    double squares = 0.0;
    bool ok = true;
    for (std::size_t x = 0; x < L; ++x) {
      occ[x] = marginal.sample(rng);
      sum += occ[x];
      squares += static_cast<double>(occ[x]) * static_cast<double>(occ[x]);
      if (sum > N || squares > max_squares) {
        ok = false;
        break;
      }
    }
    if (ok && sum == N) return {Configuration(occ), attempt};
  }
  throw SamplingExhausted("conditioned sample: no acceptance in " + std::to_string(max_attempts) + " attempts", 0.0);
}

Configuration deterministic_profile(const std::map<Level, std::int64_t>& counts, std::size_t L) {
  std::vector<Level> occ;
  occ.reserve(L);
  std::int64_t total = 0;
  for (const auto& [k, n] : counts) {
    if (k < 0 || n < 0) throw InvalidArgument("profile levels and counts must be >= 0");
    total += n;
    if (total > static_cast<std::int64_t>(L)) break;
    occ.insert(occ.end(), static_cast<std::size_t>(n), k);
  }
  if (total != static_cast<std::int64_t>(L)) {
    throw InvalidArgument("profile counts sum to " + std::to_string(total) + ", expected L = " + std::to_string(L));
  }
  return Configuration(std::move(occ));
}

InitialSpec InitialSpec::parse(std::string_view text, const std::filesystem::path& base_dir) {
  InitialSpec spec;
  spec.text_ = std::string(trim(text));
  const auto colon = spec.text_.find(':');
  if (colon == std::string::npos) {
    throw InvalidArgument("initial: expected mode:args, got '" + spec.text_ + "'");
  }
  const std::string mode = spec.text_.substr(0, colon);
  const std::string_view args = std::string_view(spec.text_).substr(colon + 1);
  if (mode == "product") {
    spec.mode_ = Mode::Product;
    spec.marginal_ = LevelDistribution::parse(args);
  } else if (mode == "multinomial") {
    spec.mode_ = Mode::Multinomial;
    for (const auto& [key, value] : parse_key_values(args)) {
      if (key == "N") {
        spec.particles_ = parse_level(value, "initial N");
      } else if (key == "rho") {
        spec.rho_ = parse_number(value, "initial rho");
        if (!(*spec.rho_ >= 0.0)) throw InvalidArgument("initial rho: must be >= 0");
      } else {
        throw InvalidArgument("initial: unknown multinomial key '" + key + "'");
      }
    }
    if (spec.particles_.has_value() == spec.rho_.has_value()) {
      throw InvalidArgument("initial: multinomial needs exactly one of N= or rho=");
    }
  } else if (mode == "profile") {
    spec.mode_ = Mode::Profile;
    const auto a = trim(args);
    if (a.empty() || a.front() != '@') throw InvalidArgument("initial: profile expects @path");
    std::filesystem::path path(std::string(a.substr(1)));
    if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
    for (const auto& row : read_csv_rows(path, "k,count")) {
      if (row.size() != 2) throw InvalidArgument("'" + path.string() + "': each row needs k,count");
      const Level k = parse_level(row[0], "profile k");
      const auto n = parse_integer(row[1]);
      if (!n || *n < 0) throw InvalidArgument("'" + path.string() + "': malformed count");
      spec.profile_[k] += *n;
    }
    if (spec.profile_.empty()) throw InvalidArgument("'" + path.string() + "': empty profile");
  } else if (mode == "conditioned") {
    spec.mode_ = Mode::Conditioned;
    const auto parts = split_top_level(args);
    spec.marginal_ = LevelDistribution::parse(parts.at(0));
    for (std::size_t i = 1; i < parts.size(); ++i) {
      for (const auto& [key, value] : parse_key_values(parts[i])) {
        if (key == "N") {
          spec.particles_ = parse_level(value, "initial N");
        } else if (key == "alpha2") {
          spec.alpha2_ = parse_number(value, "initial alpha2");
          if (!(*spec.alpha2_ > 0.0)) throw InvalidArgument("initial alpha2: must be > 0");
        } else {
          throw InvalidArgument("initial: unknown conditioned key '" + key + "'");
        }
      }
    }
    if (!spec.particles_) throw InvalidArgument("initial: conditioned needs N=");
    if (!spec.alpha2_) spec.alpha2_ = 4.0 * spec.marginal_->second_moment();
  } else {
    throw InvalidArgument("initial: unknown mode '" + mode + "'");
  }
  return spec;
}

void InitialSpec::check_size(std::size_t L) const {
  if (mode_ == Mode::Profile) {
    std::int64_t total = 0;
    for (const auto& [k, n] : profile_) total += n;
    if (total != static_cast<std::int64_t>(L)) {
      throw InvalidArgument("initial: profile has " + std::to_string(total) + " sites but L = " + std::to_string(L));
    }
  }
}

Configuration InitialSpec::sample(std::size_t L, std::uint64_t seed) const {
  switch (mode_) {
    case Mode::Product:
      return product_sample(L, *marginal_, seed).configuration;
    case Mode::Multinomial: {
      const Level N = particles_ ? *particles_
                                 : static_cast<Level>(std::floor(*rho_ * static_cast<double>(L) + 1e-9));
      return multinomial_sample(L, N, seed);
    }
    case Mode::Profile:
      return deterministic_profile(profile_, L);
    case Mode::Conditioned:
      return conditioned_product_sample(L, *particles_, *marginal_, *alpha2_, seed).configuration;
  }
  throw Error("unreachable initial mode");
}

double InitialSpec::density(std::size_t L) const {
  const double Ld = static_cast<double>(L);
  switch (mode_) {
    case Mode::Product:
      return marginal_->mean();
    case Mode::Multinomial:
      return particles_ ? static_cast<double>(*particles_) / Ld
                        : std::floor(*rho_ * Ld + 1e-9) / Ld;
    case Mode::Profile: {
      double s = 0.0;
      for (const auto& [k, n] : profile_) s += static_cast<double>(k) * static_cast<double>(n);
      return s / Ld;
    }
    case Mode::Conditioned:
      return static_cast<double>(*particles_) / Ld;
  }
  return 0.0;
}

std::vector<double> InitialSpec::meanfield_initial(std::size_t L) const {
  switch (mode_) {
    case Mode::Product:
    case Mode::Conditioned: {
      const auto p = marginal_->probabilities();
      return {p.begin(), p.end()};
    }
    case Mode::Multinomial: {
      const auto d = LevelDistribution::poisson(density(L));
      return {d.probabilities().begin(), d.probabilities().end()};
    }
    case Mode::Profile: {
      std::vector<double> f(static_cast<std::size_t>(profile_.rbegin()->first) + 1, 0.0);
      double total = 0.0;
      for (const auto& [k, n] : profile_) total += static_cast<double>(n);
      for (const auto& [k, n] : profile_) f[static_cast<std::size_t>(k)] = static_cast<double>(n) / total;
      return f;
    }
  }
  return {1.0};
}

std::vector<double> InitialSpec::meanfield_limit() const {
  if (size_dependent()) throw InvalidArgument("initial: multinomial with fixed N needs a system size");
  if (mode_ == Mode::Multinomial) {
    const auto d = LevelDistribution::poisson(*rho_);
    return {d.probabilities().begin(), d.probabilities().end()};
  }
  return meanfield_initial(1);
}

MomentBounds InitialSpec::bounds(std::size_t L) const {
  const auto f = meanfield_initial(L);
  double m2 = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) m2 += static_cast<double>(k * k) * f[k];
  return {2.0 * density(L), 4.0 * m2};
}

}  // namespace misanthrope
