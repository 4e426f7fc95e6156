#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "misanthrope/configuration.hpp"
#include "misanthrope/rng.hpp"

namespace misanthrope {

// Single-site law on levels, stored as a probability table truncated where
// the remaining mass is below 1e-17 and renormalized.
class LevelDistribution {
 public:
  static LevelDistribution poisson(double mean);
  static LevelDistribution delta(Level k);
  // P(k) = (1-q) q^k.
  static LevelDistribution geometric(double q);
  // Uniform on {lo, ..., hi}.
  static LevelDistribution uniform(Level lo, Level hi);
  static LevelDistribution table(std::vector<double> probabilities);

  // "poisson(0.5)", "delta(2)", "geometric(0.5)", "uniform(0,3)".
  static LevelDistribution parse(std::string_view spec);

  std::span<const double> probabilities() const noexcept { return p_; }
  Level max_level() const noexcept { return static_cast<Level>(p_.size()) - 1; }
  bool finite_support() const noexcept { return finite_; }
  double mean() const noexcept { return m1_; }
  double second_moment() const noexcept { return m2_; }
  const std::string& spec() const noexcept { return spec_; }

  // Inverse-CDF draw.
  Level sample(Rng& rng) const;

 private:
  LevelDistribution(std::vector<double> p, bool finite, std::string spec);

  std::vector<double> p_;
  std::vector<double> cdf_;
  bool finite_ = true;
  double m1_ = 0.0;
  double m2_ = 0.0;
  std::string spec_;
};

// Omega_alpha: (1/L) sum eta_x <= alpha1 and (1/L) sum eta_x^2 <= alpha2.
struct MomentBounds {
  double alpha1 = 0.0;
  double alpha2 = 0.0;

  // alpha1 = 2 rho, alpha2 = 4 m2(0) of the marginal.
  static MomentBounds defaults_for(const LevelDistribution& marginal);
  bool contains(const Configuration& config) const;
};

struct ProductSample {
  Configuration configuration;
  MomentBounds bounds;
  bool in_bounds = true;
};

// i.i.d. occupations; Omega_alpha membership is reported, not enforced.
ProductSample product_sample(std::size_t L, const LevelDistribution& marginal, std::uint64_t seed,
                             std::optional<MomentBounds> bounds = std::nullopt);

// N particles placed independently and uniformly.
Configuration multinomial_sample(std::size_t L, Level N, std::uint64_t seed);

struct ConditionedSample {
  Configuration configuration;
  std::uint64_t attempts = 0;
};

// Product configuration conditioned on sum eta = N and sum eta^2 <= L alpha2,
// by rejection. Throws SamplingExhausted after max_attempts and
// InvalidArgument when the event is impossible.
ConditionedSample conditioned_product_sample(std::size_t L, Level N, const LevelDistribution& marginal,
                                             double alpha2, std::uint64_t seed,
                                             std::uint64_t max_attempts = 10'000'000);

// counts[k] sites at level k, filled in increasing level order.
Configuration deterministic_profile(const std::map<Level, std::int64_t>& counts, std::size_t L);

// Parsed initial-condition string:
//   product:poisson(0.5)
//   multinomial:N=120 | multinomial:rho=0.3
//   profile:@hist.csv            (CSV "k,count")
//   conditioned:poisson(0.5),N=120,alpha2=3
class InitialSpec {
 public:
  enum class Mode { Product, Multinomial, Profile, Conditioned };

  static InitialSpec parse(std::string_view text, const std::filesystem::path& base_dir = {});

  Mode mode() const noexcept { return mode_; }
  const std::string& text() const noexcept { return text_; }

  Configuration sample(std::size_t L, std::uint64_t seed) const;

  // Limit law f(0) for the mean-field equation at system size L: the marginal
  // for product/conditioned, Poisson(N/L) for multinomial, the profile histogram.
  std::vector<double> meanfield_initial(std::size_t L) const;
  // The L -> infinity law; InvalidArgument for multinomial with fixed N.
  std::vector<double> meanfield_limit() const;
  // True when the initial density depends on L (multinomial with fixed N).
  bool size_dependent() const noexcept { return mode_ == Mode::Multinomial && particles_.has_value(); }

  // rho = m1 of the initial law at system size L.
  double density(std::size_t L) const;

  // Bounds used for the Omega_alpha report at size L.
  MomentBounds bounds(std::size_t L) const;

  // Throws InvalidArgument if this spec cannot produce L sites.
  void check_size(std::size_t L) const;

 private:
  Mode mode_ = Mode::Product;
  std::string text_;
  std::optional<LevelDistribution> marginal_;
  std::optional<Level> particles_;
  std::optional<double> rho_;
  std::optional<double> alpha2_;
  std::map<Level, std::int64_t> profile_;
};

}  // namespace misanthrope
