#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "misanthrope/kernels.hpp"

namespace misanthrope {

using Site = std::uint32_t;

// Site occupations with a synchronized level histogram. Sites at the same
// level are kept in a bucket so a uniform site of a given level and a move
// between levels are both O(1).
class Configuration {
 public:
  Configuration() = default;
  explicit Configuration(std::vector<Level> occupations);

  std::size_t sites() const noexcept { return occupation_.size(); }
  Level particles() const noexcept { return particles_; }
  Level occupation(Site x) const { return occupation_.at(x); }
  std::span<const Level> occupations() const noexcept { return occupation_; }

  // N_k for k = 0..max_level().
  std::int64_t count(Level k) const noexcept {
    return k >= 0 && k < static_cast<Level>(buckets_.size()) ? static_cast<std::int64_t>(buckets_[k].size()) : 0;
  }
  Level max_level() const noexcept;
  std::vector<std::int64_t> histogram() const;
  std::size_t occupied_levels() const noexcept { return occupied_levels_; }

  // sum_x eta_x^2, exact.
  std::int64_t sum_of_squares() const noexcept { return sum_squares_; }

  // The i-th site of the bucket at level k (0 <= i < count(k)).
  Site site_at(Level k, std::size_t i) const { return buckets_[static_cast<std::size_t>(k)][i]; }

  // Moves one particle from x to y; x must be occupied and x != y.
  void move(Site x, Site y);

  // Buckets agree with occupations and the cached totals.
  bool consistent() const;

 private:
  void insert(Site x, Level k);
  void erase(Site x, Level k);

  std::vector<Level> occupation_;
  std::vector<std::uint32_t> position_;  // index of each site inside its bucket
  std::vector<std::vector<Site>> buckets_;
  std::size_t occupied_levels_ = 0;
  Level particles_ = 0;
  std::int64_t sum_squares_ = 0;
};

// F_k = N_k / L, k = 0..max level.
std::vector<double> empirical_measure(const Configuration& config);

}  // namespace misanthrope
