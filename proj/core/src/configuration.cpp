#include "misanthrope/configuration.hpp"

#include <limits>
#include <string>

#include "misanthrope/errors.hpp"

namespace misanthrope {

Configuration::Configuration(std::vector<Level> occupations) : occupation_(std::move(occupations)) {
  if (occupation_.size() > std::numeric_limits<Site>::max()) throw InvalidArgument("too many sites");
  position_.resize(occupation_.size());
  for (std::size_t x = 0; x < occupation_.size(); ++x) {
    const Level k = occupation_[x];
    if (k < 0) throw InvalidArgument("negative occupation at site " + std::to_string(x));
    insert(static_cast<Site>(x), k);
    particles_ += k;
    sum_squares_ += k * k;
  }
}

void Configuration::insert(Site x, Level k) {
  const auto level = static_cast<std::size_t>(k);
  if (level >= buckets_.size()) buckets_.resize(level + 1);
  auto& bucket = buckets_[level];
  if (bucket.empty()) ++occupied_levels_;
  position_[x] = static_cast<std::uint32_t>(bucket.size());
  bucket.push_back(x);
}

void Configuration::erase(Site x, Level k) {
  auto& bucket = buckets_[static_cast<std::size_t>(k)];
  const auto pos = position_[x];
  const Site last = bucket.back();
  bucket[pos] = last;
  position_[last] = pos;
  bucket.pop_back();
  if (bucket.empty()) --occupied_levels_;
}

void Configuration::move(Site x, Site y) {
  const Level k = occupation_[x];
  const Level l = occupation_[y];
  erase(x, k);
  insert(x, k - 1);
  erase(y, l);
  insert(y, l + 1);
  occupation_[x] = k - 1;
  occupation_[y] = l + 1;
  // (k-1)^2 - k^2 + (l+1)^2 - l^2
  sum_squares_ += 2 * (l - k) + 2;
}

Level Configuration::max_level() const noexcept {
  for (auto k = static_cast<Level>(buckets_.size()) - 1; k > 0; --k) {
    if (!buckets_[static_cast<std::size_t>(k)].empty()) return k;
  }
  return 0;
}

std::vector<std::int64_t> Configuration::histogram() const {
  std::vector<std::int64_t> counts(static_cast<std::size_t>(max_level()) + 1, 0);
  for (std::size_t k = 0; k < counts.size(); ++k) counts[k] = count(static_cast<Level>(k));
  return counts;
}

bool Configuration::consistent() const {
  Level n = 0;
  std::int64_t sq = 0;
  std::size_t in_buckets = 0;
  std::size_t occupied = 0;
  for (std::size_t k = 0; k < buckets_.size(); ++k) {
    if (!buckets_[k].empty()) ++occupied;
    for (std::size_t i = 0; i < buckets_[k].size(); ++i) {
      const Site x = buckets_[k][i];
      if (occupation_[x] != static_cast<Level>(k) || position_[x] != i) return false;
      ++in_buckets;
    }
  }
  for (Level k : occupation_) {
    n += k;
    sq += k * k;
  }
  return in_buckets == occupation_.size() && occupied == occupied_levels_ && n == particles_ && sq == sum_squares_;
}

std::vector<double> empirical_measure(const Configuration& config) {
  const auto counts = config.histogram();
  std::vector<double> f(counts.size());
  const double inv = config.sites() ? 1.0 / static_cast<double>(config.sites()) : 0.0;
  for (std::size_t k = 0; k < counts.size(); ++k) f[k] = static_cast<double>(counts[k]) * inv;
  return f;
}

}  // namespace misanthrope
