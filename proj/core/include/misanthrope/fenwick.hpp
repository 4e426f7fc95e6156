#pragma once

#include <cstddef>
#include <vector>

namespace misanthrope {

// Binary indexed tree over non-negative weights with prefix-sum descent.
// Leaf values are stored exactly; internal sums drift with roundoff and are
// refreshed by rebuild().
class Fenwick {
 public:
  Fenwick() = default;
  explicit Fenwick(std::size_t n) { resize(n); }

  std::size_t size() const noexcept { return values_.size(); }

  // Clears all weights.
  void resize(std::size_t n) {
    values_.assign(n, 0.0);
    tree_.assign(n + 1, 0.0);
    top_ = 1;
    while (top_ * 2 <= n) top_ *= 2;
  }

  double value(std::size_t i) const noexcept { return values_[i]; }

  void set(std::size_t i, double w) {
    const double delta = w - values_[i];
    if (delta == 0.0) return;
    values_[i] = w;
    for (std::size_t j = i + 1; j < tree_.size(); j += j & (~j + 1)) tree_[j] += delta;
  }

  // Recomputes internal sums from the leaves in O(n).
  void rebuild() {
    for (std::size_t j = 1; j < tree_.size(); ++j) tree_[j] = values_[j - 1];
    for (std::size_t j = 1; j < tree_.size(); ++j) {
      const std::size_t parent = j + (j & (~j + 1));
      if (parent < tree_.size()) tree_[parent] += tree_[j];
    }
  }

  double total() const noexcept {
    double s = 0.0;
    for (std::size_t j = values_.size(); j > 0; j -= j & (~j + 1)) s += tree_[j];
    return s;
  }

  // Smallest i with prefix(i) > target, or size() when target >= total.
  std::size_t find(double target) const noexcept {
    std::size_t pos = 0;
    for (std::size_t step = top_; step > 0; step >>= 1) {
      const std::size_t next = pos + step;
      if (next < tree_.size() && tree_[next] <= target) {
        pos = next;
        target -= tree_[next];
      }
    }
    return pos;
  }

 private:
  std::vector<double> values_;
  std::vector<double> tree_;
  std::size_t top_ = 1;
};

}  // namespace misanthrope
