#pragma once

#include <cstddef>
#include <vector>

namespace wmft {

// Binary tree of partial sums over leaf weights. Leaves are addressed by slot;
// the tree grows by doubling when a slot beyond capacity is written.
class SumTree {
 public:
  explicit SumTree(std::size_t capacity = 1);

  void set(std::size_t slot, double weight);
  double get(std::size_t slot) const;
  double total() const { return nodes_[1]; }
  std::size_t capacity() const { return capacity_; }

  // Slot whose cumulative weight interval contains `mass` in [0, total()).
  // Zero-weight slots are never returned.
  std::size_t find(double mass) const;

 private:
  void grow(std::size_t min_capacity);

  std::size_t capacity_ = 1;
  std::vector<double> nodes_;  // 1-based heap layout, leaves at [capacity_, 2 * capacity_)
};

}  // namespace wmft
