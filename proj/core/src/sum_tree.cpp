#include "wmft/sum_tree.hpp"

#include <stdexcept>

namespace wmft {

SumTree::SumTree(std::size_t capacity) {
  capacity_ = 1;
  while (capacity_ < capacity) capacity_ *= 2;
  nodes_.assign(2 * capacity_, 0.0);
}

void SumTree::grow(std::size_t min_capacity) {
  std::size_t cap = capacity_;
  while (cap < min_capacity) cap *= 2;
  std::vector<double> leaves(nodes_.begin() + static_cast<std::ptrdiff_t>(capacity_), nodes_.end());
  capacity_ = cap;
  nodes_.assign(2 * capacity_, 0.0);
  for (std::size_t i = 0; i < leaves.size(); ++i) nodes_[capacity_ + i] = leaves[i];
  for (std::size_t i = capacity_ - 1; i >= 1; --i) nodes_[i] = nodes_[2 * i] + nodes_[2 * i + 1];
}

void SumTree::set(std::size_t slot, double weight) {
  if (weight < 0.0) throw std::invalid_argument("SumTree weights must be non-negative");
  if (slot >= capacity_) grow(slot + 1);
  std::size_t i = capacity_ + slot;
  nodes_[i] = weight;
  // Recompute parents from children so repeated updates do not accumulate drift.
  for (i /= 2; i >= 1; i /= 2) nodes_[i] = nodes_[2 * i] + nodes_[2 * i + 1];
}

double SumTree::get(std::size_t slot) const {
  return slot < capacity_ ? nodes_[capacity_ + slot] : 0.0;
}

std::size_t SumTree::find(double mass) const {
  std::size_t i = 1;
  while (i < capacity_) {
    const double left = nodes_[2 * i];
    if (mass < left || nodes_[2 * i + 1] <= 0.0) {
      i = 2 * i;
    } else {
      mass -= left;
      i = 2 * i + 1;
    }
  }
  std::size_t slot = i - capacity_;
  // Rounding can land on an empty leaf at the far right; walk back to a live one.
  while (nodes_[capacity_ + slot] <= 0.0 && slot > 0) --slot;
  return slot;
}

}  // namespace wmft
