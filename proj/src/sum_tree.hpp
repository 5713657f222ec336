#pragma once

#include <cstddef>
#include <vector>

namespace brwre {

// Complete binary tree of partial sums over a growable array of nonnegative
// weights. set/push/pop and sampling are O(log capacity).
class SumTree {
public:
  std::size_t size() const { return size_; }
  double total() const { return tree_.empty() ? 0.0 : tree_[1]; }
  double weight(std::size_t i) const { return tree_[leaves_ + i]; }

  void clear() {
    tree_.assign(tree_.size(), 0.0);
    size_ = 0;
  }

  void push(double w) {
    if (size_ == leaves_) grow();
    set(size_++, w);
  }

  // Removes the last leaf.
  void pop() {
    set(size_ - 1, 0.0);
    --size_;
  }

  void set(std::size_t i, double w) {
    std::size_t node = leaves_ + i;
    const double delta = w - tree_[node];
    tree_[node] = w;
    for (node >>= 1; node >= 1; node >>= 1) tree_[node] += delta;
  }

  // Leaf index whose cumulative interval contains u * total(), u in [0,1).
  std::size_t find(double u) const {
    double target = u * total();
    std::size_t node = 1;
    while (node < leaves_) {
      const double left = tree_[2 * node];
      if (target < left || tree_[2 * node + 1] <= 0.0) {
        node = 2 * node;
      } else {
        target -= left;
        node = 2 * node + 1;
      }
    }
    std::size_t i = node - leaves_;
    return i < size_ ? i : size_ - 1;
  }

  // Rebuild internal nodes from leaves (removes accumulated rounding drift).
  void rebuild() {
    for (std::size_t node = leaves_ - 1; node >= 1; --node) tree_[node] = tree_[2 * node] + tree_[2 * node + 1];
  }

private:
  void grow() {
    const std::size_t old = leaves_;
    leaves_ = leaves_ == 0 ? 64 : 2 * leaves_;
    std::vector<double> next(2 * leaves_, 0.0);
    for (std::size_t i = 0; i < old; ++i) next[leaves_ + i] = tree_[old + i];
    tree_ = std::move(next);
    rebuild();
  }

  std::vector<double> tree_;
  std::size_t leaves_ = 0;
  std::size_t size_ = 0;
};

}  // namespace brwre
