#pragma once

#include <bit>
#include <cassert>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace gpa {

/// Growable Fenwick tree over non-negative integer weights. Supports
/// append, point increment and sampling an index proportionally to its
/// weight, all in O(log n).
class FenwickTree {
 public:
  std::size_t size() const { return tree_.size(); }
  std::int64_t total() const { return total_; }

  void push_back(std::int64_t weight) {
    const std::size_t i = tree_.size() + 1;  // 1-based slot of the new element
    const std::size_t low = i & (~i + 1);
    // Node i covers (i - low, i]; the new element plus the already-stored (i - low, i - 1].
    tree_.push_back(weight + prefix(i - 1) - prefix(i - low));
    total_ += weight;
  }

  void add(std::size_t index, std::int64_t delta) {
    for (std::size_t i = index + 1; i <= tree_.size(); i += i & (~i + 1)) tree_[i - 1] += delta;
    total_ += delta;
  }

  /// Sum of weights [0, count).
  std::int64_t prefix(std::size_t count) const {
    std::int64_t s = 0;
    for (std::size_t i = count; i > 0; i -= i & (~i + 1)) s += tree_[i - 1];
    return s;
  }

  std::int64_t weight(std::size_t index) const { return prefix(index + 1) - prefix(index); }

  /// Smallest index whose inclusive prefix sum exceeds target, 0 <= target < total().
  std::size_t find(std::int64_t target) const {
    assert(target >= 0 && target < total_);
    std::size_t pos = 0;
    for (std::size_t step = std::bit_floor(tree_.size()); step > 0; step >>= 1) {
      const std::size_t next = pos + step;
      if (next <= tree_.size() && tree_[next - 1] <= target) {
        pos = next;
        target -= tree_[next - 1];
      }
    }
    return pos;
  }

 private:
  std::vector<std::int64_t> tree_;
  std::int64_t total_ = 0;
};

}  // namespace gpa
