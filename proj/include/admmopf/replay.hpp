#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "admmopf/rng.hpp"

namespace admmopf {

// One per-constraint experience. The category is implied by which buffer the
// transition lives in; the reward is the shared per-iteration scalar.
struct Transition {
  Eigen::VectorXd s;
  int action = 0;
  double reward = 0;
  Eigen::VectorXd s_next;
  bool done = false;
};

// Proportional prioritized replay over a sum tree. Raw priorities are
// |TD error| + eps_priority; sampling probability is proportional to
// priority^alpha. FIFO eviction at capacity; new items enter at the maximum
// raw priority seen so far.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, double alpha, double eps_priority);

  void push(Transition t);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t i) const { return items_[i]; }

  struct Batch {
    std::vector<std::size_t> indices;
    Eigen::VectorXd weights;  // importance weights, normalized by the batch max
  };
  Batch sample(std::size_t n, double beta, SplitMix64& rng) const;

  void update_priority(std::size_t index, double td_abs);

  double stored_weight(std::size_t index) const;  // priority^alpha in the tree
  double total_weight() const { return tree_[1]; }

 private:
  void set_weight(std::size_t index, double w);

  std::size_t capacity_;
  double alpha_, eps_;
  double max_raw_priority_ = 1.0;
  std::size_t size_ = 0, next_ = 0;
  std::size_t leaves_;  // power of two >= capacity
  std::vector<double> tree_;
  std::vector<Transition> items_;
};

}  // namespace admmopf
