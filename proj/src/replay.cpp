#include "admmopf/replay.hpp"

#include <cmath>
#include <stdexcept>

namespace admmopf {

ReplayBuffer::ReplayBuffer(std::size_t capacity, double alpha,
                           double eps_priority)
    : capacity_(capacity), alpha_(alpha), eps_(eps_priority) {
  leaves_ = 1;
  while (leaves_ < capacity_) leaves_ *= 2;
  tree_.assign(2 * leaves_, 0.0);
  items_.resize(capacity_);
}

void ReplayBuffer::set_weight(std::size_t index, double w) {
  std::size_t node = leaves_ + index;
  tree_[node] = w;
  while (node > 1) {
    node /= 2;
    tree_[node] = tree_[2 * node] + tree_[2 * node + 1];
  }
}

void ReplayBuffer::push(Transition t) {
  const std::size_t slot = next_;
  items_[slot] = std::move(t);
  set_weight(slot, std::pow(max_raw_priority_, alpha_));
  next_ = (next_ + 1) % capacity_;
  if (size_ < capacity_) ++size_;
}

ReplayBuffer::Batch ReplayBuffer::sample(std::size_t n, double beta,
                                         SplitMix64& rng) const {
  if (size_ == 0) throw std::logic_error("sampling from an empty replay buffer");
  Batch batch;
  batch.indices.resize(n);
  batch.weights.resize(n);
  const double total = tree_[1];
  for (std::size_t i = 0; i < n; ++i) {
    double u = rng.uniform() * total;
    std::size_t node = 1;
    while (node < leaves_) {
      const std::size_t left = 2 * node;
      if (u < tree_[left] || tree_[left + 1] <= 0.0) {
        node = left;
      } else {
        u -= tree_[left];
        node = left + 1;
      }
    }
    std::size_t idx = node - leaves_;
    if (idx >= size_) idx = size_ - 1;  // numeric edge of the descent
    batch.indices[i] = idx;
    const double prob = tree_[node] / total;
    batch.weights[i] =
        std::pow(static_cast<double>(size_) * prob, -beta);
  }
  const double wmax = batch.weights.maxCoeff();
  if (wmax > 0) batch.weights /= wmax;
  return batch;
}

void ReplayBuffer::update_priority(std::size_t index, double td_abs) {
  const double raw = td_abs + eps_;
  if (raw > max_raw_priority_) max_raw_priority_ = raw;
  set_weight(index, std::pow(raw, alpha_));
}

double ReplayBuffer::stored_weight(std::size_t index) const {
  return tree_[leaves_ + index];
}

}  // namespace admmopf
