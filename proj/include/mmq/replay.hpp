#pragma once
#include <vector>

#include "mmq/net.hpp"
#include "mmq/rng.hpp"

namespace mmq {

// Fixed-capacity ring buffer of (state, own-action, reward, next-state)
// transitions, stored flat for cache-friendly uniform sampling.
class ReplayBuffer {
 public:
  ReplayBuffer(long capacity, int state_dim, int action_dim);

  void push(const Vector& state, const Vector& action, double reward,
            const Vector& next_state);

  long size() const { return size_; }
  long capacity() const { return capacity_; }
  int state_dim() const { return state_dim_; }
  int action_dim() const { return action_dim_; }

  struct Batch {
    Matrix states;       // state_dim x B
    Matrix actions;      // action_dim x B
    Matrix rewards;      // 1 x B
    Matrix next_states;  // state_dim x B
  };

  // Uniform sample with replacement; needs at least one stored transition.
  Batch sample(int batch_size, Rng& rng) const;

  // Direct slot access (oldest entries are overwritten first once full).
  void read(long index, Vector& state, Vector& action, double& reward,
            Vector& next_state) const;

 private:
  long capacity_;
  int state_dim_, action_dim_, stride_;
  long size_ = 0, head_ = 0;
  std::vector<double> data_;
};

}  // namespace mmq
