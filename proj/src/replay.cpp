#include "mmq/replay.hpp"

namespace mmq {

ReplayBuffer::ReplayBuffer(long capacity, int state_dim, int action_dim)
    : capacity_(capacity),
      state_dim_(state_dim),
      action_dim_(action_dim),
      stride_(2 * state_dim + action_dim + 1) {
  if (capacity <= 0) throw ConfigError("ReplayBuffer: capacity must be positive");
  if (state_dim <= 0 || action_dim <= 0)
    throw ConfigError("ReplayBuffer: dimensions must be positive");
  data_.resize(static_cast<std::size_t>(capacity_) * stride_);
}

void ReplayBuffer::push(const Vector& state, const Vector& action, double reward,
                        const Vector& next_state) {
  if (state.size() != state_dim_ || next_state.size() != state_dim_ ||
      action.size() != action_dim_)
    throw ShapeError("ReplayBuffer::push: transition dimensions mismatch");
  double* slot = data_.data() + head_ * stride_;
  for (int d = 0; d < state_dim_; ++d) slot[d] = state[d];
  for (int d = 0; d < action_dim_; ++d) slot[state_dim_ + d] = action[d];
  slot[state_dim_ + action_dim_] = reward;
  for (int d = 0; d < state_dim_; ++d)
    slot[state_dim_ + action_dim_ + 1 + d] = next_state[d];
  head_ = (head_ + 1) % capacity_;
  if (size_ < capacity_) ++size_;
}

ReplayBuffer::Batch ReplayBuffer::sample(int batch_size, Rng& rng) const {
  if (size_ == 0) throw ConfigError("ReplayBuffer::sample: buffer is empty");
  if (batch_size <= 0) throw ConfigError("ReplayBuffer::sample: batch_size <= 0");
  Batch batch;
  batch.states.resize(state_dim_, batch_size);
  batch.actions.resize(action_dim_, batch_size);
  batch.rewards.resize(1, batch_size);
  batch.next_states.resize(state_dim_, batch_size);
  for (int b = 0; b < batch_size; ++b) {
    long idx = rng.uniform_int(static_cast<int>(size_));
    const double* slot = data_.data() + idx * stride_;
    for (int d = 0; d < state_dim_; ++d) batch.states(d, b) = slot[d];
    for (int d = 0; d < action_dim_; ++d)
      batch.actions(d, b) = slot[state_dim_ + d];
    batch.rewards(0, b) = slot[state_dim_ + action_dim_];
    for (int d = 0; d < state_dim_; ++d)
      batch.next_states(d, b) = slot[state_dim_ + action_dim_ + 1 + d];
  }
  return batch;
}

void ReplayBuffer::read(long index, Vector& state, Vector& action, double& reward,
                        Vector& next_state) const {
  if (index < 0 || index >= size_)
    throw ConfigError("ReplayBuffer::read: index out of range");
  const double* slot = data_.data() + index * stride_;
  state = Eigen::Map<const Vector>(slot, state_dim_);
  action = Eigen::Map<const Vector>(slot + state_dim_, action_dim_);
  reward = slot[state_dim_ + action_dim_];
  next_state =
      Eigen::Map<const Vector>(slot + state_dim_ + action_dim_ + 1, state_dim_);
}

}  // namespace mmq
