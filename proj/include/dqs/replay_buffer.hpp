#ifndef DQS_REPLAY_BUFFER_HPP
#define DQS_REPLAY_BUFFER_HPP

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "dqs/random.hpp"

namespace dqs {

/// One environment step as stored for off-policy learning.
struct Transition {
  Eigen::VectorXd state;
  Eigen::VectorXd action;
  double reward = 0.0;
  double diversity_reward = 0.0;
  Eigen::VectorXd next_state;
  std::size_t species = 0;
  bool done = false;
};

/// Column-per-sample view of several transitions.
struct TransitionBatch {
  Eigen::MatrixXd states;
  Eigen::MatrixXd actions;
  Eigen::VectorXd rewards;
  Eigen::VectorXd diversity_rewards;
  Eigen::MatrixXd next_states;
  std::vector<std::size_t> species;
  Eigen::VectorXd done;  // 1.0 for terminal steps

  std::size_t size() const { return species.size(); }
};

class EmptySpeciesError : public std::runtime_error {
 public:
  explicit EmptySpeciesError(std::size_t species)
      : std::runtime_error("replay buffer holds no transitions for species " +
                           std::to_string(species)),
        species_(species) {}
  std::size_t species() const noexcept { return species_; }

 private:
  std::size_t species_;
};

/// Bounded FIFO ring of transitions with per-species slot indices.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::size_t state_dim, std::size_t action_dim,
               std::size_t num_species)
      : capacity_(capacity),
        state_dim_(state_dim),
        action_dim_(action_dim),
        states_(state_dim, 0),
        actions_(action_dim, 0),
        next_states_(state_dim, 0),
        species_slots_(num_species) {
    if (capacity == 0 || state_dim == 0 || action_dim == 0 || num_species == 0) {
      throw std::invalid_argument("replay buffer dimensions must be >= 1");
    }
  }

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t num_species() const { return species_slots_.size(); }
  std::size_t state_dim() const { return state_dim_; }
  std::size_t action_dim() const { return action_dim_; }
  bool empty() const { return size_ == 0; }

  /// Live slots whose transition belongs to species z, in no particular order.
  const std::vector<std::size_t>& species_slots(std::size_t z) const {
    return species_slots_.at(z);
  }

  void push(const Transition& t) {
    if (std::size_t(t.state.size()) != state_dim_ || std::size_t(t.next_state.size()) != state_dim_ ||
        std::size_t(t.action.size()) != action_dim_) {
      throw std::invalid_argument("transition dimensions do not match the replay buffer");
    }
    if (t.species >= num_species()) {
      throw std::invalid_argument("transition species " + std::to_string(t.species) +
                                  " out of range");
    }
    const std::size_t slot = cursor_;
    if (size_ < capacity_) {
      grow();
      ++size_;
    } else {
      unlink(slot);
    }
    states_.col(Eigen::Index(slot)) = t.state;
    actions_.col(Eigen::Index(slot)) = t.action;
    next_states_.col(Eigen::Index(slot)) = t.next_state;
    rewards_[slot] = t.reward;
    diversity_rewards_[slot] = t.diversity_reward;
    species_[slot] = t.species;
    done_[slot] = t.done;
    position_[slot] = species_slots_[t.species].size();
    species_slots_[t.species].push_back(slot);
    cursor_ = (cursor_ + 1) % capacity_;
  }

  Transition at(std::size_t slot) const {
    if (slot >= size_) throw std::out_of_range("replay buffer slot not live");
    Transition t;
    t.state = states_.col(Eigen::Index(slot));
    t.action = actions_.col(Eigen::Index(slot));
    t.reward = rewards_[slot];
    t.diversity_reward = diversity_rewards_[slot];
    t.next_state = next_states_.col(Eigen::Index(slot));
    t.species = species_[slot];
    t.done = done_[slot];
    return t;
  }

  /// n slots drawn uniformly with replacement.
  std::vector<std::size_t> sample_uniform_slots(std::size_t n, Rng& rng) const {
    if (size_ == 0) throw std::runtime_error("cannot sample from an empty replay buffer");
    std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
    std::vector<std::size_t> slots(n);
    for (auto& s : slots) s = pick(rng);
    return slots;
  }

  std::vector<std::size_t> sample_species_slots(std::size_t z, std::size_t n, Rng& rng) const {
    const auto& pool = species_slots(z);
    if (pool.empty()) throw EmptySpeciesError(z);
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    std::vector<std::size_t> slots(n);
    for (auto& s : slots) s = pool[pick(rng)];
    return slots;
  }

  TransitionBatch gather(const std::vector<std::size_t>& slots) const {
    const auto n = Eigen::Index(slots.size());
    TransitionBatch b;
    b.states.resize(Eigen::Index(state_dim_), n);
    b.actions.resize(Eigen::Index(action_dim_), n);
    b.next_states.resize(Eigen::Index(state_dim_), n);
    b.rewards.resize(n);
    b.diversity_rewards.resize(n);
    b.done.resize(n);
    b.species.resize(slots.size());
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto s = slots[std::size_t(i)];
      if (s >= size_) throw std::out_of_range("replay buffer slot not live");
      b.states.col(i) = states_.col(Eigen::Index(s));
      b.actions.col(i) = actions_.col(Eigen::Index(s));
      b.next_states.col(i) = next_states_.col(Eigen::Index(s));
      b.rewards[i] = rewards_[s];
      b.diversity_rewards[i] = diversity_rewards_[s];
      b.done[i] = done_[s] ? 1.0 : 0.0;
      b.species[std::size_t(i)] = species_[s];
    }
    return b;
  }

  TransitionBatch sample_uniform(std::size_t n, Rng& rng) const {
    return gather(sample_uniform_slots(n, rng));
  }
  TransitionBatch sample_uniform(std::size_t n, std::uint64_t seed) const {
    Rng rng{seed};
    return sample_uniform(n, rng);
  }
  TransitionBatch sample_species(std::size_t z, std::size_t n, Rng& rng) const {
    return gather(sample_species_slots(z, n, rng));
  }
  TransitionBatch sample_species(std::size_t z, std::size_t n, std::uint64_t seed) const {
    Rng rng{seed};
    return sample_species(z, n, rng);
  }

  /// States only, for callers that never look at the other fields.
  Eigen::MatrixXd gather_states(const std::vector<std::size_t>& slots) const {
    Eigen::MatrixXd out(Eigen::Index(state_dim_), Eigen::Index(slots.size()));
    for (std::size_t i = 0; i < slots.size(); ++i) {
      out.col(Eigen::Index(i)) = states_.col(Eigen::Index(slots[i]));
    }
    return out;
  }

 private:
  void grow() {
    const auto cols = Eigen::Index(size_ + 1);
    if (states_.cols() < cols) {
      // Amortized doubling up to capacity.
      const auto target = Eigen::Index(std::min(capacity_, std::max<std::size_t>(64, 2 * size_)));
      states_.conservativeResize(Eigen::NoChange, target);
      actions_.conservativeResize(Eigen::NoChange, target);
      next_states_.conservativeResize(Eigen::NoChange, target);
      rewards_.resize(std::size_t(target));
      diversity_rewards_.resize(std::size_t(target));
      species_.resize(std::size_t(target));
      done_.resize(std::size_t(target));
      position_.resize(std::size_t(target));
    }
  }

  // Removes a slot from its species list by swap-with-last.
  void unlink(std::size_t slot) {
    auto& list = species_slots_[species_[slot]];
    const std::size_t pos = position_[slot];
    const std::size_t moved = list.back();
    list[pos] = moved;
    position_[moved] = pos;
    list.pop_back();
  }

  std::size_t capacity_;
  std::size_t state_dim_;
  std::size_t action_dim_;
  std::size_t size_ = 0;
  std::size_t cursor_ = 0;
  Eigen::MatrixXd states_;
  Eigen::MatrixXd actions_;
  Eigen::MatrixXd next_states_;
  std::vector<double> rewards_;
  std::vector<double> diversity_rewards_;
  std::vector<std::size_t> species_;
  std::vector<bool> done_;
  std::vector<std::size_t> position_;
  std::vector<std::vector<std::size_t>> species_slots_;
};

}  // namespace dqs

#endif  // DQS_REPLAY_BUFFER_HPP
