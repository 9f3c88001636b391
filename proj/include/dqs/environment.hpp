#ifndef DQS_ENVIRONMENT_HPP
#define DQS_ENVIRONMENT_HPP

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dqs/replay_buffer.hpp"

namespace dqs::env {

struct EnvSpec {
  std::size_t state_dim = 1;
  std::size_t action_dim = 1;
  std::size_t episode_length = 1;
  std::size_t bd_dim = 1;
  double action_bound = 1.0;
};

struct StepResult {
  Eigen::VectorXd next_state;
  double reward = 0.0;
  bool done = false;
};

/// A finished (or in-progress) rollout. Fitness is the undiscounted return.
struct EpisodeResult {
  std::vector<Transition> transitions;
  double fitness = 0.0;
  Eigen::VectorXd behavior_descriptor;
};

/// Episodic environment with a fixed horizon and no early termination.
/// Instances are stateful and must not be shared across threads mid-episode.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string_view name() const = 0;
  virtual const EnvSpec& spec() const = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;

  Eigen::VectorXd reset(std::uint64_t seed) {
    step_count_ = 0;
    state_ = initial_state(seed);
    return state_;
  }

  /// Advances one step. Actions are clipped to the action bound.
  StepResult step(const Eigen::VectorXd& action) {
    if (std::size_t(action.size()) != spec().action_dim) {
      throw std::invalid_argument("action has wrong dimension");
    }
    if (!action.allFinite()) throw std::invalid_argument("non-finite action");
    if (step_count_ >= spec().episode_length) {
      throw std::logic_error("step called on a finished episode");
    }
    const double bound = spec().action_bound;
    const Eigen::VectorXd clipped = action.cwiseMax(-bound).cwiseMin(bound);
    const double reward = advance(state_, clipped);
    ++step_count_;
    return {state_, reward, step_count_ == spec().episode_length};
  }

  const Eigen::VectorXd& state() const { return state_; }
  std::size_t step_count() const { return step_count_; }

  /// Descriptor of a complete episode, each component clipped to [0, 1].
  Eigen::VectorXd behavior_descriptor(const EpisodeResult& episode) const {
    if (episode.transitions.size() != spec().episode_length || !episode.transitions.back().done) {
      throw std::logic_error("behavior descriptor requested for an incomplete episode");
    }
    return descriptor_of(episode.transitions.back().next_state).cwiseMax(0.0).cwiseMin(1.0);
  }

  /// Unclipped descriptor of a final state.
  virtual Eigen::VectorXd descriptor_of(const Eigen::VectorXd& final_state) const = 0;

 protected:
  virtual Eigen::VectorXd initial_state(std::uint64_t seed) const = 0;
  /// Mutates the state in place and returns the step reward.
  virtual double advance(Eigen::VectorXd& state, const Eigen::VectorXd& action) const = 0;

 private:
  Eigen::VectorXd state_;
  std::size_t step_count_ = 0;
};

/// Point mass on a bounded plane. State (x, y, vx, vy), action = acceleration.
/// Reward is forward velocity minus a quadratic control cost.
class PointMass2D final : public Environment {
 public:
  static constexpr double dt = 0.1;
  static constexpr double arena = 5.0;
  static constexpr double max_speed = 1.0;
  static constexpr double control_cost = 0.05;

  std::string_view name() const override { return "point_mass_2d"; }
  const EnvSpec& spec() const override { return spec_; }
  std::unique_ptr<Environment> clone() const override {
    return std::make_unique<PointMass2D>(*this);
  }

  Eigen::VectorXd descriptor_of(const Eigen::VectorXd& s) const override {
    return Eigen::Vector2d((s[0] + arena) / (2 * arena), (s[1] + arena) / (2 * arena));
  }

 protected:
  Eigen::VectorXd initial_state(std::uint64_t) const override { return Eigen::VectorXd::Zero(4); }

  double advance(Eigen::VectorXd& s, const Eigen::VectorXd& a) const override {
    for (int i = 0; i < 2; ++i) {
      s[2 + i] = std::clamp(s[2 + i] + a[i] * dt, -max_speed, max_speed);
      s[i] = std::clamp(s[i] + s[2 + i] * dt, -arena, arena);
    }
    return s[2] - control_cost * a.squaredNorm();
  }

 private:
  EnvSpec spec_{4, 2, 50, 2, 1.0};
};

/// Planar arm with four equal links reaching for a fixed target. State is the
/// joint angles, action the per-step angle increments.
class PlanarArm final : public Environment {
 public:
  static constexpr std::size_t joints = 4;
  static constexpr double link_length = 0.25;
  static constexpr std::array<double, 2> target{0.0, 0.6};

  std::string_view name() const override { return "planar_arm"; }
  const EnvSpec& spec() const override { return spec_; }
  std::unique_ptr<Environment> clone() const override { return std::make_unique<PlanarArm>(*this); }

  static Eigen::Vector2d end_effector(const Eigen::VectorXd& angles) {
    Eigen::Vector2d p = Eigen::Vector2d::Zero();
    double heading = 0.0;
    for (Eigen::Index j = 0; j < angles.size(); ++j) {
      heading += angles[j];
      p += link_length * Eigen::Vector2d(std::cos(heading), std::sin(heading));
    }
    return p;
  }

  Eigen::VectorXd descriptor_of(const Eigen::VectorXd& s) const override {
    const Eigen::Vector2d e = end_effector(s);
    return Eigen::Vector2d((e.x() + 1.0) / 2.0, (e.y() + 1.0) / 2.0);
  }

 protected:
  Eigen::VectorXd initial_state(std::uint64_t) const override {
    return Eigen::VectorXd::Zero(Eigen::Index(joints));
  }

  double advance(Eigen::VectorXd& s, const Eigen::VectorXd& a) const override {
    s += a;
    const Eigen::Vector2d e = end_effector(s);
    return -(e - Eigen::Vector2d(target[0], target[1])).squaredNorm();
  }

 private:
  EnvSpec spec_{joints, joints, 20, 2, 0.1};
};

inline std::unique_ptr<Environment> make_environment(std::string_view name) {
  if (name == "point_mass_2d") return std::make_unique<PointMass2D>();
  if (name == "planar_arm") return std::make_unique<PlanarArm>();
  throw std::invalid_argument("unknown environment '" + std::string(name) +
                              "' (expected point_mass_2d or planar_arm)");
}

/// Rolls out one full episode. `act(state)` returns the action to take;
/// `on_step(transition, t)` sees each transition (1-based t) before it is
/// appended and may fill in fields such as the species or diversity reward.
template <class Act, class OnStep>
EpisodeResult run_episode(Environment& env, std::uint64_t seed, Act&& act, OnStep&& on_step) {
  EpisodeResult episode;
  episode.transitions.reserve(env.spec().episode_length);
  Eigen::VectorXd state = env.reset(seed);
  for (std::size_t t = 1; t <= env.spec().episode_length; ++t) {
    Eigen::VectorXd action = act(state);
    StepResult r = env.step(action);
    const double bound = env.spec().action_bound;
    Transition tr;
    tr.state = std::move(state);
    tr.action = action.cwiseMax(-bound).cwiseMin(bound);
    tr.reward = r.reward;
    tr.next_state = r.next_state;
    tr.done = r.done;
    on_step(tr, t);
    episode.fitness += tr.reward;
    episode.transitions.push_back(std::move(tr));
    state = std::move(r.next_state);
  }
  episode.behavior_descriptor = env.behavior_descriptor(episode);
  return episode;
}

template <class Act>
EpisodeResult run_episode(Environment& env, std::uint64_t seed, Act&& act) {
  return run_episode(env, seed, std::forward<Act>(act), [](Transition&, std::size_t) {});
}

}  // namespace dqs::env

#endif  // DQS_ENVIRONMENT_HPP
