#ifndef DQS_TD3_HPP
#define DQS_TD3_HPP

// Species-conditioned TD3: twin critics Q(s, a, z), an actor pi(s, z), their
// Polyak-averaged targets, and the delayed update schedule. The species id
// enters every network as a one-hot block appended to the input.

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <concepts>
#include <initializer_list>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "dqs/discriminator.hpp"
#include "dqs/nn.hpp"
#include "dqs/random.hpp"
#include "dqs/replay_buffer.hpp"

namespace dqs {

/// Noise magnitudes are fractions of the action bound.
struct Td3Config {
  double gamma = 0.99;
  double tau = 0.005;
  std::size_t policy_delay = 2;
  double smoothing_sigma = 0.2;
  double noise_clip = 0.5;
  double exploration_noise = 0.2;
  std::size_t batch_size = 256;
  double lambda = 0.05;
  double action_bound = 1.0;

  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in (0, 1]");
    if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must lie in [0, 1]");
    if (policy_delay < 1) throw std::invalid_argument("policy_delay must be >= 1");
    if (!(noise_clip > 0.0)) throw std::invalid_argument("noise_clip must be > 0");
    if (!(smoothing_sigma >= 0.0)) throw std::invalid_argument("sigma must be >= 0");
    if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (!(action_bound > 0.0)) throw std::invalid_argument("action_bound must be > 0");
  }
};

inline Eigen::VectorXd one_hot_species(std::size_t z, std::size_t m) {
  if (z >= m) {
    throw std::out_of_range("species " + std::to_string(z) + " out of range for m = " +
                            std::to_string(m));
  }
  Eigen::VectorXd v = Eigen::VectorXd::Zero(Eigen::Index(m));
  v[Eigen::Index(z)] = 1.0;
  return v;
}

inline Eigen::MatrixXd one_hot_batch(const std::vector<std::size_t>& species, std::size_t m) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(Eigen::Index(m), Eigen::Index(species.size()));
  for (std::size_t i = 0; i < species.size(); ++i) {
    if (species[i] >= m) throw std::out_of_range("species id out of range");
    out(Eigen::Index(species[i]), Eigen::Index(i)) = 1.0;
  }
  return out;
}

inline double clip_noise(double raw, double clip) { return std::clamp(raw, -clip, clip); }

/// Stacks blocks vertically; all must share the column count.
inline Eigen::MatrixXd stack_rows(std::initializer_list<const Eigen::MatrixXd*> blocks) {
  Eigen::Index rows = 0;
  const Eigen::Index cols = (*blocks.begin())->cols();
  for (const auto* b : blocks) {
    if (b->cols() != cols) throw nn::DimensionError("stack_rows: column counts differ");
    rows += b->rows();
  }
  Eigen::MatrixXd out(rows, cols);
  Eigen::Index r = 0;
  for (const auto* b : blocks) {
    out.middleRows(r, b->rows()) = *b;
    r += b->rows();
  }
  return out;
}

struct ActionValue {
  Eigen::VectorXd values;           // Q per sample
  Eigen::MatrixXd action_gradient;  // dQ/da, one column per sample
};

/// Anything that scores (state, action, species) batches and differentiates
/// the score with respect to the action.
template <class C>
concept ActionCritic = requires(const C& critic, const Eigen::MatrixXd& states,
                                const Eigen::MatrixXd& actions,
                                const std::vector<std::size_t>& species) {
  { critic.value_and_action_gradient(states, actions, species) } -> std::convertible_to<ActionValue>;
};

struct PolicyGradient {
  double mean_value = 0.0;
  nn::ParameterVector gradient;  // d mean(Q) / d params
};

/// Deterministic policy gradient of mean Q(s, bound * net(inputs), z) with
/// respect to the policy parameters. `inputs` is what the policy sees,
/// `states` what the critic sees.
template <ActionCritic C>
PolicyGradient policy_value_gradient(const nn::NetworkShape& shape, const nn::ParameterVector& params,
                                     const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& states,
                                     const std::vector<std::size_t>& species, double action_bound,
                                     const C& critic) {
  nn::ForwardCache cache;
  const Eigen::MatrixXd actions = action_bound * nn::forward_batch(shape, params, inputs, &cache);
  const ActionValue av = critic.value_and_action_gradient(states, actions, species);
  const double n = double(inputs.cols());
  PolicyGradient out;
  out.mean_value = av.values.mean();
  const Eigen::MatrixXd upstream = av.action_gradient * (action_bound / n);
  nn::backward_batch(shape, params, cache, upstream, &out.gradient, nullptr);
  return out;
}

class SpeciesCritic {
 public:
  SpeciesCritic(std::size_t state_dim, std::size_t action_dim, std::size_t num_species,
                std::size_t hidden_dim, double learning_rate, std::uint64_t seed)
      : shape_{state_dim + action_dim + num_species, hidden_dim, 1, nn::Activation::relu,
               nn::OutputActivation::none},
        state_dim_(state_dim),
        action_dim_(action_dim),
        num_species_(num_species) {
    for (int i = 0; i < 2; ++i) {
      online_[i] = nn::init_parameters(shape_, derive_seed(seed, 100 + std::uint64_t(i)));
      target_[i] = online_[i];
      adam_[i] = nn::AdamState::zeros(shape_.parameter_count(), learning_rate);
    }
  }

  const nn::NetworkShape& shape() const { return shape_; }
  std::size_t num_species() const { return num_species_; }
  nn::ParameterVector& online(int i) { return online_.at(std::size_t(i)); }
  const nn::ParameterVector& online(int i) const { return online_.at(std::size_t(i)); }
  nn::ParameterVector& target(int i) { return target_.at(std::size_t(i)); }
  const nn::ParameterVector& target(int i) const { return target_.at(std::size_t(i)); }
  nn::AdamState& optimizer(int i) { return adam_.at(std::size_t(i)); }

  Eigen::MatrixXd inputs(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions,
                         const std::vector<std::size_t>& species) const {
    const Eigen::MatrixXd codes = one_hot_batch(species, num_species_);
    return stack_rows({&states, &actions, &codes});
  }

  Eigen::VectorXd value(int which, const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions,
                        const std::vector<std::size_t>& species, bool use_target = false) const {
    const auto& p = use_target ? target(which) : online(which);
    return nn::forward_batch(shape_, p, inputs(states, actions, species)).row(0).transpose();
  }

  /// Online first critic and its action gradient.
  ActionValue value_and_action_gradient(const Eigen::MatrixXd& states,
                                        const Eigen::MatrixXd& actions,
                                        const std::vector<std::size_t>& species) const {
    nn::ForwardCache cache;
    const Eigen::MatrixXd q = nn::forward_batch(shape_, online(0), inputs(states, actions, species),
                                                &cache);
    Eigen::MatrixXd input_gradient;
    nn::backward_batch(shape_, online(0), cache, Eigen::MatrixXd::Ones(1, q.cols()), nullptr,
                       &input_gradient);
    return {q.row(0).transpose(),
            input_gradient.middleRows(Eigen::Index(state_dim_), Eigen::Index(action_dim_))};
  }

  /// Mean squared error of critic `which` against `targets`, and its gradient.
  double mse_and_gradient(int which, const Eigen::MatrixXd& critic_inputs,
                          const Eigen::VectorXd& targets, nn::ParameterVector* gradient) const {
    nn::ForwardCache cache;
    const Eigen::MatrixXd q = nn::forward_batch(shape_, online(which), critic_inputs, &cache);
    const Eigen::RowVectorXd err = q.row(0) - targets.transpose();
    const double n = double(targets.size());
    if (gradient != nullptr) {
      nn::backward_batch(shape_, online(which), cache, (2.0 / n) * err, gradient, nullptr);
    }
    return err.squaredNorm() / n;
  }

  void update_targets(double tau) {
    for (int i = 0; i < 2; ++i) target(i) = nn::polyak_update(target(i), online(i), tau);
  }

 private:
  nn::NetworkShape shape_;
  std::size_t state_dim_;
  std::size_t action_dim_;
  std::size_t num_species_;
  std::array<nn::ParameterVector, 2> online_;
  std::array<nn::ParameterVector, 2> target_;
  std::array<nn::AdamState, 2> adam_;
};

class SpeciesActor {
 public:
  SpeciesActor(std::size_t state_dim, std::size_t action_dim, std::size_t num_species,
               std::size_t hidden_dim, double learning_rate, double action_bound,
               std::uint64_t seed)
      : shape_{state_dim + num_species, hidden_dim, action_dim, nn::Activation::relu,
               nn::OutputActivation::bounded},
        num_species_(num_species),
        action_bound_(action_bound),
        online_(nn::init_parameters(shape_, seed)),
        target_(online_),
        adam_(nn::AdamState::zeros(shape_.parameter_count(), learning_rate)) {}

  const nn::NetworkShape& shape() const { return shape_; }
  double action_bound() const { return action_bound_; }
  nn::ParameterVector& online() { return online_; }
  const nn::ParameterVector& online() const { return online_; }
  nn::ParameterVector& target() { return target_; }
  const nn::ParameterVector& target() const { return target_; }
  nn::AdamState& optimizer() { return adam_; }

  Eigen::MatrixXd inputs(const Eigen::MatrixXd& states,
                         const std::vector<std::size_t>& species) const {
    const Eigen::MatrixXd codes = one_hot_batch(species, num_species_);
    return stack_rows({&states, &codes});
  }

  Eigen::MatrixXd act(const Eigen::MatrixXd& states, const std::vector<std::size_t>& species,
                      bool use_target = false) const {
    return action_bound_ *
           nn::forward_batch(shape_, use_target ? target_ : online_, inputs(states, species));
  }

  /// One Adam step ascending mean Q(s, pi(s, z), z). Returns the pre-step
  /// loss, -mean Q.
  template <ActionCritic C>
  double update(const C& critic, const Eigen::MatrixXd& states,
                const std::vector<std::size_t>& species) {
    PolicyGradient pg = policy_value_gradient(shape_, online_, inputs(states, species), states,
                                              species, action_bound_, critic);
    nn::adam_step(online_, -pg.gradient, adam_);
    return -pg.mean_value;
  }

  void update_target(double tau) { target_ = nn::polyak_update(target_, online_, tau); }

 private:
  nn::NetworkShape shape_;
  std::size_t num_species_;
  double action_bound_;
  nn::ParameterVector online_;
  nn::ParameterVector target_;
  nn::AdamState adam_;
};

/// Raw smoothing noise ~ N(0, (sigma * bound)^2), one column per sample.
inline Eigen::MatrixXd draw_smoothing_noise(Rng& rng, std::size_t action_dim, std::size_t n,
                                            const Td3Config& config) {
  std::normal_distribution<double> normal(0.0, config.smoothing_sigma * config.action_bound);
  Eigen::MatrixXd noise{Eigen::Index(action_dim), Eigen::Index(n)};
  for (Eigen::Index j = 0; j < noise.cols(); ++j) {
    for (Eigen::Index i = 0; i < noise.rows(); ++i) noise(i, j) = normal(rng);
  }
  return noise;
}

/// Bootstrapped targets y = r + lambda r_z + (1 - done) gamma min_i Q'_i(s', a~, z)
/// with a~ = clip(pi'(s', z) + clip(noise, +-c), +-bound).
inline Eigen::VectorXd critic_target(const SpeciesCritic& critic, const SpeciesActor& actor,
                                     const TransitionBatch& batch, const Td3Config& config,
                                     const Eigen::MatrixXd& raw_noise) {
  const double bound = config.action_bound;
  const double clip = config.noise_clip * bound;
  Eigen::MatrixXd next_actions = actor.act(batch.next_states, batch.species, true);
  if (raw_noise.rows() != next_actions.rows() || raw_noise.cols() != next_actions.cols()) {
    throw nn::DimensionError("smoothing noise shape does not match the batch");
  }
  next_actions += raw_noise.unaryExpr([clip](double e) { return clip_noise(e, clip); });
  next_actions = next_actions.cwiseMax(-bound).cwiseMin(bound);
  const Eigen::VectorXd q1 = critic.value(0, batch.next_states, next_actions, batch.species, true);
  const Eigen::VectorXd q2 = critic.value(1, batch.next_states, next_actions, batch.species, true);
  Eigen::VectorXd y(Eigen::Index(batch.size()));
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    y[i] = qd_reward(batch.rewards[i], batch.diversity_rewards[i], config.lambda) +
           (1.0 - batch.done[i]) * config.gamma * std::min(q1[i], q2[i]);
  }
  return y;
}

inline Eigen::VectorXd critic_target(const SpeciesCritic& critic, const SpeciesActor& actor,
                                     const TransitionBatch& batch, const Td3Config& config,
                                     Rng& rng) {
  return critic_target(
      critic, actor, batch, config,
      draw_smoothing_noise(rng, std::size_t(batch.actions.rows()), batch.size(), config));
}

/// One Adam step per online critic toward fixed targets. Returns pre-step MSEs.
inline std::pair<double, double> critic_update(SpeciesCritic& critic, const TransitionBatch& batch,
                                               const Eigen::VectorXd& targets) {
  const Eigen::MatrixXd in = critic.inputs(batch.states, batch.actions, batch.species);
  double losses[2];
  for (int i = 0; i < 2; ++i) {
    nn::ParameterVector gradient;
    losses[i] = critic.mse_and_gradient(i, in, targets, &gradient);
    nn::adam_step(critic.online(i), gradient, critic.optimizer(i));
  }
  return {losses[0], losses[1]};
}

/// Actor ascent on the first critic followed by Polyak updates of all targets.
inline double actor_and_target_update(SpeciesCritic& critic, SpeciesActor& actor,
                                      const TransitionBatch& batch, const Td3Config& config) {
  const double loss = actor.update(critic, batch.states, batch.species);
  critic.update_targets(config.tau);
  actor.update_target(config.tau);
  return loss;
}

struct LearnerStep {
  double critic_loss1 = 0.0;
  double critic_loss2 = 0.0;
  std::optional<double> actor_loss;
  double mean_reward = 0.0;
  double mean_diversity_reward = 0.0;
  double mean_qd_reward = 0.0;
};

/// Critic, actor and the delayed-update counters.
class SpeciesLearner {
 public:
  struct Sizes {
    std::size_t state_dim = 1;
    std::size_t action_dim = 1;
    std::size_t num_species = 1;
    std::size_t actor_hidden = 256;
    std::size_t critic_hidden = 256;
    double learning_rate = 0.003;
  };

  SpeciesLearner(const Sizes& sizes, const Td3Config& config, std::uint64_t seed)
      : config_(config),
        critic_(sizes.state_dim, sizes.action_dim, sizes.num_species, sizes.critic_hidden,
                sizes.learning_rate, derive_seed(seed, 1)),
        actor_(sizes.state_dim, sizes.action_dim, sizes.num_species, sizes.actor_hidden,
               sizes.learning_rate, config.action_bound, derive_seed(seed, 2)) {
    config_.validate();
  }

  const Td3Config& config() const { return config_; }
  SpeciesCritic& critic() { return critic_; }
  const SpeciesCritic& critic() const { return critic_; }
  SpeciesActor& actor() { return actor_; }
  const SpeciesActor& actor() const { return actor_; }
  std::uint64_t critic_steps() const { return critic_steps_; }
  std::uint64_t actor_steps() const { return actor_steps_; }

  /// Critic update, plus the actor/target update every `policy_delay` calls.
  LearnerStep train(const TransitionBatch& batch, Rng& rng) {
    LearnerStep step;
    const Eigen::VectorXd y = critic_target(critic_, actor_, batch, config_, rng);
    std::tie(step.critic_loss1, step.critic_loss2) = critic_update(critic_, batch, y);
    ++critic_steps_;
    if (critic_steps_ % config_.policy_delay == 0) {
      step.actor_loss = actor_and_target_update(critic_, actor_, batch, config_);
      ++actor_steps_;
    }
    step.mean_reward = batch.rewards.mean();
    step.mean_diversity_reward = batch.diversity_rewards.mean();
    step.mean_qd_reward = (batch.rewards + config_.lambda * batch.diversity_rewards).mean();
    return step;
  }

 private:
  Td3Config config_;
  SpeciesCritic critic_;
  SpeciesActor actor_;
  std::uint64_t critic_steps_ = 0;
  std::uint64_t actor_steps_ = 0;
};

}  // namespace dqs

#endif  // DQS_TD3_HPP
