#ifndef DQS_DISCRIMINATOR_HPP
#define DQS_DISCRIMINATOR_HPP

// Species classifier q(z|s) and the mutual-information diversity reward
// log q(z|s) - log p(z) under a uniform species prior.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "dqs/nn.hpp"

namespace dqs {

/// Lower clamp applied to log q(z|s) before it enters the reward.
inline constexpr double kLogProbabilityFloor = -10.0;

/// Uniform prior p(z) = 1/m. Equal-sized species make this exact.
struct SpeciesPrior {
  std::size_t num_species = 1;

  double probability() const { return 1.0 / double(num_species); }
  double log_probability() const { return -std::log(double(num_species)); }
};

/// Column-wise numerically stable log-softmax.
inline Eigen::MatrixXd log_softmax(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const double peak = logits.col(j).maxCoeff();
    const double lse = peak + std::log((logits.col(j).array() - peak).exp().sum());
    out.col(j) = logits.col(j).array() - lse;
  }
  return out;
}

/// r_z from a log-probability, with the floor applied.
inline double diversity_reward_from_log_prob(double log_q, const SpeciesPrior& prior) {
  return std::max(log_q, kLogProbabilityFloor) - prior.log_probability();
}

/// r_qd = r + lambda * r_z
inline double qd_reward(double reward, double diversity_reward, double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
  return reward + lambda * diversity_reward;
}

class Discriminator {
 public:
  Discriminator(std::size_t state_dim, std::size_t num_species, std::size_t hidden_dim,
                double learning_rate, std::uint64_t seed)
      : shape_{state_dim, hidden_dim, num_species, nn::Activation::relu,
               nn::OutputActivation::none},
        prior_{num_species},
        params_(nn::init_parameters(shape_, seed)),
        adam_(nn::AdamState::zeros(shape_.parameter_count(), learning_rate)) {}

  const nn::NetworkShape& shape() const { return shape_; }
  const SpeciesPrior& prior() const { return prior_; }
  std::size_t num_species() const { return prior_.num_species; }
  nn::ParameterVector& parameters() { return params_; }
  const nn::ParameterVector& parameters() const { return params_; }
  nn::AdamState& optimizer() { return adam_; }

  /// log q(z|s) for every species; one column per state.
  Eigen::MatrixXd log_probabilities(const Eigen::MatrixXd& states) const {
    if (!states.allFinite()) throw std::invalid_argument("discriminator given a non-finite state");
    return log_softmax(nn::forward_batch(shape_, params_, states));
  }

  Eigen::VectorXd predict(const Eigen::VectorXd& state) const {
    return log_probabilities(state).col(0).array().exp();
  }

  double diversity_reward(const Eigen::VectorXd& state, std::size_t z) const {
    if (z >= num_species()) throw std::out_of_range("species id out of range");
    return diversity_reward_from_log_prob(log_probabilities(state)(Eigen::Index(z), 0), prior_);
  }

  /// Mean negative log-likelihood of the labels and its parameter gradient.
  double loss_and_gradient(const Eigen::MatrixXd& states, const std::vector<std::size_t>& labels,
                           nn::ParameterVector* gradient) const {
    if (states.cols() == 0 || std::size_t(states.cols()) != labels.size()) {
      throw std::invalid_argument("discriminator batch must be nonempty with one label per state");
    }
    nn::ForwardCache cache;
    const Eigen::MatrixXd logits = nn::forward_batch(shape_, params_, states, &cache);
    const Eigen::MatrixXd log_q = log_softmax(logits);
    const double n = double(labels.size());
    double loss = 0.0;
    Eigen::MatrixXd upstream = log_q.array().exp().matrix();
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const auto z = Eigen::Index(labels[i]);
      if (labels[i] >= num_species()) throw std::out_of_range("species label out of range");
      loss -= log_q(z, Eigen::Index(i));
      upstream(z, Eigen::Index(i)) -= 1.0;
    }
    if (gradient != nullptr) {
      upstream /= n;
      nn::backward_batch(shape_, params_, cache, upstream, gradient, nullptr);
    }
    return loss / n;
  }

  /// One Adam step on the mean NLL; returns the loss before the step.
  double train_step(const Eigen::MatrixXd& states, const std::vector<std::size_t>& labels) {
    nn::ParameterVector gradient;
    const double loss = loss_and_gradient(states, labels, &gradient);
    nn::adam_step(params_, gradient, adam_);
    return loss;
  }

 private:
  nn::NetworkShape shape_;
  SpeciesPrior prior_;
  nn::ParameterVector params_;
  nn::AdamState adam_;
};

}  // namespace dqs

#endif  // DQS_DISCRIMINATOR_HPP
