#ifndef DQS_TESTS_HELPERS_HPP
#define DQS_TESTS_HELPERS_HPP

#include <Eigen/Core>

#include <random>
#include <vector>

#include "dqs/nn.hpp"
#include "dqs/random.hpp"
#include "dqs/replay_buffer.hpp"

namespace dqs::test {

inline Eigen::VectorXd normal_vector(Rng& rng, Eigen::Index n, double sd = 1.0) {
  std::normal_distribution<double> normal(0.0, sd);
  Eigen::VectorXd v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

inline Eigen::MatrixXd normal_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols,
                                     double sd = 1.0) {
  std::normal_distribution<double> normal(0.0, sd);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  }
  return m;
}

/// Smallest |pre-activation| of the hidden layer over a batch.
inline double kink_margin(const nn::NetworkShape& shape, const nn::ParameterVector& params,
                          const Eigen::MatrixXd& inputs) {
  Eigen::MatrixXd pre = nn::weights(shape, params, 1) * inputs;
  pre.colwise() += nn::biases(shape, params, 1);
  return pre.cwiseAbs().minCoeff();
}

/// Normal inputs redrawn until no ReLU unit sits within `margin` of its kink.
inline Eigen::MatrixXd kink_free_inputs(Rng& rng, const nn::NetworkShape& shape,
                                        const nn::ParameterVector& params, Eigen::Index n,
                                        double margin = 1e-3) {
  for (;;) {
    Eigen::MatrixXd x = normal_matrix(rng, Eigen::Index(shape.input_dim), n);
    if (shape.hidden_activation != nn::Activation::relu || kink_margin(shape, params, x) >= margin) {
      return x;
    }
  }
}

inline Transition make_transition(std::size_t state_dim, std::size_t action_dim, std::size_t z,
                                  double tag) {
  Transition t;
  t.state = Eigen::VectorXd::Constant(Eigen::Index(state_dim), tag);
  t.action = Eigen::VectorXd::Constant(Eigen::Index(action_dim), -tag);
  t.reward = tag;
  t.diversity_reward = 2.0 * tag;
  t.next_state = Eigen::VectorXd::Constant(Eigen::Index(state_dim), tag + 0.5);
  t.species = z;
  t.done = false;
  return t;
}

}  // namespace dqs::test

#endif
