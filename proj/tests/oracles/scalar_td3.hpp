#ifndef DQS_TESTS_SCALAR_TD3_HPP
#define DQS_TESTS_SCALAR_TD3_HPP

// Per-transition reference for the clipped double-Q target with target
// policy smoothing, written against plain vectors.

#include <algorithm>
#include <cstddef>
#include <vector>

#include "oracles/scalar_network.hpp"

namespace dqs::oracle {

struct ScalarTd3Params {
  double gamma = 0.99;
  double sigma_clip = 0.5;  // absolute noise clip
  double bound = 1.0;
  double lambda = 0.05;
};

inline double scalar_td3_target(const nn::NetworkShape& actor_shape,
                                const nn::ParameterVector& actor_target,
                                const nn::NetworkShape& critic_shape,
                                const nn::ParameterVector& critic1_target,
                                const nn::ParameterVector& critic2_target,
                                const std::vector<double>& next_state, std::size_t species,
                                std::size_t num_species, double reward, double diversity_reward,
                                bool done, const std::vector<double>& raw_noise,
                                const ScalarTd3Params& p) {
  std::vector<double> actor_in = next_state;
  for (std::size_t z = 0; z < num_species; ++z) actor_in.push_back(z == species ? 1.0 : 0.0);
  std::vector<double> action = scalar_forward(actor_shape, actor_target, actor_in);
  for (std::size_t i = 0; i < action.size(); ++i) {
    double eps = raw_noise[i];
    if (eps > p.sigma_clip) eps = p.sigma_clip;
    if (eps < -p.sigma_clip) eps = -p.sigma_clip;
    double a = p.bound * action[i] + eps;
    if (a > p.bound) a = p.bound;
    if (a < -p.bound) a = -p.bound;
    action[i] = a;
  }
  std::vector<double> critic_in = next_state;
  critic_in.insert(critic_in.end(), action.begin(), action.end());
  for (std::size_t z = 0; z < num_species; ++z) critic_in.push_back(z == species ? 1.0 : 0.0);
  const double q1 = scalar_forward(critic_shape, critic1_target, critic_in)[0];
  const double q2 = scalar_forward(critic_shape, critic2_target, critic_in)[0];
  const double r_qd = reward + p.lambda * diversity_reward;
  return done ? r_qd : r_qd + p.gamma * (q1 < q2 ? q1 : q2);
}

}  // namespace dqs::oracle

#endif
