#ifndef DQS_EVOLUTION_HPP
#define DQS_EVOLUTION_HPP

// Speciated population: evaluation with interleaved learner updates,
// per-species top-K selection and critic-gradient mutation of elite clones.

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "dqs/discriminator.hpp"
#include "dqs/environment.hpp"
#include "dqs/nn.hpp"
#include "dqs/random.hpp"
#include "dqs/replay_buffer.hpp"
#include "dqs/td3.hpp"

namespace dqs {

struct PolicyGenome {
  std::uint64_t id = 0;
  std::size_t species = 0;
  nn::ParameterVector params;
  double fitness_sum = 0.0;
  std::size_t eval_count = 0;
  std::size_t age = 0;  // generations survived as elite
  Eigen::VectorXd last_descriptor;

  bool evaluated() const { return eval_count > 0; }

  double average_fitness() const {
    if (eval_count == 0) {
      throw std::logic_error("genome " + std::to_string(id) + " has not been evaluated");
    }
    return fitness_sum / double(eval_count);
  }

  void record(double fitness, Eigen::VectorXd descriptor) {
    fitness_sum += fitness;
    ++eval_count;
    last_descriptor = std::move(descriptor);
  }
};

struct PopulationConfig {
  std::size_t population_size = 64;
  std::size_t num_species = 8;
  std::size_t elites = 4;

  std::size_t species_size() const { return population_size / num_species; }

  void validate() const {
    if (num_species == 0 || population_size == 0) {
      throw std::invalid_argument("population and m must be >= 1");
    }
    if (population_size % num_species != 0) {
      throw std::invalid_argument("population " + std::to_string(population_size) +
                                  " is not divisible by m = " + std::to_string(num_species));
    }
    if (elites == 0) throw std::invalid_argument("K must be >= 1");
    if (elites >= species_size()) {
      throw std::invalid_argument("K = " + std::to_string(elites) +
                                  " must be smaller than the species size " +
                                  std::to_string(species_size()));
    }
  }
};

struct SpeciesPopulation {
  nn::NetworkShape policy_shape;
  std::vector<std::vector<PolicyGenome>> species;
  std::uint64_t next_id = 0;

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& s : species) n += s.size();
    return n;
  }
};

/// Population policies map raw state to a bounded action.
inline nn::NetworkShape policy_shape(const env::EnvSpec& spec, std::size_t hidden) {
  return {spec.state_dim, hidden, spec.action_dim, nn::Activation::relu,
          nn::OutputActivation::bounded};
}

inline SpeciesPopulation init_population(const PopulationConfig& config,
                                         const nn::NetworkShape& shape, std::uint64_t seed) {
  if (config.num_species == 0 || config.population_size % config.num_species != 0) {
    throw std::invalid_argument("population " + std::to_string(config.population_size) +
                                " is not divisible by m = " + std::to_string(config.num_species));
  }
  SpeciesPopulation pop;
  pop.policy_shape = shape;
  pop.species.resize(config.num_species);
  for (std::size_t z = 0; z < config.num_species; ++z) {
    for (std::size_t j = 0; j < config.species_size(); ++j) {
      PolicyGenome g;
      g.id = pop.next_id++;
      g.species = z;
      g.params = nn::init_parameters(shape, derive_seed(seed, Stream::init, g.id));
      pop.species[z].push_back(std::move(g));
    }
  }
  return pop;
}

/// Wiring for one evaluation episode. Null members disable their part:
/// without a buffer nothing is stored, without a discriminator r_z = 0, and
/// without `on_update` the rollout is a pure fitness evaluation.
struct EvaluationContext {
  env::Environment* environment = nullptr;
  ReplayBuffer* buffer = nullptr;
  const Discriminator* discriminator = nullptr;
  double exploration_noise = 0.2;  // fraction of the action bound
  std::size_t update_every = 8;
  std::function<void()> on_update;
};

/// Rolls out one noisy episode of `genome`, storing transitions and firing
/// the learner hook every `update_every` steps, then folds the episode
/// fitness into the genome's running average.
inline env::EpisodeResult evaluate_policy(PolicyGenome& genome, const nn::NetworkShape& shape,
                                          EvaluationContext& ctx, std::uint64_t seed) {
  if (ctx.environment == nullptr) throw std::invalid_argument("evaluation needs an environment");
  auto& environment = *ctx.environment;
  const double bound = environment.spec().action_bound;
  Rng noise_rng{derive_seed(seed, Stream::exploration)};
  std::normal_distribution<double> noise(0.0, ctx.exploration_noise * bound);

  auto act = [&](const Eigen::VectorXd& state) {
    Eigen::VectorXd a = bound * nn::forward(shape, genome.params, state);
    if (ctx.exploration_noise > 0.0) {
      for (Eigen::Index i = 0; i < a.size(); ++i) a[i] += noise(noise_rng);
    }
    return Eigen::VectorXd(a.cwiseMax(-bound).cwiseMin(bound));
  };
  auto on_step = [&](Transition& tr, std::size_t t) {
    tr.species = genome.species;
    if (ctx.discriminator != nullptr) {
      tr.diversity_reward = ctx.discriminator->diversity_reward(tr.next_state, genome.species);
    }
    if (ctx.buffer != nullptr) ctx.buffer->push(tr);
    if (ctx.on_update && ctx.update_every > 0 && t % ctx.update_every == 0) ctx.on_update();
  };
  env::EpisodeResult episode =
      env::run_episode(environment, derive_seed(seed, Stream::environment), act, on_step);
  genome.record(episode.fitness, episode.behavior_descriptor);
  return episode;
}

/// The K best genomes by average fitness (ties: lower id first), each with
/// its age incremented.
inline std::vector<PolicyGenome> select_elites(const std::vector<PolicyGenome>& species,
                                               std::size_t k) {
  if (k > species.size()) throw std::invalid_argument("K exceeds species size");
  for (const auto& g : species) {
    if (!g.evaluated()) {
      throw std::logic_error("cannot select elites: genome " + std::to_string(g.id) +
                             " is unevaluated");
    }
  }
  std::vector<std::size_t> order(species.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double fa = species[a].average_fitness();
    const double fb = species[b].average_fitness();
    if (fa != fb) return fa > fb;
    return species[a].id < species[b].id;
  });
  std::vector<PolicyGenome> elites;
  elites.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    elites.push_back(species[order[i]]);
    ++elites.back().age;
  }
  return elites;
}

struct MutationConfig {
  std::size_t gradient_steps = 64;  // n_grad
  std::size_t batch_size = 256;
  double learning_rate = 0.006;
  double action_bound = 1.0;
};

/// Critic-gradient mutation of an elite clone: `gradient_steps` Adam ascent
/// steps on mean Q(s, pi(s), z) over states of species z. Falls back to
/// uniform states while species z has no stored transitions.
template <ActionCritic C>
PolicyGenome mutate_policy(PolicyGenome clone, std::size_t z, const nn::NetworkShape& shape,
                           const C& critic, const ReplayBuffer& buffer,
                           const MutationConfig& config, std::uint64_t seed) {
  clone.species = z;
  clone.fitness_sum = 0.0;
  clone.eval_count = 0;
  clone.age = 0;
  clone.last_descriptor.resize(0);
  if (config.gradient_steps == 0) return clone;

  Rng rng{seed};
  auto adam = nn::AdamState::zeros(shape.parameter_count(), config.learning_rate);
  const std::vector<std::size_t> species_ids(config.batch_size, z);
  const bool own_data = !buffer.species_slots(z).empty();
  for (std::size_t step = 0; step < config.gradient_steps; ++step) {
    const auto slots = own_data ? buffer.sample_species_slots(z, config.batch_size, rng)
                                : buffer.sample_uniform_slots(config.batch_size, rng);
    const Eigen::MatrixXd states = buffer.gather_states(slots);
    PolicyGradient pg = policy_value_gradient(shape, clone.params, states, states, species_ids,
                                              config.action_bound, critic);
    nn::adam_step(clone.params, -pg.gradient, adam);
  }
  return clone;
}

struct SpeciesEliteStats {
  std::size_t species = 0;
  double average_age = 0.0;
  double average_fitness = 0.0;
};

struct EvolveOutcome {
  SpeciesPopulation population;
  std::vector<SpeciesEliteStats> elite_stats;
  std::size_t offspring = 0;
};

/// Per species: keep the K elites, then refill with mutated clones of
/// elites drawn uniformly with replacement.
template <ActionCritic C>
EvolveOutcome evolve(const SpeciesPopulation& population, std::size_t elites, const C& critic,
                     const ReplayBuffer& buffer, const MutationConfig& mutation,
                     std::uint64_t seed) {
  EvolveOutcome out;
  out.population.policy_shape = population.policy_shape;
  out.population.next_id = population.next_id;
  out.population.species.resize(population.species.size());
  for (std::size_t z = 0; z < population.species.size(); ++z) {
    const auto& members = population.species[z];
    std::vector<PolicyGenome> next = select_elites(members, elites);

    SpeciesEliteStats stats{z, 0.0, 0.0};
    for (const auto& e : next) {
      stats.average_age += double(e.age);
      stats.average_fitness += e.average_fitness();
    }
    stats.average_age /= double(next.size());
    stats.average_fitness /= double(next.size());
    out.elite_stats.push_back(stats);

    Rng pick_rng{derive_seed(seed, Stream::mutation, z)};
    std::uniform_int_distribution<std::size_t> pick(0, elites - 1);
    while (next.size() < members.size()) {
      PolicyGenome clone = next[pick(pick_rng)];
      clone.id = out.population.next_id++;
      const std::uint64_t mutation_seed = derive_seed(seed, Stream::mutation, 1000003 + clone.id);
      next.push_back(mutate_policy(std::move(clone), z, population.policy_shape, critic, buffer,
                                   mutation, mutation_seed));
      ++out.offspring;
    }
    out.population.species[z] = std::move(next);
  }
  return out;
}

}  // namespace dqs

#endif  // DQS_EVOLUTION_HPP
