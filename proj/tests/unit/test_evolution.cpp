#include <gtest/gtest.h>

#include <set>

#include "dqs/evolution.hpp"
#include "helpers.hpp"

namespace dqs {
namespace {

// Q = -|a - 0.4|^2, maximised at a = 0.4 everywhere.
struct TargetActionCritic {
  ActionValue value_and_action_gradient(const Eigen::MatrixXd&, const Eigen::MatrixXd& actions,
                                        const std::vector<std::size_t>&) const {
    const Eigen::MatrixXd diff = actions.array() - 0.4;
    return {-diff.colwise().squaredNorm().transpose(), -2.0 * diff};
  }
};

PolicyGenome genome(std::uint64_t id, double fitness) {
  PolicyGenome g;
  g.id = id;
  g.params = nn::ParameterVector::Constant(3, double(id));
  g.record(fitness, Eigen::Vector2d(0.5, 0.5));
  return g;
}

ReplayBuffer filled_buffer(std::size_t m, const std::vector<std::size_t>& species_present) {
  ReplayBuffer buf(256, 4, 2, m);
  Rng rng{1};
  for (int i = 0; i < 256; ++i) {
    Transition t = test::make_transition(4, 2, species_present[std::size_t(i) % species_present.size()], 0.0);
    t.state = test::normal_vector(rng, 4);
    t.next_state = t.state;
    buf.push(t);
  }
  return buf;
}

TEST(PopulationConfig, Validation) {
  EXPECT_NO_THROW((PopulationConfig{64, 8, 4}.validate()));
  EXPECT_NO_THROW((PopulationConfig{64, 1, 4}.validate()));
  EXPECT_THROW((PopulationConfig{63, 8, 4}.validate()), std::invalid_argument);
  EXPECT_THROW((PopulationConfig{64, 8, 8}.validate()), std::invalid_argument);
  EXPECT_THROW((PopulationConfig{64, 8, 0}.validate()), std::invalid_argument);
  EXPECT_THROW((PopulationConfig{64, 0, 4}.validate()), std::invalid_argument);
}

class InitPopulation : public ::testing::TestWithParam<std::pair<std::size_t, std::size_t>> {};

TEST_P(InitPopulation, EqualSpeciesWithUniqueIds) {
  const auto [pop_size, m] = GetParam();
  const nn::NetworkShape shape = policy_shape(env::PointMass2D().spec(), 8);
  const SpeciesPopulation pop = init_population({pop_size, m, 1}, shape, 3);
  ASSERT_EQ(pop.species.size(), m);
  EXPECT_EQ(pop.size(), pop_size);
  std::set<std::uint64_t> ids;
  for (std::size_t z = 0; z < m; ++z) {
    EXPECT_EQ(pop.species[z].size(), pop_size / m);
    for (const auto& g : pop.species[z]) {
      EXPECT_EQ(g.species, z);
      EXPECT_FALSE(g.evaluated());
      EXPECT_EQ(std::size_t(g.params.size()), shape.parameter_count());
      ids.insert(g.id);
    }
  }
  EXPECT_EQ(ids.size(), pop_size);
  EXPECT_EQ(pop.next_id, pop_size);
}

INSTANTIATE_TEST_SUITE_P(Sizes, InitPopulation,
                         ::testing::Values(std::pair<std::size_t, std::size_t>{64, 8},
                                           std::pair<std::size_t, std::size_t>{64, 1},
                                           std::pair<std::size_t, std::size_t>{8, 8}));

TEST(InitPopulationErrors, IndivisibleThrows) {
  const nn::NetworkShape shape{4, 8, 2, nn::Activation::relu, nn::OutputActivation::bounded};
  EXPECT_THROW(init_population({63, 8, 1}, shape, 1), std::invalid_argument);
}

TEST(InitPopulationErrors, DeterministicAndDistinct) {
  const nn::NetworkShape shape{4, 8, 2, nn::Activation::relu, nn::OutputActivation::bounded};
  const SpeciesPopulation a = init_population({8, 2, 1}, shape, 5);
  const SpeciesPopulation b = init_population({8, 2, 1}, shape, 5);
  EXPECT_EQ(a.species[1][2].params, b.species[1][2].params);
  EXPECT_NE(a.species[0][0].params, a.species[0][1].params);
}

TEST(Genome, RunningAverage) {
  PolicyGenome g;
  EXPECT_THROW(g.average_fitness(), std::logic_error);
  g.record(2.0, Eigen::Vector2d(0.1, 0.2));
  g.record(4.0, Eigen::Vector2d(0.3, 0.4));
  g.record(-3.0, Eigen::Vector2d(0.5, 0.6));
  EXPECT_DOUBLE_EQ(g.average_fitness(), 1.0);
  EXPECT_EQ(g.eval_count, 3u);
  EXPECT_EQ(g.last_descriptor, Eigen::Vector2d(0.5, 0.6));
}

TEST(Evaluate, StoresTransitionsAndFiresUpdates) {
  env::PointMass2D environment;
  const nn::NetworkShape shape = policy_shape(environment.spec(), 8);
  SpeciesPopulation pop = init_population({4, 2, 1}, shape, 7);
  ReplayBuffer buffer(1000, 4, 2, 2);
  Discriminator disc(4, 2, 8, 0.003, 1);
  int updates = 0;
  EvaluationContext ctx{&environment, &buffer, &disc, 0.2, 8, [&] { ++updates; }};
  PolicyGenome& g = pop.species[1][0];
  const env::EpisodeResult ep = evaluate_policy(g, shape, ctx, 11);
  EXPECT_EQ(updates, 6);  // floor(50 / 8)
  EXPECT_EQ(buffer.size(), 50u);
  EXPECT_EQ(buffer.species_slots(1).size(), 50u);
  EXPECT_EQ(g.eval_count, 1u);
  EXPECT_DOUBLE_EQ(g.average_fitness(), ep.fitness);
  EXPECT_EQ(g.last_descriptor, ep.behavior_descriptor);
  for (std::size_t s = 0; s < buffer.size(); ++s) {
    const Transition t = buffer.at(s);
    EXPECT_NEAR(t.diversity_reward, disc.diversity_reward(t.next_state, 1), 1e-12);
  }
}

TEST(Evaluate, SeededAndNoiseFree) {
  env::PointMass2D environment;
  const nn::NetworkShape shape = policy_shape(environment.spec(), 8);
  SpeciesPopulation pop = init_population({2, 1, 1}, shape, 7);
  EvaluationContext ctx{&environment, nullptr, nullptr, 0.2, 8, {}};
  PolicyGenome a = pop.species[0][0], b = pop.species[0][0];
  EXPECT_EQ(evaluate_policy(a, shape, ctx, 3).fitness, evaluate_policy(b, shape, ctx, 3).fitness);
  ctx.exploration_noise = 0.0;
  const double f1 = evaluate_policy(a, shape, ctx, 3).fitness;
  const double f2 = evaluate_policy(a, shape, ctx, 4).fitness;
  EXPECT_EQ(f1, f2);
  EvaluationContext missing;
  EXPECT_THROW(evaluate_policy(a, shape, missing, 1), std::invalid_argument);
}

TEST(SelectElites, TopKByAverageFitness) {
  std::vector<PolicyGenome> species;
  for (std::uint64_t i = 0; i < 10; ++i) species.push_back(genome(i, double(i)));
  const auto elites = select_elites(species, 4);
  ASSERT_EQ(elites.size(), 4u);
  const std::vector<std::uint64_t> want{9, 8, 7, 6};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(elites[i].id, want[i]);
    EXPECT_EQ(elites[i].age, 1u);
  }
}

TEST(SelectElites, TiesBreakOnLowerId) {
  std::vector<PolicyGenome> species{genome(5, 1.0), genome(2, 1.0), genome(7, 3.0), genome(1, 1.0)};
  const auto elites = select_elites(species, 3);
  EXPECT_EQ(elites[0].id, 7u);
  EXPECT_EQ(elites[1].id, 1u);
  EXPECT_EQ(elites[2].id, 2u);
}

TEST(SelectElites, UnevaluatedThrows) {
  std::vector<PolicyGenome> species{genome(0, 1.0), PolicyGenome{}};
  EXPECT_THROW(select_elites(species, 1), std::logic_error);
  EXPECT_THROW(select_elites({genome(0, 1.0)}, 2), std::invalid_argument);
}

TEST(SelectElites, AgesAccumulate) {
  std::vector<PolicyGenome> species{genome(0, 5.0), genome(1, 1.0)};
  auto elites = select_elites(species, 1);
  elites = select_elites({elites[0], genome(2, 0.0)}, 1);
  EXPECT_EQ(elites[0].id, 0u);
  EXPECT_EQ(elites[0].age, 2u);
}

TEST(Mutation, ZeroStepsIsFreshClone) {
  const nn::NetworkShape shape{4, 8, 2, nn::Activation::relu, nn::OutputActivation::bounded};
  PolicyGenome g = genome(3, 2.0);
  g.params = nn::init_parameters(shape, 1);
  g.age = 4;
  const ReplayBuffer buffer = filled_buffer(2, {0, 1});
  const PolicyGenome child =
      mutate_policy(g, 1, shape, TargetActionCritic{}, buffer, {0, 32, 0.006, 1.0}, 1);
  EXPECT_EQ(child.params, g.params);
  EXPECT_EQ(child.species, 1u);
  EXPECT_FALSE(child.evaluated());
  EXPECT_EQ(child.age, 0u);
}

TEST(Mutation, ClimbsStubCritic) {
  const nn::NetworkShape shape{4, 16, 2, nn::Activation::relu, nn::OutputActivation::bounded};
  PolicyGenome g;
  g.params = nn::init_parameters(shape, 2);
  const ReplayBuffer buffer = filled_buffer(2, {0, 1});
  const Eigen::MatrixXd states = buffer.sample_species(0, 64, std::uint64_t(1)).states;
  const TargetActionCritic critic;
  const auto gap = [&](const nn::ParameterVector& p) {
    return (nn::forward_batch(shape, p, states).array() - 0.4).abs().mean();
  };
  const PolicyGenome child = mutate_policy(g, 0, shape, critic, buffer, {200, 64, 0.006, 1.0}, 3);
  EXPECT_LT(gap(child.params), 0.2 * gap(g.params));
  const PolicyGenome again = mutate_policy(g, 0, shape, critic, buffer, {200, 64, 0.006, 1.0}, 3);
  EXPECT_EQ(child.params, again.params);
}

TEST(Mutation, FallsBackToUniformStates) {
  const nn::NetworkShape shape{4, 8, 2, nn::Activation::relu, nn::OutputActivation::bounded};
  PolicyGenome g;
  g.params = nn::init_parameters(shape, 4);
  const ReplayBuffer buffer = filled_buffer(3, {0});
  ASSERT_TRUE(buffer.species_slots(2).empty());
  PolicyGenome child;
  EXPECT_NO_THROW(child = mutate_policy(g, 2, shape, TargetActionCritic{}, buffer,
                                        {4, 16, 0.006, 1.0}, 5));
  EXPECT_NE(child.params, g.params);
  EXPECT_EQ(child.species, 2u);
}

TEST(Evolve, RefillsSpeciesFromElites) {
  env::PointMass2D environment;
  const nn::NetworkShape shape = policy_shape(environment.spec(), 8);
  const PopulationConfig pc{12, 3, 2};
  SpeciesPopulation pop = init_population(pc, shape, 9);
  double f = 0.0;
  for (auto& s : pop.species) {
    for (auto& g : s) g.record(f += 1.0, Eigen::Vector2d(0.5, 0.5));
  }
  const ReplayBuffer buffer = filled_buffer(3, {0, 1, 2});
  const EvolveOutcome out = evolve(pop, pc.elites, TargetActionCritic{}, buffer,
                                   {2, 16, 0.006, 1.0}, 10);
  EXPECT_EQ(out.offspring, 6u);
  EXPECT_EQ(out.population.size(), 12u);
  EXPECT_EQ(out.population.next_id, 18u);
  ASSERT_EQ(out.elite_stats.size(), 3u);
  for (std::size_t z = 0; z < 3; ++z) {
    const auto& members = out.population.species[z];
    ASSERT_EQ(members.size(), 4u);
    // The two last-recorded genomes of each species are its elites.
    EXPECT_EQ(members[0].id, pop.species[z][3].id);
    EXPECT_EQ(members[1].id, pop.species[z][2].id);
    EXPECT_EQ(members[0].params, pop.species[z][3].params);
    EXPECT_DOUBLE_EQ(out.elite_stats[z].average_fitness, double(4 * z) + 3.5);
    EXPECT_DOUBLE_EQ(out.elite_stats[z].average_age, 1.0);
    for (std::size_t i = 2; i < 4; ++i) {
      EXPECT_EQ(members[i].species, z);
      EXPECT_FALSE(members[i].evaluated());
      EXPECT_GE(members[i].id, 12u);
    }
  }
  EXPECT_EQ(pop.species[0][0].age, 0u);
}

}  // namespace
}  // namespace dqs
