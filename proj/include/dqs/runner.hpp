#ifndef DQS_RUNNER_HPP
#define DQS_RUNNER_HPP

// Experiment driver: the DQS generation loop (evaluate all, offer to the
// archive, evolve), the Gaussian MAP-Elites baseline, and the output files.

#include <Eigen/Core>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "dqs/archive.hpp"
#include "dqs/config.hpp"
#include "dqs/discriminator.hpp"
#include "dqs/environment.hpp"
#include "dqs/evolution.hpp"
#include "dqs/random.hpp"
#include "dqs/replay_buffer.hpp"
#include "dqs/td3.hpp"

namespace dqs {

struct MetricsRow {
  std::size_t generation = 0;
  std::size_t eval_count = 0;
  double qd_score = 0.0;
  std::optional<double> max_fitness;
  double coverage = 0.0;
  double mean_population_fitness = 0.0;
  double species_separation = 0.0;
  std::optional<double> discriminator_loss;
  std::optional<double> critic_loss;
  double wall_seconds = 0.0;
};

struct SpeciesStatsRow {
  std::size_t generation = 0;
  std::size_t species_id = 0;
  double avg_elite_age = 0.0;
  double avg_elite_fitness = 0.0;
};

/// Rewards actually fed to the critics during one generation.
struct RewardAuditRow {
  std::size_t generation = 0;
  std::size_t updates = 0;
  double lambda = 0.0;
  double mean_reward = 0.0;
  double mean_diversity_reward = 0.0;
  double mean_qd_reward = 0.0;
};

struct ArchiveOffer {
  std::size_t generation = 0;
  Eigen::VectorXd descriptor;
  double fitness = 0.0;
  std::size_t species = 0;
};

struct RunRecord {
  RunConfig config;
  std::vector<MetricsRow> metrics;
  std::vector<SpeciesStatsRow> species_stats;
  std::vector<RewardAuditRow> reward_audit;
  std::vector<ArchiveOffer> offers;
  std::optional<CvtArchive> archive;
  /// Latest descriptor of every policy at the final generation, by species.
  std::vector<std::vector<Eigen::VectorXd>> final_descriptors;
  double wall_seconds = 0.0;
  bool deferred_updates = false;
};

inline std::size_t environment_bd_dim(const std::string& env_name) {
  return env::make_environment(env_name)->spec().bd_dim;
}

inline void write_centroids_csv(std::ostream& out, const Centroids& centroids) {
  out << "cell";
  for (Eigen::Index i = 0; i < centroids.rows(); ++i) out << ",c" << i;
  out << '\n';
  for (Eigen::Index k = 0; k < centroids.cols(); ++k) {
    out << k;
    for (Eigen::Index i = 0; i < centroids.rows(); ++i) {
      out << ',' << config_detail::format_double(centroids(i, k));
    }
    out << '\n';
  }
}

inline Centroids read_centroids_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("centroids file is empty");
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    std::vector<double> coords;
    while (std::getline(ss, cell, ',')) coords.push_back(std::stod(cell));
    if (!rows.empty() && coords.size() != rows.front().size()) {
      throw std::runtime_error("centroids file has ragged rows");
    }
    rows.push_back(std::move(coords));
  }
  if (rows.empty() || rows.front().empty()) throw std::runtime_error("centroids file has no cells");
  Centroids c(Eigen::Index(rows.front().size()), Eigen::Index(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    for (std::size_t i = 0; i < rows[k].size(); ++i) c(Eigen::Index(i), Eigen::Index(k)) = rows[k][i];
  }
  return c;
}

/// Centroids for a run: from `centroids_file` when set, otherwise k-means.
inline Centroids run_centroids(const RunConfig& config) {
  const std::size_t bd_dim = environment_bd_dim(config.env);
  if (!config.centroids_file.empty()) {
    std::ifstream in(config.centroids_file);
    if (!in) throw ConfigError("centroids_file", "cannot read '" + config.centroids_file + "'");
    Centroids c = read_centroids_csv(in);
    if (std::size_t(c.rows()) != bd_dim || std::size_t(c.cols()) != config.n_cells) {
      throw ConfigError("centroids_file", "centroids do not match n_cells / descriptor size");
    }
    return c;
  }
  return build_centroids(config.n_cells, bd_dim, derive_seed(config.archive_seed, Stream::centroids));
}

namespace runner_detail {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

struct GenerationLosses {
  double critic = 0.0;
  double discriminator = 0.0;
  double reward = 0.0;
  double diversity_reward = 0.0;
  double qd_reward = 0.0;
  std::size_t updates = 0;
};

}  // namespace runner_detail

/// Evaluations are offered with each policy's running-average fitness and
/// its latest descriptor. `centroids` overrides the config's archive source.
inline RunRecord run_dqs(const RunConfig& config, const Centroids* centroids = nullptr) {
  config.validate();
  runner_detail::Stopwatch clock;
  RunRecord record;
  record.config = config;
  record.deferred_updates = config.parallel_eval;

  auto environment = env::make_environment(config.env);
  const env::EnvSpec spec = environment->spec();
  record.archive.emplace(centroids != nullptr ? *centroids : run_centroids(config));
  CvtArchive& archive = *record.archive;

  PopulationConfig pop_config{config.population_size, config.num_species, config.elites};
  pop_config.validate();

  Td3Config td3;
  td3.gamma = config.gamma;
  td3.tau = config.tau;
  td3.policy_delay = config.policy_delay;
  td3.smoothing_sigma = config.sigma;
  td3.noise_clip = config.noise_clip;
  td3.exploration_noise = config.exploration_noise;
  td3.batch_size = config.batch_size;
  td3.lambda = config.lambda;
  td3.action_bound = spec.action_bound;

  const std::uint64_t learner_seed = derive_seed(config.seed, Stream::learner);
  ReplayBuffer buffer(config.buffer_size, spec.state_dim, spec.action_dim, config.num_species);
  Discriminator discriminator(spec.state_dim, config.num_species, config.discriminator_hidden,
                              config.learning_rate, derive_seed(learner_seed, 1));
  SpeciesLearner learner({spec.state_dim, spec.action_dim, config.num_species, config.actor_hidden,
                          config.critic_hidden, config.learning_rate},
                         td3, derive_seed(learner_seed, 2));
  Rng learner_rng{derive_seed(learner_seed, 3)};

  const MutationConfig mutation{config.n_grad, config.batch_size, config.policy_learning_rate,
                                spec.action_bound};
  SpeciesPopulation population =
      init_population(pop_config, policy_shape(spec, config.policy_hidden),
                      derive_seed(config.seed, Stream::init));

  runner_detail::GenerationLosses losses;
  auto learner_update = [&] {
    const TransitionBatch batch = buffer.sample_uniform(config.batch_size, learner_rng);
    const LearnerStep step = learner.train(batch, learner_rng);
    losses.critic += 0.5 * (step.critic_loss1 + step.critic_loss2);
    losses.discriminator += discriminator.train_step(batch.states, batch.species);
    losses.reward += step.mean_reward;
    losses.diversity_reward += step.mean_diversity_reward;
    losses.qd_reward += step.mean_qd_reward;
    ++losses.updates;
  };

  std::size_t eval_count = 0;
  for (std::size_t generation = 0; eval_count < config.num_eval; ++generation) {
    losses = {};
    const std::size_t first_eval = eval_count;

    if (!config.parallel_eval) {
      EvaluationContext ctx{environment.get(), &buffer, &discriminator, config.exploration_noise,
                            config.critic_update_freq, learner_update};
      std::size_t index = 0;
      for (auto& species : population.species) {
        for (auto& genome : species) {
          evaluate_policy(genome, population.policy_shape, ctx,
                          derive_seed(config.seed, Stream::environment, first_eval + index++));
        }
      }
    } else {
      // Rollouts against a frozen learner, then the same number of updates.
      std::vector<PolicyGenome*> genomes;
      for (auto& species : population.species) {
        for (auto& genome : species) genomes.push_back(&genome);
      }
      std::vector<env::EpisodeResult> episodes(genomes.size());
      const std::size_t workers =
          std::max<std::size_t>(1, std::min<std::size_t>(std::thread::hardware_concurrency(), genomes.size()));
      std::vector<std::thread> threads;
      for (std::size_t w = 0; w < workers; ++w) {
        threads.emplace_back([&, w] {
          auto local_env = environment->clone();
          EvaluationContext ctx{local_env.get(), nullptr, &discriminator, config.exploration_noise,
                                config.critic_update_freq, {}};
          for (std::size_t i = w; i < genomes.size(); i += workers) {
            episodes[i] = evaluate_policy(*genomes[i], population.policy_shape, ctx,
                                          derive_seed(config.seed, Stream::environment, first_eval + i));
          }
        });
      }
      for (auto& t : threads) t.join();
      for (const auto& episode : episodes) {
        for (const auto& tr : episode.transitions) buffer.push(tr);
        for (std::size_t t = 1; t <= episode.transitions.size(); ++t) {
          if (t % config.critic_update_freq == 0) learner_update();
        }
      }
    }
    eval_count += population.size();

    MetricsRow row;
    row.generation = generation;
    row.eval_count = eval_count;
    double fitness_total = 0.0;
    std::vector<std::vector<Eigen::VectorXd>> descriptors(population.species.size());
    for (std::size_t z = 0; z < population.species.size(); ++z) {
      for (const auto& genome : population.species[z]) {
        const double fitness = genome.average_fitness();
        archive.insert(genome.last_descriptor, fitness, z);
        record.offers.push_back({generation, genome.last_descriptor, fitness, z});
        descriptors[z].push_back(genome.last_descriptor);
        fitness_total += fitness;
      }
    }
    row.qd_score = archive.qd_score();
    row.max_fitness = archive.max_fitness();
    row.coverage = archive.coverage();
    row.mean_population_fitness = fitness_total / double(population.size());
    row.species_separation = species_separation(descriptors);
    if (losses.updates > 0) {
      const double n = double(losses.updates);
      row.critic_loss = losses.critic / n;
      row.discriminator_loss = losses.discriminator / n;
      record.reward_audit.push_back({generation, losses.updates, config.lambda, losses.reward / n,
                                     losses.diversity_reward / n, losses.qd_reward / n});
    }
    record.final_descriptors = std::move(descriptors);

    EvolveOutcome next = evolve(population, config.elites, learner.critic(), buffer, mutation,
                                derive_seed(config.seed, Stream::mutation, generation));
    for (const auto& s : next.elite_stats) {
      record.species_stats.push_back({generation, s.species, s.average_age, s.average_fitness});
    }
    population = std::move(next.population);

    if (config.record_wall_time) row.wall_seconds = clock.seconds();
    record.metrics.push_back(row);
  }
  record.wall_seconds = clock.seconds();
  return record;
}

/// MAP-Elites with Gaussian parameter mutation on the same archive. The
/// first population_size evaluations are random policies.
inline RunRecord run_map_elites_baseline(const RunConfig& config,
                                         const Centroids* centroids = nullptr) {
  config.validate();
  runner_detail::Stopwatch clock;
  RunRecord record;
  record.config = config;

  auto environment = env::make_environment(config.env);
  const env::EnvSpec spec = environment->spec();
  record.archive.emplace(centroids != nullptr ? *centroids : run_centroids(config));
  CvtArchive& archive = *record.archive;
  const nn::NetworkShape shape = policy_shape(spec, config.policy_hidden);

  std::map<std::size_t, nn::ParameterVector> elites;  // cell -> parameters
  Rng rng{derive_seed(config.seed, Stream::baseline)};
  std::normal_distribution<double> perturb(0.0, config.baseline_mutation_std);
  std::uint64_t next_id = 0;

  std::size_t eval_count = 0;
  for (std::size_t generation = 0; eval_count < config.num_eval; ++generation) {
    double fitness_total = 0.0;
    std::vector<std::vector<Eigen::VectorXd>> descriptors(1);
    for (std::size_t i = 0; i < config.population_size; ++i) {
      PolicyGenome genome;
      genome.id = next_id++;
      if (eval_count < config.population_size || elites.empty()) {
        genome.params = nn::init_parameters(shape, derive_seed(config.seed, Stream::init, genome.id));
      } else {
        std::uniform_int_distribution<std::size_t> pick(0, elites.size() - 1);
        auto it = std::next(elites.begin(), std::ptrdiff_t(pick(rng)));
        genome.params = it->second;
        for (Eigen::Index k = 0; k < genome.params.size(); ++k) genome.params[k] += perturb(rng);
      }
      EvaluationContext ctx{environment.get(), nullptr, nullptr, 0.0, 0, {}};
      evaluate_policy(genome, shape, ctx, derive_seed(config.seed, Stream::environment, eval_count));
      ++eval_count;
      const double fitness = genome.average_fitness();
      if (archive.insert(genome.last_descriptor, fitness, 0)) {
        elites[archive.cell_of(genome.last_descriptor)] = genome.params;
      }
      record.offers.push_back({generation, genome.last_descriptor, fitness, 0});
      descriptors[0].push_back(genome.last_descriptor);
      fitness_total += fitness;
    }
    MetricsRow row;
    row.generation = generation;
    row.eval_count = eval_count;
    row.qd_score = archive.qd_score();
    row.max_fitness = archive.max_fitness();
    row.coverage = archive.coverage();
    row.mean_population_fitness = fitness_total / double(config.population_size);
    row.species_separation = species_separation(descriptors);
    if (config.record_wall_time) row.wall_seconds = clock.seconds();
    record.metrics.push_back(row);
    record.final_descriptors = std::move(descriptors);
  }
  record.wall_seconds = clock.seconds();
  return record;
}

inline RunRecord run(const RunConfig& config, const Centroids* centroids = nullptr) {
  return config.algorithm == Algorithm::dqs ? run_dqs(config, centroids)
                                            : run_map_elites_baseline(config, centroids);
}

// Output files.

inline const char* metrics_header() {
  return "generation,eval_count,qd_score,max_fitness,coverage,mean_population_fitness,"
         "species_separation,discriminator_loss,critic_loss,wall_seconds";
}

inline void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
  using config_detail::format_double;
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  out << metrics_header() << '\n';
  for (const auto& r : rows) {
    out << r.generation << ',' << r.eval_count << ',' << format_double(r.qd_score) << ','
        << opt(r.max_fitness) << ',' << format_double(r.coverage) << ','
        << format_double(r.mean_population_fitness) << ',' << format_double(r.species_separation)
        << ',' << opt(r.discriminator_loss) << ',' << opt(r.critic_loss) << ','
        << format_double(r.wall_seconds) << '\n';
  }
}

inline void write_species_stats_csv(std::ostream& out, const std::vector<SpeciesStatsRow>& rows) {
  using config_detail::format_double;
  out << "generation,species_id,avg_elite_age,avg_elite_fitness\n";
  for (const auto& r : rows) {
    out << r.generation << ',' << r.species_id << ',' << format_double(r.avg_elite_age) << ','
        << format_double(r.avg_elite_fitness) << '\n';
  }
}

inline void write_reward_audit_csv(std::ostream& out, const std::vector<RewardAuditRow>& rows) {
  using config_detail::format_double;
  out << "generation,updates,lambda,mean_env_reward,mean_diversity_reward,mean_qd_reward\n";
  for (const auto& r : rows) {
    out << r.generation << ',' << r.updates << ',' << format_double(r.lambda) << ','
        << format_double(r.mean_reward) << ',' << format_double(r.mean_diversity_reward) << ','
        << format_double(r.mean_qd_reward) << '\n';
  }
}

inline void write_offers_csv(std::ostream& out, const std::vector<ArchiveOffer>& offers,
                             std::size_t bd_dim) {
  using config_detail::format_double;
  out << "generation";
  for (std::size_t i = 0; i < bd_dim; ++i) out << ",descriptor_" << i;
  out << ",fitness,species_id\n";
  for (const auto& o : offers) {
    out << o.generation;
    for (Eigen::Index i = 0; i < o.descriptor.size(); ++i) out << ',' << format_double(o.descriptor[i]);
    out << ',' << format_double(o.fitness) << ',' << o.species << '\n';
  }
}

inline std::vector<ArchiveOffer> read_offers_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("offers file is empty");
  std::vector<ArchiveOffer> offers;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 4) throw std::runtime_error("malformed offers row: " + line);
    ArchiveOffer o;
    o.generation = std::stoul(cells.front());
    o.species = std::stoul(cells.back());
    o.fitness = std::stod(cells[cells.size() - 2]);
    o.descriptor.resize(Eigen::Index(cells.size() - 3));
    for (std::size_t i = 1; i + 2 < cells.size(); ++i) o.descriptor[Eigen::Index(i - 1)] = std::stod(cells[i]);
    offers.push_back(std::move(o));
  }
  return offers;
}

/// Archive as it stood after `last_generation`, rebuilt from the offer log.
inline CvtArchive replay_archive(const Centroids& centroids, const std::vector<ArchiveOffer>& offers,
                                 std::optional<std::size_t> last_generation = std::nullopt) {
  CvtArchive archive(centroids);
  for (const auto& o : offers) {
    if (last_generation && o.generation > *last_generation) continue;
    archive.insert(o.descriptor, o.fitness, o.species);
  }
  return archive;
}

/// Writes every output file of a finished run into `dir`.
inline void write_run_outputs(const RunRecord& record, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&dir](const char* name) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(std::string("cannot write ") + (dir / name).string());
    return out;
  };
  {
    auto out = open("metrics.csv");
    write_metrics_csv(out, record.metrics);
  }
  {
    auto out = open("species_stats.csv");
    write_species_stats_csv(out, record.species_stats);
  }
  {
    auto out = open("reward_audit.csv");
    write_reward_audit_csv(out, record.reward_audit);
  }
  {
    auto out = open("config.txt");
    write_config_echo(out, record.config);
  }
  if (record.archive) {
    auto archive_out = open("archive.csv");
    record.archive->write_csv(archive_out);
    auto centroids_out = open("centroids.csv");
    write_centroids_csv(centroids_out, record.archive->centroids());
    auto offers_out = open("archive_offers.csv");
    write_offers_csv(offers_out, record.offers, record.archive->bd_dim());
  }
  {
    auto out = open("run_info.txt");
    out << "algorithm = " << to_string(record.config.algorithm) << '\n'
        << "generations = " << record.metrics.size() << '\n'
        << "eval_count = " << (record.metrics.empty() ? 0 : record.metrics.back().eval_count) << '\n'
        << "update_cadence = "
        << (record.deferred_updates ? "deferred (parallel_eval; differs from per-step updates)"
                                    : "interleaved")
        << '\n'
        << "wall_seconds = " << config_detail::format_double(record.wall_seconds) << '\n';
  }
}

}  // namespace dqs

#endif  // DQS_RUNNER_HPP
