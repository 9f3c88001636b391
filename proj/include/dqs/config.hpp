#ifndef DQS_CONFIG_HPP
#define DQS_CONFIG_HPP

// Run configuration: defaults, key=value file parsing, validation and echo.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dqs {

class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& key, const std::string& message)
      : std::invalid_argument(key + ": " + message), key_(key) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

enum class Algorithm { dqs, map_elites_baseline };

struct RunConfig {
  // Population and evolution.
  std::size_t population_size = 64;
  std::size_t num_species = 8;  // m
  double lambda = 0.05;
  std::size_t elites = 4;  // K
  std::size_t n_grad = 64;
  std::size_t critic_update_freq = 8;

  // Network sizes and learning rates.
  std::size_t policy_hidden = 128;
  std::size_t actor_hidden = 256;
  std::size_t critic_hidden = 256;
  std::size_t discriminator_hidden = 256;
  double learning_rate = 0.003;  // species actor, critics, discriminator
  double policy_learning_rate = 0.006;

  // TD3.
  std::size_t num_eval = 10000;
  std::size_t batch_size = 256;  // N
  double gamma = 0.99;
  double tau = 0.005;
  double exploration_noise = 0.2;
  double sigma = 0.2;
  double noise_clip = 0.5;   // c
  std::size_t policy_delay = 2;  // d
  std::size_t buffer_size = std::size_t(1) << 19;

  // Experiment plumbing.
  std::string env = "point_mass_2d";
  std::uint64_t seed = 0;
  std::size_t n_cells = 1024;
  std::uint64_t archive_seed = 0;
  std::string centroids_file;
  std::string out_dir;
  Algorithm algorithm = Algorithm::dqs;
  bool parallel_eval = false;
  double baseline_mutation_std = 0.1;
  bool record_wall_time = false;

  void validate() const;
};

namespace config_detail {

inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw std::runtime_error("cannot format double");
  return std::string(buf, end);
}

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end) throw ConfigError(key, "cannot parse '" + text + "'");
  return value;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(key, "expected true or false, got '" + text + "'");
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
  std::string help;
};

template <class T>
Field number_field(T RunConfig::*member, std::string key, std::string help) {
  return {[member, key](RunConfig& c, const std::string& v) {
            if constexpr (std::is_same_v<T, double>) {
              c.*member = parse_number<double>(key, v);
            } else {
              if (!v.empty() && v.front() == '-') throw ConfigError(key, "must be non-negative");
              c.*member = parse_number<T>(key, v);
            }
          },
          [member](const RunConfig& c) {
            if constexpr (std::is_same_v<T, double>) {
              return format_double(c.*member);
            } else {
              return std::to_string(c.*member);
            }
          },
          std::move(help)};
}

inline Field string_field(std::string RunConfig::*member, std::string help) {
  return {[member](RunConfig& c, const std::string& v) { c.*member = v; },
          [member](const RunConfig& c) { return c.*member; }, std::move(help)};
}

inline Field bool_field(bool RunConfig::*member, std::string key, std::string help) {
  return {[member, key](RunConfig& c, const std::string& v) { c.*member = parse_bool(key, v); },
          [member](const RunConfig& c) { return std::string(c.*member ? "true" : "false"); },
          std::move(help)};
}

}  // namespace config_detail

inline std::string to_string(Algorithm a) {
  return a == Algorithm::dqs ? "dqs" : "map_elites_baseline";
}

/// Canonical keys in echo order.
inline const std::vector<std::pair<std::string, config_detail::Field>>& config_fields() {
  using namespace config_detail;
  static const std::vector<std::pair<std::string, Field>> fields = {
      {"algorithm",
       {[](RunConfig& c, const std::string& v) {
          if (v == "dqs") {
            c.algorithm = Algorithm::dqs;
          } else if (v == "map_elites_baseline") {
            c.algorithm = Algorithm::map_elites_baseline;
          } else {
            throw ConfigError("algorithm", "expected dqs or map_elites_baseline, got '" + v + "'");
          }
        },
        [](const RunConfig& c) { return to_string(c.algorithm); }, "dqs | map_elites_baseline"}},
      {"env", string_field(&RunConfig::env, "point_mass_2d | planar_arm")},
      {"seed", number_field(&RunConfig::seed, "seed", "master seed")},
      {"out_dir", string_field(&RunConfig::out_dir, "output directory")},
      {"population_size", number_field(&RunConfig::population_size, "population_size", "population size")},
      {"num_species", number_field(&RunConfig::num_species, "num_species", "number of species m")},
      {"lambda", number_field(&RunConfig::lambda, "lambda", "diversity reward scale")},
      {"elites", number_field(&RunConfig::elites, "elites", "species elites K")},
      {"n_grad", number_field(&RunConfig::n_grad, "n_grad", "policy update steps per offspring")},
      {"critic_update_freq", number_field(&RunConfig::critic_update_freq, "critic_update_freq", "environment steps between learner updates")},
      {"policy_hidden", number_field(&RunConfig::policy_hidden, "policy_hidden", "population policy hidden size")},
      {"actor_hidden", number_field(&RunConfig::actor_hidden, "actor_hidden", "species actor hidden size")},
      {"critic_hidden", number_field(&RunConfig::critic_hidden, "critic_hidden", "species critic hidden size")},
      {"discriminator_hidden", number_field(&RunConfig::discriminator_hidden, "discriminator_hidden", "discriminator hidden size")},
      {"learning_rate", number_field(&RunConfig::learning_rate, "learning_rate", "actor/critic/discriminator learning rate")},
      {"policy_learning_rate", number_field(&RunConfig::policy_learning_rate, "policy_learning_rate", "population policy learning rate")},
      {"num_eval", number_field(&RunConfig::num_eval, "num_eval", "evaluation budget")},
      {"batch_size", number_field(&RunConfig::batch_size, "batch_size", "batch size N")},
      {"gamma", number_field(&RunConfig::gamma, "gamma", "discount factor")},
      {"tau", number_field(&RunConfig::tau, "tau", "target update rate")},
      {"exploration_noise", number_field(&RunConfig::exploration_noise, "exploration_noise", "rollout action noise (fraction of action bound)")},
      {"sigma", number_field(&RunConfig::sigma, "sigma", "target smoothing noise (fraction of action bound)")},
      {"noise_clip", number_field(&RunConfig::noise_clip, "noise_clip", "target noise clip c (fraction of action bound)")},
      {"policy_delay", number_field(&RunConfig::policy_delay, "policy_delay", "critic updates per actor/target update d")},
      {"buffer_size", number_field(&RunConfig::buffer_size, "buffer_size", "replay buffer capacity")},
      {"n_cells", number_field(&RunConfig::n_cells, "n_cells", "archive cells")},
      {"archive_seed", number_field(&RunConfig::archive_seed, "archive_seed", "seed for archive centroids")},
      {"centroids_file", string_field(&RunConfig::centroids_file, "precomputed centroids CSV (optional)")},
      {"parallel_eval", bool_field(&RunConfig::parallel_eval, "parallel_eval", "rollouts first, learner updates after")},
      {"baseline_mutation_std", number_field(&RunConfig::baseline_mutation_std, "baseline_mutation_std", "MAP-Elites baseline Gaussian mutation std")},
      {"record_wall_time", bool_field(&RunConfig::record_wall_time, "record_wall_time", "fill the wall_seconds metrics column")},
  };
  return fields;
}

/// Single-symbol spellings accepted in config files.
inline const std::map<std::string, std::string>& config_aliases() {
  static const std::map<std::string, std::string> aliases = {
      {"population", "population_size"}, {"m", "num_species"}, {"K", "elites"},
      {"N", "batch_size"}, {"c", "noise_clip"}, {"d", "policy_delay"}};
  return aliases;
}

inline std::string canonical_key(const std::string& key) {
  const auto& aliases = config_aliases();
  if (auto it = aliases.find(key); it != aliases.end()) return it->second;
  return key;
}

inline void set_config_value(RunConfig& config, const std::string& raw_key,
                             const std::string& value) {
  const std::string key = canonical_key(raw_key);
  for (const auto& [name, field] : config_fields()) {
    if (name == key) {
      field.set(config, value);
      return;
    }
  }
  throw ConfigError(raw_key, "unknown configuration key");
}

/// `key = value` lines; `#` starts a comment.
inline void apply_config_text(RunConfig& config, std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = config_detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no), "expected key = value");
    }
    set_config_value(config, config_detail::trim(body.substr(0, eq)),
                     config_detail::trim(body.substr(eq + 1)));
  }
}

inline RunConfig parse_config_file(const std::string& path) {
  RunConfig config;
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot read '" + path + "'");
  apply_config_text(config, in);
  return config;
}

inline void write_config_echo(std::ostream& out, const RunConfig& config) {
  for (const auto& [name, field] : config_fields()) out << name << " = " << field.get(config) << '\n';
}

inline void RunConfig::validate() const {
  if (num_species == 0) throw ConfigError("num_species", "must be >= 1");
  if (population_size == 0) throw ConfigError("population_size", "must be >= 1");
  if (population_size % num_species != 0) {
    throw ConfigError("population_size", std::to_string(population_size) +
                                             " is not divisible by num_species = " +
                                             std::to_string(num_species));
  }
  if (elites == 0) throw ConfigError("elites", "must be >= 1");
  if (elites >= population_size / num_species) {
    throw ConfigError("elites", "K = " + std::to_string(elites) +
                                    " must be smaller than the species size " +
                                    std::to_string(population_size / num_species));
  }
  if (!(lambda >= 0.0)) throw ConfigError("lambda", "must be >= 0");
  if (num_eval < population_size) throw ConfigError("num_eval", "must be >= population_size");
  if (env != "point_mass_2d" && env != "planar_arm") {
    throw ConfigError("env", "unknown environment '" + env + "'");
  }
  if (critic_update_freq == 0) throw ConfigError("critic_update_freq", "must be >= 1");
  if (batch_size == 0) throw ConfigError("batch_size", "must be >= 1");
  if (policy_hidden == 0 || actor_hidden == 0 || critic_hidden == 0 || discriminator_hidden == 0) {
    throw ConfigError("hidden sizes", "must be >= 1");
  }
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma", "must lie in (0, 1]");
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("tau", "must lie in [0, 1]");
  if (policy_delay == 0) throw ConfigError("policy_delay", "must be >= 1");
  if (!(noise_clip > 0.0)) throw ConfigError("noise_clip", "must be > 0");
  if (!(sigma >= 0.0)) throw ConfigError("sigma", "must be >= 0");
  if (!(exploration_noise >= 0.0)) throw ConfigError("exploration_noise", "must be >= 0");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate", "must be > 0");
  if (!(policy_learning_rate > 0.0)) throw ConfigError("policy_learning_rate", "must be > 0");
  if (buffer_size == 0) throw ConfigError("buffer_size", "must be >= 1");
  if (n_cells == 0) throw ConfigError("n_cells", "must be >= 1");
  if (!(baseline_mutation_std >= 0.0)) throw ConfigError("baseline_mutation_std", "must be >= 0");
}

}  // namespace dqs

#endif  // DQS_CONFIG_HPP
