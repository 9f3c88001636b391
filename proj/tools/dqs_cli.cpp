// dqs command-line driver: run, baseline, centroids, dump-archive.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "dqs/dqs.hpp"

namespace {

std::string flag_name(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

// Hyphenated flag plus the literal field name when they differ.
std::string flag_names(const std::string& key) {
  const std::string hyphenated = flag_name(key);
  return hyphenated == "--" + key ? hyphenated : hyphenated + ",--" + key;
}

// Registers one string option per config key; values are applied after the
// config file so flags win.
struct ConfigFlags {
  std::string config_file;
  std::map<std::string, std::string> values;

  void attach(CLI::App& app, bool require_seed_and_out) {
    app.add_option("--config", config_file, "key = value config file");
    for (const auto& [key, field] : dqs::config_fields()) {
      auto* opt = app.add_option(flag_names(key), values[key], field.help);
      if (require_seed_and_out && (key == "seed" || key == "out_dir")) opt->required();
    }
  }

  dqs::RunConfig build(const CLI::App& app) const {
    dqs::RunConfig config;
    if (!config_file.empty()) config = dqs::parse_config_file(config_file);
    for (const auto& [key, value] : values) {
      if (app.count(flag_name(key)) > 0) dqs::set_config_value(config, key, value);
    }
    return config;
  }
};

int run_experiment(const dqs::RunConfig& config) {
  config.validate();
  const dqs::RunRecord record = dqs::run(config);
  dqs::write_run_outputs(record, config.out_dir);
  const auto& last = record.metrics.back();
  std::cout << dqs::to_string(config.algorithm) << " on " << config.env << ": "
            << record.metrics.size() << " generations, " << last.eval_count
            << " evaluations, qd_score " << last.qd_score << ", coverage " << last.coverage
            << ", " << record.wall_seconds << " s -> " << config.out_dir << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  dqs::tune_allocator();
  CLI::App app{"Diverse Quality Species: speciated quality-diversity optimization"};
  app.require_subcommand(1);

  ConfigFlags run_flags;
  auto* run_cmd = app.add_subcommand("run", "run an experiment (algorithm from config, default dqs)");
  run_flags.attach(*run_cmd, true);

  ConfigFlags baseline_flags;
  auto* baseline_cmd = app.add_subcommand("baseline", "run the Gaussian MAP-Elites baseline");
  baseline_flags.attach(*baseline_cmd, true);

  auto* centroids_cmd = app.add_subcommand("centroids", "compute CVT archive centroids");
  std::size_t n_cells = 1024;
  std::string env_name = "point_mass_2d";
  std::uint64_t centroid_seed = 0;
  std::string centroid_out;
  centroids_cmd->add_option("--n-cells", n_cells, "number of cells");
  centroids_cmd->add_option("--env", env_name, "environment whose descriptor size to use");
  centroids_cmd->add_option("--seed", centroid_seed, "archive seed")->required();
  centroids_cmd->add_option("--out-dir", centroid_out, "output directory")->required();

  auto* dump_cmd = app.add_subcommand("dump-archive", "rebuild a run's archive from its offer log");
  std::string run_dir;
  std::optional<std::size_t> generation;
  std::string dump_out;
  dump_cmd->add_option("--run-dir", run_dir, "output directory of a finished run")->required();
  dump_cmd->add_option("--generation", generation, "last generation to include (default: all)");
  dump_cmd->add_option("--out", dump_out, "output CSV (default: stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) return run_experiment(run_flags.build(*run_cmd));
    if (baseline_cmd->parsed()) {
      auto config = baseline_flags.build(*baseline_cmd);
      config.algorithm = dqs::Algorithm::map_elites_baseline;
      return run_experiment(config);
    }
    if (centroids_cmd->parsed()) {
      const std::size_t bd_dim = dqs::environment_bd_dim(env_name);
      if (n_cells == 0) throw dqs::ConfigError("n_cells", "must be >= 1");
      const auto centroids = dqs::build_centroids(
          n_cells, bd_dim, dqs::derive_seed(centroid_seed, dqs::Stream::centroids));
      std::filesystem::create_directories(centroid_out);
      std::ofstream out(std::filesystem::path(centroid_out) / "centroids.csv");
      dqs::write_centroids_csv(out, centroids);
      return 0;
    }
    if (dump_cmd->parsed()) {
      const std::filesystem::path dir(run_dir);
      std::ifstream centroids_in(dir / "centroids.csv");
      std::ifstream offers_in(dir / "archive_offers.csv");
      if (!centroids_in || !offers_in) {
        std::cerr << "error: " << run_dir << " lacks centroids.csv or archive_offers.csv\n";
        return 1;
      }
      const auto archive = dqs::replay_archive(dqs::read_centroids_csv(centroids_in),
                                               dqs::read_offers_csv(offers_in), generation);
      if (dump_out.empty()) {
        archive.write_csv(std::cout);
      } else {
        std::ofstream out(dump_out);
        archive.write_csv(out);
      }
      return 0;
    }
  } catch (const dqs::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
