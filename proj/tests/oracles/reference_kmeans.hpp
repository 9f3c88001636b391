#ifndef DQS_TESTS_REFERENCE_KMEANS_HPP
#define DQS_TESTS_REFERENCE_KMEANS_HPP

// Textbook Lloyd iteration over the same uniform sample stream as
// build_centroids: samples drawn point by point, first n_cells samples as
// initial centres, empty clusters left in place.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

namespace dqs::oracle {

inline std::vector<std::vector<double>> reference_kmeans(std::size_t n_cells, std::size_t dim,
                                                         std::uint64_t seed,
                                                         std::size_t iterations,
                                                         std::size_t samples_per_cell) {
  std::mt19937_64 rng{seed};
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<double>> samples(n_cells * samples_per_cell, std::vector<double>(dim));
  for (auto& s : samples) {
    for (auto& v : s) v = unit(rng);
  }
  std::vector<std::vector<double>> centres(samples.begin(), samples.begin() + long(n_cells));
  for (std::size_t it = 0; it < iterations; ++it) {
    std::vector<std::vector<double>> sums(n_cells, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(n_cells, 0);
    for (const auto& s : samples) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < n_cells; ++k) {
        double d = 0.0;
        for (std::size_t i = 0; i < dim; ++i) d += (centres[k][i] - s[i]) * (centres[k][i] - s[i]);
        if (d < best_d) {
          best_d = d;
          best = k;
        }
      }
      for (std::size_t i = 0; i < dim; ++i) sums[best][i] += s[i];
      ++counts[best];
    }
    for (std::size_t k = 0; k < n_cells; ++k) {
      if (counts[k] == 0) continue;
      for (std::size_t i = 0; i < dim; ++i) centres[k][i] = sums[k][i] / double(counts[k]);
    }
  }
  return centres;
}

}  // namespace dqs::oracle

#endif
