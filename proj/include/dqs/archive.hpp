#ifndef DQS_ARCHIVE_HPP
#define DQS_ARCHIVE_HPP

// CVT-MAP-Elites archive used only to score a run. It stores the best
// (fitness, descriptor, species) per cell and never hands solutions back.

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dqs/random.hpp"

namespace dqs {

/// Cell centres, one column per cell.
using Centroids = Eigen::MatrixXd;

namespace detail {

inline std::size_t nearest_column(const Eigen::MatrixXd& centres, const double* point) {
  const Eigen::Index dim = centres.rows();
  const double* c = centres.data();
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < centres.cols(); ++k, c += dim) {
    double d = 0.0;
    for (Eigen::Index i = 0; i < dim; ++i) {
      const double diff = c[i] - point[i];
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = std::size_t(k);
    }
  }
  return best;
}

}  // namespace detail

/// Lloyd's k-means over uniform samples of the unit cube. Initial centres
/// are the first n_cells samples; empty clusters keep their previous centre.
inline Centroids build_centroids(std::size_t n_cells, std::size_t bd_dim, std::uint64_t seed,
                                 std::size_t iterations = 50, std::size_t samples_per_cell = 100) {
  if (n_cells == 0 || bd_dim == 0) throw std::invalid_argument("n_cells and bd_dim must be >= 1");
  Rng rng{seed};
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t n_samples = n_cells * samples_per_cell;
  Eigen::MatrixXd samples{Eigen::Index(bd_dim), Eigen::Index(n_samples)};
  for (Eigen::Index j = 0; j < samples.cols(); ++j) {
    for (Eigen::Index i = 0; i < samples.rows(); ++i) samples(i, j) = unit(rng);
  }
  Centroids centres = samples.leftCols(Eigen::Index(n_cells));
  // Row-major copy so each coordinate is contiguous across centres.
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> by_coord;
  std::vector<double> dist(n_cells);
  Eigen::MatrixXd sums(centres.rows(), centres.cols());
  std::vector<std::size_t> counts(n_cells);
  for (std::size_t it = 0; it < iterations; ++it) {
    by_coord = centres;
    sums.setZero();
    std::fill(counts.begin(), counts.end(), 0);
    for (Eigen::Index j = 0; j < samples.cols(); ++j) {
      std::fill(dist.begin(), dist.end(), 0.0);
      for (Eigen::Index i = 0; i < samples.rows(); ++i) {
        const double p = samples(i, j);
        const double* row = by_coord.row(i).data();
        double* d = dist.data();
        for (std::size_t k = 0; k < n_cells; ++k) {
          const double diff = row[k] - p;
          d[k] += diff * diff;
        }
      }
      std::size_t best = 0;
      for (std::size_t k = 1; k < n_cells; ++k) {
        if (dist[k] < dist[best]) best = k;
      }
      sums.col(Eigen::Index(best)) += samples.col(j);
      ++counts[best];
    }
    for (std::size_t k = 0; k < n_cells; ++k) {
      if (counts[k] > 0) centres.col(Eigen::Index(k)) = sums.col(Eigen::Index(k)) / double(counts[k]);
    }
  }
  return centres;
}

struct ArchiveEntry {
  double fitness = 0.0;
  Eigen::VectorXd descriptor;
  std::size_t species = 0;
};

class CvtArchive {
 public:
  explicit CvtArchive(Centroids centroids)
      : centroids_(std::move(centroids)), cells_(std::size_t(centroids_.cols())) {
    if (centroids_.cols() == 0) throw std::invalid_argument("archive needs at least one cell");
  }

  const Centroids& centroids() const { return centroids_; }
  std::size_t n_cells() const { return cells_.size(); }
  std::size_t bd_dim() const { return std::size_t(centroids_.rows()); }
  const std::vector<std::optional<ArchiveEntry>>& cells() const { return cells_; }

  std::size_t cell_of(const Eigen::VectorXd& descriptor) const {
    if (std::size_t(descriptor.size()) != bd_dim()) {
      throw std::invalid_argument("descriptor dimension does not match the archive");
    }
    for (Eigen::Index i = 0; i < descriptor.size(); ++i) {
      if (!(descriptor[i] >= 0.0 && descriptor[i] <= 1.0)) {
        throw std::out_of_range("descriptor component outside [0, 1]");
      }
    }
    return detail::nearest_column(centroids_, descriptor.data());
  }

  /// Replaces the cell occupant only on strictly greater fitness.
  bool insert(const Eigen::VectorXd& descriptor, double fitness, std::size_t species) {
    auto& cell = cells_[cell_of(descriptor)];
    if (cell && !(fitness > cell->fitness)) return false;
    if (!cell) ++filled_;
    cell = ArchiveEntry{fitness, descriptor, species};
    return true;
  }

  std::size_t filled() const { return filled_; }

  double qd_score() const {
    double total = 0.0;
    for (const auto& c : cells_) {
      if (c) total += c->fitness;
    }
    return total;
  }

  /// Empty archive has no maximum.
  std::optional<double> max_fitness() const {
    std::optional<double> best;
    for (const auto& c : cells_) {
      if (c && (!best || c->fitness > *best)) best = c->fitness;
    }
    return best;
  }

  double coverage() const { return double(filled_) / double(cells_.size()); }

  /// One row per filled cell: cell, centroid, descriptor, fitness, species.
  void write_csv(std::ostream& out) const {
    out << "cell";
    for (std::size_t i = 0; i < bd_dim(); ++i) out << ",centroid_" << i;
    for (std::size_t i = 0; i < bd_dim(); ++i) out << ",descriptor_" << i;
    out << ",fitness,species_id\n";
    const auto old_precision = out.precision(17);
    for (std::size_t k = 0; k < cells_.size(); ++k) {
      if (!cells_[k]) continue;
      out << k;
      for (std::size_t i = 0; i < bd_dim(); ++i) out << ',' << centroids_(Eigen::Index(i), Eigen::Index(k));
      for (std::size_t i = 0; i < bd_dim(); ++i) out << ',' << cells_[k]->descriptor[Eigen::Index(i)];
      out << ',' << cells_[k]->fitness << ',' << cells_[k]->species << '\n';
    }
    out.precision(old_precision);
  }

 private:
  Centroids centroids_;
  std::vector<std::optional<ArchiveEntry>> cells_;
  std::size_t filled_ = 0;
};

/// Mean Euclidean distance between per-species mean descriptors over all
/// unordered species pairs; 0 with a single species.
inline double species_separation(const std::vector<std::vector<Eigen::VectorXd>>& by_species) {
  std::vector<Eigen::VectorXd> means;
  means.reserve(by_species.size());
  for (std::size_t z = 0; z < by_species.size(); ++z) {
    const auto& group = by_species[z];
    if (group.empty()) {
      throw std::invalid_argument("species " + std::to_string(z) + " has no descriptors");
    }
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(group.front().size());
    for (const auto& d : group) mean += d;
    means.push_back(mean / double(group.size()));
  }
  if (means.size() < 2) return 0.0;
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < means.size(); ++a) {
    for (std::size_t b = a + 1; b < means.size(); ++b) {
      total += (means[a] - means[b]).norm();
      ++pairs;
    }
  }
  return total / double(pairs);
}

}  // namespace dqs

#endif  // DQS_ARCHIVE_HPP
