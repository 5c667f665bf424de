#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "attnvlad/matrix.hpp"
#include "attnvlad/regional_features.hpp"

namespace attnvlad {

inline constexpr char kCodebookMagic[8] = {'A', 'T', 'T', 'N', 'C', 'D', 'B', 'K'};
inline constexpr std::uint32_t kCodebookFormatVersion = 1;

using Sha256Digest = std::array<std::uint8_t, 32>;

struct TrainingMeta {
  std::uint32_t iterations = 0;
  double inertia = 0.0;
  std::uint64_t seed = 0;
  Sha256Digest corpus_hash{};

  friend bool operator==(const TrainingMeta&, const TrainingMeta&) = default;
};

// V centroids in K-dimensional space. Immutable once built.
class Codebook {
public:
  // Throws Error{Validation} for V < 2, non-finite entries or duplicate
  // centroids.
  Codebook(Matrix centroids, TrainingMeta meta = {});

  std::size_t clusters() const noexcept { return centroids_.rows(); }
  std::size_t dims() const noexcept { return centroids_.cols(); }
  const Matrix& centroids() const noexcept { return centroids_; }
  const TrainingMeta& meta() const noexcept { return meta_; }

  // Nearest centroid by Euclidean distance; ties go to the lowest index.
  std::size_t assign(std::span<const float> row) const;
  std::vector<std::size_t> assign(const Matrix& features) const;

  friend bool operator==(const Codebook&, const Codebook&) = default;

private:
  Matrix centroids_;
  TrainingMeta meta_;
};

struct KMeansOptions {
  std::size_t clusters = 128;
  std::uint64_t seed = 1;
  std::uint32_t max_iters = 100;
  double tol = 1e-4; // relative centroid shift
  std::uint32_t restarts = 10; // independent starts, lowest inertia kept
  unsigned jobs = 1;
};

struct KMeansResult {
  std::vector<std::vector<double>> centroids; // V x K, double precision
  std::vector<std::size_t> labels;
  double inertia = 0.0;
  std::uint32_t iterations = 0;
  // Objective after every assignment step, plus the final one.
  std::vector<double> inertia_history;
};

// Lloyd iterations from seeded k-means++ starts; the run with the lowest
// inertia wins (earliest on ties). Empty clusters take the
// point farthest from its own centroid. Throws Error{Training} when the data
// has fewer distinct rows than clusters, Error{Parameter} for clusters < 2 or
// max_iters == 0.
KMeansResult kmeans(const Matrix& rows, const KMeansOptions& options);

// Stacks every set's rows in order and trains on them. The corpus hash is
// SHA-256 over (K, then each row as f32le).
Codebook train_codebook(std::span<const RegionalFeatureSet> corpus, const KMeansOptions& options);
Codebook train_codebook(const Matrix& rows, const KMeansOptions& options);

Sha256Digest corpus_hash(const Matrix& rows);

std::uint64_t write_codebook(const Codebook& codebook, std::ostream& sink);
Codebook read_codebook(std::istream& source);
void save_codebook(const Codebook& codebook, const std::filesystem::path& path);
Codebook load_codebook(const std::filesystem::path& path);

} // namespace attnvlad
