#include "attnvlad/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "attnvlad/error.hpp"
#include "byte_io.hpp"
#include "hash.hpp"
#include "parallel.hpp"

namespace attnvlad {

namespace {

bool row_less(std::span<const float> a, std::span<const float> b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

bool row_equal(std::span<const float> a, std::span<const float> b) {
  return std::equal(a.begin(), a.end(), b.begin(), b.end());
}

std::size_t count_distinct_rows(const Matrix& m) {
  std::vector<std::size_t> order(m.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return row_less(m.row(a), m.row(b)); });
  std::size_t distinct = order.empty() ? 0 : 1;
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (!row_equal(m.row(order[i - 1]), m.row(order[i]))) ++distinct;
  }
  return distinct;
}

double squared_distance(std::span<const float> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    double t = double{a[k]} - b[k];
    d += t * t;
  }
  return d;
}

double squared_distance(std::span<const float> a, std::span<const float> b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    double t = double{a[k]} - double{b[k]};
    d += t * t;
  }
  return d;
}

// Uniform double in [0, 1) from the top 53 bits, identical on every platform.
double unit_double(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::vector<double> to_double(std::span<const float> row) {
  return std::vector<double>(row.begin(), row.end());
}

std::vector<std::vector<double>> seed_plus_plus(const Matrix& rows, std::size_t clusters,
                                                std::mt19937_64& rng) {
  const std::size_t n = rows.rows();
  std::vector<std::vector<double>> centroids;
  centroids.reserve(clusters);
  centroids.push_back(to_double(rows.row(rng() % n)));

  std::vector<double> nearest(n);
  for (std::size_t i = 0; i < n; ++i) nearest[i] = squared_distance(rows.row(i), centroids[0]);

  while (centroids.size() < clusters) {
    double total = std::accumulate(nearest.begin(), nearest.end(), 0.0);
    double target = unit_double(rng) * total;
    std::size_t pick = n;
    std::size_t last_positive = n;
    double running = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (nearest[i] <= 0.0) continue;
      last_positive = i;
      running += nearest[i];
      if (running > target) {
        pick = i;
        break;
      }
    }
    if (pick == n) pick = last_positive;
    if (pick == n) {
      throw Error(ErrorKind::Training, "k-means++ seeding ran out of distinct rows");
    }
    centroids.push_back(to_double(rows.row(pick)));
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(rows.row(i), centroids.back()));
    }
  }
  return centroids;
}

// Nearest centroid for every row, ties to the lowest index.
double assign_all(const Matrix& rows, const std::vector<std::vector<double>>& centroids,
                  std::vector<std::size_t>& labels, std::vector<double>& distances, unsigned jobs) {
  labels.resize(rows.rows());
  distances.resize(rows.rows());
  detail::parallel_for(rows.rows(), jobs, [&](std::size_t i) {
    std::size_t best = 0;
    double best_d = squared_distance(rows.row(i), centroids[0]);
    for (std::size_t c = 1; c < centroids.size(); ++c) {
      double d = squared_distance(rows.row(i), centroids[c]);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    labels[i] = best;
    distances[i] = best_d;
  });
  return std::accumulate(distances.begin(), distances.end(), 0.0);
}

// One seeded k-means++ start followed by Lloyd iterations.
KMeansResult lloyd(const Matrix& rows, const KMeansOptions& options, std::mt19937_64& rng) {
  const std::size_t n = rows.rows();
  const std::size_t dims = rows.cols();
  const std::size_t clusters = options.clusters;

  KMeansResult result;
  result.centroids = seed_plus_plus(rows, clusters, rng);
  std::vector<double> distances;
  std::vector<std::size_t> counts(clusters);

  for (std::uint32_t iter = 1; iter <= options.max_iters; ++iter) {
    assign_all(rows, result.centroids, result.labels, distances, options.jobs);

    std::fill(counts.begin(), counts.end(), 0);
    for (auto l : result.labels) ++counts[l];
    for (std::size_t c = 0; c < clusters; ++c) {
      if (counts[c] != 0) continue;
      // Farthest point (lowest index on ties) from a cluster that can spare it.
      std::size_t donor = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[result.labels[i]] < 2) continue;
        if (donor == n || distances[i] > distances[donor]) donor = i;
      }
      if (donor == n) throw Error(ErrorKind::Training, "cannot repair empty cluster");
      --counts[result.labels[donor]];
      result.labels[donor] = c;
      counts[c] = 1;
      distances[donor] = 0.0;
    }
    result.inertia_history.push_back(std::accumulate(distances.begin(), distances.end(), 0.0));

    std::vector<std::vector<double>> updated(clusters, std::vector<double>(dims, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      auto row = rows.row(i);
      auto& target = updated[result.labels[i]];
      for (std::size_t k = 0; k < dims; ++k) target[k] += row[k];
    }
    double shift = 0.0;
    double scale = 0.0;
    for (std::size_t c = 0; c < clusters; ++c) {
      for (std::size_t k = 0; k < dims; ++k) {
        updated[c][k] /= static_cast<double>(counts[c]);
        double d = updated[c][k] - result.centroids[c][k];
        shift += d * d;
        scale += result.centroids[c][k] * result.centroids[c][k];
      }
    }
    result.centroids = std::move(updated);
    result.iterations = iter;
    if (shift <= options.tol * options.tol * scale) break;
  }

  result.inertia = assign_all(rows, result.centroids, result.labels, distances, options.jobs);
  result.inertia_history.push_back(result.inertia);
  return result;
}

} // namespace

Codebook::Codebook(Matrix centroids, TrainingMeta meta)
    : centroids_(std::move(centroids)), meta_(meta) {
  if (centroids_.rows() < 2) {
    throw Error(ErrorKind::Validation, "codebook needs at least 2 centroids, got " +
                                           std::to_string(centroids_.rows()));
  }
  if (centroids_.cols() == 0) throw Error(ErrorKind::Validation, "codebook centroids have K=0");
  for (float v : centroids_.values()) {
    if (!std::isfinite(v)) throw Error(ErrorKind::Validation, "non-finite codebook centroid entry");
  }
  if (count_distinct_rows(centroids_) != centroids_.rows()) {
    throw Error(ErrorKind::Validation, "codebook contains duplicate centroids");
  }
}

std::size_t Codebook::assign(std::span<const float> row) const {
  if (row.size() != dims()) {
    throw Error(ErrorKind::Dimension, "feature has K=" + std::to_string(row.size()) +
                                          ", codebook has K=" + std::to_string(dims()));
  }
  std::size_t best = 0;
  double best_d = squared_distance(row, centroids_.row(0));
  for (std::size_t c = 1; c < clusters(); ++c) {
    double d = squared_distance(row, centroids_.row(c));
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

std::vector<std::size_t> Codebook::assign(const Matrix& features) const {
  if (features.cols() != dims() && features.rows() > 0) {
    throw Error(ErrorKind::Dimension, "features have K=" + std::to_string(features.cols()) +
                                          ", codebook has K=" + std::to_string(dims()));
  }
  std::vector<std::size_t> labels(features.rows());
  for (std::size_t i = 0; i < features.rows(); ++i) labels[i] = assign(features.row(i));
  return labels;
}

KMeansResult kmeans(const Matrix& rows, const KMeansOptions& options) {
  if (options.clusters < 2) {
    throw Error(ErrorKind::Parameter, "number of clusters must be >= 2");
  }
  if (options.max_iters == 0) throw Error(ErrorKind::Parameter, "max_iters must be positive");
  if (!(options.tol >= 0.0)) throw Error(ErrorKind::Parameter, "tol must be >= 0");
  if (options.restarts == 0) throw Error(ErrorKind::Parameter, "restarts must be positive");
  for (float v : rows.values()) {
    if (!std::isfinite(v)) throw Error(ErrorKind::Training, "non-finite value in training corpus");
  }
  std::size_t distinct = count_distinct_rows(rows);
  if (distinct < options.clusters) {
    throw Error(ErrorKind::Training, "corpus has " + std::to_string(distinct) +
                                         " distinct rows, need at least " +
                                         std::to_string(options.clusters));
  }

  std::mt19937_64 rng(options.seed);
  KMeansResult best = lloyd(rows, options, rng);
  for (std::uint32_t r = 1; r < options.restarts; ++r) {
    KMeansResult next = lloyd(rows, options, rng);
    if (next.inertia < best.inertia) best = std::move(next);
  }
  return best;
}

Sha256Digest corpus_hash(const Matrix& rows) {
  detail::Sha256 h;
  std::ostringstream buffer;
  detail::ByteWriter w(buffer);
  w.u32(static_cast<std::uint32_t>(rows.cols()));
  w.f32_array(rows.values());
  const std::string bytes = buffer.str();
  h.update(bytes.data(), bytes.size());
  return h.finish();
}

Codebook train_codebook(const Matrix& rows, const KMeansOptions& options) {
  KMeansResult km = kmeans(rows, options);
  Matrix centroids(options.clusters, rows.cols());
  for (std::size_t c = 0; c < options.clusters; ++c) {
    for (std::size_t k = 0; k < rows.cols(); ++k) {
      centroids(c, k) = static_cast<float>(km.centroids[c][k]);
    }
  }
  TrainingMeta meta{km.iterations, km.inertia, options.seed, corpus_hash(rows)};
  try {
    return Codebook(std::move(centroids), meta);
  } catch (const Error& e) {
    throw Error(ErrorKind::Training, std::string("trained codebook is invalid: ") + e.what());
  }
}

Codebook train_codebook(std::span<const RegionalFeatureSet> corpus, const KMeansOptions& options) {
  if (corpus.empty()) throw Error(ErrorKind::Training, "empty training corpus");
  const std::size_t dims = corpus.front().dims();
  Matrix stacked(0, dims);
  for (const auto& set : corpus) {
    if (set.dims() != dims) {
      throw Error(ErrorKind::Dimension, "feature set " + set.image_id + " has K=" +
                                            std::to_string(set.dims()) + ", corpus has K=" +
                                            std::to_string(dims));
    }
    for (std::size_t r = 0; r < set.count(); ++r) stacked.append_row(set.features.row(r));
  }
  return train_codebook(stacked, options);
}

std::uint64_t write_codebook(const Codebook& codebook, std::ostream& sink) {
  detail::ByteWriter w(sink);
  w.bytes(kCodebookMagic, sizeof kCodebookMagic);
  w.u32(kCodebookFormatVersion);
  w.u32(static_cast<std::uint32_t>(codebook.clusters()));
  w.u32(static_cast<std::uint32_t>(codebook.dims()));
  w.u64(codebook.meta().seed);
  w.u32(codebook.meta().iterations);
  w.f64(codebook.meta().inertia);
  w.bytes(codebook.meta().corpus_hash.data(), codebook.meta().corpus_hash.size());
  w.f32_array(codebook.centroids().values());
  sink.flush();
  if (!sink) throw Error(ErrorKind::Io, "flush failed after " + std::to_string(w.written()) + " bytes");
  return w.written();
}

Codebook read_codebook(std::istream& source) {
  detail::ByteReader r(source);
  r.magic(kCodebookMagic, "codebook (ATTNCDBK)");
  std::uint32_t version = r.u32("version");
  if (version != kCodebookFormatVersion) {
    throw Error(ErrorKind::Format, "unknown codebook format version " + std::to_string(version));
  }
  std::uint32_t clusters = r.u32("V");
  std::uint32_t dims = r.u32("K");
  detail::checked_elements(clusters, dims, 1, "codebook");
  TrainingMeta meta;
  meta.seed = r.u64("seed");
  meta.iterations = r.u32("iterations");
  meta.inertia = r.f64("inertia");
  r.bytes(meta.corpus_hash.data(), meta.corpus_hash.size(), "corpus hash");
  std::vector<float> values = r.f32_array(std::uint64_t{clusters} * dims, "codebook payload");
  return Codebook(Matrix(clusters, dims, std::move(values)), meta);
}

void save_codebook(const Codebook& codebook, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  write_codebook(codebook, out);
}

Codebook load_codebook(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  try {
    return read_codebook(in);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

} // namespace attnvlad
