#include <doctest.h>

#include <algorithm>
#include <limits>
#include <random>
#include <sstream>

#include "attnvlad/codebook.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace attnvlad;
using testing::error_kind_of;

namespace {

Matrix rows_of(const std::vector<std::vector<float>>& rows) {
  Matrix m;
  for (const auto& r : rows) m.append_row(r);
  return m;
}

std::vector<std::vector<double>> as_points(const std::vector<std::vector<float>>& rows) {
  std::vector<std::vector<double>> out;
  for (const auto& r : rows) out.emplace_back(r.begin(), r.end());
  return out;
}

KMeansOptions opts(std::size_t v, std::uint64_t seed = 1) {
  KMeansOptions o;
  o.clusters = v;
  o.seed = seed;
  return o;
}

std::vector<std::vector<double>> sorted(std::vector<std::vector<double>> c) {
  std::sort(c.begin(), c.end());
  return c;
}

std::string bytes_of(const Codebook& cb) {
  std::ostringstream out(std::ios::binary);
  write_codebook(cb, out);
  return out.str();
}

} // namespace

TEST_CASE("square corners split into two side pairs at the optimum") {
  std::vector<std::vector<float>> pts{{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto r = kmeans(rows_of(pts), opts(2, seed));
    CHECK(r.inertia == doctest::Approx(oracle::exhaustive_inertia(as_points(pts), 2)).epsilon(1e-12));
    CHECK(r.inertia == doctest::Approx(1.0));
    auto c = sorted(r.centroids);
    bool left_right = c == std::vector<std::vector<double>>{{0, 0.5}, {1, 0.5}};
    bool top_bottom = c == std::vector<std::vector<double>>{{0.5, 0}, {0.5, 1}};
    CHECK((left_right || top_bottom));
  }
}

TEST_CASE("wide rectangle pairs its corners left and right") {
  std::vector<std::vector<float>> pts{{0, 0}, {0, 1}, {4, 0}, {4, 1}};
  auto r = kmeans(rows_of(pts), opts(2, 3));
  CHECK(sorted(r.centroids) == std::vector<std::vector<double>>{{0, 0.5}, {4, 0.5}});
  CHECK(r.inertia == doctest::Approx(oracle::exhaustive_inertia(as_points(pts), 2)));
  CHECK(r.labels[0] == r.labels[1]);
  CHECK(r.labels[2] == r.labels[3]);
  CHECK(r.labels[0] != r.labels[2]);
}

TEST_CASE("V distinct rows with V clusters are a fixed point") {
  std::vector<std::vector<float>> pts{{1, 2, 3}, {-1, 0, 4}, {7, 7, 7}};
  auto r = kmeans(rows_of(pts), opts(3));
  CHECK(r.inertia == 0.0);
  CHECK(sorted(r.centroids) == sorted(as_points(pts)));
}

TEST_CASE("well-separated clusters reach the exhaustive optimum") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<float> jitter(-0.3f, 0.3f);
  const std::vector<std::vector<float>> centres{{0, 0}, {10, 0}, {0, 10}};
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<std::vector<float>> pts;
    for (std::size_t i = 0; i < 9; ++i) {
      const auto& c = centres[i % 3];
      pts.push_back({c[0] + jitter(rng), c[1] + jitter(rng)});
    }
    auto r = kmeans(rows_of(pts), opts(3, static_cast<std::uint64_t>(trial)));
    CHECK(r.inertia == doctest::Approx(oracle::exhaustive_inertia(as_points(pts), 3)).epsilon(1e-9));
  }
}

TEST_CASE("training is deterministic for a fixed corpus and seed") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Matrix m(200, 6);
  for (auto& v : m.values()) v = u(rng);
  auto a = train_codebook(m, opts(8, 42));
  auto b = train_codebook(m, opts(8, 42));
  CHECK(a == b);
  CHECK(bytes_of(a) == bytes_of(b));
  CHECK(a.assign(m) == b.assign(m));
  CHECK(a.meta().seed == 42);
  CHECK(a.meta().corpus_hash == corpus_hash(m));

  auto c = train_codebook(m, opts(8, 43));
  CHECK(c.meta().corpus_hash == a.meta().corpus_hash);

  KMeansOptions par = opts(8, 42);
  par.jobs = 4;
  CHECK(train_codebook(m, par) == a);
}

TEST_CASE("inertia never increases across Lloyd iterations") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<float> u(-5.0f, 5.0f);
  for (int trial = 0; trial < 10; ++trial) {
    Matrix m(150, 4);
    for (auto& v : m.values()) v = u(rng);
    auto r = kmeans(m, opts(6, static_cast<std::uint64_t>(trial)));
    REQUIRE(r.inertia_history.size() >= 2);
    for (std::size_t i = 1; i < r.inertia_history.size(); ++i)
      CHECK(r.inertia_history[i] <= r.inertia_history[i - 1] * (1 + 1e-12) + 1e-12);
    CHECK(r.inertia == doctest::Approx(r.inertia_history.back()));
  }
}

TEST_CASE("empty clusters are repaired so every cluster is used") {
  // Duplicated rows make a poor start likely; every label must still be taken.
  Matrix m = rows_of({{0, 0}, {0, 0}, {0, 0}, {1, 0}, {2, 0}, {3, 0}, {100, 0}});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto r = kmeans(m, opts(4, seed));
    std::vector<std::size_t> used(4, 0);
    for (auto l : r.labels) ++used[l];
    CHECK(std::count(used.begin(), used.end(), 0u) == 0);
  }
}

TEST_CASE("training errors") {
  Matrix dup = rows_of({{1, 1}, {1, 1}, {2, 2}});
  CHECK(error_kind_of([&] { kmeans(dup, opts(3)); }) == ErrorKind::Training);
  CHECK(error_kind_of([&] { kmeans(dup, opts(1)); }) == ErrorKind::Parameter);
  KMeansOptions zero = opts(2);
  zero.max_iters = 0;
  CHECK(error_kind_of([&] { kmeans(dup, zero); }) == ErrorKind::Parameter);

  RegionalFeatureSet a{"a", rows_of({{1, 2}, {3, 4}}), {}};
  RegionalFeatureSet b{"b", rows_of({{1, 2, 3}}), {}};
  std::vector<RegionalFeatureSet> corpus{a, b};
  CHECK(error_kind_of([&] { train_codebook(corpus, opts(2)); }) == ErrorKind::Dimension);
}

TEST_CASE("assign picks the nearest centroid, lowest index on ties") {
  Matrix c(10, 2);
  for (std::size_t i = 0; i < 10; ++i) {
    c(i, 0) = static_cast<float>(i);
    c(i, 1) = static_cast<float>(i * i);
  }
  Codebook cb(c);
  std::vector<float> seven{7, 49};
  CHECK(cb.assign(seven) == 7);

  Matrix t = rows_of({{0, 0}, {5, 0}, {9, 9}, {-3, 1}, {0, 5}, {2, 0}});
  Codebook tie(t);
  std::vector<float> mid{3.5f, 0.5f}; // equidistant from rows 1 and 5
  CHECK(tie.assign(mid) == 1);
  Codebook tie2(rows_of({{9, 9}, {8, 8}, {0, 0}, {7, 7}, {6, 6}, {2, 0}}));
  std::vector<float> between{1, 0};
  CHECK(tie2.assign(between) == 2);

  std::vector<float> wrong{1, 2, 3};
  CHECK(error_kind_of([&] { cb.assign(wrong); }) == ErrorKind::Dimension);
  CHECK(error_kind_of([&] { cb.assign(rows_of({{1, 2, 3}})); }) == ErrorKind::Dimension);
}

TEST_CASE("assign agrees with an all-pairs scan on random rows") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<std::vector<float>> centres(8, std::vector<float>(5));
  for (auto& c : centres) for (auto& v : c) v = u(rng);
  Codebook cb(rows_of(centres));
  Matrix rows(50, 5);
  for (auto& v : rows.values()) v = u(rng);
  auto labels = cb.assign(rows);
  for (std::size_t r = 0; r < 50; ++r) {
    std::vector<float> row(rows.row(r).begin(), rows.row(r).end());
    CHECK(labels[r] == oracle::nearest(row, centres));
  }
}

TEST_CASE("invalid codebooks are rejected") {
  CHECK(error_kind_of([] { Codebook(rows_of({{1, 2}})); }) == ErrorKind::Validation);
  CHECK(error_kind_of([] { Codebook(rows_of({{1, 2}, {1, 2}})); }) == ErrorKind::Validation);
  CHECK(error_kind_of([] { Codebook(rows_of({{1, 2}, {1, std::numeric_limits<float>::infinity()}})); }) ==
        ErrorKind::Validation);
}

TEST_CASE("codebook files round-trip") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Matrix m(40, 3);
  for (auto& v : m.values()) v = u(rng);
  auto cb = train_codebook(m, opts(4, 9));
  auto bytes = bytes_of(cb);
  CHECK(bytes.substr(0, 8) == "ATTNCDBK");
  CHECK(bytes.size() == 8 + 4 + 4 + 4 + 8 + 4 + 8 + 32 + 4 * 3 * 4);
  std::istringstream in(bytes, std::ios::binary);
  CHECK(read_codebook(in) == cb);

  testing::TempDir dir;
  save_codebook(cb, dir / "c.cdbk");
  CHECK(load_codebook(dir / "c.cdbk") == cb);

  std::istringstream cut(bytes.substr(0, bytes.size() - 1), std::ios::binary);
  CHECK(error_kind_of([&] { read_codebook(cut); }) == ErrorKind::Length);
  std::string bad = bytes;
  bad[0] = 'X';
  std::istringstream wrong(bad, std::ios::binary);
  CHECK(error_kind_of([&] { read_codebook(wrong); }) == ErrorKind::Format);
}

TEST_CASE("restarts keep the lowest-inertia run") {
  std::vector<std::vector<float>> pts{{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  bool stuck = false;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto single = opts(2, seed);
    single.restarts = 1;
    auto one = kmeans(rows_of(pts), single);
    auto many = kmeans(rows_of(pts), opts(2, seed));
    CHECK(many.inertia <= one.inertia);
    stuck |= one.inertia > 1.0 + 1e-9;
  }
  // A single start can end in the 3+1 split; restarts recover the optimum.
  CHECK(stuck);
  auto zero = opts(2);
  zero.restarts = 0;
  CHECK(error_kind_of([&] { kmeans(rows_of(pts), zero); }) == ErrorKind::Parameter);
}
