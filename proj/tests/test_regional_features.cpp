#include <doctest.h>

#include <random>
#include <set>
#include <sstream>

#include "attnvlad/regional_features.hpp"
#include "oracles.hpp"
#include "test_support.hpp"
#include "synthetic.hpp"

using namespace attnvlad;
using testing::error_kind_of;
using testing::make_tensor;

namespace {

Region region_at(std::vector<Position> cells, std::size_t map = 0) {
  Region r;
  r.feature_map = map;
  r.positions = std::move(cells);
  r.energy = 1.0;
  return r;
}

RegionSelection selection_of(std::string tag, std::vector<Region> regions) {
  return RegionSelection{std::move(tag), 300, std::move(regions)};
}

} // namespace

TEST_CASE("local descriptor reads the K-vector at a position") {
  auto t = make_tensor(1, 1, 3, {1, 2, 3});
  CHECK(local_descriptor(t, 0, 0).vector == std::vector<float>{1, 2, 3});

  std::vector<float> v(8);
  for (int i = 0; i < 8; ++i) v[i] = 10.0f + i;
  auto t2 = make_tensor(2, 2, 2, v);
  auto d = local_descriptor(t2, 1, 0);
  CHECK(d.vector == std::vector<float>{oracle::tensor_value(t2, 1, 0, 0), oracle::tensor_value(t2, 1, 0, 1)});
  CHECK(d.vector == std::vector<float>{12, 13});

  CHECK(error_kind_of([&] { local_descriptor(t2, 5, 5); }) == ErrorKind::Parameter);
  CHECK(error_kind_of([&] { local_descriptor(t2, -1, 0); }) == ErrorKind::Parameter);
}

TEST_CASE("aggregate_region sums descriptors over the region") {
  // (0,0) -> [1,2], (0,1) -> [3,4]
  auto t = make_tensor(1, 2, 2, {1, 2, 3, 4});
  CHECK(aggregate_region(t, region_at({{0, 0}, {0, 1}})) == std::vector<float>{4, 6});

  std::mt19937_64 rng(2);
  auto t3 = testing::random_tensor(rng, 3, 3, 4, 0.8);
  CHECK(aggregate_region(t3, region_at({{1, 1}})) == local_descriptor(t3, 1, 1).vector);

  CHECK(error_kind_of([&] { aggregate_region(t, region_at({})); }) == ErrorKind::Parameter);
  CHECK(error_kind_of([&] { aggregate_region(t, region_at({{3, 0}})); }) == ErrorKind::Parameter);
}

TEST_CASE("aggregate_region matches per-cell channel accumulation") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    auto t = testing::random_tensor(rng, 4, 4, 3, 0.7);
    std::vector<Position> cells;
    std::set<std::pair<int, int>> used;
    while (cells.size() < 5) {
      int x = static_cast<int>(rng() % 4), y = static_cast<int>(rng() % 4);
      if (used.insert({x, y}).second) cells.push_back({x, y});
    }
    std::vector<long double> want(3, 0);
    for (std::size_t k = 0; k < 3; ++k)
      for (const auto& p : cells) want[k] += oracle::tensor_value(t, p.x, p.y, k);
    auto got = aggregate_region(t, region_at(cells));
    for (std::size_t k = 0; k < 3; ++k) CHECK(got[k] == doctest::Approx(static_cast<double>(want[k])).epsilon(1e-6));
  }
}

TEST_CASE("property: aggregation is linear over disjoint partitions and scale covariant") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    auto t = testing::random_tensor(rng, 6, 6, 5, 0.6);
    std::vector<Position> all;
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 6; ++x)
        if (rng() % 2) all.push_back({x, y});
    if (all.size() < 2) continue;
    std::size_t cut = 1 + rng() % (all.size() - 1);
    std::vector<Position> a(all.begin(), all.begin() + cut), b(all.begin() + cut, all.end());
    auto whole = aggregate_region(t, region_at(all));
    auto pa = aggregate_region(t, region_at(a));
    auto pb = aggregate_region(t, region_at(b));
    for (std::size_t k = 0; k < 5; ++k) CHECK(whole[k] == doctest::Approx(pa[k] + pb[k]).epsilon(1e-6));

    std::vector<float> v(t.values().begin(), t.values().end());
    for (auto& x : v) x *= 4.0f;
    auto scaled = aggregate_region(make_tensor(6, 6, 5, v), region_at(all));
    for (std::size_t k = 0; k < 5; ++k) CHECK(scaled[k] == whole[k] * 4.0f);
  }
}

TEST_CASE("two layers with N=300 and K=384 give a 600x384 feature set") {
  std::mt19937_64 rng(1);
  auto c3 = synth::random_sparse(13, 13, 384, 0.3, rng, "conv3", "img");
  auto c4 = synth::random_sparse(13, 13, 384, 0.3, rng, "conv4", "img");
  auto s3 = select_regions(c3, {}, 300);
  auto s4 = select_regions(c4, {}, 300);
  REQUIRE(s3.regions.size() == 300);
  REQUIRE(s4.regions.size() == 300);
  std::vector<LayerInput> layers{{c3, s3}, {c4, s4}};
  auto set = build_feature_set(layers);
  CHECK(set.features.rows() == 600);
  CHECK(set.features.cols() == 384);
  CHECK(set.per_layer_counts == std::vector<std::pair<std::string, std::size_t>>{{"conv3", 300}, {"conv4", 300}});
}

TEST_CASE("feature set stacking, ordering and empty layers") {
  auto c3 = make_tensor(1, 2, 2, {1, 2, 3, 4}, "conv3", "img");
  auto c4 = make_tensor(1, 2, 2, {5, 6, 0, 0}, "conv4", "img");
  auto s3 = selection_of("conv3", {region_at({{0, 1}})});
  auto s4 = selection_of("conv4", {region_at({{0, 0}})});

  SUBCASE("rows follow configured layer order, whatever the input order") {
    std::vector<LayerInput> layers{{c4, s4}, {c3, s3}};
    auto set = build_feature_set(layers);
    REQUIRE(set.count() == 2);
    CHECK(std::vector<float>(set.features.row(0).begin(), set.features.row(0).end()) == std::vector<float>{3, 4});
    CHECK(std::vector<float>(set.features.row(1).begin(), set.features.row(1).end()) == std::vector<float>{5, 6});
    CHECK(set.image_id == "img");
  }
  SUBCASE("an all-zero layer contributes no rows") {
    auto zero = make_tensor(1, 2, 2, {0, 0, 0, 0}, "conv4", "img");
    auto sz = select_regions(zero, {}, 300);
    std::vector<LayerInput> layers{{c3, s3}, {zero, sz}};
    auto set = build_feature_set(layers);
    CHECK(set.count() == 1);
    CHECK(set.per_layer_counts[1] == std::pair<std::string, std::size_t>{"conv4", 0});
  }
  SUBCASE("mismatches are rejected") {
    auto other = make_tensor(1, 2, 2, {5, 6, 0, 0}, "conv4", "other");
    std::vector<LayerInput> wrong_id{{c3, s3}, {other, s4}};
    CHECK(error_kind_of([&] { build_feature_set(wrong_id); }) == ErrorKind::Consistency);

    auto wide = make_tensor(1, 1, 3, {1, 1, 1}, "conv4", "img");
    auto sw = selection_of("conv4", {region_at({{0, 0}})});
    std::vector<LayerInput> wrong_k{{c3, s3}, {wide, sw}};
    CHECK(error_kind_of([&] { build_feature_set(wrong_k); }) == ErrorKind::Dimension);

    std::vector<LayerInput> missing{{c3, s3}};
    CHECK(error_kind_of([&] { build_feature_set(missing); }) == ErrorKind::Consistency);

    std::vector<LayerInput> twice{{c3, s3}, {c3, s3}};
    CHECK(error_kind_of([&] { build_feature_set(twice); }) == ErrorKind::Consistency);
  }
  SUBCASE("optional row normalization") {
    std::vector<LayerInput> layers{{c3, s3}, {c4, s4}};
    FeatureOptions opts;
    opts.l2_normalize_rows = true;
    auto set = build_feature_set(layers, opts);
    CHECK(set.features(0, 0) == doctest::Approx(0.6));
    CHECK(set.features(0, 1) == doctest::Approx(0.8));
  }
}

TEST_CASE("feature set files round-trip and reject truncation") {
  std::mt19937_64 rng(8);
  RegionalFeatureSet set;
  set.image_id = "place_3";
  set.features = Matrix(5, 4);
  for (auto& v : set.features.values()) v = static_cast<float>(rng() % 1000) / 7.0f;
  set.per_layer_counts = {{"conv3", 3}, {"conv4", 2}};
  std::ostringstream out(std::ios::binary);
  write_feature_set(set, out);
  std::string bytes = out.str();
  CHECK(bytes.substr(0, 8) == "ATTNFEAT");
  std::istringstream in(bytes, std::ios::binary);
  CHECK(read_feature_set(in) == set);

  std::istringstream cut(bytes.substr(0, bytes.size() - 3), std::ios::binary);
  CHECK(error_kind_of([&] { read_feature_set(cut); }) == ErrorKind::Length);
}
