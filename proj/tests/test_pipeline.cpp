#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include <json.hpp>

#include "attnvlad/pipeline.hpp"
#include "attnvlad/reports.hpp"
#include "synthetic.hpp"
#include "test_support.hpp"

using namespace attnvlad;
namespace fs = std::filesystem;
using testing::error_kind_of;
using testing::read_bytes;
using testing::snapshot;
using testing::TempDir;

namespace {

PipelineConfig small_config() {
  PipelineConfig c;
  c.regions_per_layer = 20;
  c.clusters = 8;
  c.max_iters = 30;
  return c;
}

synth::DatasetOptions small_dataset(std::size_t places = 12) {
  synth::DatasetOptions o;
  o.places = places;
  o.scene.channels = 8;
  return o;
}

void copy_dir(const fs::path& from, const fs::path& to) {
  fs::create_directories(to);
  fs::copy(from, to, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
}

} // namespace

TEST_CASE("config parsing, overrides and canonical echo") {
  std::istringstream in("# comment\nlayers = conv4,conv3\nregions_per_layer=50\nclusters=16\n"
                        "connectivity=4\nsimilarity_ratio=2.5\nnormalization=none\nseed=9\n");
  auto c = parse_config(in);
  CHECK(c.layer_tags == std::vector<std::string>{"conv4", "conv3"});
  CHECK(c.regions_per_layer == 50);
  CHECK(c.clusters == 16);
  CHECK(c.grouping.connectivity == Connectivity::Four);
  CHECK(c.grouping.similarity_ratio == 2.5);
  CHECK(c.normalization == Normalization::None);
  CHECK(c.seed == 9);

  std::istringstream echoed(echo_config(c));
  CHECK(echo_config(parse_config(echoed)) == echo_config(c));

  auto d = PipelineConfig{};
  auto text = echo_config(d);
  CHECK(text.find("regions_per_layer=300\n") != std::string::npos);
  CHECK(text.find("clusters=128\n") != std::string::npos);
  CHECK(text.find("layers=conv3,conv4\n") != std::string::npos);
  CHECK(text.find("jobs") == std::string::npos);

  PipelineConfig e;
  CHECK(error_kind_of([&] { e.set("colour", "blue"); }) == ErrorKind::Config);
  CHECK(error_kind_of([&] { e.set("clusters", "many"); }) == ErrorKind::Config);
  std::istringstream bad("clusters\n");
  CHECK(error_kind_of([&] { parse_config(bad); }) == ErrorKind::Config);
  std::istringstream dup("layers=conv3,conv3\n");
  CHECK(error_kind_of([&] { parse_config(dup).validate(); }) == ErrorKind::Config);
}

TEST_CASE("safe file stems") {
  CHECK(is_safe_file_stem("q_0001"));
  CHECK(is_safe_file_stem("a.b-c+d@e"));
  CHECK_FALSE(is_safe_file_stem(".."));
  CHECK_FALSE(is_safe_file_stem("a/b"));
  CHECK_FALSE(is_safe_file_stem(""));
}

TEST_CASE("extract on an empty directory processes nothing") {
  TempDir dir;
  fs::create_directories(dir / "in");
  auto s = run_extract(dir / "in", dir / "out", small_config());
  CHECK(s.processed.empty());
  CHECK(s.ok());
  CHECK(error_kind_of([&] { run_extract(dir / "missing", dir / "out", small_config()); }) == ErrorKind::Io);
}

TEST_CASE("extract writes one feature file per image, deterministically") {
  TempDir dir;
  auto opts = small_dataset(2);
  synth::write_dataset(dir.path(), opts);
  auto cfg = small_config();
  fs::path dump = dir / "regions.tsv";
  auto s = run_extract(dir / "queries", dir / "f1", cfg, &dump);
  CHECK(s.ok());
  CHECK(s.processed == std::vector<std::string>{"q_0000", "q_0001"});
  for (const auto& id : s.processed) {
    auto set = load_feature_set(dir / "f1" / (id + kFeatureExtension));
    CHECK(set.image_id == id);
    CHECK(set.count() <= 2 * cfg.regions_per_layer);
    CHECK(set.dims() == opts.scene.channels);
  }
  auto dump_text = read_bytes(dump);
  CHECK(dump_text.find("q_0001\tconv4\t") != std::string::npos);

  run_extract(dir / "queries", dir / "f2", cfg);
  CHECK(snapshot(dir / "f1") == snapshot(dir / "f2"));

  cfg.jobs = 3;
  run_extract(dir / "queries", dir / "f3", cfg);
  CHECK(snapshot(dir / "f1") == snapshot(dir / "f3"));
}

TEST_CASE("a missing layer file is reported for that image only") {
  TempDir dir;
  synth::write_dataset(dir.path(), small_dataset(3));
  fs::remove(dir / "queries" / "q_0001.conv4.atn");
  auto s = run_extract(dir / "queries", dir / "f", small_config());
  CHECK_FALSE(s.ok());
  REQUIRE(s.failures.size() == 1);
  CHECK(s.failures[0].image_id == "q_0001");
  CHECK(s.processed == std::vector<std::string>{"q_0000", "q_0002"});
}

TEST_CASE("full run on identical query and reference sets is perfect") {
  TempDir dir;
  synth::write_dataset(dir.path(), small_dataset(10));
  // References are the queries renamed, so every best match is an exact copy.
  fs::create_directories(dir / "same");
  for (const auto& e : fs::directory_iterator(dir / "queries")) {
    auto t = load_tensor(e.path());
    std::string id = "r" + t.image_id().substr(1);
    ActivationTensor r(t.width(), t.height(), t.channels(),
                       std::vector<float>(t.values().begin(), t.values().end()), t.layer_tag(), id);
    save_tensor(r, dir / "same" / (id + "." + t.layer_tag() + kTensorExtension));
  }
  FullRunPaths p{dir / "queries", dir / "same", dir / "truth.csv", dir / "work", dir / "report.json", {}};
  auto curve = run_full(p, small_config());
  CHECK(curve.auc == 1.0);
  CHECK(curve.recall_at_1 == 1.0);
  CHECK(curve.num_queries == 10);
  CHECK(fs::exists(dir / "work" / "codebook.cdbk"));
}

TEST_CASE("truth naming an unknown reference is a consistency error") {
  TempDir dir;
  synth::write_dataset(dir.path(), small_dataset(4));
  reports::write_text_file(dir / "bad.csv", "query_id,reference_ids\nq_0000,r_0000\nq_0001,r_9999\n"
                                            "q_0002,r_0002\nq_0003,r_0003\n");
  FullRunPaths p{dir / "queries", dir / "refs", dir / "bad.csv", dir / "work", dir / "report.json", {}};
  auto msg = testing::error_message_of([&] { run_full(p, small_config()); });
  CHECK(msg.find("r_9999") != std::string::npos);
  CHECK(error_kind_of([&] { run_full(p, small_config()); }) == ErrorKind::Consistency);
}

TEST_CASE("run_full produces the same artifacts as the chained stages") {
  TempDir dir;
  synth::write_dataset(dir.path(), small_dataset(8));
  auto cfg = small_config();
  FullRunPaths p{dir / "queries", dir / "refs", dir / "truth.csv", dir / "work", dir / "full.json", {}};
  auto full = run_full(p, cfg);

  fs::path w = dir / "chain";
  run_extract(dir / "queries", w / "features" / "queries", cfg);
  run_extract(dir / "refs", w / "features" / "refs", cfg);
  run_train_codebook(w / "features" / "refs", w / "codebook.cdbk", cfg);
  run_encode(w / "features" / "queries", w / "codebook.cdbk", w / "vlad" / "queries", cfg);
  run_encode(w / "features" / "refs", w / "codebook.cdbk", w / "vlad" / "refs", cfg);
  run_match(w / "vlad" / "queries", w / "vlad" / "refs", 0, w / "matches.json", 1);
  auto chained = run_evaluate(w / "matches.json", dir / "truth.csv", dir / "chain.json", cfg);

  CHECK(snapshot(dir / "work") == snapshot(w));
  CHECK(read_bytes(dir / "full.json") == read_bytes(dir / "chain.json"));
  CHECK(full.auc == chained.auc);

  // With the codebook supplied, run_full skips training and reuses it.
  FullRunPaths given = p;
  given.work = dir / "work2";
  given.out = dir / "given.json";
  given.codebook = w / "codebook.cdbk";
  run_full(given, cfg);
  CHECK(read_bytes(dir / "given.json") == read_bytes(dir / "full.json"));
}

TEST_CASE("match output is independent of jobs and top truncates rankings") {
  TempDir dir;
  synth::write_dataset(dir.path(), small_dataset(6));
  FullRunPaths p{dir / "queries", dir / "refs", dir / "truth.csv", dir / "work", dir / "r.json", {}};
  run_full(p, small_config());
  auto one = run_match(dir / "work" / "vlad" / "queries", dir / "work" / "vlad" / "refs", 0, dir / "m1.json", 1);
  auto four = run_match(dir / "work" / "vlad" / "queries", dir / "work" / "vlad" / "refs", 0, dir / "m4.json", 4);
  CHECK(read_bytes(dir / "m1.json") == read_bytes(dir / "m4.json"));
  CHECK(one == four);

  auto top = run_match(dir / "work" / "vlad" / "queries" / "q_0002.vlad", dir / "work" / "vlad" / "refs", 2,
                       dir / "top.json", 1);
  REQUIRE(top.size() == 1);
  CHECK(top[0].ranked.size() == 2);
  CHECK(top[0].num_references == 6);
  CHECK(top[0].ranked == std::vector<RankedReference>(one[2].ranked.begin(), one[2].ranked.begin() + 2));
}

TEST_CASE("matches JSON round-trips exactly") {
  MatchResult m;
  m.query_id = "q";
  m.num_references = 3;
  m.ranked = {{"a", 0.1 + 0.2}, {"b", -1.0 / 3}, {"c", -1.0}};
  std::vector<MatchResult> v{m};
  auto text = reports::matches_json(v);
  CHECK(reports::parse_matches_json(text) == v);
  CHECK_THROWS_AS(reports::parse_matches_json("{\"format\":\"other\"}"), Error);
}

TEST_CASE("bench reports a self-consistent cost model") {
  TempDir dir;
  synth::write_dataset(dir.path(), small_dataset(50));
  auto cfg = small_config();
  FullRunPaths p{dir / "queries", dir / "refs", dir / "truth.csv", dir / "work", dir / "r.json", {}};
  run_full(p, cfg);

  BenchRequest req;
  req.queries = dir / "queries";
  req.refs = dir / "refs";
  req.codebook = dir / "work" / "codebook.cdbk";
  req.truth = dir / "truth.csv";
  req.encode_utilization = 0.125;
  req.match_utilization = 0.031;
  req.iterations = 1;
  auto b = bench_pipeline(req, cfg);
  CHECK(b.retrieval_ms == retrieval_time(b.inputs));
  CHECK(b.power_mah == power_consumption(b.inputs));
  CHECK(b.inputs.references == 50);
  CHECK(b.inputs.queries == 50);
  CHECK(b.inputs.forward_ms == b.measured.load_ms);

  auto doubled = b.inputs;
  doubled.references *= 2;
  CHECK(retrieval_time(doubled) - b.retrieval_ms ==
        doctest::Approx(b.inputs.match_ms * b.inputs.references));

  REQUIRE(b.curve.has_value());
  auto truth = load_ground_truth(dir / "truth.csv");
  auto again = pr_curve(b.matches, truth);
  CHECK(again.auc == b.curve->auc);
  CHECK(again.points.size() == b.curve->points.size());

  req.forward_ms = 13.85;
  auto o = bench_pipeline(req, cfg);
  CHECK(o.inputs.forward_ms == 13.85);
  auto json = nlohmann::ordered_json::parse(reports::bench_json(o, cfg, "x"));
  CHECK(json["cost_model"]["M_q"].get<double>() == o.retrieval_ms);
}
