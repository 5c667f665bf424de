#include <chrono>
#include <string>

#include "attnvlad/error.hpp"
#include "attnvlad/pipeline.hpp"

namespace attnvlad {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point from, Clock::time_point to) {
  return std::chrono::duration<double, std::milli>(to - from).count();
}

TensorScan checked_scan(const std::filesystem::path& dir, std::string_view role) {
  TensorScan scan = scan_tensor_directory(dir);
  if (!scan.unreadable.empty()) {
    const auto& bad = scan.unreadable.front();
    throw Error(ErrorKind::Format, std::string(role) + " dataset: " + bad.image_id + ": " + bad.message);
  }
  if (scan.images.empty()) {
    throw Error(ErrorKind::Io, std::string(role) + " dataset " + dir.string() + " has no tensors");
  }
  return scan;
}

} // namespace

BenchResult bench_pipeline(const BenchRequest& request, const PipelineConfig& config) {
  config.validate();
  const Codebook codebook = load_codebook(request.codebook);
  const TensorScan queries = checked_scan(request.queries, "query");
  const TensorScan refs = checked_scan(request.refs, "reference");

  BenchResult result;
  result.iterations = std::max(1u, request.iterations);
  StageTimings total;
  std::size_t image_runs = 0;
  std::size_t pair_runs = 0;
  std::vector<VladDescriptor> query_desc;
  std::vector<VladDescriptor> ref_desc;
  volatile double sink = 0.0;

  for (unsigned it = 0; it < result.iterations; ++it) {
    query_desc.clear();
    ref_desc.clear();
    for (const TensorScan* scan : {&queries, &refs}) {
      auto& target = scan == &queries ? query_desc : ref_desc;
      for (const auto& image : scan->images) {
        auto t0 = Clock::now();
        std::vector<ActivationTensor> layers;
        try {
          layers = load_image_layers(image, config);
        } catch (const Error& e) {
          throw Error(e.kind(), "[load] " + image.image_id + ": " + e.what());
        }
        auto t1 = Clock::now();
        RegionalFeatureSet set;
        try {
          set = build_image_features(layers, config);
        } catch (const Error& e) {
          throw Error(e.kind(), "[extract] " + image.image_id + ": " + e.what());
        }
        auto t2 = Clock::now();
        try {
          target.push_back(encode_vlad(set, codebook, config.normalization));
        } catch (const Error& e) {
          throw Error(e.kind(), "[encode] " + image.image_id + ": " + e.what());
        }
        auto t3 = Clock::now();
        total.load_ms += elapsed_ms(t0, t1);
        total.extraction_ms += elapsed_ms(t1, t2);
        total.encoding_ms += elapsed_ms(t2, t3);
        ++image_runs;
      }
    }

    auto m0 = Clock::now();
    double acc = 0.0;
    for (const auto& q : query_desc) {
      for (const auto& r : ref_desc) acc += similarity(q, r);
    }
    auto m1 = Clock::now();
    sink = sink + acc;
    total.match_ms += elapsed_ms(m0, m1);
    pair_runs += query_desc.size() * ref_desc.size();
  }

  result.measured.load_ms = total.load_ms / static_cast<double>(image_runs);
  result.measured.extraction_ms = total.extraction_ms / static_cast<double>(image_runs);
  result.measured.encoding_ms = total.encoding_ms / static_cast<double>(image_runs);
  result.measured.match_ms = total.match_ms / static_cast<double>(pair_runs);

  for (const auto& q : query_desc) result.matches.push_back(match_query(q, ref_desc, config.jobs));

  CostModelInputs& in = result.inputs;
  in.forward_ms = request.forward_ms.value_or(result.measured.load_ms);
  in.extraction_ms = result.measured.extraction_ms;
  in.encoding_ms = result.measured.encoding_ms;
  in.match_ms = result.measured.match_ms;
  in.references = static_cast<double>(ref_desc.size());
  in.queries = static_cast<double>(query_desc.size());
  in.encode_utilization = request.encode_utilization;
  in.match_utilization = request.match_utilization;
  in.voltage = request.voltage;
  in.derive_times();
  result.retrieval_ms = retrieval_time(in);
  result.power_mah = power_consumption(in);

  if (request.truth) {
    GroundTruth truth = load_ground_truth(*request.truth);
    std::vector<std::string> ids;
    for (const auto& r : ref_desc) ids.push_back(r.image_id);
    truth.check_references(ids);
    result.curve = pr_curve(result.matches, truth);
  }
  return result;
}

} // namespace attnvlad
