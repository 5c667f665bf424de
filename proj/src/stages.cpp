#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "attnvlad/error.hpp"
#include "attnvlad/pipeline.hpp"
#include "attnvlad/reports.hpp"
#include "parallel.hpp"

namespace attnvlad {

namespace fs = std::filesystem;

namespace {

std::vector<fs::path> files_with_extension(const fs::path& dir, std::string_view ext) {
  if (!fs::is_directory(dir)) throw Error(ErrorKind::Io, "not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ext) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void append_region_dump(std::string& out, const std::string& image_id,
                        std::span<const RegionSelection> selections) {
  for (const auto& sel : selections) {
    for (const auto& r : sel.regions) {
      int x0 = r.positions.front().x, x1 = x0;
      int y0 = r.positions.front().y, y1 = y0;
      for (const auto& p : r.positions) {
        x0 = std::min(x0, p.x);
        x1 = std::max(x1, p.x);
        y0 = std::min(y0, p.y);
        y1 = std::max(y1, p.y);
      }
      out += image_id + '\t' + sel.layer_tag + '\t' + std::to_string(r.feature_map) + '\t' +
             format_double(r.energy) + '\t' + std::to_string(r.positions.size()) + '\t' +
             std::to_string(x0) + ',' + std::to_string(y0) + ',' + std::to_string(x1) + ',' +
             std::to_string(y1) + '\n';
    }
  }
}

std::string stage_error_list(const StageSummary& summary) {
  std::string out;
  for (const auto& f : summary.failures) out += "\n  " + f.image_id + ": " + f.message;
  return out;
}

template <typename Fn>
auto in_stage(std::string_view stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.kind(), "[" + std::string(stage) + "] " + e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorKind::Io, "[" + std::string(stage) + "] " + e.what());
  }
}

void require_ok(const StageSummary& summary) {
  if (!summary.ok()) {
    throw Error(ErrorKind::Consistency, std::to_string(summary.failures.size()) +
                                            " image(s) failed:" + stage_error_list(summary));
  }
}

} // namespace

bool is_safe_file_stem(std::string_view id) {
  if (id.empty() || id == "." || id == "..") return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
           c == '.' || c == '_' || c == '-' || c == '+' || c == '@';
  });
}

TensorScan scan_tensor_directory(const fs::path& dir) {
  TensorScan scan;
  std::map<std::string, ImageTensors> by_image;
  for (const auto& path : files_with_extension(dir, kTensorExtension)) {
    try {
      TensorFileHeader h = load_tensor_header(path);
      auto& image = by_image[h.image_id];
      image.image_id = h.image_id;
      image.layers.emplace_back(h.layer_tag, path);
    } catch (const Error& e) {
      scan.unreadable.push_back({path.filename().string(), e.what()});
    }
  }
  for (auto& [id, image] : by_image) scan.images.push_back(std::move(image));
  return scan;
}

std::vector<ActivationTensor> load_image_layers(const ImageTensors& image,
                                                const PipelineConfig& config) {
  std::vector<ActivationTensor> tensors;
  tensors.reserve(config.layer_tags.size());
  for (const auto& tag : config.layer_tags) {
    auto count = std::count_if(image.layers.begin(), image.layers.end(),
                               [&](const auto& l) { return l.first == tag; });
    if (count == 0) {
      throw Error(ErrorKind::Consistency, "missing layer file for " + tag);
    }
    if (count > 1) {
      throw Error(ErrorKind::Consistency, "more than one file for layer " + tag);
    }
    auto it = std::find_if(image.layers.begin(), image.layers.end(),
                           [&](const auto& l) { return l.first == tag; });
    tensors.push_back(load_tensor(it->second));
  }
  return tensors;
}

RegionalFeatureSet build_image_features(std::span<const ActivationTensor> layers,
                                        const PipelineConfig& config,
                                        std::vector<RegionSelection>* selections) {
  std::vector<RegionSelection> selected;
  selected.reserve(layers.size());
  for (const auto& t : layers) {
    selected.push_back(select_regions(t, config.grouping, config.regions_per_layer));
  }
  std::vector<LayerInput> inputs;
  inputs.reserve(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) inputs.push_back({layers[i], selected[i]});
  RegionalFeatureSet set = build_feature_set(inputs, config.feature_options());
  if (selections) *selections = std::move(selected);
  return set;
}

RegionalFeatureSet extract_image(const ImageTensors& image, const PipelineConfig& config,
                                 std::vector<RegionSelection>* selections) {
  std::vector<ActivationTensor> layers = load_image_layers(image, config);
  return build_image_features(layers, config, selections);
}

StageSummary run_extract(const fs::path& tensor_dir, const fs::path& out_dir,
                         const PipelineConfig& config, const fs::path* dump_regions) {
  config.validate();
  TensorScan scan = scan_tensor_directory(tensor_dir);
  fs::create_directories(out_dir);

  const std::size_t n = scan.images.size();
  std::vector<std::optional<std::string>> errors(n);
  std::vector<std::string> dumps(n);
  detail::parallel_for(n, config.jobs, [&](std::size_t i) {
    const auto& image = scan.images[i];
    try {
      if (!is_safe_file_stem(image.image_id)) {
        throw Error(ErrorKind::Consistency, "image_id is not usable as a file name");
      }
      std::vector<RegionSelection> selections;
      RegionalFeatureSet set = extract_image(image, config, dump_regions ? &selections : nullptr);
      save_feature_set(set, out_dir / (image.image_id + kFeatureExtension));
      if (dump_regions) append_region_dump(dumps[i], image.image_id, selections);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });

  StageSummary summary;
  for (const auto& bad : scan.unreadable) summary.failures.push_back(bad);
  for (std::size_t i = 0; i < n; ++i) {
    if (errors[i]) summary.failures.push_back({scan.images[i].image_id, *errors[i]});
    else summary.processed.push_back(scan.images[i].image_id);
  }
  if (dump_regions) {
    std::string text = "# image_id\tlayer_tag\tfeature_map\tenergy\tsize\tbbox(x0,y0,x1,y1)\n";
    for (const auto& d : dumps) text += d;
    reports::write_text_file(*dump_regions, text);
  }
  return summary;
}

std::vector<RegionalFeatureSet> load_feature_directory(const fs::path& dir) {
  std::vector<RegionalFeatureSet> sets;
  for (const auto& path : files_with_extension(dir, kFeatureExtension)) {
    sets.push_back(load_feature_set(path));
  }
  return sets;
}

std::vector<VladDescriptor> load_vlad_directory(const fs::path& dir) {
  std::vector<VladDescriptor> out;
  for (const auto& path : files_with_extension(dir, kVladExtension)) out.push_back(load_vlad(path));
  return out;
}

Codebook run_train_codebook(const fs::path& feature_dir, const fs::path& out_file,
                            const PipelineConfig& config) {
  config.validate();
  std::vector<RegionalFeatureSet> corpus = load_feature_directory(feature_dir);
  if (corpus.empty()) {
    throw Error(ErrorKind::Training, "no feature files in " + feature_dir.string());
  }
  Codebook codebook = train_codebook(corpus, config.kmeans_options());
  if (out_file.has_parent_path()) fs::create_directories(out_file.parent_path());
  save_codebook(codebook, out_file);
  return codebook;
}

StageSummary run_encode(const fs::path& feature_dir, const fs::path& codebook_file,
                        const fs::path& out_dir, const PipelineConfig& config) {
  config.validate();
  Codebook codebook = load_codebook(codebook_file);
  std::vector<fs::path> files = files_with_extension(feature_dir, kFeatureExtension);
  fs::create_directories(out_dir);

  std::vector<std::string> ids(files.size());
  std::vector<std::optional<std::string>> errors(files.size());
  detail::parallel_for(files.size(), config.jobs, [&](std::size_t i) {
    ids[i] = files[i].stem().string();
    try {
      RegionalFeatureSet set = load_feature_set(files[i]);
      ids[i] = set.image_id;
      if (!is_safe_file_stem(set.image_id)) {
        throw Error(ErrorKind::Consistency, "image_id is not usable as a file name");
      }
      VladDescriptor d = encode_vlad(set, codebook, config.normalization);
      if (d.degenerate()) {
        throw Error(ErrorKind::Degenerate, "all residuals are zero; descriptor has no direction");
      }
      save_vlad(d, out_dir / (set.image_id + kVladExtension));
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });

  StageSummary summary;
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (errors[i]) summary.failures.push_back({ids[i], *errors[i]});
    else summary.processed.push_back(ids[i]);
  }
  std::sort(summary.processed.begin(), summary.processed.end());
  return summary;
}

std::vector<MatchResult> run_match(const fs::path& query, const fs::path& refs_dir,
                                   std::size_t top, const fs::path& out_file, unsigned jobs) {
  std::vector<VladDescriptor> queries;
  if (fs::is_directory(query)) queries = load_vlad_directory(query);
  else queries.push_back(load_vlad(query));
  std::vector<VladDescriptor> refs = load_vlad_directory(refs_dir);
  if (refs.empty()) throw Error(ErrorKind::Parameter, "no reference descriptors in " + refs_dir.string());

  std::vector<MatchResult> results(queries.size());
  detail::parallel_for(queries.size(), jobs, [&](std::size_t i) {
    results[i] = match_query(queries[i], refs);
    if (top > 0 && results[i].ranked.size() > top) results[i].ranked.resize(top);
  });
  reports::write_text_file(out_file, reports::matches_json(results));
  return results;
}

PRCurve run_evaluate(const fs::path& matches_file, const fs::path& truth_file,
                     const fs::path& out_file, const PipelineConfig& config) {
  std::vector<MatchResult> matches = reports::load_matches(matches_file);
  GroundTruth truth = load_ground_truth(truth_file);
  // Full rankings name every reference, so the truth can be checked against them.
  bool full = !matches.empty() && std::all_of(matches.begin(), matches.end(), [](const auto& m) {
    return m.ranked.size() == m.num_references;
  });
  if (full) {
    std::vector<std::string> ids;
    for (const auto& r : matches.front().ranked) ids.push_back(r.reference_id);
    truth.check_references(ids);
  }
  PRCurve curve = pr_curve(matches, truth);
  reports::write_text_file(out_file, reports::evaluation_json(curve, truth, config,
                                                               reports::sha256_hex_of_file(matches_file),
                                                               reports::sha256_hex_of_file(truth_file)));
  return curve;
}

PRCurve run_full(const FullRunPaths& paths, const PipelineConfig& config) {
  in_stage("config", [&] { config.validate(); });
  GroundTruth truth = in_stage("truth", [&] { return load_ground_truth(paths.truth); });

  const fs::path feat_q = paths.work / "features" / "queries";
  const fs::path feat_r = paths.work / "features" / "refs";
  const fs::path vlad_q = paths.work / "vlad" / "queries";
  const fs::path vlad_r = paths.work / "vlad" / "refs";
  const fs::path matches = paths.work / "matches.json";

  StageSummary refs = in_stage("extract", [&] {
    require_ok(run_extract(paths.queries, feat_q, config));
    StageSummary summary = run_extract(paths.refs, feat_r, config);
    require_ok(summary);
    return summary;
  });
  in_stage("truth", [&] { truth.check_references(refs.processed); });

  fs::path codebook_file = paths.codebook.value_or(paths.work / "codebook.cdbk");
  if (!paths.codebook) {
    in_stage("train-codebook", [&] { run_train_codebook(feat_r, codebook_file, config); });
  }
  in_stage("encode", [&] {
    require_ok(run_encode(feat_q, codebook_file, vlad_q, config));
    require_ok(run_encode(feat_r, codebook_file, vlad_r, config));
  });
  in_stage("match", [&] { run_match(vlad_q, vlad_r, 0, matches, config.jobs); });
  return in_stage("evaluate", [&] { return run_evaluate(matches, paths.truth, paths.out, config); });
}

} // namespace attnvlad
