#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "attnvlad/codebook.hpp"
#include "attnvlad/evaluation.hpp"
#include "attnvlad/region_extract.hpp"
#include "attnvlad/regional_features.hpp"
#include "attnvlad/vlad.hpp"

namespace attnvlad {

inline constexpr const char* kVersion = "1.0.0";

// Algorithm parameters shared by every stage. I/O paths are stage arguments
// and are not part of the echo, so reports only depend on the algorithm.
struct PipelineConfig {
  std::vector<std::string> layer_tags{"conv3", "conv4"};
  std::size_t regions_per_layer = 300; // N
  std::size_t clusters = 128;          // V
  GroupingConfig grouping;
  Normalization normalization = Normalization::IntraGlobalL2;
  bool row_l2 = false;
  std::uint64_t seed = 1;
  std::uint32_t max_iters = 100;
  double tol = 1e-4;
  std::uint32_t restarts = 10;
  unsigned jobs = 1; // not echoed; never changes results

  // Applies one key=value pair. Throws Error{Config}.
  void set(std::string_view key, std::string_view value);
  void validate() const;

  FeatureOptions feature_options() const;
  KMeansOptions kmeans_options() const;
};

// Flat key=value text; '#' starts a comment line.
PipelineConfig parse_config(std::istream& source, PipelineConfig base = {});
PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base = {});
// Canonical key=value lines, stable across runs.
std::string echo_config(const PipelineConfig& config);

// --jobs default: ATTNVLAD_JOBS when set and valid, otherwise 1.
unsigned default_jobs();

struct StageFailure {
  std::string image_id;
  std::string message;
};

struct StageSummary {
  std::vector<std::string> processed; // lexicographic
  std::vector<StageFailure> failures;
  bool ok() const noexcept { return failures.empty(); }
};

// Tensor files of a directory grouped per image (by header contents).
struct ImageTensors {
  std::string image_id;
  std::vector<std::pair<std::string, std::filesystem::path>> layers; // tag -> file
};

struct TensorScan {
  std::vector<ImageTensors> images; // lexicographic image_id order
  std::vector<StageFailure> unreadable; // files whose header does not parse
};

// Throws Error{Io} when the directory does not exist.
TensorScan scan_tensor_directory(const std::filesystem::path& dir);

// Loads the configured layers of one image, in config order. Throws
// Error{Consistency} for a missing or duplicated layer file.
std::vector<ActivationTensor> load_image_layers(const ImageTensors& image,
                                                const PipelineConfig& config);

// Region selection per layer followed by multi-layer fusion.
RegionalFeatureSet build_image_features(std::span<const ActivationTensor> layers,
                                        const PipelineConfig& config,
                                        std::vector<RegionSelection>* selections = nullptr);

// load_image_layers + build_image_features.
RegionalFeatureSet extract_image(const ImageTensors& image, const PipelineConfig& config,
                                 std::vector<RegionSelection>* selections = nullptr);

// image_id usable as a file stem: [A-Za-z0-9._+@-], not "." or "..".
bool is_safe_file_stem(std::string_view image_id);

// One ATTNFEAT file per image in out_dir. With dump_regions set, every
// selected region is also written as a tab-separated line.
StageSummary run_extract(const std::filesystem::path& tensor_dir,
                         const std::filesystem::path& out_dir, const PipelineConfig& config,
                         const std::filesystem::path* dump_regions = nullptr);

std::vector<RegionalFeatureSet> load_feature_directory(const std::filesystem::path& dir);
std::vector<VladDescriptor> load_vlad_directory(const std::filesystem::path& dir);

Codebook run_train_codebook(const std::filesystem::path& feature_dir,
                            const std::filesystem::path& out_file, const PipelineConfig& config);

StageSummary run_encode(const std::filesystem::path& feature_dir,
                        const std::filesystem::path& codebook_file,
                        const std::filesystem::path& out_dir, const PipelineConfig& config);

// query may be one .vlad file or a directory. top == 0 keeps every reference.
std::vector<MatchResult> run_match(const std::filesystem::path& query,
                                   const std::filesystem::path& refs_dir, std::size_t top,
                                   const std::filesystem::path& out_file, unsigned jobs);

PRCurve run_evaluate(const std::filesystem::path& matches_file,
                     const std::filesystem::path& truth_file,
                     const std::filesystem::path& out_file, const PipelineConfig& config);

struct FullRunPaths {
  std::filesystem::path queries;
  std::filesystem::path refs;
  std::filesystem::path truth;
  std::filesystem::path work;
  std::filesystem::path out;
  std::optional<std::filesystem::path> codebook; // trained on refs when unset
};

// extract -> train-codebook (unless given) -> encode -> match -> evaluate,
// with the same artifacts and report the chained subcommands produce under
// work/. Errors carry the failing stage name.
PRCurve run_full(const FullRunPaths& paths, const PipelineConfig& config);

struct BenchRequest {
  std::filesystem::path queries;
  std::filesystem::path refs;
  std::filesystem::path codebook;
  std::optional<std::filesystem::path> truth;
  std::optional<double> forward_ms; // replaces measured tensor-load time
  double encode_utilization = 0.0;
  double match_utilization = 0.0;
  double voltage = 2.5;
  unsigned iterations = 3;
};

struct StageTimings {
  double load_ms = 0.0;
  double extraction_ms = 0.0;
  double encoding_ms = 0.0;
  double match_ms = 0.0;
};

struct BenchResult {
  CostModelInputs inputs;
  StageTimings measured;   // means over images and iterations
  double retrieval_ms = 0.0; // M_q
  double power_mah = 0.0;
  std::vector<MatchResult> matches;
  std::optional<PRCurve> curve;
  unsigned iterations = 0;
};

BenchResult bench_pipeline(const BenchRequest& request, const PipelineConfig& config);

} // namespace attnvlad
