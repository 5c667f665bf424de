#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "attnvlad/matrix.hpp"
#include "attnvlad/region_extract.hpp"
#include "attnvlad/tensor_store.hpp"

namespace attnvlad {

inline constexpr char kFeatureMagic[8] = {'A', 'T', 'T', 'N', 'F', 'E', 'A', 'T'};
inline constexpr std::uint32_t kFeatureFormatVersion = 1;
inline constexpr const char* kFeatureExtension = ".feat";

struct LocalDescriptor {
  Position position;
  std::vector<float> vector;
};

// Per-image stack of regional features from every configured layer.
struct RegionalFeatureSet {
  std::string image_id;
  Matrix features; // T x K
  std::vector<std::pair<std::string, std::size_t>> per_layer_counts; // config order

  std::size_t count() const noexcept { return features.rows(); }
  std::size_t dims() const noexcept { return features.cols(); }

  friend bool operator==(const RegionalFeatureSet&, const RegionalFeatureSet&) = default;
};

// The K activations at (x, y). Throws Error{Parameter} when out of bounds.
LocalDescriptor local_descriptor(const ActivationTensor& tensor, int x, int y);

// Elementwise sum of the local descriptors under the region (all K channels,
// not only the map the region was found in).
std::vector<float> aggregate_region(const ActivationTensor& tensor, const Region& region);

struct LayerInput {
  const ActivationTensor& tensor;
  const RegionSelection& selection;
};

struct FeatureOptions {
  std::vector<std::string> layer_order{"conv3", "conv4"};
  bool l2_normalize_rows = false;
};

// Stacks the aggregated regions of each layer in layer_order, each layer in
// its selection order. Layers must match layer_order exactly (any input
// order), share image_id (Consistency) and K (Dimension).
RegionalFeatureSet build_feature_set(std::span<const LayerInput> layers,
                                     const FeatureOptions& options = {});

std::uint64_t write_feature_set(const RegionalFeatureSet& set, std::ostream& sink);
RegionalFeatureSet read_feature_set(std::istream& source);
void save_feature_set(const RegionalFeatureSet& set, const std::filesystem::path& path);
RegionalFeatureSet load_feature_set(const std::filesystem::path& path);

} // namespace attnvlad
