#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "attnvlad/tensor_store.hpp"

namespace attnvlad {

enum class Connectivity { Four = 4, Eight = 8 };

struct GroupingConfig {
  Connectivity connectivity = Connectivity::Eight;
  // Adjacent activations a, b couple only if max(a,b)/min(a,b) <= ratio.
  // Unset means any two adjacent non-zero activations couple.
  std::optional<double> similarity_ratio;
  // Activations <= zero_threshold are treated as zero.
  double zero_threshold = 0.0;

  // Throws Error{Parameter} on ratio < 1 or a negative / non-finite threshold.
  void validate() const;
};

struct Position {
  int x = 0;
  int y = 0;
  friend bool operator==(const Position&, const Position&) = default;
};

// A connected set of activations inside one feature map. Positions are kept
// in scan order (y-major, then x).
struct Region {
  std::size_t feature_map = 0;
  std::vector<Position> positions;
  double energy = 0.0;           // mean member activation
  std::size_t discovery_rank = 0; // scan-order rank of the region within its map

  friend bool operator==(const Region&, const Region&) = default;
};

struct RegionSelection {
  std::string layer_tag;
  std::size_t requested = 0;
  std::vector<Region> regions; // energy descending, then (feature_map, discovery_rank)
};

// All regions of every feature map, ordered by (feature_map, discovery_rank).
// Every activation above the threshold lands in exactly one region; regions
// are maximal under the coupling rule.
std::vector<Region> extract_regions(const ActivationTensor& tensor, const GroupingConfig& config);

// Strict total order used for ranking: energy descending, then feature map
// ascending, then discovery rank ascending.
bool ranks_before(const Region& a, const Region& b) noexcept;

// The min(n, regions.size()) highest-ranked regions. Throws Error{Parameter}
// for n == 0.
RegionSelection select_top_n(std::vector<Region> regions, std::size_t n, std::string layer_tag = {});

// extract_regions + select_top_n, tagged with the tensor's layer.
RegionSelection select_regions(const ActivationTensor& tensor, const GroupingConfig& config,
                               std::size_t n);

} // namespace attnvlad
