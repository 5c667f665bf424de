#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "attnvlad/codebook.hpp"
#include "attnvlad/matrix.hpp"
#include "attnvlad/regional_features.hpp"

namespace attnvlad {

inline constexpr char kVladMagic[8] = {'A', 'T', 'T', 'N', 'V', 'L', 'D', '1'};
inline constexpr std::uint32_t kVladFormatVersion = 1;
inline constexpr const char* kVladExtension = ".vlad";

enum class Normalization : std::uint32_t {
  None = 0,
  IntraGlobalL2 = 1, // each row to unit L2, then the flattened matrix
};

std::string_view to_string(Normalization n) noexcept;
Normalization parse_normalization(std::string_view text);

struct VladDescriptor {
  std::string image_id;
  Matrix matrix; // V x K
  Normalization normalization = Normalization::IntraGlobalL2;

  // All residuals were zero: every feature sat exactly on its centroid.
  bool degenerate() const noexcept;

  friend bool operator==(const VladDescriptor&, const VladDescriptor&) = default;
};

// Residual sums per cluster followed by the requested normalization.
// Throws Error{Dimension} on K mismatch and Error{Degenerate} for T == 0.
VladDescriptor encode_vlad(const RegionalFeatureSet& features, const Codebook& codebook,
                           Normalization normalization = Normalization::IntraGlobalL2);

// Cosine similarity of the flattened matrices, in [-1, 1].
// Throws Error{Dimension} on shape or normalization mismatch and
// Error{Degenerate} for a zero-norm operand.
double similarity(const VladDescriptor& a, const VladDescriptor& b);

struct RankedReference {
  std::string reference_id;
  double score = 0.0;

  friend bool operator==(const RankedReference&, const RankedReference&) = default;
};

struct MatchResult {
  std::string query_id;
  std::size_t num_references = 0;
  std::vector<RankedReference> ranked; // score descending, ingestion order on ties

  const std::string& best_match() const { return ranked.front().reference_id; }
  double best_score() const { return ranked.front().score; }

  friend bool operator==(const MatchResult&, const MatchResult&) = default;
};

// Exhaustive scan. Throws Error{Parameter} for an empty reference list. The
// result is identical for any jobs value.
MatchResult match_query(const VladDescriptor& query, std::span<const VladDescriptor> references,
                        unsigned jobs = 1);

std::uint64_t write_vlad(const VladDescriptor& descriptor, std::ostream& sink);
VladDescriptor read_vlad(std::istream& source);
void save_vlad(const VladDescriptor& descriptor, const std::filesystem::path& path);
VladDescriptor load_vlad(const std::filesystem::path& path);

} // namespace attnvlad
