#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attnvlad/vlad.hpp"

namespace attnvlad {

// query_id -> accepted reference ids. With frame_tolerance > 0, ids that end
// in a frame number ("ref_0042") also accept any reference with the same
// prefix whose frame number lies within the tolerance.
struct GroundTruth {
  std::map<std::string, std::vector<std::string>> correct;
  unsigned frame_tolerance = 0;

  bool is_correct(const std::string& query_id, const std::string& reference_id) const;

  // Throws Error{Consistency} naming the first reference id that is not in
  // the reference set.
  void check_references(std::span<const std::string> reference_ids) const;
};

// CSV: header "query_id,reference_ids", reference ids separated by ';', an
// optional "# frame_tolerance=<n>" directive line. Other '#' lines are
// comments. Throws Error{Format}.
GroundTruth parse_ground_truth(std::istream& source);
GroundTruth load_ground_truth(const std::filesystem::path& path);

struct PRPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

struct PRCurve {
  std::vector<PRPoint> points; // threshold descending, recall non-decreasing
  double auc = 0.0;
  std::size_t num_queries = 0;
  std::size_t num_references = 0;
  double recall_at_1 = 0.0; // fraction of queries whose best match is correct
};

// Best-match-only sweep: each query contributes (best score, correct?) and
// the threshold walks the distinct scores from high to low. The area is the
// trapezoid rule over the points, starting from (recall 0, precision of the
// first point). Throws Error{Parameter} for no results and
// Error{Consistency} for a query missing from the truth.
PRCurve pr_curve(std::span<const MatchResult> results, const GroundTruth& truth);

// Inputs of the retrieval-time and battery models, times in milliseconds.
struct CostModelInputs {
  double forward_ms = 0.0;     // M_f
  double extraction_ms = 0.0;  // M_e
  double encoding_ms = 0.0;    // M_v
  double match_ms = 0.0;       // M_m, one query/reference pair
  double references = 0.0;     // R
  double queries = 0.0;        // Q
  double encode_utilization = 0.0; // U_e
  double match_utilization = 0.0;  // U_m
  double encode_time_ms = 0.0; // t_e
  double match_time_ms = 0.0;  // t_m
  double voltage = 2.5;        // v

  // t_e = M_f + M_e + M_v and t_m = M_m * R.
  void derive_times() noexcept;
};

// M_q = M_f + M_e + M_v + M_m * R.
double retrieval_time(const CostModelInputs& in) noexcept;

// (U_e*t_e + U_m*t_m) * Q / (v * 3600), in mAh. Throws Error{Parameter} for
// v <= 0 or any negative input.
double power_consumption(const CostModelInputs& in);

} // namespace attnvlad
