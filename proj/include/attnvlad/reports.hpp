#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "attnvlad/evaluation.hpp"
#include "attnvlad/pipeline.hpp"
#include "attnvlad/vlad.hpp"

// JSON documents exchanged between stages and written as reports.
namespace attnvlad::reports {

std::string matches_json(std::span<const MatchResult> results);
std::vector<MatchResult> parse_matches_json(const std::string& text);
std::vector<MatchResult> load_matches(const std::filesystem::path& path);

std::string evaluation_json(const PRCurve& curve, const GroundTruth& truth,
                            const PipelineConfig& config, const std::string& matches_sha256,
                            const std::string& truth_sha256);

std::string bench_json(const BenchResult& result, const PipelineConfig& config,
                       const std::string& codebook_sha256);

// Recall,precision,threshold CSV, or a self-contained gnuplot script when
// the path ends in .gp / .gnuplot.
void write_pr_plot(const PRCurve& curve, const std::filesystem::path& path);

std::string sha256_hex_of_file(const std::filesystem::path& path);

// Writes text to path via a temporary and rename.
void write_text_file(const std::filesystem::path& path, const std::string& text);

} // namespace attnvlad::reports
