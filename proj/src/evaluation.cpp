#include "attnvlad/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>

#include "attnvlad/error.hpp"

namespace attnvlad {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// "ref_0042" -> ("ref_", 42). No trailing digits -> nullopt.
std::optional<std::pair<std::string_view, long long>> split_frame(std::string_view id) {
  std::size_t end = id.size();
  std::size_t start = end;
  while (start > 0 && std::isdigit(static_cast<unsigned char>(id[start - 1]))) --start;
  if (start == end || end - start > 18) return std::nullopt;
  long long frame = 0;
  std::from_chars(id.data() + start, id.data() + end, frame);
  return std::make_pair(id.substr(0, start), frame);
}

} // namespace

bool GroundTruth::is_correct(const std::string& query_id, const std::string& reference_id) const {
  auto it = correct.find(query_id);
  if (it == correct.end()) return false;
  for (const auto& accepted : it->second) {
    if (accepted == reference_id) return true;
    if (frame_tolerance == 0) continue;
    auto a = split_frame(accepted);
    auto b = split_frame(reference_id);
    if (a && b && a->first == b->first &&
        std::llabs(a->second - b->second) <= static_cast<long long>(frame_tolerance)) {
      return true;
    }
  }
  return false;
}

void GroundTruth::check_references(std::span<const std::string> reference_ids) const {
  std::unordered_set<std::string> known(reference_ids.begin(), reference_ids.end());
  for (const auto& [query, refs] : correct) {
    for (const auto& r : refs) {
      if (!known.count(r)) {
        throw Error(ErrorKind::Consistency, "ground truth for query " + query +
                                                " references unknown id " + r);
      }
    }
  }
}

GroundTruth parse_ground_truth(std::istream& source) {
  GroundTruth truth;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  auto fail = [&](const std::string& what) {
    throw Error(ErrorKind::Format, "ground truth line " + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(source, line)) {
    ++line_no;
    std::string_view text = trim(line);
    if (text.empty()) continue;
    if (text.front() == '#') {
      std::string_view body = trim(text.substr(1));
      constexpr std::string_view directive = "frame_tolerance=";
      if (body.starts_with(directive)) {
        std::string_view value = trim(body.substr(directive.size()));
        unsigned tol = 0;
        auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), tol);
        if (ec != std::errc() || ptr != value.data() + value.size()) {
          fail("invalid frame_tolerance '" + std::string(value) + "'");
        }
        truth.frame_tolerance = tol;
      }
      continue;
    }
    if (!header_seen) {
      if (text != "query_id,reference_ids") fail("expected header 'query_id,reference_ids'");
      header_seen = true;
      continue;
    }
    auto comma = text.find(',');
    if (comma == std::string_view::npos) fail("missing ',' separator");
    std::string query(trim(text.substr(0, comma)));
    if (query.empty()) fail("empty query_id");
    std::vector<std::string> refs;
    std::string_view rest = text.substr(comma + 1);
    while (true) {
      auto semi = rest.find(';');
      std::string_view item = trim(rest.substr(0, semi));
      if (!item.empty()) refs.emplace_back(item);
      if (semi == std::string_view::npos) break;
      rest.remove_prefix(semi + 1);
    }
    if (refs.empty()) fail("query " + query + " lists no reference ids");
    if (!truth.correct.emplace(query, std::move(refs)).second) fail("duplicate query " + query);
  }
  if (!header_seen) {
    line_no = 0;
    fail("missing header 'query_id,reference_ids'");
  }
  return truth;
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  try {
    return parse_ground_truth(in);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

PRCurve pr_curve(std::span<const MatchResult> results, const GroundTruth& truth) {
  if (results.empty()) throw Error(ErrorKind::Parameter, "no match results to evaluate");

  struct Entry {
    double score;
    bool correct;
  };
  std::vector<Entry> entries;
  entries.reserve(results.size());
  std::set<std::string> seen;
  PRCurve curve;
  for (const auto& r : results) {
    if (!truth.correct.count(r.query_id)) {
      throw Error(ErrorKind::Consistency, "query " + r.query_id + " has no ground truth entry");
    }
    if (!seen.insert(r.query_id).second) {
      throw Error(ErrorKind::Consistency, "query " + r.query_id + " evaluated twice");
    }
    if (r.ranked.empty()) throw Error(ErrorKind::Parameter, "query " + r.query_id + " has no matches");
    entries.push_back({r.best_score(), truth.is_correct(r.query_id, r.best_match())});
    curve.num_references = std::max(curve.num_references, r.num_references);
  }
  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.score > b.score; });

  const double queries = static_cast<double>(entries.size());
  std::size_t accepted = 0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < entries.size();) {
    const double threshold = entries[i].score;
    for (; i < entries.size() && entries[i].score == threshold; ++i) {
      ++accepted;
      hits += entries[i].correct ? 1 : 0;
    }
    curve.points.push_back({threshold, static_cast<double>(hits) / static_cast<double>(accepted),
                            static_cast<double>(hits) / queries});
  }

  double prev_recall = 0.0;
  double prev_precision = curve.points.front().precision;
  for (const auto& p : curve.points) {
    curve.auc += (p.recall - prev_recall) * (p.precision + prev_precision) / 2.0;
    prev_recall = p.recall;
    prev_precision = p.precision;
  }
  curve.num_queries = entries.size();
  curve.recall_at_1 = static_cast<double>(hits) / queries;
  return curve;
}

void CostModelInputs::derive_times() noexcept {
  encode_time_ms = forward_ms + extraction_ms + encoding_ms;
  match_time_ms = match_ms * references;
}

double retrieval_time(const CostModelInputs& in) noexcept {
  return in.forward_ms + in.extraction_ms + in.encoding_ms + in.match_ms * in.references;
}

double power_consumption(const CostModelInputs& in) {
  if (!(in.voltage > 0.0)) throw Error(ErrorKind::Parameter, "voltage must be positive");
  const double fields[] = {in.encode_utilization, in.encode_time_ms, in.match_utilization,
                           in.match_time_ms, in.queries};
  for (double f : fields) {
    if (!(f >= 0.0)) throw Error(ErrorKind::Parameter, "power model inputs must be non-negative");
  }
  return (in.encode_utilization * in.encode_time_ms + in.match_utilization * in.match_time_ms) *
         in.queries / (in.voltage * 60.0 * 60.0);
}

} // namespace attnvlad
