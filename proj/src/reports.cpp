#include "attnvlad/reports.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "attnvlad/error.hpp"
#include "hash.hpp"

namespace attnvlad::reports {

using Json = nlohmann::ordered_json;

namespace {

Json match_to_json(const MatchResult& m) {
  Json ranked = Json::array();
  for (const auto& r : m.ranked) ranked.push_back({{"reference_id", r.reference_id}, {"score", r.score}});
  Json j;
  j["query_id"] = m.query_id;
  j["num_references"] = m.num_references;
  j["best_match"] = m.ranked.empty() ? "" : m.best_match();
  j["best_score"] = m.ranked.empty() ? 0.0 : m.best_score();
  j["ranked"] = std::move(ranked);
  return j;
}

Json matches_array(std::span<const MatchResult> results) {
  Json arr = Json::array();
  for (const auto& m : results) arr.push_back(match_to_json(m));
  return arr;
}

Json config_to_json(const PipelineConfig& config) {
  Json j = Json::object();
  std::istringstream lines(echo_config(config));
  std::string line;
  while (std::getline(lines, line)) {
    auto eq = line.find('=');
    j[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return j;
}

Json curve_to_json(const PRCurve& curve, unsigned frame_tolerance) {
  Json points = Json::array();
  for (const auto& p : curve.points) {
    points.push_back({{"threshold", p.threshold}, {"precision", p.precision}, {"recall", p.recall}});
  }
  Json j;
  j["num_queries"] = curve.num_queries;
  j["num_references"] = curve.num_references;
  j["frame_tolerance"] = frame_tolerance;
  j["recall_at_1"] = curve.recall_at_1;
  j["auc"] = curve.auc;
  j["points"] = std::move(points);
  return j;
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

} // namespace

std::string matches_json(std::span<const MatchResult> results) {
  Json j;
  j["format"] = "attnvlad-matches";
  j["version"] = 1;
  j["matches"] = matches_array(results);
  return dump(j);
}

std::vector<MatchResult> parse_matches_json(const std::string& text) {
  std::vector<MatchResult> out;
  try {
    Json j = Json::parse(text);
    if (j.value("format", "") != "attnvlad-matches" && !j.contains("matches")) {
      throw Error(ErrorKind::Format, "not a matches document");
    }
    for (const auto& m : j.at("matches")) {
      MatchResult r;
      r.query_id = m.at("query_id").get<std::string>();
      r.num_references = m.at("num_references").get<std::size_t>();
      for (const auto& e : m.at("ranked")) {
        r.ranked.push_back({e.at("reference_id").get<std::string>(), e.at("score").get<double>()});
      }
      out.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, std::string("malformed matches document: ") + e.what());
  }
  return out;
}

std::vector<MatchResult> load_matches(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_matches_json(buf.str());
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

std::string evaluation_json(const PRCurve& curve, const GroundTruth& truth,
                            const PipelineConfig& config, const std::string& matches_sha256,
                            const std::string& truth_sha256) {
  Json j;
  j["format"] = "attnvlad-evaluation";
  j["version"] = 1;
  j["config"] = config_to_json(config);
  j["inputs"] = {{"matches_sha256", matches_sha256}, {"truth_sha256", truth_sha256}};
  j["evaluation"] = curve_to_json(curve, truth.frame_tolerance);
  return dump(j);
}

std::string bench_json(const BenchResult& result, const PipelineConfig& config,
                       const std::string& codebook_sha256) {
  const CostModelInputs& in = result.inputs;
  Json j;
  j["format"] = "attnvlad-bench";
  j["version"] = 1;
  j["config"] = config_to_json(config);
  j["inputs"] = {{"codebook_sha256", codebook_sha256}};
  j["timing"] = {{"iterations", result.iterations},
                 {"measured_ms",
                  {{"tensor_load", result.measured.load_ms},
                   {"extraction", result.measured.extraction_ms},
                   {"encoding", result.measured.encoding_ms},
                   {"match_pair", result.measured.match_ms}}}};
  j["cost_model"] = {{"M_f", in.forward_ms},
                     {"M_e", in.extraction_ms},
                     {"M_v", in.encoding_ms},
                     {"M_m", in.match_ms},
                     {"R", in.references},
                     {"Q", in.queries},
                     {"U_e", in.encode_utilization},
                     {"U_m", in.match_utilization},
                     {"t_e", in.encode_time_ms},
                     {"t_m", in.match_time_ms},
                     {"v", in.voltage},
                     {"M_q", result.retrieval_ms},
                     {"mAh", result.power_mah}};
  if (result.curve) {
    j["evaluation"] = curve_to_json(*result.curve, 0);
  } else {
    j["evaluation"] = nullptr;
  }
  j["matches"] = matches_array(result.matches);
  return dump(j);
}

void write_pr_plot(const PRCurve& curve, const std::filesystem::path& path) {
  std::ostringstream out;
  const auto ext = path.extension().string();
  out.precision(17);
  if (ext == ".gp" || ext == ".gnuplot") {
    out << "# precision-recall curve, AUC = " << curve.auc << "\n"
        << "set xlabel 'Recall'\nset ylabel 'Precision'\n"
        << "set xrange [0:1]\nset yrange [0:1.05]\nset grid\n"
        << "$pr << EOD\n";
    for (const auto& p : curve.points) out << p.recall << ' ' << p.precision << '\n';
    out << "EOD\nplot $pr with linespoints title 'AUC " << curve.auc << "'\n";
  } else {
    out << "recall,precision,threshold\n";
    for (const auto& p : curve.points) {
      out << p.recall << ',' << p.precision << ',' << p.threshold << '\n';
    }
  }
  write_text_file(path, out.str());
}

std::string sha256_hex_of_file(const std::filesystem::path& path) {
  auto digest = detail::sha256_file(path);
  return detail::to_hex(digest);
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot open " + tmp.string() + " for writing");
    out << text;
    out.flush();
    if (!out) throw Error(ErrorKind::Io, "write to " + tmp.string() + " failed");
  }
  std::filesystem::rename(tmp, path);
}

} // namespace attnvlad::reports
