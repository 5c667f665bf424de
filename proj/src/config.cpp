#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <string>

#include "attnvlad/error.hpp"
#include "attnvlad/pipeline.hpp"

namespace attnvlad {

namespace {

std::string_view trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value) {
  throw Error(ErrorKind::Config, "invalid value '" + std::string(value) + "' for " + std::string(key));
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) bad_value(key, value);
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  bad_value(key, value);
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

} // namespace

void PipelineConfig::set(std::string_view key, std::string_view value) {
  key = trim(key);
  value = trim(value);
  if (key == "layers") {
    layer_tags.clear();
    while (!value.empty()) {
      auto comma = value.find(',');
      auto tag = trim(value.substr(0, comma));
      if (tag.empty()) bad_value(key, value);
      layer_tags.emplace_back(tag);
      if (comma == std::string_view::npos) break;
      value.remove_prefix(comma + 1);
    }
  } else if (key == "regions_per_layer") {
    regions_per_layer = parse_number<std::size_t>(key, value);
  } else if (key == "clusters") {
    clusters = parse_number<std::size_t>(key, value);
  } else if (key == "connectivity") {
    if (value == "4") grouping.connectivity = Connectivity::Four;
    else if (value == "8") grouping.connectivity = Connectivity::Eight;
    else bad_value(key, value);
  } else if (key == "similarity_ratio") {
    if (value == "disabled") grouping.similarity_ratio.reset();
    else grouping.similarity_ratio = parse_number<double>(key, value);
  } else if (key == "zero_threshold") {
    grouping.zero_threshold = parse_number<double>(key, value);
  } else if (key == "normalization") {
    normalization = parse_normalization(value);
  } else if (key == "row_l2") {
    row_l2 = parse_bool(key, value);
  } else if (key == "seed") {
    seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "max_iters") {
    max_iters = parse_number<std::uint32_t>(key, value);
  } else if (key == "restarts") {
    restarts = parse_number<std::uint32_t>(key, value);
  } else if (key == "tol") {
    tol = parse_number<double>(key, value);
  } else if (key == "jobs") {
    jobs = parse_number<unsigned>(key, value);
  } else {
    throw Error(ErrorKind::Config, "unknown config key '" + std::string(key) + "'");
  }
}

void PipelineConfig::validate() const {
  if (layer_tags.empty()) throw Error(ErrorKind::Config, "layers must name at least one layer");
  for (std::size_t i = 0; i < layer_tags.size(); ++i) {
    for (std::size_t j = i + 1; j < layer_tags.size(); ++j) {
      if (layer_tags[i] == layer_tags[j]) {
        throw Error(ErrorKind::Config, "layer " + layer_tags[i] + " listed twice");
      }
    }
  }
  if (regions_per_layer == 0) throw Error(ErrorKind::Config, "regions_per_layer must be positive");
  if (clusters < 2) throw Error(ErrorKind::Config, "clusters must be >= 2");
  if (max_iters == 0) throw Error(ErrorKind::Config, "max_iters must be positive");
  if (restarts == 0) throw Error(ErrorKind::Config, "restarts must be positive");
  if (!(tol >= 0.0) || !std::isfinite(tol)) throw Error(ErrorKind::Config, "tol must be >= 0");
  try {
    grouping.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::Config, e.what());
  }
}

FeatureOptions PipelineConfig::feature_options() const {
  return FeatureOptions{layer_tags, row_l2};
}

KMeansOptions PipelineConfig::kmeans_options() const {
  return KMeansOptions{clusters, seed, max_iters, tol, restarts, jobs};
}

PipelineConfig parse_config(std::istream& source, PipelineConfig base) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(source, line)) {
    ++line_no;
    std::string_view text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    auto eq = text.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorKind::Config, "config line " + std::to_string(line_no) + ": expected key=value");
    }
    try {
      base.set(text.substr(0, eq), text.substr(eq + 1));
    } catch (const Error& e) {
      throw Error(ErrorKind::Config, "config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open config " + path.string());
  return parse_config(in, std::move(base));
}

std::string echo_config(const PipelineConfig& c) {
  std::string layers;
  for (const auto& t : c.layer_tags) layers += (layers.empty() ? "" : ",") + t;
  std::string out;
  out += "layers=" + layers + "\n";
  out += "regions_per_layer=" + std::to_string(c.regions_per_layer) + "\n";
  out += "clusters=" + std::to_string(c.clusters) + "\n";
  out += "connectivity=" + std::to_string(static_cast<int>(c.grouping.connectivity)) + "\n";
  out += "similarity_ratio=" +
         (c.grouping.similarity_ratio ? format_double(*c.grouping.similarity_ratio) : "disabled") + "\n";
  out += "zero_threshold=" + format_double(c.grouping.zero_threshold) + "\n";
  out += "normalization=" + std::string(to_string(c.normalization)) + "\n";
  out += std::string("row_l2=") + (c.row_l2 ? "true" : "false") + "\n";
  out += "seed=" + std::to_string(c.seed) + "\n";
  out += "max_iters=" + std::to_string(c.max_iters) + "\n";
  out += "tol=" + format_double(c.tol) + "\n";
  out += "restarts=" + std::to_string(c.restarts) + "\n";
  return out;
}

unsigned default_jobs() {
  const char* env = std::getenv("ATTNVLAD_JOBS");
  if (!env) return 1;
  std::string_view text(env);
  unsigned jobs = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), jobs);
  if (ec != std::errc() || ptr != text.data() + text.size() || jobs == 0) return 1;
  return jobs;
}

} // namespace attnvlad
