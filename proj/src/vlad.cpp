#include "attnvlad/vlad.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

#include "attnvlad/error.hpp"
#include "byte_io.hpp"
#include "parallel.hpp"

namespace attnvlad {

std::string_view to_string(Normalization n) noexcept {
  switch (n) {
  case Normalization::None: return "none";
  case Normalization::IntraGlobalL2: return "intra+global-l2";
  }
  return "unknown";
}

Normalization parse_normalization(std::string_view text) {
  if (text == "none") return Normalization::None;
  if (text == "intra+global-l2") return Normalization::IntraGlobalL2;
  throw Error(ErrorKind::Config, "unknown normalization '" + std::string(text) +
                                     "' (expected none or intra+global-l2)");
}

bool VladDescriptor::degenerate() const noexcept {
  const auto values = matrix.values();
  return std::all_of(values.begin(), values.end(), [](float v) { return v == 0.0f; });
}

VladDescriptor encode_vlad(const RegionalFeatureSet& features, const Codebook& codebook,
                           Normalization normalization) {
  if (features.count() == 0) {
    throw Error(ErrorKind::Degenerate, "image " + features.image_id + " has no regional features");
  }
  if (features.dims() != codebook.dims()) {
    throw Error(ErrorKind::Dimension, "image " + features.image_id + " has K=" +
                                          std::to_string(features.dims()) + ", codebook has K=" +
                                          std::to_string(codebook.dims()));
  }
  const std::size_t clusters = codebook.clusters();
  const std::size_t dims = codebook.dims();
  std::vector<double> residuals(clusters * dims, 0.0);
  for (std::size_t r = 0; r < features.count(); ++r) {
    auto row = features.features.row(r);
    std::size_t c = codebook.assign(row);
    auto centroid = codebook.centroids().row(c);
    double* target = residuals.data() + c * dims;
    for (std::size_t k = 0; k < dims; ++k) target[k] += double{row[k]} - double{centroid[k]};
  }

  if (normalization == Normalization::IntraGlobalL2) {
    for (std::size_t c = 0; c < clusters; ++c) {
      double* row = residuals.data() + c * dims;
      double sq = 0.0;
      for (std::size_t k = 0; k < dims; ++k) sq += row[k] * row[k];
      if (sq == 0.0) continue;
      double inv = 1.0 / std::sqrt(sq);
      for (std::size_t k = 0; k < dims; ++k) row[k] *= inv;
    }
    double total = 0.0;
    for (double v : residuals) total += v * v;
    if (total > 0.0) {
      double inv = 1.0 / std::sqrt(total);
      for (double& v : residuals) v *= inv;
    }
  }

  VladDescriptor out;
  out.image_id = features.image_id;
  out.normalization = normalization;
  out.matrix = Matrix(clusters, dims, std::vector<float>(residuals.begin(), residuals.end()));
  return out;
}

double similarity(const VladDescriptor& a, const VladDescriptor& b) {
  if (a.matrix.rows() != b.matrix.rows() || a.matrix.cols() != b.matrix.cols()) {
    throw Error(ErrorKind::Dimension, "descriptor shapes differ: " + std::to_string(a.matrix.rows()) +
                                          "x" + std::to_string(a.matrix.cols()) + " vs " +
                                          std::to_string(b.matrix.rows()) + "x" +
                                          std::to_string(b.matrix.cols()));
  }
  if (a.normalization != b.normalization) {
    throw Error(ErrorKind::Dimension, "descriptors use different normalizations");
  }
  const auto x = a.matrix.values();
  const auto y = b.matrix.values();
  double dot = 0.0, xx = 0.0, yy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double p = x[i], q = y[i];
    dot += p * q;
    xx += p * p;
    yy += q * q;
  }
  if (xx == 0.0 || yy == 0.0) {
    throw Error(ErrorKind::Degenerate, "zero-norm descriptor (" +
                                           (xx == 0.0 ? a.image_id : b.image_id) + ")");
  }
  return std::clamp(dot / (std::sqrt(xx) * std::sqrt(yy)), -1.0, 1.0);
}

MatchResult match_query(const VladDescriptor& query, std::span<const VladDescriptor> references,
                        unsigned jobs) {
  if (references.empty()) throw Error(ErrorKind::Parameter, "no reference descriptors to match against");
  std::vector<double> scores(references.size());
  detail::parallel_for(references.size(), jobs,
                       [&](std::size_t i) { scores[i] = similarity(query, references[i]); });

  std::vector<std::size_t> order(references.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  MatchResult result;
  result.query_id = query.image_id;
  result.num_references = references.size();
  result.ranked.reserve(order.size());
  for (auto i : order) result.ranked.push_back({references[i].image_id, scores[i]});
  return result;
}

std::uint64_t write_vlad(const VladDescriptor& descriptor, std::ostream& sink) {
  detail::ByteWriter w(sink);
  w.bytes(kVladMagic, sizeof kVladMagic);
  w.u32(kVladFormatVersion);
  w.u32(static_cast<std::uint32_t>(descriptor.matrix.rows()));
  w.u32(static_cast<std::uint32_t>(descriptor.matrix.cols()));
  w.u32(static_cast<std::uint32_t>(descriptor.normalization));
  w.string(descriptor.image_id);
  w.f32_array(descriptor.matrix.values());
  sink.flush();
  if (!sink) throw Error(ErrorKind::Io, "flush failed after " + std::to_string(w.written()) + " bytes");
  return w.written();
}

VladDescriptor read_vlad(std::istream& source) {
  detail::ByteReader r(source);
  r.magic(kVladMagic, "VLAD (ATTNVLD1)");
  std::uint32_t version = r.u32("version");
  if (version != kVladFormatVersion) {
    throw Error(ErrorKind::Format, "unknown VLAD format version " + std::to_string(version));
  }
  std::uint32_t clusters = r.u32("V");
  std::uint32_t dims = r.u32("K");
  detail::checked_elements(clusters, dims, 1, "VLAD");
  std::uint32_t tag = r.u32("normalization");
  if (tag > static_cast<std::uint32_t>(Normalization::IntraGlobalL2)) {
    throw Error(ErrorKind::Format, "unknown normalization tag " + std::to_string(tag));
  }
  VladDescriptor d;
  d.normalization = static_cast<Normalization>(tag);
  d.image_id = r.string("image_id");
  std::vector<float> values = r.f32_array(std::uint64_t{clusters} * dims, "VLAD payload");
  if (std::any_of(values.begin(), values.end(), [](float v) { return !std::isfinite(v); })) {
    throw Error(ErrorKind::Validation, "non-finite value in VLAD descriptor " + d.image_id);
  }
  d.matrix = Matrix(clusters, dims, std::move(values));
  return d;
}

void save_vlad(const VladDescriptor& descriptor, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  write_vlad(descriptor, out);
}

VladDescriptor load_vlad(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  try {
    return read_vlad(in);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

} // namespace attnvlad
