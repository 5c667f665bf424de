#include "attnvlad/regional_features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "attnvlad/error.hpp"
#include "byte_io.hpp"

namespace attnvlad {

LocalDescriptor local_descriptor(const ActivationTensor& tensor, int x, int y) {
  if (x < 0 || y < 0 || static_cast<std::size_t>(x) >= tensor.width() ||
      static_cast<std::size_t>(y) >= tensor.height()) {
    throw Error(ErrorKind::Parameter, "position (" + std::to_string(x) + ", " + std::to_string(y) +
                                          ") outside " + std::to_string(tensor.width()) + "x" +
                                          std::to_string(tensor.height()) + " tensor");
  }
  auto cell = tensor.cell(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
  return LocalDescriptor{Position{x, y}, std::vector<float>(cell.begin(), cell.end())};
}

std::vector<float> aggregate_region(const ActivationTensor& tensor, const Region& region) {
  if (region.positions.empty()) {
    throw Error(ErrorKind::Parameter, "cannot aggregate an empty region");
  }
  std::vector<double> acc(tensor.channels(), 0.0);
  for (const auto& p : region.positions) {
    if (p.x < 0 || p.y < 0 || static_cast<std::size_t>(p.x) >= tensor.width() ||
        static_cast<std::size_t>(p.y) >= tensor.height()) {
      throw Error(ErrorKind::Parameter, "region position (" + std::to_string(p.x) + ", " +
                                            std::to_string(p.y) + ") outside tensor");
    }
    auto cell = tensor.cell(static_cast<std::size_t>(p.x), static_cast<std::size_t>(p.y));
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += cell[k];
  }
  return std::vector<float>(acc.begin(), acc.end());
}

RegionalFeatureSet build_feature_set(std::span<const LayerInput> layers,
                                     const FeatureOptions& options) {
  if (layers.size() != options.layer_order.size()) {
    throw Error(ErrorKind::Consistency, "expected " + std::to_string(options.layer_order.size()) +
                                            " layers, got " + std::to_string(layers.size()));
  }
  if (layers.empty()) throw Error(ErrorKind::Parameter, "no layers configured");

  const std::string& image_id = layers.front().tensor.image_id();
  const std::size_t dims = layers.front().tensor.channels();
  for (const auto& layer : layers) {
    if (layer.tensor.image_id() != image_id) {
      throw Error(ErrorKind::Consistency, "layer " + layer.tensor.layer_tag() + " belongs to image " +
                                              layer.tensor.image_id() + ", expected " + image_id);
    }
    if (layer.tensor.channels() != dims) {
      throw Error(ErrorKind::Dimension, "layer " + layer.tensor.layer_tag() + " has K=" +
                                            std::to_string(layer.tensor.channels()) + ", expected K=" +
                                            std::to_string(dims));
    }
    if (!layer.selection.layer_tag.empty() && layer.selection.layer_tag != layer.tensor.layer_tag()) {
      throw Error(ErrorKind::Consistency, "region selection for " + layer.selection.layer_tag +
                                              " paired with tensor " + layer.tensor.layer_tag());
    }
  }

  RegionalFeatureSet set;
  set.image_id = image_id;
  set.features = Matrix(0, dims);
  for (const auto& tag : options.layer_order) {
    auto matches = [&](const LayerInput& l) { return l.tensor.layer_tag() == tag; };
    auto count = std::count_if(layers.begin(), layers.end(), matches);
    if (count != 1) {
      throw Error(ErrorKind::Consistency, "image " + image_id + ": layer " + tag +
                                              (count == 0 ? " missing" : " given more than once"));
    }
    const LayerInput& layer = *std::find_if(layers.begin(), layers.end(), matches);
    for (const auto& region : layer.selection.regions) {
      std::vector<float> row = aggregate_region(layer.tensor, region);
      if (options.l2_normalize_rows) {
        double sq = 0.0;
        for (float v : row) sq += double{v} * v;
        if (sq > 0.0) {
          double inv = 1.0 / std::sqrt(sq);
          for (float& v : row) v = static_cast<float>(v * inv);
        }
      }
      set.features.append_row(row);
    }
    set.per_layer_counts.emplace_back(tag, layer.selection.regions.size());
  }
  return set;
}

std::uint64_t write_feature_set(const RegionalFeatureSet& set, std::ostream& sink) {
  detail::ByteWriter w(sink);
  w.bytes(kFeatureMagic, sizeof kFeatureMagic);
  w.u32(kFeatureFormatVersion);
  w.u32(static_cast<std::uint32_t>(set.features.rows()));
  w.u32(static_cast<std::uint32_t>(set.features.cols()));
  w.string(set.image_id);
  w.u32(static_cast<std::uint32_t>(set.per_layer_counts.size()));
  for (const auto& [tag, count] : set.per_layer_counts) {
    w.string(tag);
    w.u32(static_cast<std::uint32_t>(count));
  }
  w.f32_array(set.features.values());
  sink.flush();
  if (!sink) throw Error(ErrorKind::Io, "flush failed after " + std::to_string(w.written()) + " bytes");
  return w.written();
}

RegionalFeatureSet read_feature_set(std::istream& source) {
  detail::ByteReader r(source);
  r.magic(kFeatureMagic, "feature set (ATTNFEAT)");
  std::uint32_t version = r.u32("version");
  if (version != kFeatureFormatVersion) {
    throw Error(ErrorKind::Format, "unknown feature format version " + std::to_string(version));
  }
  std::uint32_t rows = r.u32("T");
  std::uint32_t cols = r.u32("K");
  detail::checked_elements(rows, cols, 1, "feature set");
  RegionalFeatureSet set;
  set.image_id = r.string("image_id");
  std::uint32_t num_layers = r.u32("layer count");
  if (num_layers > 1024) throw Error(ErrorKind::Format, "implausible layer count " + std::to_string(num_layers));
  std::uint64_t total = 0;
  for (std::uint32_t i = 0; i < num_layers; ++i) {
    std::string tag = r.string("layer tag");
    std::uint32_t count = r.u32("layer count");
    total += count;
    set.per_layer_counts.emplace_back(std::move(tag), count);
  }
  if (total != rows) {
    throw Error(ErrorKind::Format, "per-layer counts sum to " + std::to_string(total) +
                                       " but T=" + std::to_string(rows));
  }
  std::vector<float> values = r.f32_array(std::uint64_t{rows} * cols, "feature payload");
  if (std::any_of(values.begin(), values.end(), [](float v) { return !std::isfinite(v); })) {
    throw Error(ErrorKind::Validation, "non-finite value in feature set " + set.image_id);
  }
  set.features = Matrix(rows, cols, std::move(values));
  return set;
}

void save_feature_set(const RegionalFeatureSet& set, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  write_feature_set(set, out);
}

RegionalFeatureSet load_feature_set(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  try {
    return read_feature_set(in);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

} // namespace attnvlad
