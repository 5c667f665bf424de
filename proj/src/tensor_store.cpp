#include "attnvlad/tensor_store.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include "attnvlad/error.hpp"
#include "byte_io.hpp"

namespace attnvlad {

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw Error(ErrorKind::Validation, message);
}

} // namespace

ActivationTensor::ActivationTensor(std::size_t width, std::size_t height, std::size_t channels,
                                   std::vector<float> values, std::string layer_tag,
                                   std::string image_id)
    : width_(width), height_(height), channels_(channels), values_(std::move(values)),
      layer_tag_(std::move(layer_tag)), image_id_(std::move(image_id)) {
  require(width_ >= 1 && height_ >= 1 && channels_ >= 1,
          "tensor dimensions must be positive (X=" + std::to_string(width_) +
              ", Y=" + std::to_string(height_) + ", K=" + std::to_string(channels_) + ")");
  require(values_.size() == width_ * height_ * channels_,
          "tensor holds " + std::to_string(values_.size()) + " values, expected " +
              std::to_string(width_ * height_ * channels_));
  require(!layer_tag_.empty(), "tensor layer_tag is empty");
  require(!image_id_.empty(), "tensor image_id is empty");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    float v = values_[i];
    if (!std::isfinite(v) || v < 0.0f) {
      std::size_t k = i % channels_;
      std::size_t x = (i / channels_) % width_;
      std::size_t y = i / (channels_ * width_);
      require(false, std::string(std::isfinite(v) ? "negative" : "non-finite") +
                         " activation at (x=" + std::to_string(x) + ", y=" + std::to_string(y) +
                         ", k=" + std::to_string(k) + ") of " + image_id_ + "/" + layer_tag_);
    }
  }
}

std::uint64_t write_tensor(const ActivationTensor& tensor, std::ostream& sink) {
  detail::ByteWriter w(sink);
  w.bytes(kTensorMagic, sizeof kTensorMagic);
  w.u32(kTensorFormatVersion);
  w.u32(kDtypeF32LE);
  w.u32(static_cast<std::uint32_t>(tensor.height()));
  w.u32(static_cast<std::uint32_t>(tensor.width()));
  w.u32(static_cast<std::uint32_t>(tensor.channels()));
  w.string(tensor.layer_tag());
  w.string(tensor.image_id());
  w.f32_array(tensor.values());
  sink.flush();
  if (!sink) throw Error(ErrorKind::Io, "flush failed after " + std::to_string(w.written()) + " bytes");
  return w.written();
}

namespace {

TensorFileHeader read_header(detail::ByteReader& r) {
  r.magic(kTensorMagic, "tensor (ATTNVLAD)");
  TensorFileHeader h;
  h.version = r.u32("version");
  if (h.version != kTensorFormatVersion) {
    throw Error(ErrorKind::Format, "unknown tensor format version " + std::to_string(h.version));
  }
  h.dtype = r.u32("dtype");
  if (h.dtype != kDtypeF32LE) {
    throw Error(ErrorKind::UnsupportedDtype,
                "unsupported dtype code " + std::to_string(h.dtype) + " (only 0 = f32le)");
  }
  h.height = r.u32("dims");
  h.width = r.u32("dims");
  h.channels = r.u32("dims");
  if (h.height == 0 || h.width == 0 || h.channels == 0) {
    throw Error(ErrorKind::Format, "zero dimension in tensor header");
  }
  detail::checked_elements(h.height, h.width, h.channels, "tensor");
  h.layer_tag = r.string("layer_tag");
  h.image_id = r.string("image_id");
  return h;
}

} // namespace

TensorFileHeader read_tensor_header(std::istream& source) {
  detail::ByteReader r(source);
  return read_header(r);
}

ActivationTensor read_tensor(std::istream& source) {
  detail::ByteReader r(source);
  TensorFileHeader h = read_header(r);
  std::uint64_t count = std::uint64_t{h.height} * h.width * h.channels;
  std::vector<float> values = r.f32_array(count, "tensor payload");
  return ActivationTensor(h.width, h.height, h.channels, std::move(values), std::move(h.layer_tag),
                          std::move(h.image_id));
}

void save_tensor(const ActivationTensor& tensor, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  write_tensor(tensor, out);
}

ActivationTensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  try {
    return read_tensor(in);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

TensorFileHeader load_tensor_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  try {
    return read_tensor_header(in);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

} // namespace attnvlad
