#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace attnvlad {

inline constexpr char kTensorMagic[8] = {'A', 'T', 'T', 'N', 'V', 'L', 'A', 'D'};
inline constexpr std::uint32_t kTensorFormatVersion = 1;
inline constexpr std::uint32_t kDtypeF32LE = 0;
inline constexpr const char* kTensorExtension = ".atn";

// One convolutional layer output (X columns, Y rows, K feature maps) for one
// image. Storage is y-major, then x, then channel, so the K-vector at a
// spatial location is contiguous. Instances are validated on construction
// and immutable afterwards.
class ActivationTensor {
public:
  // Throws Error{Validation} unless width, height, channels >= 1,
  // values.size() == width*height*channels and every value is finite and
  // non-negative. Empty tags/ids are rejected as well.
  ActivationTensor(std::size_t width, std::size_t height, std::size_t channels,
                   std::vector<float> values, std::string layer_tag, std::string image_id);

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t channels() const noexcept { return channels_; }
  const std::string& layer_tag() const noexcept { return layer_tag_; }
  const std::string& image_id() const noexcept { return image_id_; }
  std::span<const float> values() const noexcept { return values_; }

  float at(std::size_t x, std::size_t y, std::size_t k) const noexcept {
    return values_[(y * width_ + x) * channels_ + k];
  }

  // Contiguous K-vector at (x, y); no bounds check.
  std::span<const float> cell(std::size_t x, std::size_t y) const noexcept {
    return {values_.data() + (y * width_ + x) * channels_, channels_};
  }

  friend bool operator==(const ActivationTensor&, const ActivationTensor&) = default;

private:
  std::size_t width_;
  std::size_t height_;
  std::size_t channels_;
  std::vector<float> values_;
  std::string layer_tag_;
  std::string image_id_;
};

// Everything in a tensor file up to the payload.
struct TensorFileHeader {
  std::uint32_t version = kTensorFormatVersion;
  std::uint32_t dtype = kDtypeF32LE;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t channels = 0;
  std::string layer_tag;
  std::string image_id;

  std::uint64_t payload_bytes() const noexcept {
    return std::uint64_t{height} * width * channels * sizeof(float);
  }
};

// Serializes header + payload. Returns the number of bytes written.
// Throws Error{Io} (with the byte offset) if the sink fails.
std::uint64_t write_tensor(const ActivationTensor& tensor, std::ostream& sink);

// Parses and validates a full tensor. Every failure is an Error with kind
// Format, UnsupportedDtype, Length or Validation.
ActivationTensor read_tensor(std::istream& source);

// Header only; leaves the stream positioned at the payload.
TensorFileHeader read_tensor_header(std::istream& source);

void save_tensor(const ActivationTensor& tensor, const std::filesystem::path& path);
ActivationTensor load_tensor(const std::filesystem::path& path);
TensorFileHeader load_tensor_header(const std::filesystem::path& path);

} // namespace attnvlad
