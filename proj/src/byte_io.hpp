#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

// Little-endian primitives shared by the binary formats.
namespace attnvlad::detail {

// Upper bounds that keep a corrupt header from driving huge allocations.
inline constexpr std::uint32_t kMaxStringBytes = 1u << 16;
inline constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 31;

class ByteWriter {
public:
  explicit ByteWriter(std::ostream& sink) : sink_(sink) {}

  void bytes(const void* data, std::size_t n);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void string(std::string_view s); // u32 length + bytes
  void f32_array(std::span<const float> values);

  std::uint64_t written() const noexcept { return offset_; }

private:
  std::ostream& sink_;
  std::uint64_t offset_ = 0;
};

class ByteReader {
public:
  explicit ByteReader(std::istream& source) : source_(source) {}

  // Reads exactly n bytes or throws Error{Length} naming `what`.
  void bytes(void* out, std::size_t n, std::string_view what);
  std::uint32_t u32(std::string_view what);
  std::uint64_t u64(std::string_view what);
  double f64(std::string_view what);
  std::string string(std::string_view what);
  // count f32le values; Length error reports expected vs actual payload bytes.
  std::vector<float> f32_array(std::uint64_t count, std::string_view what);
  // Checks the 8-byte magic; Error{Format} otherwise.
  void magic(const char (&expected)[8], std::string_view format_name);

  std::uint64_t offset() const noexcept { return offset_; }

private:
  std::size_t read_some(char* out, std::size_t n);

  std::istream& source_;
  std::uint64_t offset_ = 0;
};

// Throws Error{Format} when a*b*c overflows or exceeds kMaxElements.
std::uint64_t checked_elements(std::uint64_t a, std::uint64_t b, std::uint64_t c,
                               std::string_view what);

} // namespace attnvlad::detail
