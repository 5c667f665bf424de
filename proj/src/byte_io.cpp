#include "byte_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <string>

#include "attnvlad/error.hpp"

namespace attnvlad::detail {

namespace {

template <typename U>
void store_le(U v, unsigned char* out) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out[i] = static_cast<unsigned char>(v >> (8 * i));
  }
}

template <typename U>
U load_le(const unsigned char* in) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    v |= static_cast<U>(in[i]) << (8 * i);
  }
  return v;
}

} // namespace

void ByteWriter::bytes(const void* data, std::size_t n) {
  sink_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!sink_) {
    throw Error(ErrorKind::Io, "write failed at byte offset " + std::to_string(offset_));
  }
  offset_ += n;
}

void ByteWriter::u32(std::uint32_t v) {
  unsigned char buf[4];
  store_le(v, buf);
  bytes(buf, sizeof buf);
}

void ByteWriter::u64(std::uint64_t v) {
  unsigned char buf[8];
  store_le(v, buf);
  bytes(buf, sizeof buf);
}

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::string(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes(s.data(), s.size());
}

void ByteWriter::f32_array(std::span<const float> values) {
  std::array<unsigned char, 4096> buf;
  std::size_t fill = 0;
  for (float f : values) {
    store_le(std::bit_cast<std::uint32_t>(f), buf.data() + fill);
    fill += 4;
    if (fill == buf.size()) {
      bytes(buf.data(), fill);
      fill = 0;
    }
  }
  if (fill) bytes(buf.data(), fill);
}

std::size_t ByteReader::read_some(char* out, std::size_t n) {
  source_.read(out, static_cast<std::streamsize>(n));
  auto got = static_cast<std::size_t>(source_.gcount());
  offset_ += got;
  return got;
}

void ByteReader::bytes(void* out, std::size_t n, std::string_view what) {
  std::uint64_t start = offset_;
  std::size_t got = read_some(static_cast<char*>(out), n);
  if (got != n) {
    throw Error(ErrorKind::Length, "truncated " + std::string(what) + ": expected " +
                                       std::to_string(n) + " bytes at offset " +
                                       std::to_string(start) + ", got " + std::to_string(got));
  }
}

std::uint32_t ByteReader::u32(std::string_view what) {
  unsigned char buf[4];
  bytes(buf, sizeof buf, what);
  return load_le<std::uint32_t>(buf);
}

std::uint64_t ByteReader::u64(std::string_view what) {
  unsigned char buf[8];
  bytes(buf, sizeof buf, what);
  return load_le<std::uint64_t>(buf);
}

double ByteReader::f64(std::string_view what) { return std::bit_cast<double>(u64(what)); }

std::string ByteReader::string(std::string_view what) {
  std::uint32_t n = u32(what);
  if (n > kMaxStringBytes) {
    throw Error(ErrorKind::Format, std::string(what) + " length " + std::to_string(n) +
                                       " exceeds limit " + std::to_string(kMaxStringBytes));
  }
  std::string s(n, '\0');
  bytes(s.data(), n, what);
  return s;
}

std::vector<float> ByteReader::f32_array(std::uint64_t count, std::string_view what) {
  const std::uint64_t expected = count * 4;
  std::vector<float> values;
  std::array<unsigned char, 1 << 16> buf;
  std::uint64_t total = 0;
  // Grow as data arrives so a lying header cannot force a giant allocation.
  while (total < expected) {
    auto want = static_cast<std::size_t>(std::min<std::uint64_t>(buf.size(), expected - total));
    std::size_t got = read_some(reinterpret_cast<char*>(buf.data()), want);
    total += got;
    for (std::size_t i = 0; i + 4 <= got; i += 4) {
      values.push_back(std::bit_cast<float>(load_le<std::uint32_t>(buf.data() + i)));
    }
    if (got != want) {
      throw Error(ErrorKind::Length, "truncated " + std::string(what) + ": expected " +
                                         std::to_string(expected) + " payload bytes, got " +
                                         std::to_string(total));
    }
  }
  return values;
}

void ByteReader::magic(const char (&expected)[8], std::string_view format_name) {
  char buf[8];
  std::size_t got = read_some(buf, sizeof buf);
  if (got != sizeof buf || std::memcmp(buf, expected, sizeof buf) != 0) {
    throw Error(ErrorKind::Format, "bad magic: not a " + std::string(format_name) + " file");
  }
}

std::uint64_t checked_elements(std::uint64_t a, std::uint64_t b, std::uint64_t c,
                               std::string_view what) {
  auto fail = [&] {
    throw Error(ErrorKind::Format, std::string(what) + " element count exceeds limit of " +
                                       std::to_string(kMaxElements));
  };
  if (a && b > kMaxElements / a) fail();
  std::uint64_t ab = a * b;
  if (ab && c > kMaxElements / ab) fail();
  return ab * c;
}

} // namespace attnvlad::detail
