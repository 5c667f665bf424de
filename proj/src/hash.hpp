#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>

namespace attnvlad::detail {

// Incremental SHA-256 (OpenSSL EVP underneath).
class Sha256 {
public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t n);
  std::array<std::uint8_t, 32> finish();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::string to_hex(std::span<const std::uint8_t> bytes);
std::array<std::uint8_t, 32> sha256_file(const std::filesystem::path& path);

} // namespace attnvlad::detail
