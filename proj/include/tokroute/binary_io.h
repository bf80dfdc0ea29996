#pragma once

// Little-endian encode/decode helpers for the PTRT/PTRR weight files.

#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tokroute/errors.h"

namespace tokroute::binary {

class Writer {
 public:
  void magic(std::string_view tag) {
    for (char c : tag) bytes_.push_back(static_cast<std::byte>(c));
  }

  void u32(std::uint32_t v) {
    for (int shift = 0; shift < 32; shift += 8) bytes_.push_back(static_cast<std::byte>((v >> shift) & 0xFFu));
  }

  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

  template <typename T>
  void f32s(std::span<const T> values) {
    for (T v : values) f32(static_cast<float>(v));
  }

  const std::vector<std::byte>& bytes() const noexcept { return bytes_; }

 private:
  std::vector<std::byte> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::byte> bytes) : bytes_(bytes) {}

  void expect_magic(std::string_view tag) {
    require(tag.size(), "magic");
    for (std::size_t i = 0; i < tag.size(); ++i) {
      if (static_cast<char>(bytes_[offset_ + i]) != tag[i]) {
        throw FormatError("bad magic, expected \"" + std::string(tag) + "\"", offset_ + i);
      }
    }
    offset_ += tag.size();
  }

  std::uint32_t u32(std::string_view field) {
    require(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::to_integer<std::uint32_t>(bytes_[offset_ + i]) << (8 * i);
    offset_ += 4;
    return v;
  }

  float f32(std::string_view field) { return std::bit_cast<float>(u32(field)); }

  template <typename T>
  void f32s(std::span<T> out, std::string_view field) {
    require(out.size() * 4, field);
    for (T& v : out) v = static_cast<T>(f32(field));
  }

  std::size_t offset() const noexcept { return offset_; }
  std::size_t remaining() const noexcept { return bytes_.size() - offset_; }

  void expect_end() const {
    if (offset_ != bytes_.size()) {
      throw FormatError(std::to_string(bytes_.size() - offset_) + " trailing bytes after payload", offset_);
    }
  }

 private:
  void require(std::size_t n, std::string_view field) const {
    if (bytes_.size() - offset_ < n) {
      throw FormatError("truncated while reading " + std::string(field), offset_);
    }
  }

  std::span<const std::byte> bytes_;
  std::size_t offset_ = 0;
};

std::vector<std::byte> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::byte> bytes);

}  // namespace tokroute::binary
