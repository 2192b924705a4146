// Copyright 2026 The pimtl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "errors.hpp"

namespace pimtl {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian; big-endian hosts are not supported");

// Appends trivially-copyable values to a byte buffer.
class ByteWriter {
 public:
  template <typename T>
  void put(const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const char*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_bytes(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  void put_doubles(std::span<const double> values) {
    const auto* p = reinterpret_cast<const char*>(values.data());
    bytes_.insert(bytes_.end(), p, p + values.size_bytes());
  }
  const std::vector<char>& bytes() const noexcept { return bytes_; }

 private:
  std::vector<char> bytes_;
};

// Bounds-checked reader; errors carry the byte offset.
class ByteReader {
 public:
  ByteReader(std::span<const char> bytes, std::string source)
      : bytes_(bytes), source_(std::move(source)) {}

  template <typename T>
  T get() {
    static_assert(std::is_trivially_copyable_v<T>);
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + offset_, sizeof(T));
    offset_ += sizeof(T);
    return v;
  }
  std::string get_bytes(std::size_t n) {
    need(n);
    std::string s(bytes_.data() + offset_, n);
    offset_ += n;
    return s;
  }
  void get_doubles(std::span<double> out) {
    need(out.size_bytes());
    std::memcpy(out.data(), bytes_.data() + offset_, out.size_bytes());
    offset_ += out.size_bytes();
  }
  std::size_t offset() const noexcept { return offset_; }
  std::size_t remaining() const noexcept { return bytes_.size() - offset_; }
  [[noreturn]] void error(const std::string& what) const {
    fail(ErrorCode::kParse, source_ + ": " + what + " at byte offset " + std::to_string(offset_));
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - offset_ < n) {
      error("truncated input (needed " + std::to_string(n) + " bytes, " +
            std::to_string(bytes_.size() - offset_) + " left)");
    }
  }

  std::span<const char> bytes_;
  std::string source_;
  std::size_t offset_ = 0;
};

std::vector<char> read_file(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it into place.
void atomic_write_file(const std::filesystem::path& path, std::span<const char> bytes);
void atomic_write_text(const std::filesystem::path& path, std::string_view text);

// Fresh sibling temp directory for building a directory artifact.
std::filesystem::path make_staging_dir(const std::filesystem::path& final_dir);
// Replaces `final_dir` by `staging_dir` (rename; previous content removed).
void commit_staging_dir(const std::filesystem::path& staging_dir,
                        const std::filesystem::path& final_dir);

// Full-precision text for a double (round-trips through strtod).
std::string format_double(double v);
double parse_double(std::string_view text, const std::string& where);

// FNV-1a 64-bit, printed as 16 hex digits.
std::string fnv1a_hex(std::string_view data);

}  // namespace pimtl
