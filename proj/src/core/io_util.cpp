// Copyright 2026 The pimtl Authors
// SPDX-License-Identifier: Apache-2.0

#include "io_util.hpp"

#include <cerrno>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <random>
#include <system_error>

namespace fs = std::filesystem;

namespace pimtl {

std::vector<char> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const std::streamsize size = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<char> bytes(static_cast<std::size_t>(size));
  if (size > 0) in.read(bytes.data(), size);
  require(static_cast<bool>(in), ErrorCode::kIo, "failed reading " + path.string());
  return bytes;
}

std::string read_text_file(const fs::path& path) {
  const std::vector<char> bytes = read_file(path);
  return {bytes.begin(), bytes.end()};
}

namespace {

std::string temp_suffix() {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  char buf[32];
  std::snprintf(buf, sizeof buf, ".tmp-%012llx",
                static_cast<unsigned long long>(rng() & 0xFFFFFFFFFFFFULL));
  return buf;
}

}  // namespace

void atomic_write_file(const fs::path& path, std::span<const char> bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    require(!ec, ErrorCode::kIo, "cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  const fs::path tmp = path.string() + temp_suffix();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(out), ErrorCode::kIo, "failed writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    fail(ErrorCode::kIo, "cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

void atomic_write_text(const fs::path& path, std::string_view text) {
  atomic_write_file(path, std::span<const char>(text.data(), text.size()));
}

fs::path make_staging_dir(const fs::path& final_dir) {
  fs::path parent = final_dir.has_parent_path() ? final_dir.parent_path() : fs::path(".");
  std::error_code ec;
  fs::create_directories(parent, ec);
  require(!ec, ErrorCode::kIo, "cannot create directory " + parent.string() + ": " + ec.message());
  const fs::path staging = final_dir.string() + temp_suffix();
  fs::create_directories(staging, ec);
  require(!ec, ErrorCode::kIo, "cannot create " + staging.string() + ": " + ec.message());
  return staging;
}

void commit_staging_dir(const fs::path& staging_dir, const fs::path& final_dir) {
  std::error_code ec;
  if (fs::exists(final_dir)) {
    const fs::path old = final_dir.string() + temp_suffix();
    fs::rename(final_dir, old, ec);
    require(!ec, ErrorCode::kIo, "cannot replace " + final_dir.string() + ": " + ec.message());
    fs::rename(staging_dir, final_dir, ec);
    require(!ec, ErrorCode::kIo, "cannot move " + staging_dir.string() + ": " + ec.message());
    fs::remove_all(old, ec);
  } else {
    fs::rename(staging_dir, final_dir, ec);
    require(!ec, ErrorCode::kIo, "cannot move " + staging_dir.string() + " to " +
                                     final_dir.string() + ": " + ec.message());
  }
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

double parse_double(std::string_view text, const std::string& where) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    fail(ErrorCode::kParse, where + ": cannot parse number '" + std::string(text) + "'");
  }
  return v;
}

std::string fnv1a_hex(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace pimtl
