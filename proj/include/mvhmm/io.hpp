#pragma once

// Locale-independent number formatting and atomic file output.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>

namespace mvhmm::io {

/// Shortest representation that round-trips to the same double.
inline std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc{}) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf, end);
}

/// Write `content` to `path` via a sibling temporary file and a rename.
inline void write_atomic(const std::filesystem::path& path, std::string_view content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw std::runtime_error("cannot rename " + tmp.string() + " to " + path.string() + ": " +
                             ec.message());
  }
}

/// Accumulates comma-separated rows in memory.
class CsvBuilder {
 public:
  CsvBuilder& header(std::initializer_list<std::string_view> names) {
    for (auto n : names) cell(n);
    return end_row();
  }
  CsvBuilder& cell(std::string_view text) {
    if (!at_row_start_) out_ += ',';
    out_ += text;
    at_row_start_ = false;
    return *this;
  }
  CsvBuilder& cell(double value) { return cell(format_double(value)); }
  CsvBuilder& cell(std::size_t value) { return cell(std::string_view(std::to_string(value))); }
  CsvBuilder& blank() { return cell(std::string_view{}); }
  CsvBuilder& end_row() {
    out_ += '\n';
    at_row_start_ = true;
    return *this;
  }
  const std::string& str() const noexcept { return out_; }

 private:
  std::string out_;
  bool at_row_start_ = true;
};

}  // namespace mvhmm::io
