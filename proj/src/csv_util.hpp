#pragma once

// Minimal CSV helpers shared by the file loaders. Not part of the public API.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "pillarvote/error.hpp"

namespace pillarvote::detail {

class CsvReader {
 public:
  explicit CsvReader(const std::filesystem::path& path) : path_(path), in_(path) {
    if (!in_) throw IoError("cannot open " + path.string());
  }

  // Next non-empty line split on commas; false at end of file.
  bool next(std::vector<std::string_view>& fields) {
    while (std::getline(in_, line_)) {
      ++line_number_;
      if (!line_.empty() && line_.back() == '\r') line_.pop_back();
      if (line_.empty()) continue;
      fields.clear();
      std::string_view rest(line_);
      while (true) {
        auto comma = rest.find(',');
        fields.push_back(trim(rest.substr(0, comma)));
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 1);
      }
      return true;
    }
    return false;
  }

  std::size_t line_number() const { return line_number_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(path_.string() + ":" + std::to_string(line_number_) + ": " + what);
  }

  double parse_double(std::string_view field) const {
    double value = 0.0;
    const char* first = field.data();
    if (!field.empty() && field.front() == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size() || field.empty())
      fail("invalid number '" + std::string(field) + "'");
    return value;
  }

  long long parse_int(std::string_view field) const {
    long long value = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size() || field.empty())
      fail("invalid integer '" + std::string(field) + "'");
    return value;
  }

 private:
  static std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
  }

  std::filesystem::path path_;
  std::ifstream in_;
  std::string line_;
  std::size_t line_number_ = 0;
};

inline std::FILE* open_for_write(const std::filesystem::path& path, const char* mode = "w") {
  std::FILE* f = std::fopen(path.c_str(), mode);
  if (f == nullptr) throw IoError("cannot write " + path.string());
  return f;
}

inline void close_checked(std::FILE* f, const std::filesystem::path& path) {
  bool failed = std::ferror(f) != 0;
  if (std::fclose(f) != 0 || failed) throw IoError("error writing " + path.string());
}

// Prints with six decimals, never "-0.000000".
inline void print_fixed6(std::FILE* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  std::string_view s(buf);
  if (s.front() == '-' && s.find_first_not_of("-0.") == std::string_view::npos) s.remove_prefix(1);
  std::fwrite(s.data(), 1, s.size(), f);
}

}  // namespace pillarvote::detail
