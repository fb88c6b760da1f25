#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <cstdio>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "hilomix/error.hpp"
#include "hilomix/numerics/matrix.hpp"

namespace hilomix::io {

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

/// Appends raw little-endian float64 values.
inline void append_f64_le(std::string& buf, std::span<const double> values) {
  const std::size_t at = buf.size();
  buf.resize(at + values.size() * 8);
  for (std::size_t k = 0; k < values.size(); ++k) {
    auto bits = std::bit_cast<std::uint64_t>(values[k]);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    std::memcpy(buf.data() + at + k * 8, &bits, 8);
  }
}

inline std::vector<double> parse_f64_le(std::string_view bytes) {
  if (bytes.size() % 8 != 0) throw IoError("float64 buffer length not a multiple of 8");
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::uint64_t bits;
    std::memcpy(&bits, bytes.data() + k * 8, 8);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    out[k] = std::bit_cast<double>(bits);
  }
  return out;
}

/// Shortest text that round-trips a double exactly.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Splits one CSV line on commas, trimming surrounding whitespace and a
/// trailing carriage return. Quoted fields are not supported.
inline std::vector<std::string> split_csv_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    std::string_view f = line.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                            : comma - start);
    while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
    while (!f.empty() && (f.back() == ' ' || f.back() == '\t')) f.remove_suffix(1);
    fields.emplace_back(f);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

/// Line-oriented CSV reader with header validation and 1-based line numbers
/// for error messages.
class CsvReader {
 public:
  CsvReader(const std::filesystem::path& path, std::vector<std::string> expected_header)
      : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in_, line)) {
      empty_ = true;
      return;
    }
    line_no_ = 1;
    auto header = split_csv_line(line);
    if (header != expected_header) {
      std::string want;
      for (const auto& h : expected_header) want += (want.empty() ? "" : ",") + h;
      throw ValidationError(path.string() + ":1: expected header '" + want + "'");
    }
  }

  /// Next non-blank row; false at end of file.
  bool next(std::vector<std::string>& row) {
    if (empty_) return false;
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (line.empty() || line == "\r") continue;
      row = split_csv_line(line);
      return true;
    }
    return false;
  }

  [[nodiscard]] std::size_t line() const noexcept { return line_no_; }
  [[nodiscard]] std::string where() const {
    return path_.string() + ":" + std::to_string(line_no_);
  }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::size_t line_no_ = 0;
  bool empty_ = false;
};

inline double parse_double(const std::string& s, const std::string& where, const char* field) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) {
    throw ValidationError(where + ": field '" + field + "' is not a number: '" + s + "'");
  }
  return v;
}

inline std::int64_t parse_int(const std::string& s, const std::string& where, const char* field) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) {
    throw ValidationError(where + ": field '" + field + "' is not an integer: '" + s + "'");
  }
  return v;
}

}  // namespace hilomix::io
