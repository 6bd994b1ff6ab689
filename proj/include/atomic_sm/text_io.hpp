#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace atomic_sm::io {

/// Malformed or unreadable input file; the message names the path.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line per row
};

/// Reads a comma-separated file whose header must equal `expected_header`.
/// Fields are not quoted; surrounding whitespace is trimmed.
CsvTable read_csv(const std::filesystem::path& path, const std::vector<std::string>& expected_header);

std::vector<std::string> split(std::string_view line, char sep);
std::string_view trim(std::string_view s);

double parse_double(std::string_view text, std::string_view what);
std::int64_t parse_int(std::string_view text, std::string_view what);

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double value);

/// FNV-1a 64-bit hash of a file's bytes, hex encoded.
std::string file_fingerprint(const std::filesystem::path& path);

void write_text_file(const std::filesystem::path& path, std::string_view contents);
std::string read_text_file(const std::filesystem::path& path);

/// Flat `key = value` text format; `#` starts a comment line. Keys keep
/// insertion order when written back.
class KeyValueFile {
 public:
  static KeyValueFile parse(std::string_view text, std::string_view source = "<memory>");
  static KeyValueFile load(const std::filesystem::path& path);

  bool contains(const std::string& key) const { return index_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;
  std::string get_or(const std::string& key, std::string fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;

  void set(const std::string& key, std::string value);
  void set(const std::string& key, double value) { set(key, format_double(value)); }
  void set(const std::string& key, std::int64_t value) { set(key, std::to_string(value)); }
  void set(const std::string& key, std::size_t value) { set(key, std::to_string(value)); }
  void set(const std::string& key, int value) { set(key, std::to_string(value)); }
  void set(const std::string& key, const char* value) { set(key, std::string(value)); }

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
  std::string to_string() const;
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::map<std::string, std::size_t> index_;
  std::string source_;
};

}  // namespace atomic_sm::io
