#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace maskdet {

/// One `key = value` entry of a configuration file.
struct KeyValue {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

/// Parses `key = value` lines. Blank lines and `#` comments are skipped.
/// Duplicate keys and lines without `=` raise ParseError.
std::vector<KeyValue> parse_key_values(const std::string& text);
std::vector<KeyValue> read_key_values(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// Strict scalar parsing used by every key-value consumer; the whole token
/// must be consumed. Errors are reported as ConfigError naming `key`.
double parse_real(const std::string& key, const std::string& value);
long long parse_integer(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);
std::pair<double, double> parse_real_pair(const std::string& key, const std::string& value);
std::vector<double> parse_real_list(const std::string& key, const std::string& value);

/// Shortest representation that parses back to the same double.
std::string format_real(double v);

std::string trim(const std::string& s);

}  // namespace maskdet
