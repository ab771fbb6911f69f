#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mmcast {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct KeyValueLine {
  std::string key;
  std::string value;
  int line = 0;
};

/// Parses `key = value` lines. Blank lines and lines starting with '#' are
/// skipped; anything else without '=' is a FormatError naming the line.
std::vector<KeyValueLine> parse_key_values(const std::string& text, const std::string& source);

std::string format_double(double value);
std::string join_doubles(const std::vector<double>& values);
std::vector<double> split_doubles(const std::string& text);
std::vector<std::string> split_list(const std::string& text, char sep = ',');

/// Ordered key-value text file used for every manifest in the project.
class Manifest {
 public:
  void set(const std::string& key, std::string value);
  void set(const std::string& key, const char* value) { set(key, std::string(value)); }
  void set(const std::string& key, double value) { set(key, format_double(value)); }
  void set(const std::string& key, std::int64_t value) { set(key, std::to_string(value)); }
  void set(const std::string& key, int value) { set(key, std::to_string(value)); }
  void set(const std::string& key, std::uint64_t value) { set(key, std::to_string(value)); }
  void set(const std::string& key, bool value) { set(key, std::string(value ? "true" : "false")); }
  void set(const std::string& key, const std::vector<double>& values) { set(key, join_doubles(values)); }

  bool contains(const std::string& key) const;
  std::optional<std::string> find(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  /// Copies every entry of `other` under `prefix`.
  void merge(const Manifest& other, const std::string& prefix = "");

  std::string to_string() const;
  void write(const std::filesystem::path& path) const;
  static Manifest parse(const std::string& text, const std::string& source);
  static Manifest read(const std::filesystem::path& path);

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace mmcast
