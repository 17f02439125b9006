#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace emte {

/// Plain-text `key = value` configuration. Blank lines and lines starting
/// with `#` are ignored; list values are comma separated.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text, std::string source = "<string>");
  /// Throws UsageError when the file is missing or malformed.
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.contains(key); }
  std::optional<std::string> get(const std::string& key) const;
  std::string require(const std::string& key) const;

  std::string get_string(const std::string& key, std::string fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) const;
  std::vector<std::string> get_strings(const std::string& key,
                                       std::vector<std::string> fallback) const;

  /// Keys that start with `prefix`, in lexicographic order.
  std::vector<std::string> keys_with_prefix(std::string_view prefix) const;

  /// Rejects keys that are neither listed nor match an allowed prefix
  /// (prefix entries end with '.').
  void check_known(std::span<const std::string_view> allowed) const;
  void check_known(std::initializer_list<std::string_view> allowed) const {
    check_known(std::span<const std::string_view>(allowed.begin(), allowed.size()));
  }

  const std::string& source() const { return source_; }

 private:
  std::map<std::string, std::string> values_;
  std::string source_;
};

std::vector<std::string> split_list(std::string_view text);
std::string trim(std::string_view text);

}  // namespace emte
