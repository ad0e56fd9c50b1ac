#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace efuf {

/// Flat `key = value` configuration text. `#` starts a comment; later keys
/// override earlier ones. Accessors throw ConfigError on malformed values.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text, std::string_view origin = "<config>");
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(std::string_view key) const;
  void set(std::string key, std::string value);

  std::string get_string(std::string_view key, std::string_view fallback) const;
  double get_double(std::string_view key, double fallback) const;
  std::int64_t get_int(std::string_view key, std::int64_t fallback) const;
  bool get_bool(std::string_view key, bool fallback) const;
  std::optional<std::string> find(std::string_view key) const;

  const std::map<std::string, std::string, std::less<>>& entries() const { return entries_; }

  /// Canonical `key=value\n` text in key order; basis of the config hash.
  std::string canonical() const;
  std::string hash() const;

 private:
  std::string origin_;
  std::map<std::string, std::string, std::less<>> entries_;
};

std::vector<std::string> split_list(std::string_view text, char sep = ',');
std::string trim(std::string_view s);

}  // namespace efuf
