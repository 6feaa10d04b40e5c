#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>
#include <string>

namespace touchadd::app {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat view of a TOML-style file: `[section]` headers, `key = value` lines
/// and `#` comments. Values are bare numbers, true/false, or double-quoted
/// strings. Keys are addressed as "section.key".
class Config {
 public:
  static Config parse(const std::string& text);
  static Config load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string get_string(const std::string& key, const std::string& fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  void set(const std::string& key, const std::string& raw) { values_[key] = raw; }

  /// Keys that no getter has asked for, e.g. misspelt options.
  std::set<std::string> unused() const;

  /// Canonical JSON of every entry, for hashing into reports.
  std::string to_json() const;

 private:
  const std::string* raw(const std::string& key) const;

  std::map<std::string, std::string> values_;  // strings keep their quotes
  mutable std::set<std::string> used_;
};

}  // namespace touchadd::app
