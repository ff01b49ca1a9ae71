#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace subtomo::cli {

// Bad or unknown configuration; maps to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Typed, dotted-key access to a YAML key-table config ("field.ambient_dim"
// reads `ambient_dim` under the `field` table). Every read is recorded with
// its resolved value, so the effective configuration (file values plus
// defaults) can be serialized and hashed. Keys present in the file but never
// read are rejected by check_unknown().
class ConfigReader {
 public:
  ConfigReader();
  ~ConfigReader();
  ConfigReader(ConfigReader&&) noexcept;
  ConfigReader& operator=(ConfigReader&&) noexcept;

  static ConfigReader from_file(const std::filesystem::path& path);
  static ConfigReader from_string(const std::string& text);

  bool has(std::string_view key) const;

  // Replaces a value from the file, e.g. a command-line flag.
  void set_override(const std::string& key, const std::string& value);

  int get_int(const std::string& key, int fallback, int min = INT32_MIN, int max = INT32_MAX);
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback);
  double get_double(const std::string& key, double fallback, double min = -1e300,
                    double max = 1e300);
  bool get_bool(const std::string& key, bool fallback);
  std::string get_string(const std::string& key, const std::string& fallback);
  std::string get_choice(const std::string& key, const std::string& fallback,
                         const std::vector<std::string>& allowed);
  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback,
                                int min = INT32_MIN, int max = INT32_MAX);
  std::vector<double> get_double_list(const std::string& key, const std::vector<double>& fallback);
  std::vector<std::string> get_string_list(const std::string& key,
                                           const std::vector<std::string>& fallback);
  // Marks the key as read without entering it into the hash, for settings
  // that cannot change results (output directory, thread count).
  std::string get_unhashed_string(const std::string& key, const std::string& fallback);

  // Throws ConfigError naming every key that was supplied but never read.
  void check_unknown() const;

  // Sorted "key = value" lines for every key read so far.
  std::string canonical() const;
  std::uint64_t hash() const;
  std::string hash_hex() const;
  const std::map<std::string, std::string>& resolved() const { return resolved_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::map<std::string, std::string> resolved_;
  std::map<std::string, std::string> overrides_;
  std::set<std::string> supplied_;
  std::set<std::string> unhashed_;
};

std::uint64_t fnv1a64(std::string_view text);

}  // namespace subtomo::cli
