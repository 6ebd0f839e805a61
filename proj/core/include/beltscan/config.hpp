#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace beltscan {

// Flat key=value configuration with dotted section names
// (e.g. train.epochs=24). Lines starting with '#' are comments.
class RunConfig {
 public:
  RunConfig() = default;

  static RunConfig parse_file(const std::filesystem::path& path);
  static RunConfig parse_text(const std::string& text);

  /// Re-emits every key in sorted order; parse(dump()) round-trips.
  std::string dump() const;

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, const std::string& value);

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace beltscan
