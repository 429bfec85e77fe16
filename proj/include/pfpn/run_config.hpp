#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pfpn/config.hpp"

namespace pfpn {

/// Flat `key = value` configuration with dotted sections, `#` comments and
/// line-number tracking. Every read marks its key as consumed so unknown keys
/// can be rejected by name and line.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;
  static KeyValueConfig from_file(const std::filesystem::path& path);

  /// Command-line style override (reported as "command line" in errors).
  void set_override(const std::string& key, const std::string& value);

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& def);
  int get_int(const std::string& key, int def);
  std::uint64_t get_uint64(const std::string& key, std::uint64_t def);
  double get_double(const std::string& key, double def);
  bool get_bool(const std::string& key, bool def);
  std::vector<int> get_int_list(const std::string& key,
                                const std::vector<int>& def);
  std::vector<std::string> get_string_list(const std::string& key,
                                           const std::vector<std::string>& def);

  /// Throws ConfigError naming the first never-consumed key and its source
  /// line.
  void reject_unknown_keys() const;

 private:
  struct Entry {
    std::string value;
    std::string where;
    bool consumed = false;
  };
  Entry* find(const std::string& key);
  std::map<std::string, Entry> entries_;
};

/// Union of everything the command-line tool can be told, with desk-scale
/// defaults that train in minutes on one CPU core.
struct RunConfig {
  TrainConfig train;
  std::filesystem::path out_dir = "pfpn_out";
  std::vector<int> ablate_t{0, 1, 2};
  bool ablate_shared = true;

  static RunConfig desk_defaults();

  /// Loads defaults, then the optional config file, then `--key=value`
  /// overrides. The PFPN_OUT_DIR environment variable, when set, replaces
  /// the default output directory (an explicit out_dir key still wins).
  static RunConfig load(
      const std::optional<std::filesystem::path>& config_path,
      const std::vector<std::pair<std::string, std::string>>& overrides);
};

/// Human-readable dump of every key with its effective value.
std::string describe_run_config(const RunConfig& rc);

}  // namespace pfpn
