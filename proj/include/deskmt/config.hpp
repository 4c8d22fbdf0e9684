#pragma once

#include <map>
#include <set>
#include <string>

#include "deskmt/types.hpp"

namespace deskmt::cli {

std::map<std::string, std::string> parse_kv_lines(const std::string& body);

// Plain-text key=value configuration with typed accessors. Lines starting
// with '#' are comments. Unknown keys are rejected against a per-command
// schema before a run starts.
class ConfigMap {
 public:
  ConfigMap() = default;
  static ConfigMap from_file(const std::string& path);

  void set(const std::string& key, const std::string& value) { kv_[key] = value; }
  bool has(const std::string& key) const { return kv_.count(key) != 0; }

  std::string get_str(const std::string& key) const;  // required
  std::string get_str(const std::string& key, const std::string& def) const;
  int get_int(const std::string& key, int def) const;
  double get_double(const std::string& key, double def) const;
  bool get_bool(const std::string& key, bool def) const;
  uint64_t get_u64(const std::string& key, uint64_t def) const;

  void require_known(const std::set<std::string>& allowed) const;
  std::string resolved_text() const;  // sorted key=value lines
  const std::map<std::string, std::string>& items() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace deskmt::cli
