#include "deskmt/config.hpp"

#include <fstream>
#include <sstream>

namespace deskmt::cli {

std::map<std::string, std::string> parse_kv_lines(const std::string& body) {
  std::map<std::string, std::string> kv;
  std::istringstream is(body);
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("malformed config line '" + line + "' (expected key=value)");
    }
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

ConfigMap ConfigMap::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream body;
  body << in.rdbuf();
  ConfigMap c;
  c.kv_ = parse_kv_lines(body.str());
  return c;
}

std::string ConfigMap::get_str(const std::string& key) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) throw ConfigError("missing required config key '" + key + "'");
  return it->second;
}

std::string ConfigMap::get_str(const std::string& key, const std::string& def) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? def : it->second;
}

int ConfigMap::get_int(const std::string& key, int def) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return def;
  try {
    size_t pos = 0;
    int v = std::stoi(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': '" + it->second + "' is not an integer");
  }
}

double ConfigMap::get_double(const std::string& key, double def) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return def;
  try {
    size_t pos = 0;
    double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': '" + it->second + "' is not a number");
  }
}

bool ConfigMap::get_bool(const std::string& key, bool def) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return def;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ConfigError("config key '" + key + "': '" + it->second + "' is not a boolean");
}

uint64_t ConfigMap::get_u64(const std::string& key, uint64_t def) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return def;
  try {
    size_t pos = 0;
    uint64_t v = std::stoull(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': '" + it->second + "' is not an unsigned integer");
  }
}

void ConfigMap::require_known(const std::set<std::string>& allowed) const {
  for (const auto& [k, v] : kv_) {
    (void)v;
    if (!allowed.count(k)) throw ConfigError("unknown config key '" + k + "'");
  }
}

std::string ConfigMap::resolved_text() const {
  std::ostringstream os;
  for (const auto& [k, v] : kv_) os << k << "=" << v << "\n";
  return os.str();
}

}  // namespace deskmt::cli
