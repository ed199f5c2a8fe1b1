#pragma once

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dscl/common.hpp"

namespace dscl {

// Flat key=value text; '#' starts a comment, blank lines are ignored.
using KvMap = std::map<std::string, std::string>;

inline KvMap parse_kv_text(std::istream& is, const std::string& origin) {
  KvMap kv;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError(origin + ": malformed line " + std::to_string(lineno));
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty())
      throw DataError(origin + ": empty key at line " + std::to_string(lineno));
    kv[key] = val;
  }
  return kv;
}

inline KvMap read_kv_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("config: cannot open " + path);
  return parse_kv_text(is, path);
}

inline void write_kv_file(const std::string& path,
                          const std::vector<std::pair<std::string, std::string>>& kv) {
  std::ofstream os(path);
  if (!os) throw DataError("config: cannot open " + path + " for writing");
  for (const auto& [k, v] : kv) os << k << "=" << v << "\n";
  if (!os) throw DataError("config: write failed for " + path);
}

// typed accessors; `used` tracking lets callers reject unknown keys
class KvReader {
 public:
  explicit KvReader(KvMap kv) : kv_(std::move(kv)) {}

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string get_str(const std::string& key, const std::string& dflt) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    used_.insert(key);
    return it->second;
  }
  int get_int(const std::string& key, int dflt) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    used_.insert(key);
    try {
      return std::stoi(it->second);
    } catch (const std::exception&) {
      throw DataError("config: bad integer for " + key);
    }
  }
  double get_double(const std::string& key, double dflt) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    used_.insert(key);
    try {
      return std::stod(it->second);
    } catch (const std::exception&) {
      throw DataError("config: bad number for " + key);
    }
  }
  bool get_bool(const std::string& key, bool dflt) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    used_.insert(key);
    if (it->second == "1" || it->second == "true") return true;
    if (it->second == "0" || it->second == "false") return false;
    throw DataError("config: bad boolean for " + key);
  }
  uint64_t get_u64(const std::string& key, uint64_t dflt) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    used_.insert(key);
    try {
      return std::stoull(it->second);
    } catch (const std::exception&) {
      throw DataError("config: bad integer for " + key);
    }
  }

  std::vector<std::string> unused_keys() const {
    std::vector<std::string> out;
    for (const auto& [k, _] : kv_)
      if (!used_.count(k)) out.push_back(k);
    return out;
  }

 private:
  KvMap kv_;
  std::set<std::string> used_;
};

}  // namespace dscl
