#pragma once

#include <fstream>
#include <istream>
#include <map>
#include <string>

#include "saeme/errors.hpp"

namespace saeme {

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Plain-text key=value configuration; '#' starts a comment line.
inline std::map<std::string, std::string> parse_config(std::istream& in) {
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw io_error("config line without '=': " + t);
    out[detail::trim(t.substr(0, eq))] = detail::trim(t.substr(eq + 1));
  }
  return out;
}

inline std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw io_error("cannot open config: " + path);
  return parse_config(f);
}

/// Keys are emitted sorted, so snapshots are byte-stable.
inline void write_config_file(const std::string& path,
                              const std::map<std::string, std::string>& kv) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open for writing: " + path);
  for (const auto& [k, v] : kv) f << k << " = " << v << '\n';
  if (!f) throw io_error("write failed: " + path);
}

}  // namespace saeme
