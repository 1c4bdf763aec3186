#pragma once

#include <map>
#include <string>

#include "minnow/error.hpp"
#include "minnow/text.hpp"

namespace minnow {

/// Flat key-value run configuration: one `component.key = value` per line,
/// '#' comments, later assignments win. Command-line flags override file
/// values.
struct ConfigValues {
  std::map<std::string, std::string> values;
  std::string origin;

  bool has(const std::string& key) const {
    return values.find(key) != values.end();
  }
  const std::string& get(const std::string& key) const {
    return values.at(key);
  }
};

inline ConfigValues parse_config_text(const std::string& text,
                                      const std::string& origin = "<config>") {
  ConfigValues cfg;
  cfg.origin = origin;
  size_t pos = 0;
  int line_no = 0;
  auto fail = [&](const std::string& why) {
    raise(errc::bad_config, origin + ":" + std::to_string(line_no) + ": " + why);
  };
  auto trim = [](std::string s) {
    size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    return s.substr(b, e - b);
  };
  while (pos < text.size()) {
    size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    const std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const size_t eq = stripped.find('=');
    if (eq == std::string::npos) fail("expected 'key = value'");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) fail("empty key");
    cfg.values[key] = value;
  }
  return cfg;
}

inline ConfigValues load_config_file(const std::string& path) {
  return parse_config_text(read_file(path), path);
}

}  // namespace minnow
