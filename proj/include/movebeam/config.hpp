#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace movebeam {

// Structured text configuration: INI-style sections with key = value lines.
// Keys are addressed by their dotted path ("scene.room_w"). Section headers
// may nest ("[train.att]"). Values are plain strings; typed getters parse on
// demand. Lists are comma separated.
class TextConfig {
 public:
  TextConfig() = default;

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  void set(const std::string& key, const std::string& value) {
    if (!values_.count(key)) order_.push_back(key);
    values_[key] = value;
  }
  void set_int(const std::string& key, long v) { set(key, std::to_string(v)); }
  void set_double(const std::string& key, double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    set(key, os.str());
  }
  void set_bool(const std::string& key, bool v) { set(key, v ? "true" : "false"); }
  void set_vec(const std::string& key, const std::vector<double>& v) {
    std::ostringstream os;
    os.precision(17);
    for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    set(key, os.str());
  }

  const std::string& get_str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw std::invalid_argument("config: missing key '" + key + "'");
    return it->second;
  }
  std::string get_str(const std::string& key, const std::string& def) const {
    auto it = values_.find(key);
    return it == values_.end() ? def : it->second;
  }
  long get_int(const std::string& key) const {
    return parse_long(get_str(key), key);
  }
  double get_double(const std::string& key) const {
    return parse_double(get_str(key), key);
  }
  bool get_bool(const std::string& key) const {
    const std::string& s = get_str(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw std::invalid_argument("config: key '" + key + "' is not a boolean: " + s);
  }
  std::vector<double> get_vec(const std::string& key) const {
    std::vector<double> out;
    std::stringstream ss(get_str(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!trim(item).empty()) out.push_back(parse_double(trim(item), key));
    }
    return out;
  }

  const std::vector<std::string>& keys() const { return order_; }

  // Merge another config's values into this one. When strict, every incoming
  // key must already exist here (unknown keys rejected).
  void merge(const TextConfig& other, bool strict) {
    for (const auto& k : other.order_) {
      if (strict && !values_.count(k))
        throw std::invalid_argument("config: unknown key '" + k + "'");
      set(k, other.values_.at(k));
    }
  }

  // Apply a "dotted.key=value" override string.
  void apply_override(const std::string& kv, bool strict = true) {
    auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("override must be key=value: " + kv);
    std::string key = trim(kv.substr(0, eq));
    std::string value = trim(kv.substr(eq + 1));
    if (strict && !values_.count(key))
      throw std::invalid_argument("config: unknown key '" + key + "'");
    set(key, value);
  }

  static TextConfig parse(const std::string& text) {
    TextConfig cfg;
    std::istringstream is(text);
    std::string line, section;
    long lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      std::string s = trim(strip_comment(line));
      if (s.empty()) continue;
      if (s.front() == '[') {
        if (s.back() != ']')
          throw std::invalid_argument("config: bad section header at line " + std::to_string(lineno));
        section = trim(s.substr(1, s.size() - 2));
        continue;
      }
      auto eq = s.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument("config: expected key = value at line " + std::to_string(lineno));
      std::string key = trim(s.substr(0, eq));
      std::string value = trim(s.substr(eq + 1));
      if (key.empty())
        throw std::invalid_argument("config: empty key at line " + std::to_string(lineno));
      cfg.set(section.empty() ? key : section + "." + key, value);
    }
    return cfg;
  }

  static TextConfig parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config: cannot open " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return parse(os.str());
  }

  // Canonical serialization: keys grouped by section in first-seen order.
  std::string serialize() const {
    std::vector<std::string> sections;
    std::map<std::string, std::vector<std::string>> by_section;
    for (const auto& k : order_) {
      auto dot = k.rfind('.');
      std::string sec = dot == std::string::npos ? "" : k.substr(0, dot);
      if (!by_section.count(sec)) sections.push_back(sec);
      by_section[sec].push_back(k);
    }
    std::ostringstream os;
    for (const auto& sec : sections) {
      if (!sec.empty()) os << "[" << sec << "]\n";
      for (const auto& k : by_section[sec]) {
        auto dot = k.rfind('.');
        os << (dot == std::string::npos ? k : k.substr(dot + 1)) << " = " << values_.at(k) << "\n";
      }
      os << "\n";
    }
    return os.str();
  }

  void write_file(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("config: cannot write " + path);
    f << serialize();
  }

  // FNV-1a hash of the canonical serialization, as 16 hex digits.
  std::string digest() const {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : serialize()) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    static const char* hex = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
      out[(size_t)i] = hex[h & 0xF];
      h >>= 4;
    }
    return out;
  }

 private:
  static std::string strip_comment(const std::string& s) {
    auto pos = s.find('#');
    return pos == std::string::npos ? s : s.substr(0, pos);
  }
  static std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
  }
  static long parse_long(const std::string& s, const std::string& key) {
    try {
      size_t pos = 0;
      long v = std::stol(s, &pos);
      if (pos != s.size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      throw std::invalid_argument("config: key '" + key + "' is not an integer: " + s);
    }
  }
  static double parse_double(const std::string& s, const std::string& key) {
    try {
      size_t pos = 0;
      double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      throw std::invalid_argument("config: key '" + key + "' is not a number: " + s);
    }
  }

  std::map<std::string, std::string> values_;
  std::vector<std::string> order_;
};

}  // namespace movebeam
