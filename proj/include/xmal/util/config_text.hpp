#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "xmal/util/error.hpp"

namespace xmal {

// Canonical plain-text configuration: ordered sections of key = value lines.
// Emission order is the registration order, so emit(parse(emit(c))) is
// byte-stable. Unknown keys and sections are rejected by the typed readers.
class ConfigText {
 public:
  struct Section {
    std::string name;
    std::vector<std::pair<std::string, std::string>> entries;
  };

  static ConfigText parse(const std::string& text) {
    ConfigText cfg;
    Section* cur = nullptr;
    size_t pos = 0, line_no = 0;
    while (pos <= text.size()) {
      size_t eol = text.find('\n', pos);
      if (eol == std::string::npos) eol = text.size();
      std::string line = trim(text.substr(pos, eol - pos));
      ++line_no;
      pos = eol + 1;
      if (pos > text.size() + 1) break;
      if (line.empty() || line[0] == '#') {
        if (eol == text.size()) break;
        continue;
      }
      if (line.front() == '[') {
        check(line.back() == ']', cat("config line ", line_no, ": malformed section header: ", line));
        std::string name = trim(line.substr(1, line.size() - 2));
        check(!name.empty(), cat("config line ", line_no, ": empty section name"));
        check(cfg.find(name) == nullptr, cat("config: duplicate section [", name, "]"));
        cfg.sections_.push_back({name, {}});
        cur = &cfg.sections_.back();
      } else {
        size_t eq = line.find('=');
        check(eq != std::string::npos, cat("config line ", line_no, ": expected key = value, got: ", line));
        check(cur != nullptr, cat("config line ", line_no, ": key outside any section"));
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        check(!key.empty(), cat("config line ", line_no, ": empty key"));
        for (const auto& kv : cur->entries)
          check(kv.first != key, cat("config: duplicate key '", key, "' in section [", cur->name, "]"));
        cur->entries.emplace_back(key, val);
      }
      if (eol == text.size()) break;
    }
    return cfg;
  }

  std::string emit() const {
    std::string out;
    for (const auto& s : sections_) {
      out += "[" + s.name + "]\n";
      for (const auto& [k, v] : s.entries) out += k + " = " + v + "\n";
    }
    return out;
  }

  Section& section(const std::string& name) {
    if (Section* s = find(name)) return *s;
    sections_.push_back({name, {}});
    return sections_.back();
  }

  const Section* find(const std::string& name) const {
    for (const auto& s : sections_)
      if (s.name == name) return &s;
    return nullptr;
  }
  Section* find(const std::string& name) {
    for (auto& s : sections_)
      if (s.name == name) return &s;
    return nullptr;
  }

  void set(const std::string& sec, const std::string& key, const std::string& val) {
    auto& s = section(sec);
    for (auto& kv : s.entries) {
      if (kv.first == key) {
        kv.second = val;
        return;
      }
    }
    s.entries.emplace_back(key, val);
  }

  const std::vector<Section>& sections() const { return sections_; }

 private:
  static std::string trim(std::string s) {
    auto issp = [](unsigned char c) { return c == ' ' || c == '\t' || c == '\r'; };
    while (!s.empty() && issp(s.front())) s.erase(s.begin());
    while (!s.empty() && issp(s.back())) s.pop_back();
    return s;
  }

  std::vector<Section> sections_;
};

// Strict accessor for one section: every key must be consumed exactly once,
// leftovers are reported as unknown.
class SectionReader {
 public:
  SectionReader(const ConfigText& cfg, const std::string& name) : name_(name) {
    if (const auto* s = cfg.find(name)) {
      for (const auto& [k, v] : s->entries) entries_.emplace_back(k, v);
    }
  }

  std::string get_str(const std::string& key, const std::string& dflt) {
    for (auto& [k, v] : entries_) {
      if (k == key) {
        used_.insert(key);
        return v;
      }
    }
    return dflt;
  }

  int64_t get_int(const std::string& key, int64_t dflt) {
    std::string s = get_str(key, "");
    if (s.empty()) return dflt;
    try {
      size_t idx = 0;
      int64_t v = std::stoll(s, &idx);
      check(idx == s.size(), "");
      return v;
    } catch (...) {
      fail(cat("config [", name_, "] ", key, ": expected integer, got '", s, "'"));
    }
  }

  double get_double(const std::string& key, double dflt) {
    std::string s = get_str(key, "");
    if (s.empty()) return dflt;
    try {
      size_t idx = 0;
      double v = std::stod(s, &idx);
      check(idx == s.size(), "");
      return v;
    } catch (...) {
      fail(cat("config [", name_, "] ", key, ": expected number, got '", s, "'"));
    }
  }

  bool get_bool(const std::string& key, bool dflt) {
    std::string s = get_str(key, "");
    if (s.empty()) return dflt;
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    fail(cat("config [", name_, "] ", key, ": expected true/false, got '", s, "'"));
  }

  std::vector<int64_t> get_int_list(const std::string& key, std::vector<int64_t> dflt) {
    std::string s = get_str(key, "");
    if (s.empty()) return dflt;
    std::vector<int64_t> out;
    size_t pos = 0;
    while (pos <= s.size()) {
      size_t comma = s.find(',', pos);
      if (comma == std::string::npos) comma = s.size();
      std::string item = s.substr(pos, comma - pos);
      try {
        out.push_back(std::stoll(item));
      } catch (...) {
        fail(cat("config [", name_, "] ", key, ": bad integer list '", s, "'"));
      }
      pos = comma + 1;
      if (comma == s.size()) break;
    }
    return out;
  }

  // Call after all reads; rejects keys the consumer does not know about.
  void finish() const {
    for (const auto& [k, v] : entries_) {
      check(used_.count(k) > 0, cat("config [", name_, "]: unknown key '", k, "'"));
    }
  }

 private:
  std::string name_;
  std::vector<std::pair<std::string, std::string>> entries_;
  std::set<std::string> used_;
};

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace xmal
