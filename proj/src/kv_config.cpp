#include "vobs/kv_config.hpp"

#include <fstream>
#include <sstream>

#include "vobs/errors.hpp"
#include "vobs/text_format.hpp"

namespace vobs {

std::optional<std::string> KvSection::find(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string KvSection::get_string(const std::string& key, const std::string& fallback) const {
  return find(key).value_or(fallback);
}

std::string KvSection::require_string(const std::string& key) const {
  auto v = find(key);
  if (!v) {
    throw ValidationError("missing required key '" + key + "'" +
                          (name_.empty() ? std::string{} : " in section [" + name_ + "]"));
  }
  return *v;
}

double KvSection::get_double(const std::string& key, double fallback) const {
  auto v = find(key);
  if (!v) return fallback;
  try {
    return text::parse_double(*v);
  } catch (const ValidationError&) {
    throw ValidationError("key '" + key + "' expects a number, got '" + *v + "'");
  }
}

double KvSection::require_double(const std::string& key) const {
  require_string(key);
  return get_double(key, 0.0);
}

long long KvSection::get_int(const std::string& key, long long fallback) const {
  auto v = find(key);
  if (!v) return fallback;
  try {
    return text::parse_int(*v);
  } catch (const ValidationError&) {
    throw ValidationError("key '" + key + "' expects an integer, got '" + *v + "'");
  }
}

bool KvSection::get_bool(const std::string& key, bool fallback) const {
  auto v = find(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  throw ValidationError("key '" + key + "' expects a boolean, got '" + *v + "'");
}

std::vector<const KvSection*> KvConfig::sections_named(const std::string& name) const {
  std::vector<const KvSection*> out;
  for (const auto& s : sections) {
    if (s.name() == name) out.push_back(&s);
  }
  return out;
}

const KvSection* KvConfig::first_section(const std::string& name) const {
  for (const auto& s : sections) {
    if (s.name() == name) return &s;
  }
  return nullptr;
}

KvConfig parse_kv_config(const std::string& text) {
  KvConfig cfg;
  KvSection* current = &cfg.root;
  std::istringstream is(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(is, raw)) {
    ++lineno;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = text::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ValidationError("config line " + std::to_string(lineno) + ": unterminated section");
      }
      cfg.sections.emplace_back(std::string(text::trim(line.substr(1, line.size() - 2))));
      current = &cfg.sections.back();
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ValidationError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const auto key = text::trim(line.substr(0, eq));
    if (key.empty()) throw ValidationError("config line " + std::to_string(lineno) + ": empty key");
    current->set(std::string(key), std::string(text::trim(line.substr(eq + 1))));
  }
  return cfg;
}

KvConfig read_kv_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_kv_config(ss.str());
}

}  // namespace vobs
