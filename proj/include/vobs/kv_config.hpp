#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace vobs {

// Line-oriented `key = value` file. `#` starts a comment, `[name]` opens a
// section; sections with the same name may repeat and are kept in order.
class KvSection {
 public:
  KvSection() = default;
  explicit KvSection(std::string name) : name_(std::move(name)) {}

  const std::string& name() const { return name_; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::optional<std::string> find(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::string require_string(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  double require_double(const std::string& key) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

 private:
  std::string name_;
  std::map<std::string, std::string> values_;
};

struct KvConfig {
  KvSection root;
  std::vector<KvSection> sections;

  std::vector<const KvSection*> sections_named(const std::string& name) const;
  const KvSection* first_section(const std::string& name) const;
};

KvConfig parse_kv_config(const std::string& text);
KvConfig read_kv_config(const std::filesystem::path& path);

}  // namespace vobs
