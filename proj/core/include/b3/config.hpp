#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace b3 {

/// Reader for the TOML subset the configuration files use: `[section]` and
/// `[section.sub]` headers, `key = value` lines, `#` comments, and values that
/// are strings, numbers, booleans, or (nested) arrays of those. Keys are
/// exposed in dotted form, e.g. "incomplete_vr.MDA.m".
class Config {
 public:
  struct Value {
    enum class Kind { number, boolean, string, array } kind = Kind::number;
    double num = 0.0;
    bool flag = false;
    std::string str;
    std::vector<Value> items;
  };

  static Config parse_file(const std::string& path);
  static Config parse(std::string_view text, const std::string& origin = "<config>");

  bool has(const std::string& key) const;

  double number(const std::string& key) const;
  double number_or(const std::string& key, double fallback) const;
  bool boolean_or(const std::string& key, bool fallback) const;
  const std::string& str(const std::string& key) const;
  std::string str_or(const std::string& key, const std::string& fallback) const;
  std::vector<double> numbers(const std::string& key) const;
  std::vector<std::string> strings(const std::string& key) const;
  /// Array of numeric pairs, e.g. periods = [[1996, 2001], [2008, 2010]].
  std::vector<std::pair<double, double>> number_pairs(const std::string& key) const;

  /// Distinct path components that follow `prefix.` in stored keys, in file
  /// order. E.g. keys_under("incomplete_vr") -> {"MDA", "UKR"}.
  std::vector<std::string> keys_under(const std::string& prefix) const;

  /// All dotted keys in file order.
  const std::vector<std::string>& keys() const { return order_; }

 private:
  const Value& require(const std::string& key, Value::Kind kind) const;

  std::map<std::string, Value> values_;
  std::vector<std::string> order_;
  std::string origin_;
};

}  // namespace b3
