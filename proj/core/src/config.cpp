#include "b3/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "b3/errors.hpp"

namespace b3 {

namespace {

void strip_comment(std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_string = !in_string;
    if (line[i] == '#' && !in_string) {
      line.erase(i);
      return;
    }
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

struct Cursor {
  std::string_view text;
  std::size_t pos = 0;
  bool done() const { return pos >= text.size(); }
  char peek() const { return text[pos]; }
  void skip_ws() {
    while (!done() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  }
};

Config::Value parse_value(Cursor& c, const std::string& where);

Config::Value parse_array(Cursor& c, const std::string& where) {
  Config::Value v;
  v.kind = Config::Value::Kind::array;
  ++c.pos;  // consume '['
  c.skip_ws();
  if (!c.done() && c.peek() == ']') {
    ++c.pos;
    return v;
  }
  for (;;) {
    v.items.push_back(parse_value(c, where));
    c.skip_ws();
    if (c.done()) throw ConfigError(where + ": unterminated array");
    if (c.peek() == ',') {
      ++c.pos;
      c.skip_ws();
      if (!c.done() && c.peek() == ']') {  // trailing comma
        ++c.pos;
        return v;
      }
      continue;
    }
    if (c.peek() == ']') {
      ++c.pos;
      return v;
    }
    throw ConfigError(where + ": expected ',' or ']' in array");
  }
}

Config::Value parse_value(Cursor& c, const std::string& where) {
  c.skip_ws();
  if (c.done()) throw ConfigError(where + ": missing value");
  Config::Value v;
  const char ch = c.peek();
  if (ch == '[') return parse_array(c, where);
  if (ch == '"') {
    ++c.pos;
    std::string s;
    while (!c.done() && c.peek() != '"') {
      if (c.peek() == '\\' && c.pos + 1 < c.text.size()) ++c.pos;
      s.push_back(c.text[c.pos++]);
    }
    if (c.done()) throw ConfigError(where + ": unterminated string");
    ++c.pos;
    v.kind = Config::Value::Kind::string;
    v.str = std::move(s);
    return v;
  }
  std::size_t end = c.pos;
  while (end < c.text.size() && c.text[end] != ',' && c.text[end] != ']' &&
         !std::isspace(static_cast<unsigned char>(c.text[end])))
    ++end;
  const std::string_view token = c.text.substr(c.pos, end - c.pos);
  c.pos = end;
  if (token == "true" || token == "false") {
    v.kind = Config::Value::Kind::boolean;
    v.flag = (token == "true");
    return v;
  }
  double num = 0.0;
  const auto [p, ec] = std::from_chars(token.data(), token.data() + token.size(), num);
  if (ec != std::errc() || p != token.data() + token.size())
    throw ConfigError(where + ": cannot parse value '" + std::string(token) + "'");
  v.kind = Config::Value::Kind::number;
  v.num = num;
  return v;
}

}  // namespace

Config Config::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path);
}

Config Config::parse(std::string_view text, const std::string& origin) {
  Config cfg;
  cfg.origin_ = origin;
  std::string section;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t nl = text.find('\n', start);
    std::string line(text.substr(start, nl == std::string_view::npos ? std::string_view::npos
                                                                     : nl - start));
    start = (nl == std::string_view::npos) ? text.size() + 1 : nl + 1;
    ++line_no;
    strip_comment(line);
    const std::string_view body = trim(line);
    if (body.empty()) continue;
    const std::string where = origin + ":" + std::to_string(line_no);
    if (body.front() == '[') {
      if (body.back() != ']') throw ConfigError(where + ": malformed section header");
      section = std::string(trim(body.substr(1, body.size() - 2)));
      if (section.empty()) throw ConfigError(where + ": empty section name");
      continue;
    }
    const std::size_t eq = body.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(where + ": expected 'key = value'");
    std::string key(trim(body.substr(0, eq)));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (!section.empty()) key = section + "." + key;
    Cursor c{body.substr(eq + 1), 0};
    Value v = parse_value(c, where);
    c.skip_ws();
    if (!c.done()) throw ConfigError(where + ": trailing characters after value");
    if (cfg.values_.count(key)) throw ConfigError(where + ": duplicate key '" + key + "'");
    cfg.values_.emplace(key, std::move(v));
    cfg.order_.push_back(key);
  }
  return cfg;
}

bool Config::has(const std::string& key) const { return values_.count(key) > 0; }

const Config::Value& Config::require(const std::string& key, Value::Kind kind) const {
  const auto it = values_.find(key);
  if (it == values_.end())
    throw ConfigError(origin_ + ": missing required key '" + key + "'");
  if (it->second.kind != kind)
    throw ConfigError(origin_ + ": key '" + key + "' has the wrong type");
  return it->second;
}

double Config::number(const std::string& key) const {
  return require(key, Value::Kind::number).num;
}

double Config::number_or(const std::string& key, double fallback) const {
  return has(key) ? number(key) : fallback;
}

bool Config::boolean_or(const std::string& key, bool fallback) const {
  return has(key) ? require(key, Value::Kind::boolean).flag : fallback;
}

const std::string& Config::str(const std::string& key) const {
  return require(key, Value::Kind::string).str;
}

std::string Config::str_or(const std::string& key, const std::string& fallback) const {
  return has(key) ? str(key) : fallback;
}

std::vector<double> Config::numbers(const std::string& key) const {
  const Value& v = require(key, Value::Kind::array);
  std::vector<double> out;
  out.reserve(v.items.size());
  for (const Value& item : v.items) {
    if (item.kind != Value::Kind::number)
      throw ConfigError(origin_ + ": '" + key + "' must be an array of numbers");
    out.push_back(item.num);
  }
  return out;
}

std::vector<std::string> Config::strings(const std::string& key) const {
  const Value& v = require(key, Value::Kind::array);
  std::vector<std::string> out;
  out.reserve(v.items.size());
  for (const Value& item : v.items) {
    if (item.kind != Value::Kind::string)
      throw ConfigError(origin_ + ": '" + key + "' must be an array of strings");
    out.push_back(item.str);
  }
  return out;
}

std::vector<std::pair<double, double>> Config::number_pairs(const std::string& key) const {
  const Value& v = require(key, Value::Kind::array);
  std::vector<std::pair<double, double>> out;
  for (const Value& item : v.items) {
    if (item.kind != Value::Kind::array || item.items.size() != 2 ||
        item.items[0].kind != Value::Kind::number ||
        item.items[1].kind != Value::Kind::number)
      throw ConfigError(origin_ + ": '" + key + "' must be an array of [a, b] number pairs");
    out.emplace_back(item.items[0].num, item.items[1].num);
  }
  return out;
}

std::vector<std::string> Config::keys_under(const std::string& prefix) const {
  const std::string want = prefix + ".";
  std::vector<std::string> out;
  for (const std::string& key : order_) {
    if (key.rfind(want, 0) != 0) continue;
    const std::string rest = key.substr(want.size());
    const std::size_t dot = rest.find('.');
    const std::string head = dot == std::string::npos ? rest : rest.substr(0, dot);
    bool seen = false;
    for (const std::string& s : out) seen = seen || s == head;
    if (!seen) out.push_back(head);
  }
  return out;
}

}  // namespace b3
