#include "touchadd/app/config.hpp"

#include <cctype>
#include <charconv>
#include <sstream>

#include <json.hpp>

#include "touchadd/image.hpp"

namespace touchadd::app {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

bool quoted(const std::string& v) { return v.size() >= 2 && v.front() == '"' && v.back() == '"'; }

// Strips a trailing comment that is not inside a quoted string.
std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

bool valid_name(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') return false;
  return true;
}

}  // namespace

Config Config::parse(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(strip_comment(line));
    if (t.empty()) continue;
    const std::string where = "line " + std::to_string(lineno);
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError(where + ": unterminated section header");
      section = trim(t.substr(1, t.size() - 2));
      if (!valid_name(section)) throw ConfigError(where + ": bad section name");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (!valid_name(key)) throw ConfigError(where + ": bad key '" + key + "'");
    if (value.empty()) throw ConfigError(where + ": missing value for " + key);
    if (value.front() == '"' && !quoted(value)) throw ConfigError(where + ": unterminated string");
    const std::string full = section.empty() ? key : section + "." + key;
    if (cfg.values_.count(full)) throw ConfigError(where + ": duplicate key " + full);
    cfg.values_[full] = value;
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  try {
    const auto bytes = read_file(path);
    return parse(std::string(bytes.begin(), bytes.end()));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const std::exception& e) {
    throw ConfigError("cannot read config " + path.string() + ": " + e.what());
  }
}

const std::string* Config::raw(const std::string& key) const {
  used_.insert(key);
  const auto it = values_.find(key);
  return it == values_.end() ? nullptr : &it->second;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  const std::string* v = raw(key);
  if (!v) return fallback;
  return quoted(*v) ? v->substr(1, v->size() - 2) : *v;
}

long long Config::get_int(const std::string& key, long long fallback) const {
  const std::string* v = raw(key);
  if (!v) return fallback;
  long long out = 0;
  const auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || p != v->data() + v->size()) throw ConfigError(key + ": expected an integer, got " + *v);
  return out;
}

double Config::get_double(const std::string& key, double fallback) const {
  const std::string* v = raw(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const double out = std::stod(*v, &used);
    if (used == v->size()) return out;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected a number, got " + *v);
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const std::string* v = raw(key);
  if (!v) return fallback;
  if (*v == "true") return true;
  if (*v == "false") return false;
  throw ConfigError(key + ": expected true or false, got " + *v);
}

std::set<std::string> Config::unused() const {
  std::set<std::string> out;
  for (const auto& [k, v] : values_)
    if (!used_.count(k)) out.insert(k);
  return out;
}

std::string Config::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : values_) j[k] = v;
  return j.dump();
}

}  // namespace touchadd::app
