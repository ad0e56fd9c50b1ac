#include "efuf/config.hpp"

#include <charconv>
#include <cstdlib>

#include "efuf/error.hpp"
#include "efuf/hash.hpp"
#include "efuf/io.hpp"

namespace efuf {

std::string trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto pos = text.find(sep, start);
    if (pos == std::string_view::npos) pos = text.size();
    auto item = trim(text.substr(start, pos - start));
    if (!item.empty()) out.push_back(std::move(item));
    start = pos + 1;
  }
  return out;
}

KeyValueConfig KeyValueConfig::parse(std::string_view text, std::string_view origin) {
  KeyValueConfig cfg;
  cfg.origin_ = std::string(origin);
  std::size_t lineno = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(cfg.origin_ + ":" + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(std::string_view(stripped).substr(0, eq));
    if (key.empty()) {
      throw ConfigError(cfg.origin_ + ":" + std::to_string(lineno) + ": empty key");
    }
    cfg.entries_[key] = trim(std::string_view(stripped).substr(eq + 1));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_text(path);
  } catch (const IoError&) {
    throw ConfigError("cannot read config file " + path.string());
  }
  return parse(text, path.string());
}

bool KeyValueConfig::has(std::string_view key) const { return entries_.find(key) != entries_.end(); }

void KeyValueConfig::set(std::string key, std::string value) { entries_[std::move(key)] = std::move(value); }

std::optional<std::string> KeyValueConfig::find(std::string_view key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::string KeyValueConfig::get_string(std::string_view key, std::string_view fallback) const {
  auto v = find(key);
  return v ? *v : std::string(fallback);
}

double KeyValueConfig::get_double(std::string_view key, double fallback) const {
  auto v = find(key);
  if (!v) return fallback;
  char* end = nullptr;
  const double d = std::strtod(v->c_str(), &end);
  if (v->empty() || end != v->c_str() + v->size()) {
    throw ConfigError(origin_ + ": key '" + std::string(key) + "' is not a number: " + *v);
  }
  return d;
}

std::int64_t KeyValueConfig::get_int(std::string_view key, std::int64_t fallback) const {
  auto v = find(key);
  if (!v) return fallback;
  std::int64_t out = 0;
  auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size()) {
    throw ConfigError(origin_ + ": key '" + std::string(key) + "' is not an integer: " + *v);
  }
  return out;
}

bool KeyValueConfig::get_bool(std::string_view key, bool fallback) const {
  auto v = find(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  throw ConfigError(origin_ + ": key '" + std::string(key) + "' is not a boolean: " + *v);
}

std::string KeyValueConfig::canonical() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
  return out;
}

std::string KeyValueConfig::hash() const { return to_hex(fnv1a(canonical())); }

}  // namespace efuf
