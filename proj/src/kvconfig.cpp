#include "emte/kvconfig.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "emte/error.hpp"

namespace emte {

std::string trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return std::string(text.substr(first, last - first + 1));
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto piece = trim(text.substr(start, comma == std::string_view::npos
                                                     ? std::string_view::npos
                                                     : comma - start));
    if (!piece.empty()) out.push_back(piece);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

namespace {

double to_double(const std::string& text, const std::string& key, const std::string& source) {
  double value = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw UsageError(source + ": key '" + key + "' expects a number, got '" + text + "'");
  }
  return value;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::string_view text, std::string source) {
  KeyValueConfig cfg;
  cfg.source_ = std::move(source);
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw UsageError(cfg.source_ + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    std::string key = trim(std::string_view(body).substr(0, eq));
    std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) {
      throw UsageError(cfg.source_ + ":" + std::to_string(line_no) + ": empty key");
    }
    if (cfg.values_.contains(key)) {
      throw UsageError(cfg.source_ + ":" + std::to_string(line_no) + ": duplicate key '" +
                       key + "'");
    }
    cfg.values_.emplace(std::move(key), std::move(value));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string KeyValueConfig::require(const std::string& key) const {
  auto v = get(key);
  if (!v) throw UsageError(source_ + ": missing required key '" + key + "'");
  return *v;
}

std::string KeyValueConfig::get_string(const std::string& key, std::string fallback) const {
  auto v = get(key);
  return v ? *v : fallback;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  auto v = get(key);
  return v ? to_double(*v, key, source_) : fallback;
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  long long value = 0;
  const auto* end = v->data() + v->size();
  const auto [ptr, ec] = std::from_chars(v->data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw UsageError(source_ + ": key '" + key + "' expects an integer, got '" + *v + "'");
  }
  return value;
}

std::vector<double> KeyValueConfig::get_doubles(const std::string& key,
                                                std::vector<double> fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  std::vector<double> out;
  for (const auto& piece : split_list(*v)) out.push_back(to_double(piece, key, source_));
  return out;
}

std::vector<std::string> KeyValueConfig::get_strings(const std::string& key,
                                                     std::vector<std::string> fallback) const {
  auto v = get(key);
  return v ? split_list(*v) : fallback;
}

std::vector<std::string> KeyValueConfig::keys_with_prefix(std::string_view prefix) const {
  std::vector<std::string> out;
  for (const auto& [key, value] : values_) {
    if (key.starts_with(prefix)) out.push_back(key);
  }
  return out;
}

void KeyValueConfig::check_known(std::span<const std::string_view> allowed) const {
  for (const auto& [key, value] : values_) {
    bool ok = false;
    for (std::string_view a : allowed) {
      if (a.ends_with('.') ? key.starts_with(a) : key == a) {
        ok = true;
        break;
      }
    }
    if (!ok) throw UsageError(source_ + ": unknown key '" + key + "'");
  }
}

}  // namespace emte
