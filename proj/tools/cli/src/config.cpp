#include "subtomo_cli/config.hpp"

#include <cstdio>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "subtomo/format.hpp"

namespace subtomo::cli {

struct ConfigReader::Impl {
  YAML::Node root;
};

namespace {

void collect_leaves(const YAML::Node& node, const std::string& prefix, std::set<std::string>& out) {
  if (node.IsMap()) {
    if (node.size() == 0 && !prefix.empty()) out.insert(prefix);
    for (const auto& kv : node) {
      const std::string key = kv.first.as<std::string>();
      collect_leaves(kv.second, prefix.empty() ? key : prefix + "." + key, out);
    }
  } else if (!prefix.empty()) {
    out.insert(prefix);
  }
}

YAML::Node lookup(const YAML::Node& root, const std::string& key) {
  YAML::Node node;
  node.reset(root);
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node.IsMap()) return YAML::Node(YAML::NodeType::Undefined);
    const YAML::Node& view = node;
    const YAML::Node child = view[part];
    if (!child.IsDefined() || child.IsNull()) return YAML::Node(YAML::NodeType::Undefined);
    node.reset(child);
    if (dot == std::string::npos) return node;
    start = dot + 1;
  }
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

template <typename T>
T scalar_as(const YAML::Node& node, const std::string& key, const char* expected) {
  if (!node.IsScalar()) throw ConfigError("config key '" + key + "': expected " + expected);
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("config key '" + key + "': expected " + expected + ", got '" +
                      node.Scalar() + "'");
  }
}

}  // namespace

ConfigReader::ConfigReader() : impl_(std::make_unique<Impl>()) {
  impl_->root = YAML::Node(YAML::NodeType::Map);
}
ConfigReader::~ConfigReader() = default;
ConfigReader::ConfigReader(ConfigReader&&) noexcept = default;
ConfigReader& ConfigReader::operator=(ConfigReader&&) noexcept = default;

ConfigReader ConfigReader::from_string(const std::string& text) {
  ConfigReader reader;
  try {
    YAML::Node root = YAML::Load(text);
    if (root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
    if (!root.IsMap()) throw ConfigError("config must be a table of keys");
    reader.impl_->root = root;
  } catch (const YAML::ParserException& e) {
    throw ConfigError(std::string("config syntax error: ") + e.what());
  }
  collect_leaves(reader.impl_->root, "", reader.supplied_);
  return reader;
}

ConfigReader ConfigReader::from_file(const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.string().c_str(), "rb");
  if (f == nullptr) throw ConfigError("cannot read config file " + path.string());
  std::string text;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof(buf), f)) > 0) text.append(buf, n);
  std::fclose(f);
  return from_string(text);
}

bool ConfigReader::has(std::string_view key) const {
  const std::string k(key);
  return overrides_.count(k) > 0 || lookup(impl_->root, k).IsDefined();
}

void ConfigReader::set_override(const std::string& key, const std::string& value) {
  overrides_[key] = value;
}

#define SUBTOMO_CONFIG_NODE(key)                                                      \
  YAML::Node node;                                                                    \
  if (auto it = overrides_.find(key); it != overrides_.end()) node = YAML::Node(it->second); \
  else node = lookup(impl_->root, key)

int ConfigReader::get_int(const std::string& key, int fallback, int min, int max) {
  SUBTOMO_CONFIG_NODE(key);
  const int v = node.IsDefined() ? scalar_as<int>(node, key, "an integer") : fallback;
  if (v < min || v > max)
    throw ConfigError("config key '" + key + "': " + std::to_string(v) + " outside [" +
                      std::to_string(min) + ", " + std::to_string(max) + "]");
  resolved_[key] = std::to_string(v);
  return v;
}

std::uint64_t ConfigReader::get_u64(const std::string& key, std::uint64_t fallback) {
  SUBTOMO_CONFIG_NODE(key);
  const std::uint64_t v =
      node.IsDefined() ? scalar_as<std::uint64_t>(node, key, "a non-negative integer") : fallback;
  resolved_[key] = std::to_string(v);
  return v;
}

double ConfigReader::get_double(const std::string& key, double fallback, double min, double max) {
  SUBTOMO_CONFIG_NODE(key);
  const double v = node.IsDefined() ? scalar_as<double>(node, key, "a number") : fallback;
  if (!(v >= min && v <= max))
    throw ConfigError("config key '" + key + "': " + format_double(v) + " outside [" +
                      format_double(min) + ", " + format_double(max) + "]");
  resolved_[key] = format_double(v);
  return v;
}

bool ConfigReader::get_bool(const std::string& key, bool fallback) {
  SUBTOMO_CONFIG_NODE(key);
  const bool v = node.IsDefined() ? scalar_as<bool>(node, key, "true or false") : fallback;
  resolved_[key] = v ? "true" : "false";
  return v;
}

std::string ConfigReader::get_string(const std::string& key, const std::string& fallback) {
  SUBTOMO_CONFIG_NODE(key);
  std::string v = node.IsDefined() ? scalar_as<std::string>(node, key, "a string") : fallback;
  resolved_[key] = quote(v);
  return v;
}

std::string ConfigReader::get_choice(const std::string& key, const std::string& fallback,
                                     const std::vector<std::string>& allowed) {
  std::string v = get_string(key, fallback);
  for (const auto& a : allowed)
    if (a == v) return v;
  std::string options;
  for (const auto& a : allowed) options += (options.empty() ? "" : ", ") + a;
  throw ConfigError("config key '" + key + "': '" + v + "' is not one of " + options);
}

namespace {

template <typename T>
std::vector<T> list_as(const YAML::Node& node, const std::string& key, const char* expected) {
  std::vector<T> out;
  if (node.IsScalar()) {
    out.push_back(scalar_as<T>(node, key, expected));
  } else if (node.IsSequence()) {
    for (const auto& item : node) out.push_back(scalar_as<T>(item, key, expected));
  } else {
    throw ConfigError("config key '" + key + "': expected a list");
  }
  return out;
}

template <typename T, typename F>
std::string join(const std::vector<T>& values, F&& fmt) {
  std::string out = "[";
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? ", " : "") + fmt(values[i]);
  return out + "]";
}

}  // namespace

std::vector<int> ConfigReader::get_int_list(const std::string& key, const std::vector<int>& fallback,
                                            int min, int max) {
  SUBTOMO_CONFIG_NODE(key);
  std::vector<int> v = node.IsDefined() ? list_as<int>(node, key, "integers") : fallback;
  for (int x : v)
    if (x < min || x > max)
      throw ConfigError("config key '" + key + "': entry " + std::to_string(x) + " outside [" +
                        std::to_string(min) + ", " + std::to_string(max) + "]");
  resolved_[key] = join(v, [](int x) { return std::to_string(x); });
  return v;
}

std::vector<double> ConfigReader::get_double_list(const std::string& key,
                                                  const std::vector<double>& fallback) {
  SUBTOMO_CONFIG_NODE(key);
  std::vector<double> v = node.IsDefined() ? list_as<double>(node, key, "numbers") : fallback;
  resolved_[key] = join(v, [](double x) { return format_double(x); });
  return v;
}

std::vector<std::string> ConfigReader::get_string_list(const std::string& key,
                                                       const std::vector<std::string>& fallback) {
  SUBTOMO_CONFIG_NODE(key);
  std::vector<std::string> v = node.IsDefined() ? list_as<std::string>(node, key, "strings") : fallback;
  resolved_[key] = join(v, [](const std::string& x) { return quote(x); });
  return v;
}

std::string ConfigReader::get_unhashed_string(const std::string& key, const std::string& fallback) {
  SUBTOMO_CONFIG_NODE(key);
  unhashed_.insert(key);
  return node.IsDefined() ? scalar_as<std::string>(node, key, "a string") : fallback;
}

#undef SUBTOMO_CONFIG_NODE

void ConfigReader::check_unknown() const {
  std::string unknown;
  for (const auto& key : supplied_)
    if (!resolved_.count(key) && !unhashed_.count(key)) unknown += (unknown.empty() ? "" : ", ") + key;
  if (!unknown.empty()) throw ConfigError("unknown config key(s): " + unknown);
}

std::string ConfigReader::canonical() const {
  std::ostringstream os;
  for (const auto& [key, value] : resolved_) os << key << " = " << value << '\n';
  return os.str();
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t ConfigReader::hash() const { return fnv1a64(canonical()); }

std::string ConfigReader::hash_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash()));
  return buf;
}

}  // namespace subtomo::cli
