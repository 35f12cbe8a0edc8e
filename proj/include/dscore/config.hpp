// Run settings: flat `key = value` files with [section] headers, layered
// under command-line overrides, plus the run manifest written beside outputs.
#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Core>

namespace dscore {

inline constexpr std::string_view kVersion = "0.1.0";

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Keys are "section.key". Every known key has a default; unknown keys are
/// rejected so typos do not pass silently.
class RunConfig {
 public:
  RunConfig() {
    values_ = {
        {"data.n", "1000"},           {"data.max_elems", "10"},       {"data.setting", "biased"},
        {"data.val_fraction", "0.1"}, {"data.test_fraction", "0.1"},

        {"model.input_size", "256"},  {"model.norm", "group"},        {"model.groups", "2"},
        {"model.input", "both"},

        {"train.epochs", "30"},       {"train.batch", "8"},           {"train.lr", "0.0001"},
        {"train.beta1", "0.5"},       {"train.beta2", "0.99"},        {"train.weight_decay", "0.005"},
        {"train.lr_period", "5"},     {"train.alpha", "0.8"},         {"train.beta", "0.2"},
        {"train.margin", "0.2"},      {"train.margin_mode", "hard"},  {"train.sim_mode", "deviance"},
        {"train.lambda", "0.05"},     {"train.patience", "0"},

        {"ga.pop", "100"},            {"ga.trials", "1500"},          {"ga.p", "0.3"},
        {"ga.mutation_sigma", "0.05"}, {"ga.mutation_rate", "0.2"},   {"ga.elitism", "0.5"},
        {"ga.lock_aspect", "false"},

        {"eval.window", "60"},        {"eval.stride", "10"},
    };
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  void set(const std::string& key, const std::string& value) {
    if (!has(key)) throw ConfigError("unknown setting '" + key + "'");
    values_[key] = value;
  }

  void parse(std::string_view text, const std::string& origin = "<config>") {
    std::istringstream in{std::string(text)};
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const std::string t = trim(line);
      if (t.empty()) continue;
      if (t.front() == '[') {
        if (t.back() != ']') throw ConfigError(origin + ":" + std::to_string(lineno) + ": bad section header");
        section = trim(t.substr(1, t.size() - 2));
        continue;
      }
      const auto eq = t.find('=');
      if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
      if (section.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": setting outside a section");
      const std::string key = section + "." + trim(t.substr(0, eq));
      if (!has(key)) throw ConfigError(origin + ":" + std::to_string(lineno) + ": unknown setting '" + key + "'");
      values_[key] = trim(t.substr(eq + 1));
    }
  }

  void load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    parse(ss.str(), path.string());
  }

  const std::string& get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown setting '" + key + "'");
    return it->second;
  }

  double get_double(const std::string& key) const {
    const std::string& v = get(key);
    double out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("setting '" + key + "' is not a number: " + v);
    return out;
  }

  long get_int(const std::string& key) const {
    const std::string& v = get(key);
    long out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("setting '" + key + "' is not an integer: " + v);
    return out;
  }

  bool get_bool(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("setting '" + key + "' is not a boolean: " + v);
  }

  /// Sorted `key=value` lines; the basis of the config hash.
  std::string canonical() const {
    std::string s;
    for (const auto& [k, v] : values_) s += k + "=" + v + "\n";
    return s;
  }

  std::uint64_t hash() const { return fnv1a(canonical()); }

 private:
  static std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
  }

  std::map<std::string, std::string> values_;
};

inline std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Plain-text manifest; contains nothing that varies between identical runs.
inline std::string manifest_text(std::string_view command, std::uint64_t seed, const RunConfig& cfg) {
  std::ostringstream os;
  os << "command " << command << "\n";
  os << "seed " << seed << "\n";
  os << "config_hash " << hex64(cfg.hash()) << "\n";
  os << "dscore_version " << kVersion << "\n";
  os << "eigen_version " << EIGEN_WORLD_VERSION << "." << EIGEN_MAJOR_VERSION << "." << EIGEN_MINOR_VERSION << "\n";
#if defined(__VERSION__)
  os << "compiler " << __VERSION__ << "\n";
#endif
  os << "[config]\n" << cfg.canonical();
  return os.str();
}

inline void write_manifest(const std::filesystem::path& dir, std::string_view command, std::uint64_t seed, const RunConfig& cfg) {
  if (!dir.empty()) std::filesystem::create_directories(dir);
  std::ofstream out(dir / "run.manifest", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest in " + dir.string());
  out << manifest_text(command, seed, cfg);
}

}  // namespace dscore
