#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "lhgnn/errors.hpp"
#include "lhgnn/rng.hpp"

namespace lhgnn {

// Training configuration. Defaults follow the reference hyperparameters:
// two layers with per-layer L2 normalization, 50 paths per node, semantic
// dimension 10, decay 0.1, margin 0.2, FiLM constraint weight 1e-4.
struct TrainConfig {
  int64_t n_layers = 2;
  int64_t d_h = 32;
  int64_t d_s = 10;
  int64_t n_paths = 50;  // N random walks per node
  int64_t l_max = 4;
  double lambda = 0.1;   // path-length decay
  double alpha = 0.2;    // triplet margin
  double mu = 1e-4;      // FiLM constraint weight
  int64_t batch_size = 256;
  double lr = 0.005;
  std::string optimizer = "adam";
  int64_t max_epochs = 50;
  int64_t patience = 5;
  uint64_t seed = 1;
  double leaky_slope = 0.01;
  int64_t entity_dim = 200;  // learnable input vectors for featureless graphs
  int64_t workers = 1;
  bool resample_paths = false;  // resample P_v every epoch (experiment)
  bool all_prefixes = false;    // expand every walk prefix instead of one draw
  std::string variant = "full";

  void validate() const {
    if (n_layers < 1) throw ConfigError("config: layers must be >= 1");
    if (d_h < 1 || d_s < 1) throw ConfigError("config: dimensions must be positive");
    if (n_paths < 1) throw ConfigError("config: paths must be >= 1");
    if (l_max < 1) throw ConfigError("config: l_max must be >= 1");
    if (lambda <= 0.0) throw ConfigError("config: lambda must be positive");
    if (alpha <= 0.0) throw ConfigError("config: alpha must be positive");
    if (mu < 0.0) throw ConfigError("config: mu must be >= 0");
    if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
    if (lr <= 0.0) throw ConfigError("config: lr must be positive");
    if (max_epochs < 1) throw ConfigError("config: max_epochs must be >= 1");
    if (patience < 0) throw ConfigError("config: patience must be >= 0");
    if (entity_dim < 1) throw ConfigError("config: entity_dim must be >= 1");
    if (workers < 1) throw ConfigError("config: workers must be >= 1");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

}  // namespace detail

// Flat `key = value` file, # comments, optional quotes around values.
inline std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not found: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected `key = value`");
    std::string key = detail::trim(line.substr(0, eq));
    std::string value = detail::trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    if (key.empty() || value.empty())
      throw ConfigError(path + ":" + std::to_string(line_no) + ": empty key or value");
    kv[key] = value;
  }
  return kv;
}

inline void apply_config_entry(TrainConfig& cfg, const std::string& key, const std::string& value) {
  auto to_i = [&](const std::string& v) {
    try {
      return static_cast<int64_t>(std::stoll(v));
    } catch (...) {
      throw ConfigError("config: key `" + key + "`: not an integer: " + v);
    }
  };
  auto to_d = [&](const std::string& v) {
    try {
      return std::stod(v);
    } catch (...) {
      throw ConfigError("config: key `" + key + "`: not a number: " + v);
    }
  };
  auto to_b = [&](const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: key `" + key + "`: not a boolean: " + v);
  };

  if (key == "layers") cfg.n_layers = to_i(value);
  else if (key == "d_h") cfg.d_h = to_i(value);
  else if (key == "d_s") cfg.d_s = to_i(value);
  else if (key == "paths") cfg.n_paths = to_i(value);
  else if (key == "l_max") cfg.l_max = to_i(value);
  else if (key == "lambda") cfg.lambda = to_d(value);
  else if (key == "alpha") cfg.alpha = to_d(value);
  else if (key == "mu") cfg.mu = to_d(value);
  else if (key == "batch_size") cfg.batch_size = to_i(value);
  else if (key == "lr") cfg.lr = to_d(value);
  else if (key == "optimizer") cfg.optimizer = value;
  else if (key == "max_epochs") cfg.max_epochs = to_i(value);
  else if (key == "patience") cfg.patience = to_i(value);
  else if (key == "seed") cfg.seed = static_cast<uint64_t>(to_i(value));
  else if (key == "leaky_slope") cfg.leaky_slope = to_d(value);
  else if (key == "entity_dim") cfg.entity_dim = to_i(value);
  else if (key == "workers") cfg.workers = to_i(value);
  else if (key == "resample_paths") cfg.resample_paths = to_b(value);
  else if (key == "all_prefixes") cfg.all_prefixes = to_b(value);
  else if (key == "variant") cfg.variant = value;
  else throw ConfigError("config: unknown key `" + key + "`");
}

inline TrainConfig load_config(const std::string& path) {
  TrainConfig cfg;
  for (const auto& [k, v] : parse_config_file(path)) apply_config_entry(cfg, k, v);
  cfg.validate();
  return cfg;
}

// Canonical serialization; also the input of the fingerprint that every
// artifact embeds.
inline std::string config_canonical(const TrainConfig& cfg) {
  std::ostringstream out;
  out.precision(17);
  out << "alpha=" << cfg.alpha << "\nall_prefixes=" << (cfg.all_prefixes ? 1 : 0)
      << "\nbatch_size=" << cfg.batch_size << "\nd_h=" << cfg.d_h << "\nd_s=" << cfg.d_s
      << "\nentity_dim=" << cfg.entity_dim << "\nl_max=" << cfg.l_max << "\nlambda=" << cfg.lambda
      << "\nlayers=" << cfg.n_layers << "\nleaky_slope=" << cfg.leaky_slope << "\nlr=" << cfg.lr
      << "\nmax_epochs=" << cfg.max_epochs << "\nmu=" << cfg.mu << "\noptimizer=" << cfg.optimizer
      << "\npaths=" << cfg.n_paths << "\npatience=" << cfg.patience
      << "\nresample_paths=" << (cfg.resample_paths ? 1 : 0) << "\nseed=" << cfg.seed
      << "\nvariant=" << cfg.variant << "\n";
  return out.str();
}

inline uint64_t config_fingerprint(const TrainConfig& cfg) {
  return fnv1a(config_canonical(cfg));
}

inline std::string fingerprint_hex(uint64_t fp) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[fp & 0xf];
    fp >>= 4;
  }
  return s;
}

inline void save_config(const TrainConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config: " + path);
  out << config_canonical(cfg);
}

}  // namespace lhgnn
