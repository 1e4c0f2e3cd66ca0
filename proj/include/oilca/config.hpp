#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "oilca/num/errors.hpp"
#include "oilca/num/rng.hpp"

namespace oilca {

// Flat `section.key = value` run configuration. Every key has a default,
// unknown keys are rejected, and the canonical rendering (fixed key order,
// normalized number formatting) is what gets hashed into config_hash.
// The paths section is excluded from the hash: it decides where artifacts
// land, never what they contain.
struct RunConfig {
  std::uint64_t master_seed = 42;

  int env_n_classes = 3;
  double env_alpha = 2.0;
  std::vector<int> env_gamma = {0, 1, 2};
  double env_step_size = 0.5;
  std::vector<double> env_box_low = {-5.0, -5.0};
  std::vector<double> env_box_high = {5.0, 5.0};
  std::vector<double> env_target = {0.0, 0.0};
  int env_episode_len = 500;
  std::uint64_t env_seed = 1;

  int datagen_episodes_per_class = 1000;
  double datagen_top_frac = 0.2;
  double datagen_expert_prob = 0.1;
  double datagen_greedy_frac = 0.5;
  double datagen_eps_frac = 0.4;
  double datagen_uniform_frac = 0.1;
  double datagen_epsilon = 0.3;
  bool datagen_log_latents = true;

  int vae_d_u = 2;
  int vae_width = 64;
  int vae_depth = 2;
  int vae_epochs = 40;
  int vae_batch = 256;
  double vae_lr = 1e-3;
  bool vae_conditional = true;

  int sampler_epochs = 20;
  double sampler_lr = 1e-3;
  int sampler_batch = 256;

  int policy_width = 64;
  int policy_depth = 2;
  int disc_width = 64;
  int disc_depth = 2;

  int augment_batches = 0;  // 0 → derive the batch count from target_ratio_pct
  int augment_batch_size = 256;
  int augment_target_ratio_pct = 100;

  double dwbc_eta = 0.5;
  double dwbc_alpha = 2.0;
  double dwbc_d_min = 0.1;
  double dwbc_d_max = 0.9;
  int dwbc_disc_period = 100;
  int dwbc_policy_period = 1;
  double dwbc_lr_disc = 1e-3;
  double dwbc_lr_policy = 1e-3;
  int dwbc_total_steps = 3000;
  int dwbc_batch_size = 256;

  int bc_epochs = 20;
  double bc_lr = 1e-3;
  int bc_batch = 256;

  int eval_n_episodes = 100;
  std::vector<int> eval_seeds = {0, 1, 2, 3, 4};
  std::vector<int> eval_sweep_ratios = {10, 30, 50, 70, 90, 100, 200};

  std::string paths_workdir = "work";
};

namespace config_detail {

enum class Kind { U64, Int, Double, Bool, IntList, DoubleList, String };

struct Entry {
  const char* key;
  Kind kind;
  bool hashed;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> render;
};

inline std::string render_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0')
    throw ConfigError("not a number: '" + s + "'");
  return v;
}

inline long long parse_ll(const std::string& s) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const long long v = std::strtoll(begin, &end, 10);
  if (end == begin || *end != '\0')
    throw ConfigError("not an integer: '" + s + "'");
  return v;
}

inline bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("not a boolean: '" + s + "'");
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

#define OILCA_CFG_FIELD(key_name, kind_tag, member, is_hashed)               \
  Entry {                                                                    \
    key_name, Kind::kind_tag, is_hashed,                                     \
        [](RunConfig& c, const std::string& v) {                             \
          assign(c.member, Kind::kind_tag, v);                               \
        },                                                                   \
        [](const RunConfig& c) { return render(c.member, Kind::kind_tag); }  \
  }

inline void assign(std::uint64_t& dst, Kind, const std::string& v) {
  const long long x = parse_ll(v);
  if (x < 0) throw ConfigError("seed must be non-negative: '" + v + "'");
  dst = static_cast<std::uint64_t>(x);
}
inline void assign(int& dst, Kind, const std::string& v) {
  dst = static_cast<int>(parse_ll(v));
}
inline void assign(double& dst, Kind, const std::string& v) {
  dst = parse_double(v);
}
inline void assign(bool& dst, Kind, const std::string& v) {
  dst = parse_bool(v);
}
inline void assign(std::string& dst, Kind, const std::string& v) { dst = v; }
inline void assign(std::vector<int>& dst, Kind, const std::string& v) {
  dst.clear();
  for (const auto& part : split_list(v))
    dst.push_back(static_cast<int>(parse_ll(part)));
}
inline void assign(std::vector<double>& dst, Kind, const std::string& v) {
  dst.clear();
  for (const auto& part : split_list(v)) dst.push_back(parse_double(part));
}

inline std::string render(std::uint64_t v, Kind) { return std::to_string(v); }
inline std::string render(int v, Kind) { return std::to_string(v); }
inline std::string render(double v, Kind) { return render_double(v); }
inline std::string render(bool v, Kind) { return v ? "true" : "false"; }
inline std::string render(const std::string& v, Kind) { return v; }
inline std::string render(const std::vector<int>& v, Kind) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}
inline std::string render(const std::vector<double>& v, Kind) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += render_double(v[i]);
  }
  return out;
}

inline const std::vector<Entry>& schema() {
  static const std::vector<Entry> table = {
      OILCA_CFG_FIELD("master_seed", U64, master_seed, true),
      OILCA_CFG_FIELD("env.n_classes", Int, env_n_classes, true),
      OILCA_CFG_FIELD("env.alpha", Double, env_alpha, true),
      OILCA_CFG_FIELD("env.gamma", IntList, env_gamma, true),
      OILCA_CFG_FIELD("env.step_size", Double, env_step_size, true),
      OILCA_CFG_FIELD("env.box_low", DoubleList, env_box_low, true),
      OILCA_CFG_FIELD("env.box_high", DoubleList, env_box_high, true),
      OILCA_CFG_FIELD("env.target", DoubleList, env_target, true),
      OILCA_CFG_FIELD("env.episode_len", Int, env_episode_len, true),
      OILCA_CFG_FIELD("env.seed", U64, env_seed, true),
      OILCA_CFG_FIELD("datagen.episodes_per_class", Int,
                      datagen_episodes_per_class, true),
      OILCA_CFG_FIELD("datagen.top_frac", Double, datagen_top_frac, true),
      OILCA_CFG_FIELD("datagen.expert_prob", Double, datagen_expert_prob,
                      true),
      OILCA_CFG_FIELD("datagen.greedy_frac", Double, datagen_greedy_frac,
                      true),
      OILCA_CFG_FIELD("datagen.eps_frac", Double, datagen_eps_frac, true),
      OILCA_CFG_FIELD("datagen.uniform_frac", Double, datagen_uniform_frac,
                      true),
      OILCA_CFG_FIELD("datagen.epsilon", Double, datagen_epsilon, true),
      OILCA_CFG_FIELD("datagen.log_latents", Bool, datagen_log_latents, true),
      OILCA_CFG_FIELD("vae.d_u", Int, vae_d_u, true),
      OILCA_CFG_FIELD("vae.width", Int, vae_width, true),
      OILCA_CFG_FIELD("vae.depth", Int, vae_depth, true),
      OILCA_CFG_FIELD("vae.epochs", Int, vae_epochs, true),
      OILCA_CFG_FIELD("vae.batch", Int, vae_batch, true),
      OILCA_CFG_FIELD("vae.lr", Double, vae_lr, true),
      OILCA_CFG_FIELD("vae.conditional", Bool, vae_conditional, true),
      OILCA_CFG_FIELD("sampler.epochs", Int, sampler_epochs, true),
      OILCA_CFG_FIELD("sampler.lr", Double, sampler_lr, true),
      OILCA_CFG_FIELD("sampler.batch", Int, sampler_batch, true),
      OILCA_CFG_FIELD("policy.width", Int, policy_width, true),
      OILCA_CFG_FIELD("policy.depth", Int, policy_depth, true),
      OILCA_CFG_FIELD("disc.width", Int, disc_width, true),
      OILCA_CFG_FIELD("disc.depth", Int, disc_depth, true),
      OILCA_CFG_FIELD("augment.batches", Int, augment_batches, true),
      OILCA_CFG_FIELD("augment.batch_size", Int, augment_batch_size, true),
      OILCA_CFG_FIELD("augment.target_ratio_pct", Int,
                      augment_target_ratio_pct, true),
      OILCA_CFG_FIELD("dwbc.eta", Double, dwbc_eta, true),
      OILCA_CFG_FIELD("dwbc.alpha", Double, dwbc_alpha, true),
      OILCA_CFG_FIELD("dwbc.d_min", Double, dwbc_d_min, true),
      OILCA_CFG_FIELD("dwbc.d_max", Double, dwbc_d_max, true),
      OILCA_CFG_FIELD("dwbc.disc_period", Int, dwbc_disc_period, true),
      OILCA_CFG_FIELD("dwbc.policy_period", Int, dwbc_policy_period, true),
      OILCA_CFG_FIELD("dwbc.lr_disc", Double, dwbc_lr_disc, true),
      OILCA_CFG_FIELD("dwbc.lr_policy", Double, dwbc_lr_policy, true),
      OILCA_CFG_FIELD("dwbc.total_steps", Int, dwbc_total_steps, true),
      OILCA_CFG_FIELD("dwbc.batch_size", Int, dwbc_batch_size, true),
      OILCA_CFG_FIELD("bc.epochs", Int, bc_epochs, true),
      OILCA_CFG_FIELD("bc.lr", Double, bc_lr, true),
      OILCA_CFG_FIELD("bc.batch", Int, bc_batch, true),
      OILCA_CFG_FIELD("eval.n_episodes", Int, eval_n_episodes, true),
      OILCA_CFG_FIELD("eval.seeds", IntList, eval_seeds, true),
      OILCA_CFG_FIELD("eval.sweep_ratios", IntList, eval_sweep_ratios, true),
      OILCA_CFG_FIELD("paths.workdir", String, paths_workdir, false),
  };
  return table;
}

#undef OILCA_CFG_FIELD

}  // namespace config_detail

inline void validate_config(const RunConfig& c) {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (c.env_n_classes < 2) fail("env.n_classes must be >= 2");
  if (c.env_gamma.size() != static_cast<std::size_t>(c.env_n_classes))
    fail("env.gamma must list one value per class");
  {
    std::vector<bool> seen(c.env_gamma.size(), false);
    for (int g : c.env_gamma) {
      if (g < 0 || g >= c.env_n_classes || seen[g])
        fail("env.gamma must be a permutation of 0..n_classes-1");
      seen[g] = true;
    }
  }
  if (c.env_step_size <= 0) fail("env.step_size must be positive");
  if (c.env_box_low.size() != 2 || c.env_box_high.size() != 2 ||
      c.env_target.size() != 2)
    fail("env.box_low/box_high/target must be 2-vectors");
  for (int i = 0; i < 2; ++i) {
    if (!(c.env_box_low[i] < c.env_box_high[i]))
      fail("env.box_low must be componentwise below env.box_high");
    if (c.env_target[i] < c.env_box_low[i] ||
        c.env_target[i] > c.env_box_high[i])
      fail("env.target must lie inside the box");
  }
  if (c.env_episode_len < 1) fail("env.episode_len must be >= 1");
  if (c.datagen_episodes_per_class < 1)
    fail("datagen.episodes_per_class must be >= 1");
  if (!(c.datagen_top_frac > 0.0 && c.datagen_top_frac < 1.0))
    fail("datagen.top_frac must be in (0,1)");
  if (c.datagen_expert_prob < 0.0 || c.datagen_expert_prob > 1.0)
    fail("datagen.expert_prob must be in [0,1]");
  const double mix = c.datagen_greedy_frac + c.datagen_eps_frac +
                     c.datagen_uniform_frac;
  if (c.datagen_greedy_frac < 0 || c.datagen_eps_frac < 0 ||
      c.datagen_uniform_frac < 0 || std::abs(mix - 1.0) > 1e-9)
    fail("datagen policy mixture fractions must be non-negative and sum to 1");
  if (c.datagen_epsilon < 0.0 || c.datagen_epsilon > 1.0)
    fail("datagen.epsilon must be in [0,1]");
  if (c.vae_d_u < 1 || c.vae_d_u > 4)
    fail("vae.d_u must be in 1..4 (MCC permutation search is exhaustive)");
  if (c.vae_width < 1 || c.vae_depth < 1 || c.vae_epochs < 1 ||
      c.vae_batch < 1 || c.vae_lr <= 0)
    fail("vae training hyperparameters must be positive");
  if (c.sampler_epochs < 1 || c.sampler_lr <= 0 || c.sampler_batch < 1)
    fail("sampler training hyperparameters must be positive");
  if (c.policy_width < 1 || c.policy_depth < 1 || c.disc_width < 1 ||
      c.disc_depth < 1)
    fail("policy/disc architecture values must be positive");
  if (c.augment_batches < 0) fail("augment.batches must be >= 0");
  if (c.augment_batch_size < 1) fail("augment.batch_size must be >= 1");
  if (c.augment_target_ratio_pct < 0)
    fail("augment.target_ratio_pct must be >= 0");
  if (!(c.dwbc_eta > 0.0 && c.dwbc_eta < 1.0))
    fail("dwbc.eta must be in (0,1)");
  if (!(c.dwbc_alpha > 1.0)) fail("dwbc.alpha must be > 1");
  if (!(0.0 < c.dwbc_d_min && c.dwbc_d_min < c.dwbc_d_max &&
        c.dwbc_d_max < 1.0))
    fail("dwbc d-clip must satisfy 0 < d_min < d_max < 1");
  if (c.dwbc_disc_period < 1 || c.dwbc_policy_period < 1)
    fail("dwbc update periods must be >= 1");
  if (c.dwbc_lr_disc <= 0 || c.dwbc_lr_policy <= 0 || c.dwbc_total_steps < 1 ||
      c.dwbc_batch_size < 1)
    fail("dwbc training hyperparameters must be positive");
  if (c.bc_epochs < 1 || c.bc_lr <= 0 || c.bc_batch < 1)
    fail("bc training hyperparameters must be positive");
  if (c.eval_n_episodes < 1) fail("eval.n_episodes must be >= 1");
  if (c.eval_seeds.empty()) fail("eval.seeds must be nonempty");
  for (int r : c.eval_sweep_ratios)
    if (r < 1) fail("eval.sweep_ratios entries must be >= 1");
  if (c.paths_workdir.empty()) fail("paths.workdir must be nonempty");
}

// Parses `section.key = value` text. Unknown keys and malformed lines are
// rejected with their line number.
inline RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    // Trim.
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);

    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected 'key = value'");
    auto strip = [](std::string s) {
      const auto x = s.find_first_not_of(" \t");
      if (x == std::string::npos) return std::string();
      const auto y = s.find_last_not_of(" \t");
      return s.substr(x, y - x + 1);
    };
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));
    bool found = false;
    for (const auto& entry : config_detail::schema()) {
      if (key == entry.key) {
        try {
          entry.set(cfg, value);
        } catch (const ConfigError& err) {
          throw ConfigError("config line " + std::to_string(lineno) + " (" +
                            key + "): " + err.what());
        }
        found = true;
        break;
      }
    }
    if (!found)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": unknown key '" + key + "'");
  }
  validate_config(cfg);
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file: " + path);
  std::stringstream buf;
  buf << is.rdbuf();
  return parse_config_text(buf.str());
}

// Canonical normalized rendering: every key in schema order. Hashed keys
// only when `hashed_only` (the paths section never affects results).
inline std::string canonical_config_text(const RunConfig& cfg,
                                         bool hashed_only = false) {
  std::string out;
  for (const auto& entry : config_detail::schema()) {
    if (hashed_only && !entry.hashed) continue;
    out += entry.key;
    out += " = ";
    out += entry.render(cfg);
    out += "\n";
  }
  return out;
}

// 16-hex-digit digest of the canonical hashed-key rendering.
inline std::string config_hash(const RunConfig& cfg) {
  const std::uint64_t h = num::fnv1a64(canonical_config_text(cfg, true));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

// Digest of just the env.* keys (stamped into dataset manifests).
inline std::string env_spec_hash(const RunConfig& cfg) {
  std::string out;
  for (const auto& entry : config_detail::schema()) {
    const std::string key = entry.key;
    if (key.rfind("env.", 0) != 0) continue;
    out += key;
    out += " = ";
    out += entry.render(cfg);
    out += "\n";
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(num::fnv1a64(out)));
  return buf;
}

}  // namespace oilca
