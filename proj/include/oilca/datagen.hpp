#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "oilca/config.hpp"
#include "oilca/episode.hpp"
#include "oilca/num/leio.hpp"
#include "oilca/num/rng.hpp"
#include "oilca/toyenv.hpp"

namespace oilca {

namespace datagen_detail {

inline long long parse_ll_field(const std::string& where,
                                const std::string& value) {
  const char* begin = value.c_str();
  char* end = nullptr;
  const long long v = std::strtoll(begin, &end, 10);
  if (end == begin || *end != '\0' || v < 0)
    throw FormatError(where + ": bad numeric field '" + value + "'");
  return v;
}

}  // namespace datagen_detail

// ---------------------------------------------------------------------------
// Scripted behavior policies.

enum class BehaviorKind { Greedy, EpsRandom, UniformRandom };

struct BehaviorPolicy {
  BehaviorKind kind = BehaviorKind::UniformRandom;
  double epsilon = 0.0;  // used by EpsRandom only
};

inline ActionFn make_behavior_action(const EnvSpec& spec, const num::Mlp& net,
                                     BehaviorPolicy bp, int c) {
  return [&spec, &net, bp, c](const Vec2& s, num::Rng& rng) -> Vec2 {
    const auto actions = axis_actions(spec.step_size);
    switch (bp.kind) {
      case BehaviorKind::Greedy:
        return greedy_action(spec, net, s, c);
      case BehaviorKind::EpsRandom:
        if (rng.uniform01() <= bp.epsilon)
          return actions[rng.uniform_index(4)];
        return greedy_action(spec, net, s, c);
      case BehaviorKind::UniformRandom:
        return actions[rng.uniform_index(4)];
    }
    throw ContractError("make_behavior_action: bad kind");
  };
}

// Expands the configured mixture into a list (1% resolution) from which
// collect() draws uniformly per episode.
inline std::vector<BehaviorPolicy> make_default_policies(const RunConfig& cfg) {
  auto pct = [](double f) { return static_cast<int>(std::lround(f * 100.0)); };
  int g = pct(cfg.datagen_greedy_frac);
  int e = pct(cfg.datagen_eps_frac);
  int u = pct(cfg.datagen_uniform_frac);
  const int d = std::gcd(std::gcd(std::max(g, 1), std::max(e, 1)),
                         std::max(u, 1));
  if (g % d == 0 && e % d == 0 && u % d == 0) {
    g /= d;
    e /= d;
    u /= d;
  }
  std::vector<BehaviorPolicy> out;
  for (int i = 0; i < g; ++i)
    out.push_back({BehaviorKind::Greedy, 0.0});
  for (int i = 0; i < e; ++i)
    out.push_back({BehaviorKind::EpsRandom, cfg.datagen_epsilon});
  for (int i = 0; i < u; ++i)
    out.push_back({BehaviorKind::UniformRandom, 0.0});
  if (out.empty()) throw ConfigError("behavior mixture expands to nothing");
  return out;
}

inline std::string mixture_description(const RunConfig& cfg) {
  std::ostringstream os;
  os << "greedy:" << cfg.datagen_greedy_frac << ",eps-random:"
     << cfg.datagen_eps_frac << "(eps=" << cfg.datagen_epsilon
     << "),uniform:" << cfg.datagen_uniform_frac;
  return os.str();
}

// ---------------------------------------------------------------------------
// Collection and the expert/unlabeled split.

// episodes_per_class rollouts per class, class-major, sequential ids. Each
// episode owns a derived substream; its first draw picks the policy.
inline std::vector<Episode> collect(const EnvSpec& spec, const num::Mlp& net,
                                    const std::vector<BehaviorPolicy>& policies,
                                    int episodes_per_class,
                                    std::uint64_t datagen_seed,
                                    bool log_latents = false) {
  if (policies.empty()) throw ConfigError("collect: empty policy list");
  if (episodes_per_class < 1)
    throw ConfigError("collect: episodes_per_class must be >= 1");
  std::vector<Episode> out;
  out.reserve(static_cast<std::size_t>(spec.n_classes) * episodes_per_class);
  std::uint32_t id = 0;
  for (int c = 0; c < spec.n_classes; ++c) {
    for (int e = 0; e < episodes_per_class; ++e, ++id) {
      num::Rng rng = num::substream(datagen_seed, "episode", id);
      const BehaviorPolicy bp =
          policies[rng.uniform_index(policies.size())];
      const ActionFn act = make_behavior_action(spec, net, bp, c);
      out.push_back(rollout(spec, net, act, c, rng, id, log_latents));
    }
  }
  return out;
}

struct SplitDataset {
  std::vector<Episode> expert;
  std::vector<Episode> unlabeled;

  // Manifest fields.
  int n_classes = 0;
  std::string env_hash;
  std::uint64_t master_seed = 0;
  std::uint64_t datagen_seed = 0;
  std::string mixture;
  std::int64_t augmented_records = 0;
  std::vector<std::string> provenance;  // one line per augmented record
};

// Top-floor(top_frac·N) episodes by (return, id) are positives; each enters
// D_E independently with expert_prob (drawn in ascending id order); the rest
// go to D_U. Collection order is preserved inside both halves.
inline SplitDataset label_split(const std::vector<Episode>& episodes,
                                double top_frac, double expert_prob,
                                num::Rng& rng) {
  const std::size_t n = episodes.size();
  if (n < 5)
    throw InsufficientDataError("label_split: need at least 5 episodes");
  if (!(top_frac > 0.0 && top_frac < 1.0))
    throw ConfigError("label_split: top_frac must be in (0,1)");
  if (expert_prob < 0.0 || expert_prob > 1.0)
    throw ConfigError("label_split: expert_prob must be in [0,1]");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    const double ri = episodes[i].ret(), rj = episodes[j].ret();
    if (ri != rj) return ri < rj;
    return episodes[i].id < episodes[j].id;
  });
  const std::size_t k =
      static_cast<std::size_t>(top_frac * static_cast<double>(n));
  std::vector<bool> positive(n, false);
  for (std::size_t i = n - k; i < n; ++i) positive[order[i]] = true;

  // Bernoulli draws in ascending episode-id order for replayability.
  std::vector<std::size_t> pos_idx;
  for (std::size_t i = 0; i < n; ++i)
    if (positive[i]) pos_idx.push_back(i);
  std::sort(pos_idx.begin(), pos_idx.end(), [&](std::size_t i, std::size_t j) {
    return episodes[i].id < episodes[j].id;
  });
  std::vector<bool> chosen(n, false);
  for (std::size_t i : pos_idx) chosen[i] = rng.uniform01() <= expert_prob;

  SplitDataset ds;
  int max_c = -1;
  for (std::size_t i = 0; i < n; ++i) {
    (chosen[i] ? ds.expert : ds.unlabeled).push_back(episodes[i]);
    max_c = std::max(max_c, episodes[i].c);
  }
  ds.n_classes = max_c + 1;

  if (!ds.expert.empty() && !ds.unlabeled.empty() &&
      !(mean_return(ds.expert) > mean_return(ds.unlabeled)))
    throw ContractError(
        "label_split: expert mean return does not exceed unlabeled mean");
  return ds;
}

// ---------------------------------------------------------------------------
// On-disk format. `<base>.ds` holds text header lines then fixed 65-byte
// records: episode_id u32, t u32, c u8, s_t 2×f64, a_t 2×f64, s_next 2×f64,
// r f64 — all little-endian. `<base>.latent` (2×f64 per record, same order)
// exists only when ground-truth logging was on.

inline constexpr std::size_t kRecordStride = 4 + 4 + 1 + 16 + 16 + 16 + 8;

inline void write_episode_file(const std::string& base,
                               const std::vector<Episode>& episodes,
                               int n_classes, const std::string& env_hash,
                               std::uint64_t master_seed,
                               std::uint64_t datagen_seed) {
  const std::string path = base + ".ds";
  std::ofstream os(path, std::ios::binary);
  if (!os) throw PrerequisiteError("cannot write dataset: " + path);
  const std::size_t n_records = record_count(episodes);
  os << "oilca-dataset v1\n";
  os << "state_dim = 2\n";
  os << "action_dim = 2\n";
  os << "n_classes = " << n_classes << "\n";
  os << "n_episodes = " << episodes.size() << "\n";
  os << "n_records = " << n_records << "\n";
  os << "env_hash = " << env_hash << "\n";
  os << "seeds = " << master_seed << "," << datagen_seed << "\n";
  bool any_latent = false;
  for (const Episode& e : episodes) {
    for (const StepRecord& rec : e.steps) {
      num::write_u32_le(os, e.id);
      num::write_u32_le(os, static_cast<std::uint32_t>(rec.t));
      num::write_u8(os, static_cast<std::uint8_t>(e.c));
      for (double v : {rec.s[0], rec.s[1], rec.a[0], rec.a[1], rec.s_next[0],
                       rec.s_next[1], rec.r})
        num::write_f64_le(os, v);
    }
    if (!e.latent_u.empty()) any_latent = true;
  }
  if (!os) throw PrerequisiteError("short write on dataset: " + path);
  os.close();

  if (any_latent) {
    const std::string lpath = base + ".latent";
    std::ofstream ls(lpath, std::ios::binary);
    if (!ls) throw PrerequisiteError("cannot write latent sidecar: " + lpath);
    for (const Episode& e : episodes) {
      if (e.latent_u.size() != e.steps.size())
        throw ContractError("latent sidecar requires latents on every step");
      for (const Vec2& u : e.latent_u) {
        num::write_f64_le(ls, u[0]);
        num::write_f64_le(ls, u[1]);
      }
    }
  }
}

struct EpisodeFileHeader {
  int n_classes = 0;
  std::size_t n_episodes = 0;
  std::size_t n_records = 0;
  std::string env_hash;
  std::uint64_t master_seed = 0;
  std::uint64_t datagen_seed = 0;
};

inline std::vector<Episode> read_episode_file(const std::string& base,
                                              EpisodeFileHeader* hdr_out =
                                                  nullptr) {
  const std::string path = base + ".ds";
  std::ifstream is(path, std::ios::binary);
  if (!is) throw PrerequisiteError("dataset not found: " + path);

  auto header_line = [&](const std::string& key) {
    std::string line;
    if (!std::getline(is, line))
      throw FormatError(path + ": truncated header (missing " + key + ")");
    const std::string prefix = key + " = ";
    if (line.rfind(prefix, 0) != 0)
      throw FormatError(path + ": expected '" + key + " = ...', got '" + line +
                        "'");
    return line.substr(prefix.size());
  };

  std::string magic;
  if (!std::getline(is, magic) || magic != "oilca-dataset v1")
    throw FormatError(path + ": bad magic line");
  EpisodeFileHeader hdr;
  const auto num_field = [&](const std::string& key) {
    return datagen_detail::parse_ll_field(path, header_line(key));
  };
  const int state_dim = static_cast<int>(num_field("state_dim"));
  const int action_dim = static_cast<int>(num_field("action_dim"));
  if (state_dim != 2 || action_dim != 2)
    throw FormatError(path + ": unsupported dims (want 2/2)");
  hdr.n_classes = static_cast<int>(num_field("n_classes"));
  hdr.n_episodes = static_cast<std::size_t>(num_field("n_episodes"));
  hdr.n_records = static_cast<std::size_t>(num_field("n_records"));
  hdr.env_hash = header_line("env_hash");
  {
    const std::string seeds = header_line("seeds");
    const auto comma = seeds.find(',');
    if (comma == std::string::npos)
      throw FormatError(path + ": seeds line needs two values");
    hdr.master_seed = static_cast<std::uint64_t>(
        datagen_detail::parse_ll_field(path, seeds.substr(0, comma)));
    hdr.datagen_seed = static_cast<std::uint64_t>(
        datagen_detail::parse_ll_field(path, seeds.substr(comma + 1)));
  }

  std::vector<Episode> episodes;
  std::vector<bool> id_seen;
  const long long data_start = static_cast<long long>(is.tellg());
  for (std::size_t r = 0; r < hdr.n_records; ++r) {
    std::uint32_t id = 0, t = 0;
    std::uint8_t c = 0;
    double vals[7];
    bool ok = num::read_u32_le(is, id) && num::read_u32_le(is, t) &&
              num::read_u8(is, c);
    for (int k = 0; ok && k < 7; ++k) ok = num::read_f64_le(is, vals[k]);
    if (!ok)
      throw FormatError(
          path + ": truncated record at offset " +
          std::to_string(data_start +
                         static_cast<long long>(r * kRecordStride)));
    for (int k = 0; k < 6; ++k)
      if (!std::isfinite(vals[k]))
        throw FormatError(path + ": non-finite state/action in record " +
                          std::to_string(r));
    if (c >= hdr.n_classes)
      throw FormatError(path + ": class out of range in record " +
                        std::to_string(r));

    StepRecord rec;
    rec.t = static_cast<int>(t);
    rec.s = {vals[0], vals[1]};
    rec.a = {vals[2], vals[3]};
    rec.s_next = {vals[4], vals[5]};
    rec.r = vals[6];

    const bool new_episode = episodes.empty() || episodes.back().id != id;
    if (new_episode) {
      if (id_seen.size() <= id) id_seen.resize(id + 1, false);
      if (id_seen[id])
        throw FormatError(path + ": episode " + std::to_string(id) +
                          " split into non-contiguous runs");
      id_seen[id] = true;
      Episode e;
      e.id = id;
      e.c = static_cast<int>(c);
      episodes.push_back(std::move(e));
      if (rec.t != 0)
        throw FormatError(path + ": episode " + std::to_string(id) +
                          " does not start at t=0");
    } else {
      Episode& e = episodes.back();
      if (static_cast<int>(c) != e.c)
        throw FormatError(path + ": class changes inside episode " +
                          std::to_string(id));
      if (rec.t != e.steps.back().t + 1)
        throw FormatError(path + ": non-contiguous t inside episode " +
                          std::to_string(id));
      if (e.steps.back().s_next != rec.s)
        throw FormatError(path + ": transition mismatch inside episode " +
                          std::to_string(id));
    }
    episodes.back().steps.push_back(rec);
  }
  char extra;
  if (is.read(&extra, 1))
    throw FormatError(path + ": trailing bytes after declared records");
  if (episodes.size() != hdr.n_episodes)
    throw FormatError(path + ": header episode count disagrees with records");

  // Optional ground-truth latent sidecar.
  std::ifstream ls(base + ".latent", std::ios::binary);
  if (ls) {
    for (Episode& e : episodes) {
      e.latent_u.resize(e.steps.size());
      for (Vec2& u : e.latent_u)
        if (!num::read_f64_le(ls, u[0]) || !num::read_f64_le(ls, u[1]))
          throw FormatError(base + ".latent: truncated sidecar");
    }
    if (ls.read(&extra, 1))
      throw FormatError(base + ".latent: trailing bytes");
  }

  if (hdr_out) *hdr_out = hdr;
  return episodes;
}

// SplitDataset lives under a path prefix: `<prefix>.expert.ds`,
// `<prefix>.unlabeled.ds`, a `<prefix>.split` manifest, and optional
// `.latent` / `.prov` sidecars.
inline void save_split(const SplitDataset& ds, const std::string& prefix) {
  write_episode_file(prefix + ".expert", ds.expert, ds.n_classes, ds.env_hash,
                     ds.master_seed, ds.datagen_seed);
  write_episode_file(prefix + ".unlabeled", ds.unlabeled, ds.n_classes,
                     ds.env_hash, ds.master_seed, ds.datagen_seed);
  const std::string mpath = prefix + ".split";
  std::ofstream os(mpath);
  if (!os) throw PrerequisiteError("cannot write split manifest: " + mpath);
  os << "oilca-split v1\n";
  os << "n_classes = " << ds.n_classes << "\n";
  os << "n_expert_episodes = " << ds.expert.size() << "\n";
  os << "n_unlabeled_episodes = " << ds.unlabeled.size() << "\n";
  os << "n_expert_records = " << record_count(ds.expert) << "\n";
  os << "n_unlabeled_records = " << record_count(ds.unlabeled) << "\n";
  os << "env_hash = " << ds.env_hash << "\n";
  os << "master_seed = " << ds.master_seed << "\n";
  os << "datagen_seed = " << ds.datagen_seed << "\n";
  os << "mixture = " << ds.mixture << "\n";
  os << "augmented_records = " << ds.augmented_records << "\n";
  if (!ds.provenance.empty()) {
    std::ofstream ps(prefix + ".prov");
    if (!ps) throw PrerequisiteError("cannot write provenance sidecar");
    for (const std::string& line : ds.provenance) ps << line << "\n";
  }
}

inline SplitDataset load_split(const std::string& prefix) {
  const std::string mpath = prefix + ".split";
  std::ifstream is(mpath);
  if (!is) throw PrerequisiteError("split manifest not found: " + mpath);
  std::string line;
  if (!std::getline(is, line) || line != "oilca-split v1")
    throw FormatError(mpath + ": bad magic line");
  SplitDataset ds;
  auto field = [&](const std::string& key) {
    std::string l;
    if (!std::getline(is, l))
      throw FormatError(mpath + ": missing field " + key);
    const std::string prefix_str = key + " = ";
    if (l.rfind(prefix_str, 0) != 0)
      throw FormatError(mpath + ": expected '" + key + "', got '" + l + "'");
    return l.substr(prefix_str.size());
  };
  auto mfield = [&](const std::string& key) {
    return datagen_detail::parse_ll_field(mpath, field(key));
  };
  ds.n_classes = static_cast<int>(mfield("n_classes"));
  const auto n_exp_eps = static_cast<std::size_t>(mfield("n_expert_episodes"));
  const auto n_unl_eps = static_cast<std::size_t>(mfield("n_unlabeled_episodes"));
  const auto n_exp_rec = static_cast<std::size_t>(mfield("n_expert_records"));
  const auto n_unl_rec = static_cast<std::size_t>(mfield("n_unlabeled_records"));
  ds.env_hash = field("env_hash");
  ds.master_seed = static_cast<std::uint64_t>(mfield("master_seed"));
  ds.datagen_seed = static_cast<std::uint64_t>(mfield("datagen_seed"));
  ds.mixture = field("mixture");
  ds.augmented_records = mfield("augmented_records");

  ds.expert = read_episode_file(prefix + ".expert");
  ds.unlabeled = read_episode_file(prefix + ".unlabeled");
  if (ds.expert.size() != n_exp_eps || ds.unlabeled.size() != n_unl_eps ||
      record_count(ds.expert) != n_exp_rec ||
      record_count(ds.unlabeled) != n_unl_rec)
    throw FormatError(mpath + ": manifest counts disagree with data files");

  std::ifstream ps(prefix + ".prov");
  if (ps) {
    std::string pline;
    while (std::getline(ps, pline))
      if (!pline.empty()) ds.provenance.push_back(pline);
  }
  if (static_cast<std::int64_t>(ds.provenance.size()) != ds.augmented_records)
    throw FormatError(mpath + ": provenance count disagrees with manifest");
  return ds;
}

}  // namespace oilca
