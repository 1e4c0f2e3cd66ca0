#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "oilca/config.hpp"
#include "oilca/datagen.hpp"
#include "oilca/num/leio.hpp"
#include "oilca/toyenv.hpp"

using oilca::BehaviorKind;
using oilca::BehaviorPolicy;
using oilca::Episode;
using oilca::EnvSpec;
using oilca::RunConfig;
using oilca::StepRecord;
using oilca::Vec2;
using oilca::num::Rng;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is);
  std::stringstream buf;
  buf << is.rdbuf();
  return buf.str();
}

void dump(const std::string& path, const std::string& bytes) {
  std::ofstream os(path, std::ios::binary);
  os.write(bytes.data(), (std::streamsize)bytes.size());
}

void cleanup(const std::string& base) {
  std::remove((base + ".ds").c_str());
  std::remove((base + ".latent").c_str());
}

// A single-step episode with a chosen return, for split-semantics tests.
Episode scored_episode(std::uint32_t id, int c, double r) {
  Episode e;
  e.id = id;
  e.c = c;
  StepRecord rec;
  rec.t = 0;
  rec.s = {(double)id, 0.0};
  rec.a = {0.5, 0.0};
  rec.s_next = {(double)id + 0.5, 0.0};
  rec.r = r;
  e.steps.push_back(rec);
  return e;
}

// A consistent multi-step episode (s_next chains into the next s).
Episode chained_episode(std::uint32_t id, int c, int len, bool with_latents) {
  Episode e;
  e.id = id;
  e.c = c;
  Vec2 s{0.1 * id, -0.2};
  for (int t = 0; t < len; ++t) {
    StepRecord rec;
    rec.t = t;
    rec.s = s;
    rec.a = {t % 2 ? 0.5 : -0.5, 0.0};
    rec.s_next = {s[0] + 0.01 * (t + 1), s[1] + 0.02};
    rec.r = -0.1 * t - 0.01 * id;
    e.steps.push_back(rec);
    if (with_latents) e.latent_u.push_back({0.3 * t, 1.0 + 0.1 * id});
    s = rec.s_next;
  }
  return e;
}

bool episodes_equal(const std::vector<Episode>& a,
                    const std::vector<Episode>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].id != b[i].id || a[i].c != b[i].c) return false;
    if (a[i].steps.size() != b[i].steps.size()) return false;
    if (a[i].latent_u != b[i].latent_u) return false;
    for (std::size_t t = 0; t < a[i].steps.size(); ++t) {
      const auto& x = a[i].steps[t];
      const auto& y = b[i].steps[t];
      const bool r_same =
          (std::isnan(x.r) && std::isnan(y.r)) || x.r == y.r;
      if (x.t != y.t || x.s != y.s || x.a != y.a || x.s_next != y.s_next ||
          !r_same)
        return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("default mixture expands to a reduced uniform list", "[datagen]") {
  const RunConfig cfg = oilca::parse_config_text("");
  const auto policies = oilca::make_default_policies(cfg);
  REQUIRE(policies.size() == 10);
  int greedy = 0, eps = 0, uni = 0;
  for (const auto& p : policies) {
    if (p.kind == BehaviorKind::Greedy) ++greedy;
    if (p.kind == BehaviorKind::EpsRandom) {
      ++eps;
      REQUIRE(p.epsilon == cfg.datagen_epsilon);
    }
    if (p.kind == BehaviorKind::UniformRandom) ++uni;
  }
  REQUIRE(greedy == 5);
  REQUIRE(eps == 4);
  REQUIRE(uni == 1);
}

TEST_CASE("behavior policies respect their knobs", "[datagen]") {
  const RunConfig cfg = oilca::parse_config_text("env.episode_len = 5\n");
  const EnvSpec spec = oilca::make_env_spec(cfg);
  const auto net = oilca::make_transition_net(spec);
  const Vec2 s{1.0, 1.0};

  // ε = 0: never explores (but still consumes its decision draw).
  const auto never = oilca::make_behavior_action(
      spec, net, {BehaviorKind::EpsRandom, 0.0}, 1);
  Rng r1(8);
  for (int i = 0; i < 20; ++i)
    REQUIRE(never(s, r1) == oilca::greedy_action(spec, net, s, 1));

  // ε = 1: always a random axis action.
  const auto always = oilca::make_behavior_action(
      spec, net, {BehaviorKind::EpsRandom, 1.0}, 1);
  const auto acts = oilca::axis_actions(spec.step_size);
  Rng r2(8);
  bool saw_non_greedy = false;
  for (int i = 0; i < 50; ++i) {
    const Vec2 a = always(s, r2);
    REQUIRE((a == acts[0] || a == acts[1] || a == acts[2] || a == acts[3]));
    if (a != oilca::greedy_action(spec, net, s, 1)) saw_non_greedy = true;
  }
  REQUIRE(saw_non_greedy);
}

TEST_CASE("collect produces class-major episodes with sequential ids",
          "[datagen]") {
  const RunConfig cfg = oilca::parse_config_text("env.episode_len = 5\n");
  const EnvSpec spec = oilca::make_env_spec(cfg);
  const auto net = oilca::make_transition_net(spec);
  const auto policies = oilca::make_default_policies(cfg);

  const auto small = oilca::collect(spec, net, policies, 2, 17);
  REQUIRE(small.size() == 6);  // 3 classes x 2
  for (std::size_t i = 0; i < small.size(); ++i) {
    REQUIRE(small[i].id == i);
    REQUIRE(small[i].c == (int)(i / 2));
    REQUIRE(small[i].steps.size() == 5);
  }

  // Scaled literally: 3 classes x 1000 episodes per class = 3000 episodes.
  const auto full = oilca::collect(spec, net, policies, 1000, 17);
  REQUIRE(full.size() == 3000);
  for (int c = 0; c < 3; ++c) {
    std::size_t count = 0;
    for (const auto& e : full)
      if (e.c == c) ++count;
    REQUIRE(count == 1000);
  }

  REQUIRE_THROWS_AS(oilca::collect(spec, net, {}, 2, 17), oilca::ConfigError);
  REQUIRE_THROWS_AS(oilca::collect(spec, net, policies, 0, 17),
                    oilca::ConfigError);
}

TEST_CASE("identical seeds serialize byte-for-byte identically", "[datagen]") {
  const RunConfig cfg = oilca::parse_config_text("env.episode_len = 5\n");
  const EnvSpec spec = oilca::make_env_spec(cfg);
  const auto net = oilca::make_transition_net(spec);
  const auto policies = oilca::make_default_policies(cfg);

  const auto eps1 = oilca::collect(spec, net, policies, 20, 99, true);
  const auto eps2 = oilca::collect(spec, net, policies, 20, 99, true);
  oilca::write_episode_file("dg_rep_a", eps1, 3, "deadbeef", 1, 99);
  oilca::write_episode_file("dg_rep_b", eps2, 3, "deadbeef", 1, 99);
  REQUIRE(slurp("dg_rep_a.ds") == slurp("dg_rep_b.ds"));
  REQUIRE(slurp("dg_rep_a.latent") == slurp("dg_rep_b.latent"));

  // A different seed must actually change the data.
  const auto eps3 = oilca::collect(spec, net, policies, 20, 100, true);
  oilca::write_episode_file("dg_rep_c", eps3, 3, "deadbeef", 1, 100);
  REQUIRE(slurp("dg_rep_a.ds") != slurp("dg_rep_c.ds"));
  cleanup("dg_rep_a");
  cleanup("dg_rep_b");
  cleanup("dg_rep_c");
}

TEST_CASE("label_split implements the top-quantile Bernoulli rule",
          "[datagen]") {
  std::vector<Episode> eps;
  for (int i = 0; i < 10; ++i) eps.push_back(scored_episode(i, i % 3, i));

  // expert_prob = 1 keeps every positive: returns {8, 9}.
  Rng rng(1);
  const auto ds = oilca::label_split(eps, 0.2, 1.0, rng);
  REQUIRE(ds.expert.size() == 2);
  REQUIRE(ds.unlabeled.size() == 8);
  std::vector<double> got;
  for (const auto& e : ds.expert) got.push_back(e.ret());
  std::sort(got.begin(), got.end());
  REQUIRE(got == std::vector<double>{8.0, 9.0});

  // Partition: each input episode lands in exactly one half.
  std::vector<bool> seen(10, false);
  for (const auto& e : ds.expert) seen[e.id] = true;
  for (const auto& e : ds.unlabeled) {
    REQUIRE_FALSE(seen[e.id]);
    seen[e.id] = true;
  }
  for (bool s : seen) REQUIRE(s);

  // Quality gap is strict by construction.
  REQUIRE(oilca::mean_return(ds.expert) > oilca::mean_return(ds.unlabeled));

  // expert_prob = 0 sends everything to D_U.
  Rng rng0(1);
  const auto none = oilca::label_split(eps, 0.2, 0.0, rng0);
  REQUIRE(none.expert.empty());
  REQUIRE(none.unlabeled.size() == 10);

  std::vector<Episode> tiny(eps.begin(), eps.begin() + 4);
  Rng rngt(1);
  REQUIRE_THROWS_AS(oilca::label_split(tiny, 0.2, 1.0, rngt),
                    oilca::InsufficientDataError);
}

TEST_CASE("expert-set size concentrates at its binomial expectation",
          "[datagen]") {
  // 3000 episodes, top 20% positives, each kept with p = 0.1:
  // E|D_E| = 60, sd = sqrt(600 * 0.1 * 0.9) ~ 7.35.
  std::vector<Episode> eps;
  for (int i = 0; i < 3000; ++i)
    eps.push_back(scored_episode(i, i % 3, 0.001 * i));
  Rng rng(2026);
  const auto ds = oilca::label_split(eps, 0.2, 0.1, rng);
  const double n = (double)ds.expert.size();
  REQUIRE(n >= 60.0 - 3.0 * 7.35);
  REQUIRE(n <= 60.0 + 3.0 * 7.35);
  // Every expert episode is a positive: return above the threshold row.
  for (const auto& e : ds.expert) REQUIRE(e.ret() >= 0.001 * 2400);
}

TEST_CASE("dataset files round-trip and have the declared size", "[datagen]") {
  std::vector<Episode> eps;
  eps.push_back(chained_episode(0, 0, 3, true));
  eps.push_back(chained_episode(1, 2, 2, true));
  eps.push_back(chained_episode(5, 1, 4, true));

  const std::string base = "dg_round";
  oilca::write_episode_file(base, eps, 3, "cafe0123", 42, 7);

  oilca::EpisodeFileHeader hdr;
  const auto back = oilca::read_episode_file(base, &hdr);
  REQUIRE(episodes_equal(eps, back));
  REQUIRE(hdr.n_classes == 3);
  REQUIRE(hdr.n_episodes == 3);
  REQUIRE(hdr.n_records == 9);
  REQUIRE(hdr.env_hash == "cafe0123");
  REQUIRE(hdr.master_seed == 42);
  REQUIRE(hdr.datagen_seed == 7);

  // size = header text + records x 65-byte stride.
  const std::string bytes = slurp(base + ".ds");
  const std::string header =
      "oilca-dataset v1\nstate_dim = 2\naction_dim = 2\nn_classes = 3\n"
      "n_episodes = 3\nn_records = 9\nenv_hash = cafe0123\nseeds = 42,7\n";
  REQUIRE(bytes.size() == header.size() + 9 * oilca::kRecordStride);
  REQUIRE(bytes.rfind(header, 0) == 0);
  REQUIRE(oilca::kRecordStride == 65);

  // The latent sidecar is 2 doubles per record.
  REQUIRE(slurp(base + ".latent").size() == 9 * 16);
  cleanup(base);

  // Augmented sentinel records (single step, NaN reward) survive IO.
  Episode aug = scored_episode(77, 1, std::nan(""));
  oilca::write_episode_file("dg_aug", {aug}, 3, "cafe0123", 42, 7);
  const auto aug_back = oilca::read_episode_file("dg_aug");
  REQUIRE(aug_back.size() == 1);
  REQUIRE(aug_back[0].is_augmented());
  cleanup("dg_aug");
}

TEST_CASE("malformed dataset files are rejected with specifics", "[datagen]") {
  std::vector<Episode> eps;
  eps.push_back(chained_episode(0, 0, 3, false));
  eps.push_back(chained_episode(1, 1, 2, false));
  const std::string base = "dg_bad";
  oilca::write_episode_file(base, eps, 2, "feed", 1, 2);
  const std::string good = slurp(base + ".ds");

  auto expect_format_error = [&](const std::string& bytes,
                                 const std::string& needle) {
    dump(base + ".ds", bytes);
    try {
      oilca::read_episode_file(base);
      FAIL("expected a FormatError");
    } catch (const oilca::FormatError& err) {
      REQUIRE(std::string(err.what()).find(needle) != std::string::npos);
    }
  };

  // Bad magic.
  {
    std::string b = good;
    b[0] = 'X';
    expect_format_error(b, "magic");
  }
  // Truncated mid-record: offset of the failure is named.
  expect_format_error(good.substr(0, good.size() - 10), "offset");
  // Trailing bytes after the declared records.
  expect_format_error(good + "zz", "trailing");
  // Corrupted record count (declares more than the file holds).
  {
    std::string b = good;
    const auto pos = b.find("n_records = 5");
    REQUIRE(pos != std::string::npos);
    b[pos + 12] = '6';
    expect_format_error(b, "truncated record");
  }
  // Understated record count → the rest looks like trailing garbage.
  {
    std::string b = good;
    const auto pos = b.find("n_records = 5");
    b[pos + 12] = '4';
    expect_format_error(b, "");
  }
  // Transition mismatch: overwrite record 1's s with a different value.
  {
    std::string b = good;
    std::ostringstream enc;
    oilca::num::write_f64_le(enc, 3.25);
    const std::string header_end = "seeds = 1,2\n";
    const std::size_t data0 = b.find(header_end) + header_end.size();
    const std::size_t off = data0 + 1 * oilca::kRecordStride + 9;
    b.replace(off, 8, enc.str());
    expect_format_error(b, "transition mismatch");
  }
  // Class out of range.
  {
    std::string b = good;
    const std::string header_end = "seeds = 1,2\n";
    const std::size_t data0 = b.find(header_end) + header_end.size();
    b[data0 + 8] = (char)9;  // class byte of record 0
    expect_format_error(b, "class out of range");
  }
  // Missing file → prerequisite error, not a format error.
  cleanup(base);
  REQUIRE_THROWS_AS(oilca::read_episode_file(base), oilca::PrerequisiteError);
}

TEST_CASE("split datasets round-trip through their manifest", "[datagen]") {
  const RunConfig cfg = oilca::parse_config_text("env.episode_len = 4\n");
  const EnvSpec spec = oilca::make_env_spec(cfg);
  const auto net = oilca::make_transition_net(spec);
  const auto policies = oilca::make_default_policies(cfg);
  const auto eps = oilca::collect(spec, net, policies, 10, 5, true);

  Rng rng(3);
  oilca::SplitDataset ds = oilca::label_split(eps, 0.2, 0.8, rng);
  ds.env_hash = oilca::env_spec_hash(cfg);
  ds.master_seed = 42;
  ds.datagen_seed = 5;
  ds.mixture = oilca::mixture_description(cfg);
  REQUIRE_FALSE(ds.expert.empty());

  const std::string prefix = "dg_split";
  oilca::save_split(ds, prefix);
  const auto back = oilca::load_split(prefix);
  REQUIRE(episodes_equal(ds.expert, back.expert));
  REQUIRE(episodes_equal(ds.unlabeled, back.unlabeled));
  REQUIRE(back.n_classes == ds.n_classes);
  REQUIRE(back.env_hash == ds.env_hash);
  REQUIRE(back.master_seed == 42);
  REQUIRE(back.datagen_seed == 5);
  REQUIRE(back.mixture == ds.mixture);
  REQUIRE(back.augmented_records == 0);
  REQUIRE(back.provenance.empty());

  // Tampered manifest counts are caught.
  {
    std::string m = slurp(prefix + ".split");
    const auto pos = m.find("n_expert_episodes = ");
    REQUIRE(pos != std::string::npos);
    m[pos + 20] = '9';
    dump(prefix + ".split", m);
    REQUIRE_THROWS_AS(oilca::load_split(prefix), oilca::FormatError);
  }
  cleanup(prefix + ".expert");
  cleanup(prefix + ".unlabeled");
  std::remove((prefix + ".split").c_str());
  std::remove((prefix + ".prov").c_str());
}
