#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "oilca/config.hpp"
#include "oilca/episode.hpp"
#include "oilca/num/mlp.hpp"
#include "oilca/num/rng.hpp"

namespace oilca {

// The toy causal MDP: class-conditioned exogenous Gaussians u|c, a frozen
// random MLP transition s_next = clip(net([s,a,u])), reward −‖s−target‖.
struct EnvSpec {
  int n_classes = 3;
  double alpha = 2.0;
  std::vector<int> gamma;                     // permutation of 0..C−1
  std::vector<std::array<double, 2>> sigma2;  // per class, drawn once
  double step_size = 0.5;
  Vec2 box_low{};
  Vec2 box_high{};
  Vec2 target{};
  int episode_len = 500;
  std::uint64_t transition_seed = 0;

  // Class mean: μ₁(c) = 0, μ₂(c) = α·γ(c).
  Vec2 mu(int c) const {
    require_class(c);
    return {0.0, alpha * static_cast<double>(gamma[c])};
  }

  void require_class(int c) const {
    if (c < 0 || c >= n_classes)
      throw CategoryError("class out of range: " + std::to_string(c));
  }
};

struct EnvState {
  Vec2 s{};
  int t = 0;
  int c = 0;
};

// σ²(c) is materialized once from the env seed (uniform over [0.25, 2.0],
// class-major then dim order) so datasets are reproducible from config.
inline EnvSpec make_env_spec(const RunConfig& cfg) {
  EnvSpec spec;
  spec.n_classes = cfg.env_n_classes;
  spec.alpha = cfg.env_alpha;
  spec.gamma = cfg.env_gamma;
  spec.step_size = cfg.env_step_size;
  spec.box_low = {cfg.env_box_low[0], cfg.env_box_low[1]};
  spec.box_high = {cfg.env_box_high[0], cfg.env_box_high[1]};
  spec.target = {cfg.env_target[0], cfg.env_target[1]};
  spec.episode_len = cfg.env_episode_len;
  num::Rng rng = num::substream(cfg.env_seed, "env-sigma2");
  spec.sigma2.resize(spec.n_classes);
  for (int c = 0; c < spec.n_classes; ++c)
    for (int k = 0; k < 2; ++k) spec.sigma2[c][k] = rng.uniform(0.25, 2.0);
  spec.transition_seed = num::derive_seed(cfg.env_seed, "env-transition");
  return spec;
}

// Frozen transition net: (s, a, u) ∈ ℝ⁶ → ℝ², softplus hidden layers.
inline num::Mlp make_transition_net(const EnvSpec& spec) {
  num::Rng rng(spec.transition_seed);
  return num::Mlp(6, {32, 32}, 2, num::Activation::Softplus,
                  num::Activation::Identity, rng);
}

// u | c ~ N(μ(c), diag σ²(c)).
inline Vec2 sample_exogenous(const EnvSpec& spec, int c, num::Rng& rng) {
  const Vec2 mu = spec.mu(c);
  Vec2 u;
  for (int k = 0; k < 2; ++k)
    u[k] = mu[k] + std::sqrt(spec.sigma2[c][k]) * rng.normal();
  return u;
}

inline Vec2 clip_to_box(const EnvSpec& spec, Vec2 s) {
  for (int k = 0; k < 2; ++k)
    s[k] = std::min(std::max(s[k], spec.box_low[k]), spec.box_high[k]);
  return s;
}

inline Vec2 env_step(const EnvSpec& spec, const num::Mlp& net, const Vec2& s,
                     const Vec2& a, const Vec2& u) {
  for (int k = 0; k < 2; ++k)
    if (!std::isfinite(s[k]) || !std::isfinite(a[k]) || !std::isfinite(u[k]))
      throw NumericError("env_step: non-finite input");
  const num::Tensor2 x =
      num::Tensor2::from_data(1, 6, {s[0], s[1], a[0], a[1], u[0], u[1]});
  const num::Tensor2 y = net.eval(x);
  return clip_to_box(spec, {y.at(0, 0), y.at(0, 1)});
}

inline double reward(const EnvSpec& spec, const Vec2& s) {
  return -std::hypot(s[0] - spec.target[0], s[1] - spec.target[1]);
}

inline EnvState reset(const EnvSpec& spec, int c, num::Rng& rng) {
  spec.require_class(c);
  EnvState st;
  for (int k = 0; k < 2; ++k)
    st.s[k] = rng.uniform(spec.box_low[k], spec.box_high[k]);
  st.t = 0;
  st.c = c;
  return st;
}

// An action chooser: state → action, drawing any randomness from rng.
using ActionFn = std::function<Vec2(const Vec2&, num::Rng&)>;

// Runs one episode. Per step: action, then a fresh exogenous draw, then the
// transition; r_t = reward(s_{t+1}). u is logged only when log_latents.
inline Episode rollout(const EnvSpec& spec, const num::Mlp& net,
                       const ActionFn& policy, int c, num::Rng& rng,
                       std::uint32_t episode_id = 0, bool log_latents = false) {
  EnvState st = reset(spec, c, rng);
  Episode ep;
  ep.id = episode_id;
  ep.c = c;
  ep.steps.reserve(spec.episode_len);
  for (int t = 0; t < spec.episode_len; ++t) {
    const Vec2 a = policy(st.s, rng);
    const Vec2 u = sample_exogenous(spec, c, rng);
    const Vec2 s_next = env_step(spec, net, st.s, a, u);
    StepRecord rec;
    rec.t = t;
    rec.s = st.s;
    rec.a = a;
    rec.s_next = s_next;
    rec.r = reward(spec, s_next);
    ep.steps.push_back(rec);
    if (log_latents) ep.latent_u.push_back(u);
    st.s = s_next;
    st.t = t + 1;
  }
  return ep;
}

// The four axis actions, fixed order (+x, −x, +y, −y).
inline std::array<Vec2, 4> axis_actions(double step_size) {
  return {Vec2{step_size, 0.0}, Vec2{-step_size, 0.0}, Vec2{0.0, step_size},
          Vec2{0.0, -step_size}};
}

// Greedy scripted action: one-step lookahead through the frozen net with
// u pinned to the class mean, choosing the axis action whose predicted
// next state is closest to the target. Deterministic given (s, c).
inline Vec2 greedy_action(const EnvSpec& spec, const num::Mlp& net,
                          const Vec2& s, int c) {
  const Vec2 u = spec.mu(c);
  const auto actions = axis_actions(spec.step_size);
  int best = 0;
  double best_d = 0.0;
  for (int i = 0; i < 4; ++i) {
    const Vec2 nxt = env_step(spec, net, s, actions[i], u);
    const double d =
        std::hypot(nxt[0] - spec.target[0], nxt[1] - spec.target[1]);
    if (i == 0 || d < best_d) {
      best = i;
      best_d = d;
    }
  }
  return actions[best];
}

}  // namespace oilca
