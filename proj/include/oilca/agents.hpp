#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "oilca/episode.hpp"
#include "oilca/num/adam.hpp"
#include "oilca/num/checkpoint.hpp"
#include "oilca/num/gaussian.hpp"
#include "oilca/num/graph.hpp"
#include "oilca/num/mlp.hpp"
#include "oilca/num/rng.hpp"

namespace oilca {

// Learned policy log-std stays in this window.
inline constexpr double kLogStdLo = -5.0;
inline constexpr double kLogStdHi = 2.0;

// Diagonal-Gaussian policy: an MLP mean head over the state plus one
// state-independent learned log-std per action dimension.
struct GaussPolicy {
  num::Mlp net;           // s (2) -> mean action (2)
  num::Tensor2 log_std;   // 1 x 2

  double clamped_log_std(int k) const {
    return std::min(std::max(log_std.at(0, k), kLogStdLo), kLogStdHi);
  }

  std::vector<num::Tensor2*> params() {
    std::vector<num::Tensor2*> p = net.params();
    p.push_back(&log_std);
    return p;
  }

  std::uint64_t param_checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const num::Tensor2* t : net.params())
      h = num::splitmix64(h ^ t->content_hash());
    return num::splitmix64(h ^ log_std.content_hash());
  }
};

inline GaussPolicy make_policy(int width, int depth, num::Rng& rng) {
  GaussPolicy p;
  const std::vector<int> hidden(static_cast<std::size_t>(depth), width);
  p.net = num::Mlp(2, hidden, 2, num::Activation::Tanh,
                   num::Activation::Identity, rng);
  p.log_std = num::Tensor2(1, 2);
  return p;
}

inline num::Tensor2 policy_mean_batch(const GaussPolicy& p,
                                      const num::Tensor2& s) {
  return p.net.eval(s);
}

inline Vec2 policy_mean(const GaussPolicy& p, const Vec2& s) {
  const num::Tensor2 m =
      p.net.eval(num::Tensor2::from_data(1, 2, {s[0], s[1]}));
  return {m.at(0, 0), m.at(0, 1)};
}

inline Vec2 policy_sample(const GaussPolicy& p, const Vec2& s,
                          num::Rng& rng) {
  const Vec2 mu = policy_mean(p, s);
  Vec2 a;
  for (int k = 0; k < 2; ++k)
    a[k] = mu[k] + std::exp(p.clamped_log_std(k)) * rng.normal();
  return a;
}

// log π(a | s) for every row, using logvar = 2·log_std.
inline num::Tensor2 log_prob_batch(const GaussPolicy& p,
                                   const num::Tensor2& s,
                                   const num::Tensor2& a) {
  if (s.rows() != a.rows())
    throw DimensionError("log_prob: batch row counts disagree");
  const num::Tensor2 mean = p.net.eval(s);
  num::Tensor2 lv(s.rows(), 2);
  for (int i = 0; i < s.rows(); ++i)
    for (int k = 0; k < 2; ++k) lv.at(i, k) = 2.0 * p.clamped_log_std(k);
  return num::gaussian_logpdf(a, mean, lv);
}

inline double log_prob(const GaussPolicy& p, const Vec2& s, const Vec2& a) {
  const num::Tensor2 st = num::Tensor2::from_data(1, 2, {s[0], s[1]});
  const num::Tensor2 at = num::Tensor2::from_data(1, 2, {a[0], a[1]});
  return log_prob_batch(p, st, at).at(0, 0);
}

// Tape fragment: forward the policy and produce the per-row log π node.
struct PolicyTape {
  num::Mlp::TapeRef net;
  num::Graph::NodeId log_std = -1;
  num::Graph::NodeId logp = -1;  // n x 1
};

inline PolicyTape policy_logp_node(num::Graph& g, const GaussPolicy& p,
                                   num::Graph::NodeId s,
                                   num::Graph::NodeId a,
                                   bool trainable = true) {
  PolicyTape t;
  t.net = p.net.forward(g, s, trainable);
  t.log_std = g.leaf(p.log_std, trainable);
  const auto lv = g.repeat_rows(
      g.scale(g.clamp(t.log_std, kLogStdLo, kLogStdHi), 2.0),
      g.value(s).rows());
  t.logp = num::gaussian_logpdf_node(g, a, t.net.out, lv);
  return t;
}

// Discriminator over (s, a, log π): sigmoid logit clipped into
// [d_min, d_max], so every downstream division is bounded.
struct Discriminator {
  num::Mlp net;  // 5 -> 1
  double d_min = 0.1;
  double d_max = 0.9;

  std::uint64_t param_checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const num::Tensor2* t : net.params())
      h = num::splitmix64(h ^ t->content_hash());
    return h;
  }
};

inline Discriminator make_disc(int width, int depth, double d_min,
                               double d_max, num::Rng& rng) {
  if (!(0.0 < d_min && d_min < d_max && d_max < 1.0))
    throw ConfigError("disc: need 0 < d_min < d_max < 1");
  Discriminator d;
  const std::vector<int> hidden(static_cast<std::size_t>(depth), width);
  d.net = num::Mlp(5, hidden, 1, num::Activation::Tanh,
                   num::Activation::Identity, rng);
  d.d_min = d_min;
  d.d_max = d_max;
  return d;
}

// Clipped d for every row of (s, a, logp) — value path.
inline num::Tensor2 disc_output(const Discriminator& d, const num::Tensor2& s,
                                const num::Tensor2& a,
                                const num::Tensor2& logp) {
  if (s.rows() != a.rows() || s.rows() != logp.rows() || logp.cols() != 1)
    throw DimensionError("disc: bad batch shapes");
  num::Tensor2 x(s.rows(), 5);
  for (int i = 0; i < s.rows(); ++i) {
    x.at(i, 0) = s.at(i, 0);
    x.at(i, 1) = s.at(i, 1);
    x.at(i, 2) = a.at(i, 0);
    x.at(i, 3) = a.at(i, 1);
    x.at(i, 4) = logp.at(i, 0);
  }
  num::Tensor2 out = d.net.eval(x);
  for (double& v : out.data()) {
    const double sig = 1.0 / (1.0 + std::exp(-v));
    v = std::min(std::max(sig, d.d_min), d.d_max);
  }
  return out;
}

// ---------------------------------------------------------------------------
// The discriminator objective:
//   η·E_E[−log d] + E_U[−log(1−d′)] − η·E_E[−log(1−d)]
// log π enters as a fixed feature (the policy is frozen inside this loss).

struct DiscLossGraph {
  num::Graph g;
  num::Mlp::TapeRef e_tape, u_tape;
  num::Graph::NodeId loss = -1;
};

inline DiscLossGraph build_disc_loss_graph(
    const Discriminator& d, const num::Tensor2& se, const num::Tensor2& ae,
    const num::Tensor2& lpe, const num::Tensor2& su, const num::Tensor2& au,
    const num::Tensor2& lpu, double eta) {
  if (se.rows() == 0 || su.rows() == 0)
    throw ContractError("disc_loss: empty batch");
  DiscLossGraph out;
  num::Graph& g = out.g;
  auto stack = [&](const num::Tensor2& s, const num::Tensor2& a,
                   const num::Tensor2& lp) {
    return g.concat_cols(
        g.concat_cols(g.constant(s), g.constant(a)), g.constant(lp));
  };
  auto clipped_d = [&](num::Mlp::TapeRef& tape, num::Graph::NodeId x) {
    tape = d.net.forward(g, x);
    return g.clamp(g.sigmoid_(tape.out), d.d_min, d.d_max);
  };
  const auto de = clipped_d(out.e_tape, stack(se, ae, lpe));
  const auto du = clipped_d(out.u_tape, stack(su, au, lpu));

  // −log d on experts, −log(1−d) on both populations.
  const auto one_minus = [&](num::Graph::NodeId x) {
    return g.add_scalar(g.scale(x, -1.0), 1.0);
  };
  const auto term_e = g.mean_all(g.scale(g.log_(de), -1.0));
  const auto term_u = g.mean_all(g.scale(g.log_(one_minus(du)), -1.0));
  const auto term_e_neg = g.mean_all(g.scale(g.log_(one_minus(de)), -1.0));
  out.loss = g.add(g.scale(term_e, eta),
                   g.sub(term_u, g.scale(term_e_neg, eta)));
  return out;
}

inline double disc_loss(const Discriminator& d, const GaussPolicy& p,
                        const num::Tensor2& se, const num::Tensor2& ae,
                        const num::Tensor2& su, const num::Tensor2& au,
                        double eta) {
  const num::Tensor2 lpe = log_prob_batch(p, se, ae);
  const num::Tensor2 lpu = log_prob_batch(p, su, au);
  const auto graph = build_disc_loss_graph(d, se, ae, lpe, su, au, lpu, eta);
  return graph.g.value(graph.loss).at(0, 0);
}

// ---------------------------------------------------------------------------
// The policy objective:
//   α·E_E[−log π] − E_E[−log π · η/(d(1−d))] + E_U[−log π · 1/(1−d)]
// with d clipped and detached (the discriminator is frozen inside this loss).

struct PolicyLossGraph {
  num::Graph g;
  PolicyTape e_tape, u_tape;
  num::Graph::NodeId loss = -1;
};

inline PolicyLossGraph build_policy_loss_graph(
    const GaussPolicy& p, const num::Tensor2& se, const num::Tensor2& ae,
    const num::Tensor2& de, const num::Tensor2& su, const num::Tensor2& au,
    const num::Tensor2& du, double eta, double alpha) {
  if (se.rows() == 0 || su.rows() == 0)
    throw ContractError("policy_loss: empty batch");
  if (de.rows() != se.rows() || du.rows() != su.rows() || de.cols() != 1 ||
      du.cols() != 1)
    throw DimensionError("policy_loss: d column shapes disagree");
  // Internal invariant: clipping upstream keeps every weight finite.
  for (const double v : de.data())
    if (!(v > 0.0 && v < 1.0))
      throw ContractError("policy_loss: expert d escaped (0,1)");
  for (const double v : du.data())
    if (!(v > 0.0 && v < 1.0))
      throw ContractError("policy_loss: unlabeled d escaped (0,1)");

  PolicyLossGraph out;
  num::Graph& g = out.g;

  num::Tensor2 w_e(de.rows(), 1), w_u(du.rows(), 1);
  for (int i = 0; i < de.rows(); ++i)
    w_e.at(i, 0) = eta / (de.at(i, 0) * (1.0 - de.at(i, 0)));
  for (int i = 0; i < du.rows(); ++i)
    w_u.at(i, 0) = 1.0 / (1.0 - du.at(i, 0));

  out.e_tape = policy_logp_node(g, p, g.constant(se), g.constant(ae));
  out.u_tape = policy_logp_node(g, p, g.constant(su), g.constant(au));
  const auto nll_e = g.scale(out.e_tape.logp, -1.0);
  const auto nll_u = g.scale(out.u_tape.logp, -1.0);

  const auto term_bc = g.scale(g.mean_all(nll_e), alpha);
  const auto term_corr = g.mean_all(g.mul(nll_e, g.constant(w_e)));
  const auto term_u = g.mean_all(g.mul(nll_u, g.constant(w_u)));
  out.loss = g.add(g.sub(term_bc, term_corr), term_u);
  return out;
}

inline double policy_loss(const GaussPolicy& p, const Discriminator& d,
                          const num::Tensor2& se, const num::Tensor2& ae,
                          const num::Tensor2& su, const num::Tensor2& au,
                          double eta, double alpha) {
  const num::Tensor2 de =
      disc_output(d, se, ae, log_prob_batch(p, se, ae));
  const num::Tensor2 du =
      disc_output(d, su, au, log_prob_batch(p, su, au));
  const auto graph =
      build_policy_loss_graph(p, se, ae, de, su, au, du, eta, alpha);
  return graph.g.value(graph.loss).at(0, 0);
}

// ---------------------------------------------------------------------------
// Training loops.

struct DwbcConfig {
  double eta = 0.5;
  double alpha = 2.0;
  double d_min = 0.1;
  double d_max = 0.9;
  int disc_period = 100;
  int policy_period = 1;
  double lr_disc = 1e-3;
  double lr_policy = 1e-3;
  int total_steps = 3000;
  int batch_size = 256;
  int policy_width = 64;
  int policy_depth = 2;
  int disc_width = 64;
  int disc_depth = 2;
};

struct CurvePoint {
  int step = 0;          // 1-based training step (or epoch for BC)
  double loss = 0.0;
  const char* component = "";
};

inline void write_curves_csv(const std::string& path,
                             const std::vector<CurvePoint>& rows) {
  std::ofstream os(path);
  if (!os) throw PrerequisiteError("cannot write curve file: " + path);
  os << "step,loss,component\n";
  char buf[64];
  for (const CurvePoint& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g", r.loss);
    os << r.step << "," << buf << "," << r.component << "\n";
  }
}

struct DwbcResult {
  GaussPolicy policy;
  Discriminator disc;
  std::vector<CurvePoint> curves;
  int disc_updates = 0;
  int policy_updates = 0;
};

namespace agents_detail {

inline void take_rows(const FlatData& d, const std::vector<int>& idx,
                      num::Tensor2& s, num::Tensor2& a) {
  const int n = static_cast<int>(idx.size());
  s = num::Tensor2(n, 2);
  a = num::Tensor2(n, 2);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < 2; ++k) {
      s.at(i, k) = d.s.at(idx[i], k);
      a.at(i, k) = d.a.at(idx[i], k);
    }
}

inline std::vector<int> draw_indices(int n_total, int batch, num::Rng& rng) {
  std::vector<int> idx(batch);
  for (int i = 0; i < batch; ++i)
    idx[i] = static_cast<int>(rng.uniform_index(n_total));
  return idx;
}

}  // namespace agents_detail

// Alternating DWBC: the discriminator trains every disc_period steps, the
// policy every policy_period steps, each on fresh minibatches. The two
// objectives never push gradients into each other's parameters.
inline DwbcResult train_dwbc(const FlatData& expert, const FlatData& unlabeled,
                             const DwbcConfig& cfg, num::Rng& rng) {
  if (expert.n() == 0 || unlabeled.n() == 0)
    throw InsufficientDataError("train_dwbc: empty dataset");
  if (cfg.total_steps < 1 || cfg.batch_size < 1 || cfg.disc_period < 1 ||
      cfg.policy_period < 1 || cfg.lr_disc <= 0 || cfg.lr_policy <= 0)
    throw ConfigError("train_dwbc: bad hyperparameters");
  if (!(cfg.alpha > 1.0)) throw ConfigError("train_dwbc: alpha must be > 1");
  if (!(cfg.eta > 0.0 && cfg.eta < 1.0))
    throw ConfigError("train_dwbc: eta must be in (0,1)");

  DwbcResult res;
  res.policy = make_policy(cfg.policy_width, cfg.policy_depth, rng);
  res.disc = make_disc(cfg.disc_width, cfg.disc_depth, cfg.d_min, cfg.d_max,
                       rng);

  num::Adam opt_policy(res.policy.params(), cfg.lr_policy);
  num::Adam opt_disc(res.disc.net.params(), cfg.lr_disc);

  std::vector<num::Tensor2> grads;
  num::Tensor2 se, ae, su, au;
  for (int step = 1; step <= cfg.total_steps; ++step) {
    if (step % cfg.disc_period == 0) {
      agents_detail::take_rows(
          expert, agents_detail::draw_indices(expert.n(), cfg.batch_size, rng),
          se, ae);
      agents_detail::take_rows(
          unlabeled,
          agents_detail::draw_indices(unlabeled.n(), cfg.batch_size, rng), su,
          au);
      const num::Tensor2 lpe = log_prob_batch(res.policy, se, ae);
      const num::Tensor2 lpu = log_prob_batch(res.policy, su, au);
      DiscLossGraph dg =
          build_disc_loss_graph(res.disc, se, ae, lpe, su, au, lpu, cfg.eta);
      const double loss = dg.g.value(dg.loss).at(0, 0);
      if (!std::isfinite(loss))
        throw TrainingDiverged("train_dwbc: non-finite disc loss at step " +
                               std::to_string(step));
      dg.g.backward(dg.loss);
      grads.clear();
      num::Mlp::collect_grads(dg.g, dg.e_tape, grads);
      std::vector<num::Tensor2> u_grads;
      num::Mlp::collect_grads(dg.g, dg.u_tape, u_grads);
      for (std::size_t i = 0; i < grads.size(); ++i)
        for (std::size_t j = 0; j < grads[i].data().size(); ++j)
          grads[i].data()[j] += u_grads[i].data()[j];
      opt_disc.step(grads);
      res.curves.push_back({step, loss, "disc"});
      ++res.disc_updates;
    }
    if (step % cfg.policy_period == 0) {
      agents_detail::take_rows(
          expert, agents_detail::draw_indices(expert.n(), cfg.batch_size, rng),
          se, ae);
      agents_detail::take_rows(
          unlabeled,
          agents_detail::draw_indices(unlabeled.n(), cfg.batch_size, rng), su,
          au);
      const num::Tensor2 de =
          disc_output(res.disc, se, ae, log_prob_batch(res.policy, se, ae));
      const num::Tensor2 du =
          disc_output(res.disc, su, au, log_prob_batch(res.policy, su, au));
      PolicyLossGraph pg = build_policy_loss_graph(res.policy, se, ae, de, su,
                                                   au, du, cfg.eta, cfg.alpha);
      const double loss = pg.g.value(pg.loss).at(0, 0);
      if (!std::isfinite(loss))
        throw TrainingDiverged("train_dwbc: non-finite policy loss at step " +
                               std::to_string(step));
      pg.g.backward(pg.loss);
      grads.clear();
      num::Mlp::collect_grads(pg.g, pg.e_tape.net, grads);
      std::vector<num::Tensor2> u_grads;
      num::Mlp::collect_grads(pg.g, pg.u_tape.net, u_grads);
      for (std::size_t i = 0; i < grads.size(); ++i)
        for (std::size_t j = 0; j < grads[i].data().size(); ++j)
          grads[i].data()[j] += u_grads[i].data()[j];
      num::Tensor2 ls_grad = pg.g.grad(pg.e_tape.log_std);
      const num::Tensor2& ls_grad_u = pg.g.grad(pg.u_tape.log_std);
      for (std::size_t j = 0; j < ls_grad.data().size(); ++j)
        ls_grad.data()[j] += ls_grad_u.data()[j];
      grads.push_back(std::move(ls_grad));
      opt_policy.step(grads);
      res.curves.push_back({step, loss, "policy"});
      ++res.policy_updates;
    }
  }
  return res;
}

struct BcResult {
  GaussPolicy policy;
  std::vector<CurvePoint> curves;  // mean NLL per epoch
};

// Plain maximum-likelihood behavioral cloning.
inline BcResult train_bc(const FlatData& data, int width, int depth,
                         int epochs, int batch_size, double lr,
                         num::Rng& rng) {
  if (data.n() == 0) throw InsufficientDataError("train_bc: empty dataset");
  if (epochs < 1 || batch_size < 1 || lr <= 0)
    throw ConfigError("train_bc: bad hyperparameters");

  BcResult res;
  res.policy = make_policy(width, depth, rng);
  num::Adam opt(res.policy.params(), lr);

  const int n = data.n();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<num::Tensor2> grads;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(order);
    double nll_sum = 0.0;
    for (int start = 0; start < n; start += batch_size) {
      const int bs = std::min(batch_size, n - start);
      num::Tensor2 s(bs, 2), a(bs, 2);
      for (int i = 0; i < bs; ++i)
        for (int k = 0; k < 2; ++k) {
          s.at(i, k) = data.s.at(order[start + i], k);
          a.at(i, k) = data.a.at(order[start + i], k);
        }
      num::Graph g;
      PolicyTape t =
          policy_logp_node(g, res.policy, g.constant(s), g.constant(a));
      const auto loss = g.scale(g.mean_all(t.logp), -1.0);
      const double val = g.value(loss).at(0, 0);
      if (!std::isfinite(val))
        throw TrainingDiverged("train_bc: non-finite loss at epoch " +
                               std::to_string(epoch));
      g.backward(loss);
      grads.clear();
      num::Mlp::collect_grads(g, t.net, grads);
      grads.push_back(g.grad(t.log_std));
      opt.step(grads);
      nll_sum += val * bs;
    }
    res.curves.push_back(
        {epoch + 1, nll_sum / n, "bc"});
  }
  return res;
}

// ---------------------------------------------------------------------------
// Checkpoints (kinds "policy" and "disc").

inline void save_policy(const GaussPolicy& p, const std::string& path,
                        std::uint64_t seed, std::int64_t steps) {
  num::Checkpoint ck;
  ck.kind = "policy";
  ck.seed = seed;
  ck.steps = steps;
  num::put_mlp(ck, "net", p.net);
  ck.add_tensor("log_std", p.log_std);
  ck.save(path);
}

inline GaussPolicy load_policy(const std::string& path) {
  const num::Checkpoint ck = num::Checkpoint::load(path);
  if (ck.kind != "policy")
    throw FormatError(path + ": expected a policy checkpoint, got kind '" +
                      ck.kind + "'");
  GaussPolicy p;
  p.net = num::get_mlp(ck, "net");
  p.log_std = ck.tensor("log_std");
  if (p.net.in_dim() != 2 || p.net.out_dim() != 2)
    throw FormatError(path + ": policy net must map 2 -> 2");
  if (p.log_std.rows() != 1 || p.log_std.cols() != 2)
    throw FormatError(path + ": log_std must be 1 x 2");
  return p;
}

inline void save_disc(const Discriminator& d, const std::string& path,
                      std::uint64_t seed, std::int64_t steps) {
  num::Checkpoint ck;
  ck.kind = "disc";
  ck.seed = seed;
  ck.steps = steps;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", d.d_min);
  ck.set_meta("d_min", buf);
  std::snprintf(buf, sizeof buf, "%.17g", d.d_max);
  ck.set_meta("d_max", buf);
  num::put_mlp(ck, "net", d.net);
  ck.save(path);
}

inline Discriminator load_disc(const std::string& path) {
  const num::Checkpoint ck = num::Checkpoint::load(path);
  if (ck.kind != "disc")
    throw FormatError(path + ": expected a disc checkpoint, got kind '" +
                      ck.kind + "'");
  Discriminator d;
  d.net = num::get_mlp(ck, "net");
  d.d_min = std::strtod(ck.meta_at("d_min").c_str(), nullptr);
  d.d_max = std::strtod(ck.meta_at("d_max").c_str(), nullptr);
  if (d.net.in_dim() != 5 || d.net.out_dim() != 1)
    throw FormatError(path + ": disc net must map 5 -> 1");
  if (!(0.0 < d.d_min && d.d_min < d.d_max && d.d_max < 1.0))
    throw FormatError(path + ": bad d-clip range");
  return d;
}

}  // namespace oilca
