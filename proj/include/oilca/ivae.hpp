#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
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

// Learned logvars are clamped to this range before exponentiation.
inline constexpr double kLogvarLo = -10.0;
inline constexpr double kLogvarHi = 10.0;

// Conditional VAE over transition tuples: encoder q(u | s, a, s_next, c),
// additive-noise decoder s_next = f(s, a, u) + ε, and a per-class
// factorized-Gaussian prior table. The `conditional` flag is the ablation
// switch: when off, the encoder drops its one-hot input and a single shared
// prior row stands in for every class.
struct CvaeModel {
  int d_u = 2;
  int n_classes = 0;
  bool conditional = true;

  num::Mlp encoder;             // [s|a|s_next|onehot(c)] -> [mu_q|logvar_q]
  num::Mlp decoder;             // [s|a|u] -> mu_x
  num::Tensor2 dec_logvar_eps;  // 1 x 2, learned observation-noise logvar
  num::Tensor2 prior_mu;        // rows x d_u (rows = C, or 1 when ablated)
  num::Tensor2 prior_logvar;    // rows x d_u
  std::vector<double> log_pc;   // frozen empirical class log-frequencies

  int encoder_in() const { return 6 + (conditional ? n_classes : 0); }
  int prior_rows() const { return conditional ? n_classes : 1; }
  int prior_row_for(int c) const { return conditional ? c : 0; }

  void require_class(int c) const {
    if (c < 0 || c >= n_classes)
      throw CategoryError("cvae: class out of range: " + std::to_string(c));
  }

  std::vector<num::Tensor2*> params() {
    std::vector<num::Tensor2*> p = encoder.params();
    for (num::Tensor2* t : decoder.params()) p.push_back(t);
    p.push_back(&dec_logvar_eps);
    p.push_back(&prior_mu);
    p.push_back(&prior_logvar);
    return p;
  }

  std::uint64_t param_checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](const num::Tensor2& t) {
      h = num::splitmix64(h ^ t.content_hash());
    };
    for (const num::Tensor2* t : encoder.params()) mix(*t);
    for (const num::Tensor2* t : decoder.params()) mix(*t);
    mix(dec_logvar_eps);
    mix(prior_mu);
    mix(prior_logvar);
    return h;
  }
};

inline CvaeModel make_cvae(int d_u, int width, int depth, int n_classes,
                           bool conditional, num::Rng& rng) {
  if (d_u < 1 || d_u > 4)
    throw ConfigError("cvae: d_u must be in 1..4");
  if (n_classes < 1) throw ConfigError("cvae: n_classes must be >= 1");
  CvaeModel m;
  m.d_u = d_u;
  m.n_classes = n_classes;
  m.conditional = conditional;
  const std::vector<int> hidden(static_cast<std::size_t>(depth), width);
  m.encoder = num::Mlp(m.encoder_in(), hidden, 2 * d_u, num::Activation::Tanh,
                       num::Activation::Identity, rng);
  m.decoder = num::Mlp(4 + d_u, hidden, 2, num::Activation::Tanh,
                       num::Activation::Identity, rng);
  m.dec_logvar_eps = num::Tensor2::filled(1, 2, std::log(0.01));
  m.prior_mu = num::Tensor2(m.prior_rows(), d_u);
  m.prior_logvar = num::Tensor2(m.prior_rows(), d_u);
  m.log_pc.assign(n_classes, -std::log(static_cast<double>(n_classes)));
  return m;
}

namespace ivae_detail {

inline num::Tensor2 one_hot(const std::vector<int>& cls, int n_classes) {
  num::Tensor2 oh(static_cast<int>(cls.size()), n_classes);
  for (std::size_t i = 0; i < cls.size(); ++i)
    oh.at(static_cast<int>(i), cls[i]) = 1.0;
  return oh;
}

inline num::Tensor2 hstack(const std::vector<const num::Tensor2*>& parts) {
  const int n = parts.front()->rows();
  int cols = 0;
  for (const num::Tensor2* p : parts) cols += p->cols();
  num::Tensor2 out(n, cols);
  int at = 0;
  for (const num::Tensor2* p : parts) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < p->cols(); ++j) out.at(i, at + j) = p->at(i, j);
    at += p->cols();
  }
  return out;
}

inline double clamp_lv(double v) {
  return std::min(std::max(v, kLogvarLo), kLogvarHi);
}

inline int meta_int(const num::Checkpoint& ck, const std::string& key) {
  const std::string v = ck.meta_at(key);
  const char* begin = v.c_str();
  char* end = nullptr;
  const long long x = std::strtoll(begin, &end, 10);
  if (end == begin || *end != '\0')
    throw FormatError("checkpoint meta " + key + ": bad integer '" + v + "'");
  return static_cast<int>(x);
}

}  // namespace ivae_detail

// Batched posterior parameters (values only, clamp applied to logvar).
inline std::pair<num::Tensor2, num::Tensor2> encode_batch(
    const CvaeModel& m, const num::Tensor2& s, const num::Tensor2& a,
    const num::Tensor2& s_next, const std::vector<int>& cls) {
  if (s.rows() != a.rows() || s.rows() != s_next.rows() ||
      s.rows() != static_cast<int>(cls.size()))
    throw DimensionError("encode: batch row counts disagree");
  for (int c : cls) m.require_class(c);
  num::Tensor2 x;
  if (m.conditional) {
    const num::Tensor2 oh = ivae_detail::one_hot(cls, m.n_classes);
    x = ivae_detail::hstack({&s, &a, &s_next, &oh});
  } else {
    x = ivae_detail::hstack({&s, &a, &s_next});
  }
  const num::Tensor2 out = m.encoder.eval(x);
  num::Tensor2 mu(out.rows(), m.d_u), lv(out.rows(), m.d_u);
  for (int i = 0; i < out.rows(); ++i)
    for (int k = 0; k < m.d_u; ++k) {
      mu.at(i, k) = out.at(i, k);
      lv.at(i, k) = ivae_detail::clamp_lv(out.at(i, m.d_u + k));
    }
  return {std::move(mu), std::move(lv)};
}

inline std::pair<num::Tensor2, num::Tensor2> encode(
    const CvaeModel& m, const Vec2& s, const Vec2& a, const Vec2& s_next,
    int c) {
  const num::Tensor2 st = num::Tensor2::from_data(1, 2, {s[0], s[1]});
  const num::Tensor2 at = num::Tensor2::from_data(1, 2, {a[0], a[1]});
  const num::Tensor2 nt =
      num::Tensor2::from_data(1, 2, {s_next[0], s_next[1]});
  return encode_batch(m, st, at, nt, {c});
}

// Decoder mean plus the shared observation-noise logvar (clamped).
inline std::pair<num::Tensor2, num::Tensor2> decode_batch(
    const CvaeModel& m, const num::Tensor2& s, const num::Tensor2& a,
    const num::Tensor2& u) {
  if (s.rows() != a.rows() || s.rows() != u.rows())
    throw DimensionError("decode: batch row counts disagree");
  if (u.cols() != m.d_u) throw DimensionError("decode: latent dim mismatch");
  const num::Tensor2 x = ivae_detail::hstack({&s, &a, &u});
  num::Tensor2 mu = m.decoder.eval(x);
  num::Tensor2 lv(1, 2);
  for (int k = 0; k < 2; ++k)
    lv.at(0, k) = ivae_detail::clamp_lv(m.dec_logvar_eps.at(0, k));
  return {std::move(mu), std::move(lv)};
}

inline std::pair<num::Tensor2, num::Tensor2> decode(const CvaeModel& m,
                                                    const Vec2& s,
                                                    const Vec2& a,
                                                    const num::Tensor2& u) {
  const num::Tensor2 st = num::Tensor2::from_data(1, 2, {s[0], s[1]});
  const num::Tensor2 at = num::Tensor2::from_data(1, 2, {a[0], a[1]});
  return decode_batch(m, st, at, u);
}

struct ElboBreakdown {
  double recon = 0.0;  // E_q[log p(s_next | s, a, u)], batch mean
  double logpc = 0.0;  // log p̂(c), batch mean
  double kl = 0.0;     // D_KL(q ‖ p(u|c)), batch mean
  double total = 0.0;  // always recon + logpc − kl, same arithmetic
};

// The ELBO tape for one batch, with handles to everything train/test code
// needs: the trained objective is `loss` = −(recon − kl); logpc is constant
// in the parameters and only enters the reported breakdown.
struct ElboGraph {
  num::Graph g;
  num::Mlp::TapeRef enc;
  num::Mlp::TapeRef dec;
  num::Graph::NodeId dec_lv = -1;
  num::Graph::NodeId prior_mu = -1;
  num::Graph::NodeId prior_lv = -1;
  num::Graph::NodeId recon = -1;  // scalar node, batch mean
  num::Graph::NodeId kl = -1;     // scalar node, batch mean
  num::Graph::NodeId loss = -1;   // scalar node, −(recon − kl)
  double logpc = 0.0;

  ElboBreakdown breakdown() const {
    ElboBreakdown b;
    b.recon = g.value(recon).at(0, 0);
    b.kl = g.value(kl).at(0, 0);
    b.logpc = logpc;
    b.total = b.recon + b.logpc - b.kl;
    return b;
  }
};

// Builds the reparameterized single-sample ELBO with fixed noise `xi`
// (n x d_u). Deterministic given (model, batch, xi) so finite differences
// can probe the very same function the tape differentiates.
inline ElboGraph build_elbo_graph(const CvaeModel& m, const num::Tensor2& s,
                                  const num::Tensor2& a,
                                  const num::Tensor2& s_next,
                                  const std::vector<int>& cls,
                                  const num::Tensor2& xi) {
  const int n = s.rows();
  if (n == 0) throw ContractError("elbo: empty batch");
  if (a.rows() != n || s_next.rows() != n ||
      static_cast<int>(cls.size()) != n)
    throw DimensionError("elbo: batch row counts disagree");
  if (xi.rows() != n || xi.cols() != m.d_u)
    throw DimensionError("elbo: xi must be n x d_u");
  for (int c : cls) m.require_class(c);

  ElboGraph eg;
  num::Graph& g = eg.g;
  const auto s_id = g.constant(s);
  const auto a_id = g.constant(a);
  const auto next_id = g.constant(s_next);

  // Encoder: posterior parameters with the logvar clamp.
  num::Graph::NodeId enc_in;
  if (m.conditional) {
    const auto oh = g.constant(ivae_detail::one_hot(cls, m.n_classes));
    enc_in = g.concat_cols(g.concat_cols(s_id, a_id),
                           g.concat_cols(next_id, oh));
  } else {
    enc_in = g.concat_cols(g.concat_cols(s_id, a_id), next_id);
  }
  eg.enc = m.encoder.forward(g, enc_in);
  const auto mu_q = g.slice_cols(eg.enc.out, 0, m.d_u);
  const auto lv_q =
      g.clamp(g.slice_cols(eg.enc.out, m.d_u, m.d_u), kLogvarLo, kLogvarHi);

  // One reparameterized sample per datum.
  const auto u = num::reparam_node(g, mu_q, lv_q, g.constant(xi));

  // Decoder: Gaussian likelihood of the observed next state.
  eg.dec = m.decoder.forward(g, g.concat_cols(g.concat_cols(s_id, a_id), u));
  eg.dec_lv = g.leaf(m.dec_logvar_eps, true);
  const auto dec_lv_row =
      g.repeat_rows(g.clamp(eg.dec_lv, kLogvarLo, kLogvarHi), n);
  const auto recon_rows =
      num::gaussian_logpdf_node(g, next_id, eg.dec.out, dec_lv_row);

  // Prior rows gathered per class (row 0 for everyone when ablated).
  std::vector<int> rows(cls.size());
  for (std::size_t i = 0; i < cls.size(); ++i)
    rows[i] = m.prior_row_for(cls[i]);
  eg.prior_mu = g.leaf(m.prior_mu, true);
  eg.prior_lv = g.leaf(m.prior_logvar, true);
  const auto p_mu = g.gather_rows(eg.prior_mu, rows);
  const auto p_lv =
      g.clamp(g.gather_rows(eg.prior_lv, rows), kLogvarLo, kLogvarHi);
  const auto kl_rows = num::kl_diag_gaussians_node(g, mu_q, lv_q, p_mu, p_lv);

  eg.recon = g.mean_all(recon_rows);
  eg.kl = g.mean_all(kl_rows);
  eg.loss = g.scale(g.sub(eg.recon, eg.kl), -1.0);

  double logpc = 0.0;
  for (int c : cls) logpc += m.log_pc[c];
  eg.logpc = logpc / n;
  return eg;
}

// Single-sample ELBO estimate; the reparameterization noise comes from rng.
inline ElboBreakdown elbo(const CvaeModel& m, const num::Tensor2& s,
                          const num::Tensor2& a, const num::Tensor2& s_next,
                          const std::vector<int>& cls, num::Rng& rng) {
  if (s.rows() == 0) throw ContractError("elbo: empty batch");
  const num::Tensor2 xi = num::Tensor2::randn(s.rows(), m.d_u, rng);
  return build_elbo_graph(m, s, a, s_next, cls, xi).breakdown();
}

inline ElboBreakdown elbo(const CvaeModel& m, const FlatData& d,
                          num::Rng& rng) {
  return elbo(m, d.s, d.a, d.s_next, d.cls, rng);
}

// Draws ũ ~ q(u | s, a, s_next, c), one row per record.
inline num::Tensor2 posterior_sample_batch(const CvaeModel& m,
                                           const num::Tensor2& s,
                                           const num::Tensor2& a,
                                           const num::Tensor2& s_next,
                                           const std::vector<int>& cls,
                                           num::Rng& rng) {
  const auto [mu, lv] = encode_batch(m, s, a, s_next, cls);
  return num::reparam_sample(mu, lv, rng);
}

inline num::Tensor2 posterior_sample(const CvaeModel& m, const Vec2& s,
                                     const Vec2& a, const Vec2& s_next, int c,
                                     num::Rng& rng) {
  const num::Tensor2 st = num::Tensor2::from_data(1, 2, {s[0], s[1]});
  const num::Tensor2 at = num::Tensor2::from_data(1, 2, {a[0], a[1]});
  const num::Tensor2 nt =
      num::Tensor2::from_data(1, 2, {s_next[0], s_next[1]});
  return posterior_sample_batch(m, st, at, nt, {c}, rng);
}

// ---------------------------------------------------------------------------
// Training.

struct CvaeTrainResult {
  std::vector<ElboBreakdown> epoch_curve;  // record-weighted epoch means
};

// Freezes log p̂(c) from the data, then maximizes the ELBO with Adam.
// The curve must improve: mean ELBO over the last tenth of epochs has to
// reach the mean over the first tenth, otherwise training diverged.
inline CvaeTrainResult train_cvae(CvaeModel& m, const FlatData& data,
                                  int epochs, int batch_size, double lr,
                                  num::Rng& rng) {
  const int n = data.n();
  if (n == 0) throw InsufficientDataError("train_cvae: empty dataset");
  if (epochs < 1 || batch_size < 1 || lr <= 0)
    throw ConfigError("train_cvae: bad hyperparameters");

  // Empirical class frequencies, frozen for the rest of the model's life.
  std::vector<double> counts(m.n_classes, 0.0);
  for (int c : data.cls) {
    m.require_class(c);
    counts[c] += 1.0;
  }
  for (int c = 0; c < m.n_classes; ++c)
    m.log_pc[c] = counts[c] > 0.0
                      ? std::log(counts[c] / n)
                      : -std::log(static_cast<double>(n)) - 30.0;

  num::Adam opt(m.params(), lr);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  CvaeTrainResult res;
  res.epoch_curve.reserve(epochs);
  std::vector<num::Tensor2> grads;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(order);
    ElboBreakdown acc;
    for (int start = 0; start < n; start += batch_size) {
      const int bs = std::min(batch_size, n - start);
      num::Tensor2 s(bs, 2), a(bs, 2), nx(bs, 2);
      std::vector<int> cls(bs);
      for (int i = 0; i < bs; ++i) {
        const int src = order[start + i];
        for (int k = 0; k < 2; ++k) {
          s.at(i, k) = data.s.at(src, k);
          a.at(i, k) = data.a.at(src, k);
          nx.at(i, k) = data.s_next.at(src, k);
        }
        cls[i] = data.cls[src];
      }
      const num::Tensor2 xi = num::Tensor2::randn(bs, m.d_u, rng);
      ElboGraph eg = build_elbo_graph(m, s, a, nx, cls, xi);
      const ElboBreakdown b = eg.breakdown();
      if (!std::isfinite(b.total))
        throw TrainingDiverged("train_cvae: non-finite ELBO at epoch " +
                               std::to_string(epoch));
      eg.g.backward(eg.loss);
      grads.clear();
      num::Mlp::collect_grads(eg.g, eg.enc, grads);
      std::vector<num::Tensor2> dec_grads;
      num::Mlp::collect_grads(eg.g, eg.dec, dec_grads);
      for (auto& t : dec_grads) grads.push_back(std::move(t));
      grads.push_back(eg.g.grad(eg.dec_lv));
      grads.push_back(eg.g.grad(eg.prior_mu));
      grads.push_back(eg.g.grad(eg.prior_lv));
      opt.step(grads);

      const double w = static_cast<double>(bs) / n;
      acc.recon += w * b.recon;
      acc.logpc += w * b.logpc;
      acc.kl += w * b.kl;
    }
    acc.total = acc.recon + acc.logpc - acc.kl;
    res.epoch_curve.push_back(acc);
  }

  const std::size_t tail =
      std::max<std::size_t>(1, res.epoch_curve.size() / 10);
  double head_mean = 0.0, tail_mean = 0.0;
  for (std::size_t i = 0; i < tail; ++i) {
    head_mean += res.epoch_curve[i].total / tail;
    tail_mean += res.epoch_curve[res.epoch_curve.size() - 1 - i].total / tail;
  }
  if (!(tail_mean >= head_mean))
    throw TrainingDiverged("train_cvae: ELBO failed to improve (head " +
                           std::to_string(head_mean) + ", tail " +
                           std::to_string(tail_mean) + ")");
  return res;
}

// ---------------------------------------------------------------------------
// Mean correlation coefficient: |Pearson| averaged over the best latent
// permutation (exhaustive; d_u ≤ 4 keeps this ≤ 24 candidates).

inline double mcc(const num::Tensor2& u_true, const num::Tensor2& u_est) {
  if (u_true.rows() != u_est.rows())
    throw DimensionError("mcc: row counts disagree");
  if (u_true.cols() != u_est.cols())
    throw DimensionError("mcc: column counts disagree");
  const int n = u_true.rows();
  const int d = u_true.cols();
  if (n < 3) throw InsufficientDataError("mcc: need at least 3 rows");
  if (d > 4) throw ContractError("mcc: permutation search expects d <= 4");

  auto column_stats = [n](const num::Tensor2& m, int j, double& mean,
                          double& var) {
    mean = 0.0;
    for (int i = 0; i < n; ++i) mean += m.at(i, j);
    mean /= n;
    var = 0.0;
    for (int i = 0; i < n; ++i) {
      const double dlt = m.at(i, j) - mean;
      var += dlt * dlt;
    }
  };

  auto require_varying = [n](const num::Tensor2& m, int j) {
    double lo = m.at(0, j), hi = m.at(0, j);
    for (int i = 1; i < n; ++i) {
      lo = std::min(lo, m.at(i, j));
      hi = std::max(hi, m.at(i, j));
    }
    if (lo == hi)
      throw NumericError("mcc: degenerate (constant) column " +
                         std::to_string(j));
  };

  std::vector<double> mt(d), vt(d), me(d), ve(d);
  for (int j = 0; j < d; ++j) {
    require_varying(u_true, j);
    require_varying(u_est, j);
    column_stats(u_true, j, mt[j], vt[j]);
    column_stats(u_est, j, me[j], ve[j]);
    if (vt[j] == 0.0 || ve[j] == 0.0)
      throw NumericError("mcc: degenerate (constant) column " +
                         std::to_string(j));
  }

  // |corr| between every (true dim, est dim) pair.
  num::Tensor2 c(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      double cov = 0.0;
      for (int r = 0; r < n; ++r)
        cov += (u_true.at(r, i) - mt[i]) * (u_est.at(r, j) - me[j]);
      c.at(i, j) = std::abs(cov / std::sqrt(vt[i] * ve[j]));
    }

  std::vector<int> perm(d);
  std::iota(perm.begin(), perm.end(), 0);
  double best = -1.0;
  do {
    double mean = 0.0;
    for (int i = 0; i < d; ++i) mean += c.at(i, perm[i]) / d;
    best = std::max(best, mean);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// ---------------------------------------------------------------------------
// Checkpoints (kind "cvae").

inline void save_cvae(const CvaeModel& m, const std::string& path,
                      std::uint64_t seed, std::int64_t steps) {
  num::Checkpoint ck;
  ck.kind = "cvae";
  ck.seed = seed;
  ck.steps = steps;
  ck.set_meta("d_u", std::to_string(m.d_u));
  ck.set_meta("n_classes", std::to_string(m.n_classes));
  ck.set_meta("conditional", m.conditional ? "true" : "false");
  num::put_mlp(ck, "enc", m.encoder);
  num::put_mlp(ck, "dec", m.decoder);
  ck.add_tensor("dec_logvar_eps", m.dec_logvar_eps);
  ck.add_tensor("prior_mu", m.prior_mu);
  ck.add_tensor("prior_logvar", m.prior_logvar);
  num::Tensor2 lpc(1, m.n_classes);
  for (int c = 0; c < m.n_classes; ++c) lpc.at(0, c) = m.log_pc[c];
  ck.add_tensor("log_pc", lpc);
  ck.save(path);
}

inline CvaeModel load_cvae(const std::string& path) {
  const num::Checkpoint ck = num::Checkpoint::load(path);
  if (ck.kind != "cvae")
    throw FormatError(path + ": expected a cvae checkpoint, got kind '" +
                      ck.kind + "'");
  CvaeModel m;
  m.d_u = ivae_detail::meta_int(ck, "d_u");
  m.n_classes = ivae_detail::meta_int(ck, "n_classes");
  m.conditional = ck.meta_at("conditional") == "true";
  m.encoder = num::get_mlp(ck, "enc");
  m.decoder = num::get_mlp(ck, "dec");
  m.dec_logvar_eps = ck.tensor("dec_logvar_eps");
  m.prior_mu = ck.tensor("prior_mu");
  m.prior_logvar = ck.tensor("prior_logvar");
  const num::Tensor2& lpc = ck.tensor("log_pc");
  if (lpc.rows() != 1 || lpc.cols() != m.n_classes)
    throw FormatError(path + ": log_pc shape mismatch");
  m.log_pc.assign(lpc.data().begin(), lpc.data().end());

  if (m.d_u < 1 || m.d_u > 4 || m.n_classes < 1)
    throw FormatError(path + ": implausible cvae dims");
  if (m.encoder.in_dim() != m.encoder_in() ||
      m.encoder.out_dim() != 2 * m.d_u)
    throw FormatError(path + ": encoder shape disagrees with meta");
  if (m.decoder.in_dim() != 4 + m.d_u || m.decoder.out_dim() != 2)
    throw FormatError(path + ": decoder shape disagrees with meta");
  if (m.prior_mu.rows() != m.prior_rows() || m.prior_mu.cols() != m.d_u ||
      !m.prior_mu.same_shape(m.prior_logvar))
    throw FormatError(path + ": prior table shape disagrees with meta");
  if (m.dec_logvar_eps.rows() != 1 || m.dec_logvar_eps.cols() != 2)
    throw FormatError(path + ": dec_logvar_eps must be 1 x 2");
  return m;
}

}  // namespace oilca
