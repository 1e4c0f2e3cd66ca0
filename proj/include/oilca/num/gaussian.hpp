#pragma once

#include <cmath>

#include "oilca/num/graph.hpp"
#include "oilca/num/rng.hpp"
#include "oilca/num/tensor.hpp"

namespace oilca::num {

inline constexpr double kLog2Pi = 1.8378770664093453;

// Per-row log N(x | mean, diag exp(logvar)): n x 1 column.
inline Tensor2 gaussian_logpdf(const Tensor2& x, const Tensor2& mean,
                               const Tensor2& logvar) {
  if (!x.same_shape(mean) || !x.same_shape(logvar))
    throw DimensionError("gaussian_logpdf: shape mismatch");
  Tensor2 out(x.rows(), 1);
  for (int i = 0; i < x.rows(); ++i) {
    double acc = 0.0;
    for (int j = 0; j < x.cols(); ++j) {
      const double d = x.at(i, j) - mean.at(i, j);
      const double lv = logvar.at(i, j);
      acc += -0.5 * (d * d / std::exp(lv) + lv + kLog2Pi);
    }
    out.at(i, 0) = acc;
  }
  return out;
}

// Per-row KL( N(mean_q, exp(logvar_q)) || N(mean_p, exp(logvar_p)) ): n x 1.
inline Tensor2 kl_diag_gaussians(const Tensor2& mean_q, const Tensor2& logvar_q,
                                 const Tensor2& mean_p,
                                 const Tensor2& logvar_p) {
  if (!mean_q.same_shape(logvar_q) || !mean_q.same_shape(mean_p) ||
      !mean_q.same_shape(logvar_p))
    throw DimensionError("kl_diag_gaussians: shape mismatch");
  Tensor2 out(mean_q.rows(), 1);
  for (int i = 0; i < mean_q.rows(); ++i) {
    double acc = 0.0;
    for (int j = 0; j < mean_q.cols(); ++j) {
      const double dm = mean_q.at(i, j) - mean_p.at(i, j);
      const double lq = logvar_q.at(i, j);
      const double lp = logvar_p.at(i, j);
      acc += 0.5 * (lp - lq + (std::exp(lq) + dm * dm) / std::exp(lp) - 1.0);
    }
    out.at(i, 0) = acc;
  }
  return out;
}

// mean + exp(0.5 logvar) ⊙ ξ with ξ drawn from rng, row-major order.
inline Tensor2 reparam_sample(const Tensor2& mean, const Tensor2& logvar,
                              Rng& rng) {
  if (!mean.same_shape(logvar))
    throw DimensionError("reparam_sample: shape mismatch");
  Tensor2 out(mean.rows(), mean.cols());
  for (int i = 0; i < mean.rows(); ++i)
    for (int j = 0; j < mean.cols(); ++j)
      out.at(i, j) =
          mean.at(i, j) + std::exp(0.5 * logvar.at(i, j)) * rng.normal();
  return out;
}

// --- Tape builders: same formulas as above, expressed as graph nodes so the
// --- losses that use them are differentiable w.r.t. mean/logvar inputs.

// n x 1 node of per-row log-densities.
inline Graph::NodeId gaussian_logpdf_node(Graph& g, Graph::NodeId x,
                                          Graph::NodeId mean,
                                          Graph::NodeId logvar) {
  const Graph::NodeId diff = g.sub(x, mean);
  const Graph::NodeId quad = g.mul(g.square(diff), g.exp_(g.scale(logvar, -1.0)));
  const Graph::NodeId inner = g.add(quad, g.add_scalar(logvar, kLog2Pi));
  return g.scale(g.row_sum(inner), -0.5);
}

// n x 1 node of per-row KL divergences.
inline Graph::NodeId kl_diag_gaussians_node(Graph& g, Graph::NodeId mean_q,
                                            Graph::NodeId logvar_q,
                                            Graph::NodeId mean_p,
                                            Graph::NodeId logvar_p) {
  const Graph::NodeId dm2 = g.square(g.sub(mean_q, mean_p));
  const Graph::NodeId inv_p = g.exp_(g.scale(logvar_p, -1.0));
  const Graph::NodeId ratio = g.mul(g.add(g.exp_(logvar_q), dm2), inv_p);
  const Graph::NodeId inner =
      g.add_scalar(g.add(g.sub(logvar_p, logvar_q), ratio), -1.0);
  return g.scale(g.row_sum(inner), 0.5);
}

// mean + exp(0.5 logvar) ⊙ xi with xi a fixed (constant) noise tensor.
inline Graph::NodeId reparam_node(Graph& g, Graph::NodeId mean,
                                  Graph::NodeId logvar, Graph::NodeId xi) {
  return g.add(mean, g.mul(g.exp_(g.scale(logvar, 0.5)), xi));
}

}  // namespace oilca::num
