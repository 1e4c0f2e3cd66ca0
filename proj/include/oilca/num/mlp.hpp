#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "oilca/num/graph.hpp"
#include "oilca/num/rng.hpp"
#include "oilca/num/tensor.hpp"

namespace oilca::num {

enum class Activation : std::uint8_t { Identity, Tanh, Softplus };

inline const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Tanh: return "tanh";
    case Activation::Softplus: return "softplus";
  }
  throw ContractError("activation_name: bad enum value");
}

inline Activation activation_from_name(std::string_view s) {
  if (s == "identity") return Activation::Identity;
  if (s == "tanh") return Activation::Tanh;
  if (s == "softplus") return Activation::Softplus;
  throw FormatError("unknown activation kind: " + std::string(s));
}

struct Layer {
  Tensor2 w;  // in x out
  Tensor2 b;  // 1 x out
  Activation act = Activation::Identity;
};

// Fully-connected net. eval() and forward() run the exact same kernels in
// the exact same order, so a tape pass and a plain pass agree bit-for-bit.
class Mlp {
 public:
  Mlp() = default;

  Mlp(int in_dim, const std::vector<int>& hidden, int out_dim,
      Activation hidden_act, Activation out_act, Rng& rng) {
    if (in_dim <= 0 || out_dim <= 0)
      throw DimensionError("MLP: dims must be positive");
    int cur = in_dim;
    for (int h : hidden) {
      if (h <= 0) throw DimensionError("MLP: hidden dims must be positive");
      layers_.push_back(make_layer(cur, h, hidden_act, rng));
      cur = h;
    }
    layers_.push_back(make_layer(cur, out_dim, out_act, rng));
  }

  static Mlp from_layers(std::vector<Layer> layers) {
    if (layers.empty()) throw DimensionError("MLP: needs at least one layer");
    for (std::size_t i = 0; i + 1 < layers.size(); ++i)
      if (layers[i].w.cols() != layers[i + 1].w.rows())
        throw DimensionError("MLP: consecutive layer dims disagree");
    Mlp m;
    m.layers_ = std::move(layers);
    return m;
  }

  int in_dim() const { return layers_.front().w.rows(); }
  int out_dim() const { return layers_.back().w.cols(); }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  // [in, h1, ..., out]
  std::vector<int> dims() const {
    std::vector<int> d{in_dim()};
    for (const Layer& l : layers_) d.push_back(l.w.cols());
    return d;
  }

  std::vector<Activation> activations() const {
    std::vector<Activation> a;
    for (const Layer& l : layers_) a.push_back(l.act);
    return a;
  }

  Tensor2 eval(const Tensor2& x) const {
    if (x.cols() != in_dim()) throw DimensionError("MLP eval: input dim");
    Tensor2 h = x;
    for (const Layer& l : layers_) {
      Tensor2 z(h.rows(), l.w.cols());
      gemm(h, l.w, z);
      for (int i = 0; i < z.rows(); ++i)
        for (int j = 0; j < z.cols(); ++j)
          z.at(i, j) = z.at(i, j) + l.b.at(0, j);
      apply_activation(l.act, z);
      h = std::move(z);
    }
    return h;
  }

  struct TapeRef {
    std::vector<Graph::NodeId> w_ids;
    std::vector<Graph::NodeId> b_ids;
    Graph::NodeId out = -1;
  };

  // Pushes every weight/bias as a tape leaf; `trainable` controls whether
  // gradients flow into them (frozen nets still pass gradients through to x).
  TapeRef forward(Graph& g, Graph::NodeId x, bool trainable = true) const {
    if (g.value(x).cols() != in_dim())
      throw DimensionError("MLP forward: input dim");
    TapeRef r;
    Graph::NodeId h = x;
    for (const Layer& l : layers_) {
      const Graph::NodeId w = g.leaf(l.w, trainable);
      const Graph::NodeId b = g.leaf(l.b, trainable);
      r.w_ids.push_back(w);
      r.b_ids.push_back(b);
      h = g.add_row(g.matmul(h, w), b);
      switch (l.act) {
        case Activation::Identity: break;
        case Activation::Tanh: h = g.tanh_(h); break;
        case Activation::Softplus: h = g.softplus_(h); break;
      }
    }
    r.out = h;
    return r;
  }

  std::vector<Tensor2*> params() {
    std::vector<Tensor2*> p;
    for (Layer& l : layers_) {
      p.push_back(&l.w);
      p.push_back(&l.b);
    }
    return p;
  }

  std::vector<const Tensor2*> params() const {
    std::vector<const Tensor2*> p;
    for (const Layer& l : layers_) {
      p.push_back(&l.w);
      p.push_back(&l.b);
    }
    return p;
  }

  // Accumulates tape gradients back onto caller-owned buffers in params()
  // order (w0, b0, w1, b1, ...).
  static void collect_grads(const Graph& g, const TapeRef& r,
                            std::vector<Tensor2>& out) {
    out.clear();
    for (std::size_t i = 0; i < r.w_ids.size(); ++i) {
      out.push_back(g.grad(r.w_ids[i]));
      out.push_back(g.grad(r.b_ids[i]));
    }
  }

 private:
  static Layer make_layer(int in, int out, Activation act, Rng& rng) {
    Layer l;
    l.w = Tensor2::randn(in, out, rng, 1.0 / std::sqrt(static_cast<double>(in)));
    l.b = Tensor2(1, out);
    l.act = act;
    return l;
  }

  static void apply_activation(Activation a, Tensor2& z) {
    switch (a) {
      case Activation::Identity:
        return;
      case Activation::Tanh:
        for (double& v : z.data()) v = std::tanh(v);
        return;
      case Activation::Softplus:
        for (double& v : z.data()) v = softplus_scalar(v);
        return;
    }
  }

  std::vector<Layer> layers_;
};

}  // namespace oilca::num
