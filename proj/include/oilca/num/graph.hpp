#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "oilca/num/tensor.hpp"

namespace oilca::num {

inline double softplus_scalar(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

inline double sigmoid_scalar(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Define-by-run reverse-mode tape over Tensor2 values. Node ids are
// insertion-ordered, so inputs always precede consumers and backward is a
// single reverse sweep.
class Graph {
 public:
  using NodeId = int;

  enum class OpKind : std::uint8_t {
    Leaf,
    MatMul,
    AddRow,
    RepeatRows,
    Add,
    Sub,
    Mul,
    Scale,
    AddScalar,
    Tanh,
    Softplus,
    Sigmoid,
    Exp,
    Log,
    Square,
    Clamp,
    ConcatCols,
    SliceCols,
    GatherRows,
    RowSum,
    SumAll,
    MeanAll,
  };

  NodeId leaf(Tensor2 v, bool requires_grad = false) {
    Node n;
    n.op = OpKind::Leaf;
    n.val = std::move(v);
    n.req = requires_grad;
    return push(std::move(n));
  }

  NodeId constant(Tensor2 v) { return leaf(std::move(v), false); }

  NodeId matmul(NodeId a, NodeId b) {
    const Tensor2& A = val(a);
    const Tensor2& B = val(b);
    if (A.cols() != B.rows()) throw DimensionError("matmul: inner dims differ");
    Node n = binary(OpKind::MatMul, a, b, A.rows(), B.cols());
    gemm(A, B, n.val);
    return push(std::move(n));
  }

  // X (n x m) + row vector b (1 x m), broadcast over rows.
  NodeId add_row(NodeId x, NodeId b) {
    const Tensor2& X = val(x);
    const Tensor2& B = val(b);
    if (B.rows() != 1 || B.cols() != X.cols())
      throw DimensionError("add_row: bias must be 1 x cols(x)");
    Node n = binary(OpKind::AddRow, x, b, X.rows(), X.cols());
    for (int i = 0; i < X.rows(); ++i)
      for (int j = 0; j < X.cols(); ++j)
        n.val.at(i, j) = X.at(i, j) + B.at(0, j);
    return push(std::move(n));
  }

  // Tile a 1 x m row vector to n x m.
  NodeId repeat_rows(NodeId b, int n_rows) {
    const Tensor2& B = val(b);
    if (B.rows() != 1) throw DimensionError("repeat_rows: expects a row vector");
    Node n = unary(OpKind::RepeatRows, b, n_rows, B.cols());
    for (int i = 0; i < n_rows; ++i)
      for (int j = 0; j < B.cols(); ++j) n.val.at(i, j) = B.at(0, j);
    return push(std::move(n));
  }

  NodeId add(NodeId a, NodeId b) { return elementwise(OpKind::Add, a, b); }
  NodeId sub(NodeId a, NodeId b) { return elementwise(OpKind::Sub, a, b); }
  NodeId mul(NodeId a, NodeId b) { return elementwise(OpKind::Mul, a, b); }

  NodeId scale(NodeId x, double s) {
    Node n = unary(OpKind::Scale, x, val(x).rows(), val(x).cols());
    n.s0 = s;
    const auto& src = val(x).data();
    for (std::size_t i = 0; i < src.size(); ++i) n.val.data()[i] = s * src[i];
    return push(std::move(n));
  }

  NodeId add_scalar(NodeId x, double s) {
    Node n = unary(OpKind::AddScalar, x, val(x).rows(), val(x).cols());
    n.s0 = s;
    const auto& src = val(x).data();
    for (std::size_t i = 0; i < src.size(); ++i) n.val.data()[i] = src[i] + s;
    return push(std::move(n));
  }

  NodeId tanh_(NodeId x) {
    return map(OpKind::Tanh, x, [](double v) { return std::tanh(v); });
  }
  NodeId softplus_(NodeId x) {
    return map(OpKind::Softplus, x, softplus_scalar);
  }
  NodeId sigmoid_(NodeId x) {
    return map(OpKind::Sigmoid, x, sigmoid_scalar);
  }
  NodeId exp_(NodeId x) {
    return map(OpKind::Exp, x, [](double v) { return std::exp(v); });
  }
  NodeId log_(NodeId x) {
    return map(OpKind::Log, x, [](double v) { return std::log(v); });
  }
  NodeId square(NodeId x) {
    return map(OpKind::Square, x, [](double v) { return v * v; });
  }

  // Gradient passes only strictly inside (lo, hi).
  NodeId clamp(NodeId x, double lo, double hi) {
    Node n = unary(OpKind::Clamp, x, val(x).rows(), val(x).cols());
    n.s0 = lo;
    n.s1 = hi;
    const auto& src = val(x).data();
    for (std::size_t i = 0; i < src.size(); ++i)
      n.val.data()[i] = std::min(std::max(src[i], lo), hi);
    return push(std::move(n));
  }

  NodeId concat_cols(NodeId a, NodeId b) {
    const Tensor2& A = val(a);
    const Tensor2& B = val(b);
    if (A.rows() != B.rows()) throw DimensionError("concat_cols: row mismatch");
    Node n = binary(OpKind::ConcatCols, a, b, A.rows(), A.cols() + B.cols());
    for (int i = 0; i < A.rows(); ++i) {
      for (int j = 0; j < A.cols(); ++j) n.val.at(i, j) = A.at(i, j);
      for (int j = 0; j < B.cols(); ++j) n.val.at(i, A.cols() + j) = B.at(i, j);
    }
    return push(std::move(n));
  }

  NodeId slice_cols(NodeId x, int from, int count) {
    const Tensor2& X = val(x);
    if (from < 0 || count < 0 || from + count > X.cols())
      throw DimensionError("slice_cols: range out of bounds");
    Node n = unary(OpKind::SliceCols, x, X.rows(), count);
    n.i0 = from;
    for (int i = 0; i < X.rows(); ++i)
      for (int j = 0; j < count; ++j) n.val.at(i, j) = X.at(i, from + j);
    return push(std::move(n));
  }

  // out[i, :] = table[idx[i], :]
  NodeId gather_rows(NodeId table, std::vector<int> idx) {
    const Tensor2& T = val(table);
    for (int r : idx)
      if (r < 0 || r >= T.rows())
        throw DimensionError("gather_rows: index out of range");
    Node n = unary(OpKind::GatherRows, table, static_cast<int>(idx.size()),
                   T.cols());
    n.idx = std::move(idx);
    for (int i = 0; i < n.val.rows(); ++i)
      for (int j = 0; j < T.cols(); ++j) n.val.at(i, j) = T.at(n.idx[i], j);
    return push(std::move(n));
  }

  NodeId row_sum(NodeId x) {
    const Tensor2& X = val(x);
    Node n = unary(OpKind::RowSum, x, X.rows(), 1);
    for (int i = 0; i < X.rows(); ++i) {
      double acc = 0.0;
      for (int j = 0; j < X.cols(); ++j) acc += X.at(i, j);
      n.val.at(i, 0) = acc;
    }
    return push(std::move(n));
  }

  NodeId sum_all(NodeId x) {
    Node n = unary(OpKind::SumAll, x, 1, 1);
    double acc = 0.0;
    for (double v : val(x).data()) acc += v;
    n.val.at(0, 0) = acc;
    return push(std::move(n));
  }

  NodeId mean_all(NodeId x) {
    if (val(x).size() == 0) throw ContractError("mean_all: empty tensor");
    Node n = unary(OpKind::MeanAll, x, 1, 1);
    double acc = 0.0;
    for (double v : val(x).data()) acc += v;
    n.val.at(0, 0) = acc / static_cast<double>(val(x).size());
    return push(std::move(n));
  }

  const Tensor2& value(NodeId id) const { return nodes_[id].val; }

  bool requires_grad(NodeId id) const { return nodes_[id].req; }

  // Populates gradients for every node the scalar loss depends on.
  void backward(NodeId loss) {
    const Tensor2& L = val(loss);
    if (L.rows() != 1 || L.cols() != 1)
      throw ContractError("backward: loss must be 1x1");
    for (Node& n : nodes_) {
      n.has_grad = false;
      n.grd = Tensor2();
    }
    ensure_grad(loss).at(0, 0) = 1.0;
    for (NodeId id = loss; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.has_grad || !n.req || n.op == OpKind::Leaf) continue;
      propagate(n);
    }
  }

  const Tensor2& grad(NodeId id) const {
    const Node& n = nodes_[id];
    if (!n.req)
      throw ContractError("grad: node does not require gradients");
    if (!n.has_grad) {
      // Loss did not depend on this node: gradient is exactly zero.
      zero_cache_ = Tensor2(n.val.rows(), n.val.cols());
      return zero_cache_;
    }
    return n.grd;
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    OpKind op = OpKind::Leaf;
    NodeId a = -1;
    NodeId b = -1;
    double s0 = 0.0;
    double s1 = 0.0;
    int i0 = 0;
    std::vector<int> idx;
    Tensor2 val;
    Tensor2 grd;
    bool req = false;
    bool has_grad = false;
  };

  const Tensor2& val(NodeId id) const { return nodes_[id].val; }

  NodeId push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  Node unary(OpKind op, NodeId a, int rows, int cols) {
    Node n;
    n.op = op;
    n.a = a;
    n.val = Tensor2(rows, cols);
    n.req = nodes_[a].req;
    return n;
  }

  Node binary(OpKind op, NodeId a, NodeId b, int rows, int cols) {
    Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    n.val = Tensor2(rows, cols);
    n.req = nodes_[a].req || nodes_[b].req;
    return n;
  }

  NodeId elementwise(OpKind op, NodeId a, NodeId b) {
    const Tensor2& A = val(a);
    const Tensor2& B = val(b);
    if (!A.same_shape(B)) throw DimensionError("elementwise: shape mismatch");
    Node n = binary(op, a, b, A.rows(), A.cols());
    const auto& pa = A.data();
    const auto& pb = B.data();
    auto& pc = n.val.data();
    switch (op) {
      case OpKind::Add:
        for (std::size_t i = 0; i < pa.size(); ++i) pc[i] = pa[i] + pb[i];
        break;
      case OpKind::Sub:
        for (std::size_t i = 0; i < pa.size(); ++i) pc[i] = pa[i] - pb[i];
        break;
      case OpKind::Mul:
        for (std::size_t i = 0; i < pa.size(); ++i) pc[i] = pa[i] * pb[i];
        break;
      default:
        throw ContractError("elementwise: bad op");
    }
    return push(std::move(n));
  }

  template <typename F>
  NodeId map(OpKind op, NodeId x, F f) {
    Node n = unary(op, x, val(x).rows(), val(x).cols());
    const auto& src = val(x).data();
    for (std::size_t i = 0; i < src.size(); ++i) n.val.data()[i] = f(src[i]);
    return push(std::move(n));
  }

  Tensor2& ensure_grad(NodeId id) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
      n.grd = Tensor2(n.val.rows(), n.val.cols());
      n.has_grad = true;
    }
    return n.grd;
  }

  void accumulate_into(NodeId id, const Tensor2& g) {
    if (!nodes_[id].req) return;
    Tensor2& dst = ensure_grad(id);
    auto& d = dst.data();
    const auto& s = g.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
  }

  void propagate(Node& n) {
    const Tensor2& g = n.grd;
    switch (n.op) {
      case OpKind::MatMul: {
        if (nodes_[n.a].req) gemm_nt_acc(g, val(n.b), ensure_grad(n.a));
        if (nodes_[n.b].req) gemm_tn_acc(val(n.a), g, ensure_grad(n.b));
        break;
      }
      case OpKind::AddRow: {
        if (nodes_[n.a].req) accumulate_into(n.a, g);
        if (nodes_[n.b].req) {
          Tensor2& db = ensure_grad(n.b);
          for (int i = 0; i < g.rows(); ++i)
            for (int j = 0; j < g.cols(); ++j) db.at(0, j) += g.at(i, j);
        }
        break;
      }
      case OpKind::RepeatRows: {
        if (nodes_[n.a].req) {
          Tensor2& db = ensure_grad(n.a);
          for (int i = 0; i < g.rows(); ++i)
            for (int j = 0; j < g.cols(); ++j) db.at(0, j) += g.at(i, j);
        }
        break;
      }
      case OpKind::Add:
        accumulate_into(n.a, g);
        accumulate_into(n.b, g);
        break;
      case OpKind::Sub: {
        accumulate_into(n.a, g);
        if (nodes_[n.b].req) {
          Tensor2& db = ensure_grad(n.b);
          const auto& s = g.data();
          for (std::size_t i = 0; i < s.size(); ++i) db.data()[i] -= s[i];
        }
        break;
      }
      case OpKind::Mul: {
        if (nodes_[n.a].req) {
          Tensor2& da = ensure_grad(n.a);
          const auto& other = val(n.b).data();
          for (std::size_t i = 0; i < other.size(); ++i)
            da.data()[i] += g.data()[i] * other[i];
        }
        if (nodes_[n.b].req) {
          Tensor2& db = ensure_grad(n.b);
          const auto& other = val(n.a).data();
          for (std::size_t i = 0; i < other.size(); ++i)
            db.data()[i] += g.data()[i] * other[i];
        }
        break;
      }
      case OpKind::Scale: {
        if (nodes_[n.a].req) {
          Tensor2& da = ensure_grad(n.a);
          for (std::size_t i = 0; i < g.data().size(); ++i)
            da.data()[i] += n.s0 * g.data()[i];
        }
        break;
      }
      case OpKind::AddScalar:
        accumulate_into(n.a, g);
        break;
      case OpKind::Tanh: {
        chain(n, [&](std::size_t i) {
          const double y = n.val.data()[i];
          return 1.0 - y * y;
        });
        break;
      }
      case OpKind::Softplus: {
        chain(n, [&](std::size_t i) {
          return sigmoid_scalar(val(n.a).data()[i]);
        });
        break;
      }
      case OpKind::Sigmoid: {
        chain(n, [&](std::size_t i) {
          const double y = n.val.data()[i];
          return y * (1.0 - y);
        });
        break;
      }
      case OpKind::Exp: {
        chain(n, [&](std::size_t i) { return n.val.data()[i]; });
        break;
      }
      case OpKind::Log: {
        chain(n, [&](std::size_t i) { return 1.0 / val(n.a).data()[i]; });
        break;
      }
      case OpKind::Square: {
        chain(n, [&](std::size_t i) { return 2.0 * val(n.a).data()[i]; });
        break;
      }
      case OpKind::Clamp: {
        chain(n, [&](std::size_t i) {
          const double x = val(n.a).data()[i];
          return (x > n.s0 && x < n.s1) ? 1.0 : 0.0;
        });
        break;
      }
      case OpKind::ConcatCols: {
        const int ca = val(n.a).cols();
        if (nodes_[n.a].req) {
          Tensor2& da = ensure_grad(n.a);
          for (int i = 0; i < g.rows(); ++i)
            for (int j = 0; j < ca; ++j) da.at(i, j) += g.at(i, j);
        }
        if (nodes_[n.b].req) {
          Tensor2& db = ensure_grad(n.b);
          for (int i = 0; i < g.rows(); ++i)
            for (int j = 0; j < val(n.b).cols(); ++j)
              db.at(i, j) += g.at(i, ca + j);
        }
        break;
      }
      case OpKind::SliceCols: {
        if (nodes_[n.a].req) {
          Tensor2& da = ensure_grad(n.a);
          for (int i = 0; i < g.rows(); ++i)
            for (int j = 0; j < g.cols(); ++j) da.at(i, n.i0 + j) += g.at(i, j);
        }
        break;
      }
      case OpKind::GatherRows: {
        if (nodes_[n.a].req) {
          Tensor2& da = ensure_grad(n.a);
          for (int i = 0; i < g.rows(); ++i)
            for (int j = 0; j < g.cols(); ++j)
              da.at(n.idx[i], j) += g.at(i, j);
        }
        break;
      }
      case OpKind::RowSum: {
        if (nodes_[n.a].req) {
          Tensor2& da = ensure_grad(n.a);
          for (int i = 0; i < da.rows(); ++i)
            for (int j = 0; j < da.cols(); ++j) da.at(i, j) += g.at(i, 0);
        }
        break;
      }
      case OpKind::SumAll: {
        if (nodes_[n.a].req) {
          Tensor2& da = ensure_grad(n.a);
          const double gv = g.at(0, 0);
          for (double& v : da.data()) v += gv;
        }
        break;
      }
      case OpKind::MeanAll: {
        if (nodes_[n.a].req) {
          Tensor2& da = ensure_grad(n.a);
          const double gv = g.at(0, 0) / static_cast<double>(da.size());
          for (double& v : da.data()) v += gv;
        }
        break;
      }
      case OpKind::Leaf:
        break;
    }
  }

  template <typename F>
  void chain(Node& n, F local) {
    if (!nodes_[n.a].req) return;
    Tensor2& da = ensure_grad(n.a);
    const auto& g = n.grd.data();
    for (std::size_t i = 0; i < g.size(); ++i) da.data()[i] += g[i] * local(i);
  }

  std::vector<Node> nodes_;
  mutable Tensor2 zero_cache_;
};

}  // namespace oilca::num
