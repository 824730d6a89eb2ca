// Copyright 2026 the fuzzyalign authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "fuzzyalign/error.hpp"
#include "fuzzyalign/matrix.hpp"
#include "fuzzyalign/ops.hpp"

namespace fuzzyalign {

class Tape;

/// Handle to one node of a tape. Cheap to copy; valid as long as the tape
/// lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  /// Scalar read for 1x1 nodes.
  double item() const;
};

/// Reverse-accumulation tape over a small set of matrix primitives.
///
/// Values are computed eagerly as the expression is built. replay()
/// recomputes every node in recording order and reproduces the original
/// values bit-identically as long as leaf values are unchanged; stop_grad
/// nodes keep the value captured at build time, so a replay after leaf
/// perturbation evaluates the loss exactly as the optimizer sees it.
class Tape {
 public:
  enum class Op : std::uint8_t {
    kLeaf,
    kMatMul,
    kAdd,
    kSub,
    kMul,
    kDiv,
    kScale,      // scalar * value
    kAddScalar,  // value + scalar
    kExp,
    kLog,
    kSum,      // all entries -> 1x1
    kRowSum,   // R x C -> R x 1
    kColSum,   // R x C -> 1 x C
    kSoftmaxRows,
    kRowNormalize,
    kClampUnit,
    kTranspose,
    kReshape,
    kStopGrad,
    kGelu,
    kLayerNormRows,
    kConcatRows,
  };

  Var input(Matrix value) { return add_leaf(std::move(value), true); }
  Var constant(Matrix value) { return add_leaf(std::move(value), false); }
  Var scalar_constant(double v) { return constant(Matrix(1, 1, v)); }

  Var matmul(Var a, Var b) { return add_node(Op::kMatMul, {a.id, b.id}); }
  Var add(Var a, Var b) { return add_node(Op::kAdd, {a.id, b.id}); }
  Var sub(Var a, Var b) { return add_node(Op::kSub, {a.id, b.id}); }
  Var mul(Var a, Var b) { return add_node(Op::kMul, {a.id, b.id}); }
  Var div(Var a, Var b) { return add_node(Op::kDiv, {a.id, b.id}); }
  Var scale(Var a, double c) { return add_node(Op::kScale, {a.id}, c); }
  Var add_scalar(Var a, double c) {
    return add_node(Op::kAddScalar, {a.id}, c);
  }
  Var exp(Var a) { return add_node(Op::kExp, {a.id}); }
  Var log(Var a) { return add_node(Op::kLog, {a.id}); }
  Var sum(Var a) { return add_node(Op::kSum, {a.id}); }
  Var row_sum(Var a) { return add_node(Op::kRowSum, {a.id}); }
  Var col_sum(Var a) { return add_node(Op::kColSum, {a.id}); }
  /// Row-wise max-stabilized softmax of logits / tau.
  Var softmax_rows(Var a, double tau = 1.0) {
    return add_node(Op::kSoftmaxRows, {a.id}, tau);
  }
  /// Rows scaled to unit L2 norm; ZeroNormError on a degenerate row.
  Var row_normalize(Var a) { return add_node(Op::kRowNormalize, {a.id}); }
  Var clamp_unit(Var a) { return add_node(Op::kClampUnit, {a.id}); }
  Var transpose(Var a) { return add_node(Op::kTranspose, {a.id}); }
  Var reshape(Var a, std::size_t rows, std::size_t cols) {
    if (a.value().size() != rows * cols) {
      throw ShapeError("reshape: element count changes");
    }
    Var v = add_node(Op::kReshape, {a.id}, static_cast<double>(rows));
    return v;
  }
  /// Value passes through; no gradient flows back, and replay keeps the
  /// value captured when the node was recorded.
  Var stop_grad(Var a) { return add_node(Op::kStopGrad, {a.id}); }
  Var gelu(Var a) { return add_node(Op::kGelu, {a.id}); }
  Var layer_norm_rows(Var a, double eps = 1e-5) {
    return add_node(Op::kLayerNormRows, {a.id}, eps);
  }
  Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no parts");
    std::vector<int> ids;
    ids.reserve(parts.size());
    for (Var p : parts) ids.push_back(p.id);
    return add_node(Op::kConcatRows, ids);
  }

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  std::size_t node_count() const { return nodes_.size(); }
  bool is_trainable(Var v) const { return nodes_[v.id].trainable; }

  /// Overwrite a leaf's value in place (same shape). Used by the
  /// finite-difference harness between replays.
  void set_leaf_value(Var leaf, const Matrix& value) {
    Node& n = nodes_[leaf.id];
    if (n.op != Op::kLeaf) throw ShapeError("set_leaf_value: not a leaf");
    if (!n.value.same_shape(value)) {
      throw ShapeError("set_leaf_value: shape changed");
    }
    n.value = value;
  }

  void poke_leaf(Var leaf, std::size_t index, double value) {
    Node& n = nodes_[leaf.id];
    if (n.op != Op::kLeaf) throw ShapeError("poke_leaf: not a leaf");
    n.value[index] = value;
  }

  /// Recompute every non-leaf node in recording order. stop_grad nodes are
  /// left at their captured value.
  void replay() {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      Node& n = nodes_[i];
      if (n.op == Op::kLeaf || n.op == Op::kStopGrad) continue;
      n.value = evaluate(n);
      n.value.require_finite("tape replay");
    }
  }

  /// Gradients of a scalar loss with respect to the given nodes. Constant
  /// leaves report exact zeros.
  std::vector<Matrix> gradients(Var loss, const std::vector<Var>& wrt) const {
    const Node& loss_node = nodes_[loss.id];
    if (loss_node.value.rows() != 1 || loss_node.value.cols() != 1) {
      throw ShapeError("gradients: loss must be a 1x1 node");
    }
    std::vector<Matrix> adjoint(nodes_.size());
    std::vector<bool> seeded(nodes_.size(), false);
    auto bump = [&](int id) -> Matrix& {
      if (!seeded[id]) {
        adjoint[id] =
            Matrix::zeros(nodes_[id].value.rows(), nodes_[id].value.cols());
        seeded[id] = true;
      }
      return adjoint[id];
    };
    bump(loss.id)(0, 0) = 1.0;

    for (int i = loss.id; i >= 0; --i) {
      if (!seeded[i]) continue;
      backward_step(i, adjoint[i], bump);
    }

    std::vector<Matrix> out;
    out.reserve(wrt.size());
    for (Var v : wrt) {
      const Node& n = nodes_[v.id];
      if (!n.trainable || !seeded[v.id]) {
        out.push_back(Matrix::zeros(n.value.rows(), n.value.cols()));
      } else {
        out.push_back(adjoint[v.id]);
      }
    }
    return out;
  }

 private:
  struct Node {
    Op op = Op::kLeaf;
    std::vector<int> args;
    double attr = 0.0;  // scale factor, shift, tau, eps, or reshape rows
    Matrix value;
    bool trainable = false;
  };

  Var add_leaf(Matrix value, bool trainable) {
    value.require_finite("tape leaf");
    Node n;
    n.op = Op::kLeaf;
    n.value = std::move(value);
    n.trainable = trainable;
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  Var add_node(Op op, std::vector<int> args, double attr = 0.0) {
    Node n;
    n.op = op;
    n.args = std::move(args);
    n.attr = attr;
    n.value = evaluate(n);
    n.value.require_finite("tape op");
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  const Matrix& arg(const Node& n, std::size_t i) const {
    return nodes_[n.args[i]].value;
  }

  Matrix evaluate(const Node& n) const {
    switch (n.op) {
      case Op::kLeaf:
        return n.value;
      case Op::kMatMul:
        return detail::matmul(arg(n, 0), arg(n, 1));
      case Op::kAdd: {
        const Matrix& a = arg(n, 0);
        const Matrix& b = arg(n, 1);
        require_same_shape(a, b, "add");
        Matrix out = a;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
        return out;
      }
      case Op::kSub: {
        const Matrix& a = arg(n, 0);
        const Matrix& b = arg(n, 1);
        require_same_shape(a, b, "sub");
        Matrix out = a;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
        return out;
      }
      case Op::kMul: {
        const Matrix& a = arg(n, 0);
        const Matrix& b = arg(n, 1);
        require_same_shape(a, b, "mul");
        Matrix out = a;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
        return out;
      }
      case Op::kDiv: {
        const Matrix& a = arg(n, 0);
        const Matrix& b = arg(n, 1);
        require_same_shape(a, b, "div");
        Matrix out = a;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] /= b[i];
        return out;
      }
      case Op::kScale: {
        Matrix out = arg(n, 0);
        for (auto& v : out.data()) v *= n.attr;
        return out;
      }
      case Op::kAddScalar: {
        Matrix out = arg(n, 0);
        for (auto& v : out.data()) v += n.attr;
        return out;
      }
      case Op::kExp: {
        Matrix out = arg(n, 0);
        for (auto& v : out.data()) v = std::exp(v);
        return out;
      }
      case Op::kLog: {
        Matrix out = arg(n, 0);
        for (auto& v : out.data()) v = std::log(v);
        return out;
      }
      case Op::kSum: {
        const Matrix& a = arg(n, 0);
        double acc = 0.0;
        for (double v : a.data()) acc += v;
        return Matrix(1, 1, acc);
      }
      case Op::kRowSum: {
        const Matrix& a = arg(n, 0);
        Matrix out(a.rows(), 1);
        for (std::size_t i = 0; i < a.rows(); ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < a.cols(); ++j) acc += a(i, j);
          out(i, 0) = acc;
        }
        return out;
      }
      case Op::kColSum: {
        const Matrix& a = arg(n, 0);
        Matrix out(1, a.cols());
        for (std::size_t i = 0; i < a.rows(); ++i) {
          for (std::size_t j = 0; j < a.cols(); ++j) out(0, j) += a(i, j);
        }
        return out;
      }
      case Op::kSoftmaxRows: {
        const Matrix& a = arg(n, 0);
        const double tau = n.attr;
        Matrix out(a.rows(), a.cols());
        for (std::size_t i = 0; i < a.rows(); ++i) {
          double hi = a(i, 0);
          for (std::size_t j = 1; j < a.cols(); ++j) {
            hi = std::max(hi, a(i, j));
          }
          double sum = 0.0;
          for (std::size_t j = 0; j < a.cols(); ++j) {
            out(i, j) = std::exp((a(i, j) - hi) / tau);
            sum += out(i, j);
          }
          for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) /= sum;
        }
        return out;
      }
      case Op::kRowNormalize: {
        const Matrix& a = arg(n, 0);
        Matrix out(a.rows(), a.cols());
        for (std::size_t i = 0; i < a.rows(); ++i) {
          const double norm = detail::row_l2_norm(a, i);
          if (norm < kZeroNormThreshold) {
            throw ZeroNormError("row_normalize: row norm below 1e-12");
          }
          for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = a(i, j) / norm;
        }
        return out;
      }
      case Op::kClampUnit: {
        Matrix out = arg(n, 0);
        for (auto& v : out.data()) v = std::clamp(v, -1.0, 1.0);
        return out;
      }
      case Op::kTranspose:
        return detail::transpose(arg(n, 0));
      case Op::kReshape: {
        const Matrix& a = arg(n, 0);
        const auto rows = static_cast<std::size_t>(n.attr);
        return Matrix(rows, a.size() / rows, a.data());
      }
      case Op::kStopGrad:
        return arg(n, 0);
      case Op::kGelu: {
        Matrix out = arg(n, 0);
        for (auto& v : out.data()) v = gelu_value(v);
        return out;
      }
      case Op::kLayerNormRows: {
        const Matrix& a = arg(n, 0);
        Matrix out(a.rows(), a.cols());
        for (std::size_t i = 0; i < a.rows(); ++i) {
          double mean = 0.0;
          for (std::size_t j = 0; j < a.cols(); ++j) mean += a(i, j);
          mean /= static_cast<double>(a.cols());
          double var = 0.0;
          for (std::size_t j = 0; j < a.cols(); ++j) {
            const double d = a(i, j) - mean;
            var += d * d;
          }
          var /= static_cast<double>(a.cols());
          const double inv = 1.0 / std::sqrt(var + n.attr);
          for (std::size_t j = 0; j < a.cols(); ++j) {
            out(i, j) = (a(i, j) - mean) * inv;
          }
        }
        return out;
      }
      case Op::kConcatRows: {
        std::size_t rows = 0;
        const std::size_t cols = arg(n, 0).cols();
        for (std::size_t p = 0; p < n.args.size(); ++p) {
          if (arg(n, p).cols() != cols) {
            throw ShapeError("concat_rows: column counts disagree");
          }
          rows += arg(n, p).rows();
        }
        Matrix out(rows, cols);
        std::size_t r0 = 0;
        for (std::size_t p = 0; p < n.args.size(); ++p) {
          const Matrix& part = arg(n, p);
          for (std::size_t i = 0; i < part.rows(); ++i) {
            for (std::size_t j = 0; j < cols; ++j) {
              out(r0 + i, j) = part(i, j);
            }
          }
          r0 += part.rows();
        }
        return out;
      }
    }
    throw Error("unreachable op");
  }

  template <typename Bump>
  void backward_step(int id, const Matrix& g, Bump&& bump) const {
    const Node& n = nodes_[id];
    switch (n.op) {
      case Op::kLeaf:
      case Op::kStopGrad:
        return;
      case Op::kMatMul: {
        const Matrix& a = arg(n, 0);
        const Matrix& b = arg(n, 1);
        accumulate(bump(n.args[0]), detail::matmul(g, b, false, true));
        accumulate(bump(n.args[1]), detail::matmul(a, g, true, false));
        return;
      }
      case Op::kAdd: {
        accumulate(bump(n.args[0]), g);
        accumulate(bump(n.args[1]), g);
        return;
      }
      case Op::kSub: {
        accumulate(bump(n.args[0]), g);
        Matrix& db = bump(n.args[1]);
        for (std::size_t i = 0; i < g.size(); ++i) db[i] -= g[i];
        return;
      }
      case Op::kMul: {
        const Matrix& a = arg(n, 0);
        const Matrix& b = arg(n, 1);
        Matrix& da = bump(n.args[0]);
        Matrix& db = bump(n.args[1]);
        for (std::size_t i = 0; i < g.size(); ++i) {
          da[i] += g[i] * b[i];
          db[i] += g[i] * a[i];
        }
        return;
      }
      case Op::kDiv: {
        const Matrix& a = arg(n, 0);
        const Matrix& b = arg(n, 1);
        Matrix& da = bump(n.args[0]);
        Matrix& db = bump(n.args[1]);
        for (std::size_t i = 0; i < g.size(); ++i) {
          da[i] += g[i] / b[i];
          db[i] -= g[i] * a[i] / (b[i] * b[i]);
        }
        return;
      }
      case Op::kScale: {
        Matrix& da = bump(n.args[0]);
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += n.attr * g[i];
        return;
      }
      case Op::kAddScalar:
      case Op::kReshape: {
        Matrix& da = bump(n.args[0]);
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
        return;
      }
      case Op::kExp: {
        const Matrix& y = n.value;
        Matrix& da = bump(n.args[0]);
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * y[i];
        return;
      }
      case Op::kLog: {
        const Matrix& a = arg(n, 0);
        Matrix& da = bump(n.args[0]);
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] / a[i];
        return;
      }
      case Op::kSum: {
        Matrix& da = bump(n.args[0]);
        const double gv = g(0, 0);
        for (auto& v : da.data()) v += gv;
        return;
      }
      case Op::kRowSum: {
        const Matrix& a = arg(n, 0);
        Matrix& da = bump(n.args[0]);
        for (std::size_t i = 0; i < a.rows(); ++i) {
          for (std::size_t j = 0; j < a.cols(); ++j) da(i, j) += g(i, 0);
        }
        return;
      }
      case Op::kColSum: {
        const Matrix& a = arg(n, 0);
        Matrix& da = bump(n.args[0]);
        for (std::size_t i = 0; i < a.rows(); ++i) {
          for (std::size_t j = 0; j < a.cols(); ++j) da(i, j) += g(0, j);
        }
        return;
      }
      case Op::kSoftmaxRows: {
        // p = softmax(z / tau): dz = (g - <g, p>) * p / tau row-wise.
        const Matrix& p = n.value;
        Matrix& da = bump(n.args[0]);
        for (std::size_t i = 0; i < p.rows(); ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < p.cols(); ++j) dot += g(i, j) * p(i, j);
          for (std::size_t j = 0; j < p.cols(); ++j) {
            da(i, j) += (g(i, j) - dot) * p(i, j) / n.attr;
          }
        }
        return;
      }
      case Op::kRowNormalize: {
        // y = x / |x|: dx = (g - <g, y> y) / |x| row-wise.
        const Matrix& a = arg(n, 0);
        const Matrix& y = n.value;
        Matrix& da = bump(n.args[0]);
        for (std::size_t i = 0; i < a.rows(); ++i) {
          const double norm = detail::row_l2_norm(a, i);
          double dot = 0.0;
          for (std::size_t j = 0; j < a.cols(); ++j) dot += g(i, j) * y(i, j);
          for (std::size_t j = 0; j < a.cols(); ++j) {
            da(i, j) += (g(i, j) - dot * y(i, j)) / norm;
          }
        }
        return;
      }
      case Op::kClampUnit: {
        const Matrix& a = arg(n, 0);
        Matrix& da = bump(n.args[0]);
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (a[i] >= -1.0 && a[i] <= 1.0) da[i] += g[i];
        }
        return;
      }
      case Op::kTranspose: {
        accumulate(bump(n.args[0]), detail::transpose(g));
        return;
      }
      case Op::kGelu: {
        const Matrix& a = arg(n, 0);
        Matrix& da = bump(n.args[0]);
        for (std::size_t i = 0; i < g.size(); ++i) {
          da[i] += g[i] * gelu_derivative(a[i]);
        }
        return;
      }
      case Op::kLayerNormRows: {
        const Matrix& a = arg(n, 0);
        const Matrix& y = n.value;
        Matrix& da = bump(n.args[0]);
        const auto cols = static_cast<double>(a.cols());
        for (std::size_t i = 0; i < a.rows(); ++i) {
          double mean = 0.0;
          for (std::size_t j = 0; j < a.cols(); ++j) mean += a(i, j);
          mean /= cols;
          double var = 0.0;
          for (std::size_t j = 0; j < a.cols(); ++j) {
            const double d = a(i, j) - mean;
            var += d * d;
          }
          var /= cols;
          const double inv = 1.0 / std::sqrt(var + n.attr);
          double g_mean = 0.0, gy_mean = 0.0;
          for (std::size_t j = 0; j < a.cols(); ++j) {
            g_mean += g(i, j);
            gy_mean += g(i, j) * y(i, j);
          }
          g_mean /= cols;
          gy_mean /= cols;
          for (std::size_t j = 0; j < a.cols(); ++j) {
            da(i, j) += inv * (g(i, j) - g_mean - y(i, j) * gy_mean);
          }
        }
        return;
      }
      case Op::kConcatRows: {
        std::size_t r0 = 0;
        for (std::size_t p = 0; p < n.args.size(); ++p) {
          const Matrix& part = arg(n, p);
          Matrix& dp = bump(n.args[p]);
          for (std::size_t i = 0; i < part.rows(); ++i) {
            for (std::size_t j = 0; j < part.cols(); ++j) {
              dp(i, j) += g(r0 + i, j);
            }
          }
          r0 += part.rows();
        }
        return;
      }
    }
  }

  static void accumulate(Matrix& into, const Matrix& delta) {
    for (std::size_t i = 0; i < into.size(); ++i) into[i] += delta[i];
  }

  static void require_same_shape(const Matrix& a, const Matrix& b,
                                 const char* what) {
    if (!a.same_shape(b)) {
      throw ShapeError(std::string("tape ") + what + ": shapes disagree");
    }
  }

  std::vector<Node> nodes_;

  friend struct Var;
};

inline const Matrix& Var::value() const { return tape->value(*this); }

inline double Var::item() const {
  const Matrix& m = value();
  if (m.rows() != 1 || m.cols() != 1) {
    throw ShapeError("item: node is not 1x1");
  }
  return m(0, 0);
}

}  // namespace fuzzyalign
