#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "osr/error.hpp"
#include "osr/tensor.hpp"

namespace osr {

enum class Op {
  leaf,
  conv2d,
  maxpool2,
  relu,
  dense,
  matmul,
  gap,
  softmax_rows,
  l2norm,
  pairwise_sqdist,
  pick,
  rows,
  add,
  sub,
  mul,
  neg,
  scale,
  log_floored,
  sum_all,
  mean_all,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::conv2d: return "conv2d";
    case Op::maxpool2: return "maxpool2";
    case Op::relu: return "relu";
    case Op::dense: return "dense";
    case Op::matmul: return "matmul";
    case Op::gap: return "gap";
    case Op::softmax_rows: return "softmax_rows";
    case Op::l2norm: return "l2norm";
    case Op::pairwise_sqdist: return "pairwise_sqdist";
    case Op::pick: return "pick";
    case Op::rows: return "rows";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::neg: return "neg";
    case Op::scale: return "scale";
    case Op::log_floored: return "log_floored";
    case Op::sum_all: return "sum_all";
    case Op::mean_all: return "mean_all";
  }
  return "?";
}

template <class T>
class Graph;

// Lightweight handle to a node inside a Graph.
template <class T>
struct Value {
  Graph<T>* graph = nullptr;
  int id = -1;
};

// Reverse-mode tape over dense tensors.
//
// Nodes are appended in creation order (acyclic by construction) and each
// node's value is computed eagerly when it is created. forward() re-runs
// every non-leaf node in creation order, which is how new inputs set via
// set_value take effect. One backward pass is allowed per forward pass;
// gradients accumulate additively across fan-out.
template <class T>
class Graph {
public:
  Value<T> leaf(Tensor<T> t, std::string name = {}) {
    Node n;
    n.op = Op::leaf;
    n.requires_grad = t.requires_grad;
    n.out = std::move(t);
    n.name = std::move(name);
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  Value<T> constant(Tensor<T> t, std::string name = {}) {
    t.requires_grad = false;
    return leaf(std::move(t), std::move(name));
  }

  Value<T> constant_scalar(T v) { return constant(Tensor<T>::scalar(v)); }

  // Replaces a leaf's data; shapes must match. Call forward() afterwards.
  void set_value(Value<T> v, const Tensor<T>& t) {
    Node& n = node(v.id);
    if (n.op != Op::leaf) throw ConfigError("set_value: node " + std::to_string(v.id) + " is not a leaf");
    if (n.out.shape != t.shape) {
      throw ShapeError("set_value: node " + std::to_string(v.id) + " expects " +
                       shape_str(n.out.shape) + ", got " + shape_str(t.shape));
    }
    n.out.data = t.data;
  }

  void set_value(const std::string& name, const Tensor<T>& t) {
    set_value(find(name), t);
  }

  Value<T> find(const std::string& name) {
    for (size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].name == name) return {this, static_cast<int>(i)};
    }
    throw ConfigError("graph: no node named '" + name + "'");
  }

  // Re-evaluates all non-leaf nodes in creation order.
  void forward() {
    kink_distance_ = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].op != Op::leaf) eval_node(static_cast<int>(i));
    }
    ran_backward_ = false;
  }

  void forward(const std::vector<std::pair<std::string, Tensor<T>>>& inputs) {
    for (const auto& [name, t] : inputs) set_value(name, t);
    forward();
  }

  // Populates gradients of every requires_grad node reachable from `out`.
  void backward(Value<T> out) {
    const Node& o = node(out.id);
    if (o.out.size() != 1) {
      throw ConfigError("backward: output node " + std::to_string(out.id) + " is not scalar, shape " +
                        shape_str(o.out.shape));
    }
    if (ran_backward_) throw ConfigError("backward: called twice without a new forward pass");
    for (auto& n : nodes_) {
      n.grad.clear();
      n.out.grad.clear();
    }
    ensure_grad(out.id);
    node(out.id).grad[0] = T(1);
    for (int i = out.id; i >= 0; --i) {
      Node& n = node(i);
      if (n.grad.empty()) continue;
      if (n.op == Op::leaf) {
        if (n.requires_grad) n.out.grad = n.grad;
        continue;
      }
      backward_node(i);
    }
    ran_backward_ = true;
  }

  const Tensor<T>& value(Value<T> v) const { return node(v.id).out; }

  Tensor<T> grad(Value<T> v) const {
    const Node& n = node(v.id);
    if (n.grad.empty()) throw ConfigError("grad: node " + std::to_string(v.id) + " has no gradient");
    return Tensor<T>(n.out.shape, n.grad);
  }

  bool has_grad(Value<T> v) const { return !node(v.id).grad.empty(); }

  // Distance to the nearest ReLU/max-pool kink seen during the last forward.
  double kink_distance() const { return kink_distance_; }

  int node_count() const { return static_cast<int>(nodes_.size()); }

  Value<T> make(Op op, std::vector<int> in, T scalar = T(0), int i0 = 0, int i1 = 0,
                std::vector<int> idx = {}) {
    Node n;
    n.op = op;
    n.in = std::move(in);
    n.scalar = scalar;
    n.i0 = i0;
    n.i1 = i1;
    n.idx = std::move(idx);
    for (int i : n.in) {
      if (i < 0 || i >= static_cast<int>(nodes_.size())) {
        throw ConfigError("graph: input id out of range");
      }
      if (nodes_[i].requires_grad) n.requires_grad = true;
    }
    n.out = Tensor<T>::zeros(infer_shape(n));
    nodes_.push_back(std::move(n));
    const int id = static_cast<int>(nodes_.size()) - 1;
    eval_node(id);
    ran_backward_ = false;
    return {this, id};
  }

private:
  struct Node {
    Op op = Op::leaf;
    std::vector<int> in;
    std::string name;
    bool requires_grad = false;
    Tensor<T> out;
    std::vector<T> grad;
    T scalar{};            // scale factor / log floor
    int i0 = 0, i1 = 0;    // rows: begin,count; l2norm: axis
    std::vector<int> idx;  // pick columns; maxpool argmax (filled at eval)
    std::vector<T> cache;  // conv2d: im2col patches, batch-concatenated
  };

  std::vector<Node> nodes_;
  bool ran_backward_ = false;
  double kink_distance_ = std::numeric_limits<double>::infinity();

  Node& node(int id) { return nodes_.at(static_cast<size_t>(id)); }
  const Node& node(int id) const { return nodes_.at(static_cast<size_t>(id)); }

  [[noreturn]] void shape_fail(const Node& n, const std::string& what) const {
    throw ShapeError(std::string("node ") + std::to_string(nodes_.size()) + " (" + op_name(n.op) +
                     "): " + what);
  }

  const Tensor<T>& in_val(const Node& n, size_t slot) const { return node(n.in[slot]).out; }

  Shape infer_shape(const Node& n) const {
    switch (n.op) {
      case Op::leaf:
        return n.out.shape;
      case Op::conv2d: {
        const auto& x = in_val(n, 0);
        const auto& k = in_val(n, 1);
        const auto& b = in_val(n, 2);
        if (x.rank() != 4) shape_fail(n, "input must be [N,C,H,W], got " + shape_str(x.shape));
        if (k.rank() != 4) shape_fail(n, "kernel must be [F,C,k,k], got " + shape_str(k.shape));
        if (k.dim(2) != k.dim(3) || k.dim(2) % 2 == 0) {
          shape_fail(n, "kernel must be square with odd size, got " + shape_str(k.shape));
        }
        if (k.dim(1) != x.dim(1)) {
          shape_fail(n, "kernel channels " + shape_str(k.shape) + " do not match input " +
                            shape_str(x.shape));
        }
        if (b.rank() != 1 || b.dim(0) != k.dim(0)) {
          shape_fail(n, "bias must be [F]=" + std::to_string(k.dim(0)) + ", got " + shape_str(b.shape));
        }
        return {x.dim(0), k.dim(0), x.dim(2), x.dim(3)};
      }
      case Op::maxpool2: {
        const auto& x = in_val(n, 0);
        if (x.rank() != 4) shape_fail(n, "input must be [N,C,H,W], got " + shape_str(x.shape));
        if (x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0) {
          shape_fail(n, "spatial dims must be even, got " + shape_str(x.shape));
        }
        return {x.dim(0), x.dim(1), x.dim(2) / 2, x.dim(3) / 2};
      }
      case Op::relu:
      case Op::neg:
      case Op::scale:
      case Op::log_floored:
        return in_val(n, 0).shape;
      case Op::dense: {
        const auto& x = in_val(n, 0);
        const auto& w = in_val(n, 1);
        const auto& b = in_val(n, 2);
        if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0)) {
          shape_fail(n, "expected [N,D]x[D,M], got " + shape_str(x.shape) + " and " + shape_str(w.shape));
        }
        if (b.rank() != 1 || b.dim(0) != w.dim(1)) {
          shape_fail(n, "bias must be [M]=" + std::to_string(w.dim(1)) + ", got " + shape_str(b.shape));
        }
        return {x.dim(0), w.dim(1)};
      }
      case Op::matmul: {
        const auto& a = in_val(n, 0);
        const auto& b = in_val(n, 1);
        if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
          shape_fail(n, "expected [N,D]x[D,M], got " + shape_str(a.shape) + " and " + shape_str(b.shape));
        }
        return {a.dim(0), b.dim(1)};
      }
      case Op::gap: {
        const auto& x = in_val(n, 0);
        if (x.rank() != 4) shape_fail(n, "input must be [N,C,H,W], got " + shape_str(x.shape));
        return {x.dim(0), x.dim(1)};
      }
      case Op::softmax_rows: {
        const auto& x = in_val(n, 0);
        if (x.rank() != 2) shape_fail(n, "input must be 2-D, got " + shape_str(x.shape));
        return x.shape;
      }
      case Op::l2norm: {
        const auto& x = in_val(n, 0);
        if (x.rank() != 2) shape_fail(n, "input must be 2-D, got " + shape_str(x.shape));
        if (n.i0 != 0 && n.i0 != 1) shape_fail(n, "axis must be 0 or 1");
        return x.shape;
      }
      case Op::pairwise_sqdist: {
        const auto& a = in_val(n, 0);
        const auto& b = in_val(n, 1);
        if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
          shape_fail(n, "expected [N,D] and [K,D], got " + shape_str(a.shape) + " and " + shape_str(b.shape));
        }
        return {a.dim(0), b.dim(0)};
      }
      case Op::pick: {
        const auto& x = in_val(n, 0);
        if (x.rank() != 2) shape_fail(n, "input must be 2-D, got " + shape_str(x.shape));
        if (static_cast<int>(n.idx.size()) != x.dim(0)) {
          shape_fail(n, "need one column index per row");
        }
        for (int c : n.idx) {
          if (c < 0 || c >= x.dim(1)) shape_fail(n, "column index " + std::to_string(c) + " out of range");
        }
        return {x.dim(0)};
      }
      case Op::rows: {
        const auto& x = in_val(n, 0);
        if (x.rank() < 1) shape_fail(n, "input must have at least one axis");
        if (n.i0 < 0 || n.i1 <= 0 || n.i0 + n.i1 > x.dim(0)) {
          shape_fail(n, "row slice [" + std::to_string(n.i0) + "," + std::to_string(n.i0 + n.i1) +
                            ") out of range for " + shape_str(x.shape));
        }
        Shape s = x.shape;
        s[0] = n.i1;
        return s;
      }
      case Op::add:
      case Op::sub:
      case Op::mul: {
        const auto& a = in_val(n, 0);
        const auto& b = in_val(n, 1);
        if (a.shape != b.shape) {
          shape_fail(n, "operand shapes differ: " + shape_str(a.shape) + " vs " + shape_str(b.shape));
        }
        return a.shape;
      }
      case Op::sum_all:
      case Op::mean_all:
        return {1};
    }
    throw ConfigError("infer_shape: unhandled op");
  }

  void ensure_grad(int id) {
    Node& n = node(id);
    if (n.grad.size() != n.out.data.size()) n.grad.assign(n.out.data.size(), T(0));
  }

  void note_kink(double d) {
    if (d < kink_distance_) kink_distance_ = d;
  }

  void eval_node(int id) {
    Node& n = node(id);
    auto& out = n.out.data;
    switch (n.op) {
      case Op::leaf:
        break;
      case Op::relu: {
        const auto& x = in_val(n, 0).data;
        for (size_t e = 0; e < x.size(); ++e) {
          out[e] = x[e] > T(0) ? x[e] : T(0);
          note_kink(std::abs(static_cast<double>(x[e])));
        }
        break;
      }
      case Op::neg: {
        const auto& x = in_val(n, 0).data;
        for (size_t e = 0; e < x.size(); ++e) out[e] = -x[e];
        break;
      }
      case Op::scale: {
        const auto& x = in_val(n, 0).data;
        for (size_t e = 0; e < x.size(); ++e) out[e] = n.scalar * x[e];
        break;
      }
      case Op::log_floored: {
        const auto& x = in_val(n, 0).data;
        for (size_t e = 0; e < x.size(); ++e) {
          out[e] = std::log(x[e] > n.scalar ? x[e] : n.scalar);
        }
        break;
      }
      case Op::add: {
        const auto& a = in_val(n, 0).data;
        const auto& b = in_val(n, 1).data;
        for (size_t e = 0; e < a.size(); ++e) out[e] = a[e] + b[e];
        break;
      }
      case Op::sub: {
        const auto& a = in_val(n, 0).data;
        const auto& b = in_val(n, 1).data;
        for (size_t e = 0; e < a.size(); ++e) out[e] = a[e] - b[e];
        break;
      }
      case Op::mul: {
        const auto& a = in_val(n, 0).data;
        const auto& b = in_val(n, 1).data;
        for (size_t e = 0; e < a.size(); ++e) out[e] = a[e] * b[e];
        break;
      }
      case Op::sum_all: {
        const auto& x = in_val(n, 0).data;
        T acc = T(0);
        for (size_t e = 0; e < x.size(); ++e) acc += x[e];
        out[0] = acc;
        break;
      }
      case Op::mean_all: {
        const auto& x = in_val(n, 0).data;
        T acc = T(0);
        for (size_t e = 0; e < x.size(); ++e) acc += x[e];
        out[0] = acc / static_cast<T>(x.size());
        break;
      }
      case Op::rows: {
        const auto& x = in_val(n, 0);
        const std::int64_t stride = x.size() / x.dim(0);
        const auto* src = x.data.data() + static_cast<std::int64_t>(n.i0) * stride;
        std::copy(src, src + static_cast<std::int64_t>(n.i1) * stride, out.begin());
        break;
      }
      case Op::pick: {
        const auto& x = in_val(n, 0);
        for (int r = 0; r < x.dim(0); ++r) out[r] = x.at(r, n.idx[r]);
        break;
      }
      case Op::dense:
      case Op::matmul: {
        const auto& a = in_val(n, 0);
        const auto& b = in_val(n, 1);
        auto y = matrix_view(out, a.dim(0), b.dim(1));
        y.noalias() = matrix_view(a) * matrix_view(b);
        if (n.op == Op::dense) {
          const auto& bias = in_val(n, 2).data;
          for (int r = 0; r < a.dim(0); ++r) {
            for (int c = 0; c < b.dim(1); ++c) out[static_cast<size_t>(r) * b.dim(1) + c] += bias[c];
          }
        }
        break;
      }
      case Op::gap: {
        const auto& x = in_val(n, 0);
        const int N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
        for (int i = 0; i < N * C; ++i) {
          T acc = T(0);
          const T* p = x.data.data() + static_cast<std::int64_t>(i) * HW;
          for (int e = 0; e < HW; ++e) acc += p[e];
          out[i] = acc / static_cast<T>(HW);
        }
        break;
      }
      case Op::softmax_rows: {
        const auto& x = in_val(n, 0);
        const int R = x.dim(0), C = x.dim(1);
        for (int r = 0; r < R; ++r) {
          const T* xr = x.data.data() + static_cast<std::int64_t>(r) * C;
          T* yr = out.data() + static_cast<std::int64_t>(r) * C;
          T m = xr[0];
          for (int c = 1; c < C; ++c) m = std::max(m, xr[c]);
          T s = T(0);
          for (int c = 0; c < C; ++c) {
            yr[c] = std::exp(xr[c] - m);
            s += yr[c];
          }
          for (int c = 0; c < C; ++c) yr[c] /= s;
        }
        break;
      }
      case Op::l2norm: {
        const auto& x = in_val(n, 0);
        const int R = x.dim(0), C = x.dim(1);
        if (n.i0 == 1) {
          for (int r = 0; r < R; ++r) {
            T s = T(0);
            for (int c = 0; c < C; ++c) s += x.at(r, c) * x.at(r, c);
            const T nn = std::sqrt(s);
            if (nn == T(0)) {
              throw NumericError("node " + std::to_string(id) + " (l2norm): zero-norm row " +
                                 std::to_string(r));
            }
            for (int c = 0; c < C; ++c) out[static_cast<size_t>(r) * C + c] = x.at(r, c) / nn;
          }
        } else {
          for (int c = 0; c < C; ++c) {
            T s = T(0);
            for (int r = 0; r < R; ++r) s += x.at(r, c) * x.at(r, c);
            const T nn = std::sqrt(s);
            if (nn == T(0)) {
              throw NumericError("node " + std::to_string(id) + " (l2norm): zero-norm column " +
                                 std::to_string(c));
            }
            for (int r = 0; r < R; ++r) out[static_cast<size_t>(r) * C + c] = x.at(r, c) / nn;
          }
        }
        break;
      }
      case Op::pairwise_sqdist: {
        const auto& a = in_val(n, 0);
        const auto& b = in_val(n, 1);
        const int N = a.dim(0), K = b.dim(0), D = a.dim(1);
        for (int i = 0; i < N; ++i) {
          for (int j = 0; j < K; ++j) {
            T acc = T(0);
            for (int d = 0; d < D; ++d) {
              const T diff = a.at(i, d) - b.at(j, d);
              acc += diff * diff;
            }
            out[static_cast<size_t>(i) * K + j] = acc;
          }
        }
        break;
      }
      case Op::maxpool2: {
        const auto& x = in_val(n, 0);
        const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
        const int OH = H / 2, OW = W / 2;
        n.idx.assign(static_cast<size_t>(N) * C * OH * OW, 0);
        size_t o = 0;
        for (int p = 0; p < N * C; ++p) {
          const T* plane = x.data.data() + static_cast<std::int64_t>(p) * H * W;
          for (int oh = 0; oh < OH; ++oh) {
            for (int ow = 0; ow < OW; ++ow, ++o) {
              // First row-major maximum wins on ties.
              T best = plane[(2 * oh) * W + 2 * ow];
              T second = -std::numeric_limits<T>::infinity();
              int best_idx = (2 * oh) * W + 2 * ow;
              for (int di = 0; di < 2; ++di) {
                for (int dj = 0; dj < 2; ++dj) {
                  if (di == 0 && dj == 0) continue;
                  const int ii = (2 * oh + di) * W + 2 * ow + dj;
                  const T v = plane[ii];
                  if (v > best) {
                    second = best;
                    best = v;
                    best_idx = ii;
                  } else if (v > second) {
                    second = v;
                  }
                }
              }
              out[o] = best;
              n.idx[o] = best_idx;
              note_kink(static_cast<double>(best - second));
            }
          }
        }
        break;
      }
      case Op::conv2d: {
        const auto& x = in_val(n, 0);
        const auto& k = in_val(n, 1);
        const auto& bias = in_val(n, 2).data;
        const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
        const int F = k.dim(0), R = k.dim(2), P = R / 2;
        const int HW = H * W, CRR = C * R * R;
        const size_t col_sz = static_cast<size_t>(CRR) * HW;
        // Patch matrices are kept per-image when gradients are needed,
        // otherwise a single scratch buffer is reused across the batch.
        n.cache.assign(n.requires_grad ? col_sz * N : col_sz, T(0));
        auto kmap = Eigen::Map<const MatrixRM<T>>(k.data.data(), F, CRR);
        for (int img = 0; img < N; ++img) {
          T* col = n.cache.data() + (n.requires_grad ? col_sz * img : 0);
          im2col(x.data.data() + static_cast<std::int64_t>(img) * C * HW, C, H, W, R, P, col);
          auto colmap = Eigen::Map<const MatrixRM<T>>(col, CRR, HW);
          auto ymap = Eigen::Map<MatrixRM<T>>(out.data() + static_cast<std::int64_t>(img) * F * HW, F, HW);
          ymap.noalias() = kmap * colmap;
          for (int f = 0; f < F; ++f) ymap.row(f).array() += bias[f];
        }
        break;
      }
    }
    if (!all_finite(out)) {
      throw NumericError("forward: non-finite value at node " + std::to_string(id) + " (" +
                         op_name(n.op) + ")");
    }
  }

  static void im2col(const T* x, int C, int H, int W, int R, int P, T* col) {
    // col is row-major [C*R*R, H*W]; zero padding outside the image.
    size_t r = 0;
    for (int c = 0; c < C; ++c) {
      const T* plane = x + static_cast<std::int64_t>(c) * H * W;
      for (int di = 0; di < R; ++di) {
        for (int dj = 0; dj < R; ++dj, ++r) {
          T* dst = col + r * static_cast<size_t>(H) * W;
          for (int oh = 0; oh < H; ++oh) {
            const int ih = oh + di - P;
            if (ih < 0 || ih >= H) {
              for (int ow = 0; ow < W; ++ow) dst[oh * W + ow] = T(0);
              continue;
            }
            for (int ow = 0; ow < W; ++ow) {
              const int iw = ow + dj - P;
              dst[oh * W + ow] = (iw < 0 || iw >= W) ? T(0) : plane[ih * W + iw];
            }
          }
        }
      }
    }
  }

  static void col2im_add(const T* col, int C, int H, int W, int R, int P, T* dx) {
    size_t r = 0;
    for (int c = 0; c < C; ++c) {
      T* plane = dx + static_cast<std::int64_t>(c) * H * W;
      for (int di = 0; di < R; ++di) {
        for (int dj = 0; dj < R; ++dj, ++r) {
          const T* src = col + r * static_cast<size_t>(H) * W;
          for (int oh = 0; oh < H; ++oh) {
            const int ih = oh + di - P;
            if (ih < 0 || ih >= H) continue;
            for (int ow = 0; ow < W; ++ow) {
              const int iw = ow + dj - P;
              if (iw >= 0 && iw < W) plane[ih * W + iw] += src[oh * W + ow];
            }
          }
        }
      }
    }
  }

  bool wants_grad(const Node& n, size_t slot) const { return node(n.in[slot]).requires_grad; }

  std::vector<T>* grad_buf(Node& n, size_t slot) {
    if (!wants_grad(n, slot)) return nullptr;
    ensure_grad(n.in[slot]);
    return &node(n.in[slot]).grad;
  }

  void backward_node(int id) {
    Node& n = node(id);
    const auto& gy = n.grad;
    switch (n.op) {
      case Op::leaf:
        break;
      case Op::relu: {
        if (auto* gx = grad_buf(n, 0)) {
          const auto& x = in_val(n, 0).data;
          for (size_t e = 0; e < x.size(); ++e) {
            if (x[e] > T(0)) (*gx)[e] += gy[e];
          }
        }
        break;
      }
      case Op::neg: {
        if (auto* gx = grad_buf(n, 0)) {
          for (size_t e = 0; e < gy.size(); ++e) (*gx)[e] -= gy[e];
        }
        break;
      }
      case Op::scale: {
        if (auto* gx = grad_buf(n, 0)) {
          for (size_t e = 0; e < gy.size(); ++e) (*gx)[e] += n.scalar * gy[e];
        }
        break;
      }
      case Op::log_floored: {
        if (auto* gx = grad_buf(n, 0)) {
          const auto& x = in_val(n, 0).data;
          for (size_t e = 0; e < x.size(); ++e) {
            if (x[e] > n.scalar) (*gx)[e] += gy[e] / x[e];
          }
        }
        break;
      }
      case Op::add: {
        if (auto* ga = grad_buf(n, 0)) {
          for (size_t e = 0; e < gy.size(); ++e) (*ga)[e] += gy[e];
        }
        if (auto* gb = grad_buf(n, 1)) {
          for (size_t e = 0; e < gy.size(); ++e) (*gb)[e] += gy[e];
        }
        break;
      }
      case Op::sub: {
        if (auto* ga = grad_buf(n, 0)) {
          for (size_t e = 0; e < gy.size(); ++e) (*ga)[e] += gy[e];
        }
        if (auto* gb = grad_buf(n, 1)) {
          for (size_t e = 0; e < gy.size(); ++e) (*gb)[e] -= gy[e];
        }
        break;
      }
      case Op::mul: {
        const auto& a = in_val(n, 0).data;
        const auto& b = in_val(n, 1).data;
        if (auto* ga = grad_buf(n, 0)) {
          for (size_t e = 0; e < gy.size(); ++e) (*ga)[e] += gy[e] * b[e];
        }
        if (auto* gb = grad_buf(n, 1)) {
          for (size_t e = 0; e < gy.size(); ++e) (*gb)[e] += gy[e] * a[e];
        }
        break;
      }
      case Op::sum_all: {
        if (auto* gx = grad_buf(n, 0)) {
          for (size_t e = 0; e < gx->size(); ++e) (*gx)[e] += gy[0];
        }
        break;
      }
      case Op::mean_all: {
        if (auto* gx = grad_buf(n, 0)) {
          const T g = gy[0] / static_cast<T>(gx->size());
          for (size_t e = 0; e < gx->size(); ++e) (*gx)[e] += g;
        }
        break;
      }
      case Op::rows: {
        if (auto* gx = grad_buf(n, 0)) {
          const auto& x = in_val(n, 0);
          const std::int64_t stride = x.size() / x.dim(0);
          T* dst = gx->data() + static_cast<std::int64_t>(n.i0) * stride;
          for (size_t e = 0; e < gy.size(); ++e) dst[e] += gy[e];
        }
        break;
      }
      case Op::pick: {
        if (auto* gx = grad_buf(n, 0)) {
          const auto& x = in_val(n, 0);
          for (int r = 0; r < x.dim(0); ++r) {
            (*gx)[static_cast<size_t>(r) * x.dim(1) + n.idx[r]] += gy[r];
          }
        }
        break;
      }
      case Op::dense:
      case Op::matmul: {
        const auto& a = in_val(n, 0);
        const auto& b = in_val(n, 1);
        auto gymap = matrix_view(gy, a.dim(0), b.dim(1));
        if (auto* ga = grad_buf(n, 0)) {
          matrix_view(*ga, a.dim(0), a.dim(1)).noalias() += gymap * matrix_view(b).transpose();
        }
        if (auto* gb = grad_buf(n, 1)) {
          matrix_view(*gb, b.dim(0), b.dim(1)).noalias() += matrix_view(a).transpose() * gymap;
        }
        if (n.op == Op::dense) {
          if (auto* gbias = grad_buf(n, 2)) {
            for (int r = 0; r < a.dim(0); ++r) {
              for (int c = 0; c < b.dim(1); ++c) (*gbias)[c] += gy[static_cast<size_t>(r) * b.dim(1) + c];
            }
          }
        }
        break;
      }
      case Op::gap: {
        if (auto* gx = grad_buf(n, 0)) {
          const auto& x = in_val(n, 0);
          const int HW = x.dim(2) * x.dim(3);
          for (int i = 0; i < x.dim(0) * x.dim(1); ++i) {
            const T g = gy[i] / static_cast<T>(HW);
            T* p = gx->data() + static_cast<std::int64_t>(i) * HW;
            for (int e = 0; e < HW; ++e) p[e] += g;
          }
        }
        break;
      }
      case Op::softmax_rows: {
        if (auto* gx = grad_buf(n, 0)) {
          const auto& y = n.out;
          const int R = y.dim(0), C = y.dim(1);
          for (int r = 0; r < R; ++r) {
            const T* yr = y.data.data() + static_cast<std::int64_t>(r) * C;
            const T* gr = gy.data() + static_cast<std::int64_t>(r) * C;
            T dot = T(0);
            for (int c = 0; c < C; ++c) dot += gr[c] * yr[c];
            T* dst = gx->data() + static_cast<std::int64_t>(r) * C;
            for (int c = 0; c < C; ++c) dst[c] += yr[c] * (gr[c] - dot);
          }
        }
        break;
      }
      case Op::l2norm: {
        if (auto* gx = grad_buf(n, 0)) {
          const auto& x = in_val(n, 0);
          const auto& y = n.out;
          const int R = x.dim(0), C = x.dim(1);
          if (n.i0 == 1) {
            for (int r = 0; r < R; ++r) {
              T nn = T(0), dot = T(0);
              for (int c = 0; c < C; ++c) nn += x.at(r, c) * x.at(r, c);
              nn = std::sqrt(nn);
              for (int c = 0; c < C; ++c) dot += gy[static_cast<size_t>(r) * C + c] * y.at(r, c);
              for (int c = 0; c < C; ++c) {
                (*gx)[static_cast<size_t>(r) * C + c] +=
                    (gy[static_cast<size_t>(r) * C + c] - y.at(r, c) * dot) / nn;
              }
            }
          } else {
            for (int c = 0; c < C; ++c) {
              T nn = T(0), dot = T(0);
              for (int r = 0; r < R; ++r) nn += x.at(r, c) * x.at(r, c);
              nn = std::sqrt(nn);
              for (int r = 0; r < R; ++r) dot += gy[static_cast<size_t>(r) * C + c] * y.at(r, c);
              for (int r = 0; r < R; ++r) {
                (*gx)[static_cast<size_t>(r) * C + c] +=
                    (gy[static_cast<size_t>(r) * C + c] - y.at(r, c) * dot) / nn;
              }
            }
          }
        }
        break;
      }
      case Op::pairwise_sqdist: {
        const auto& a = in_val(n, 0);
        const auto& b = in_val(n, 1);
        const int N = a.dim(0), K = b.dim(0), D = a.dim(1);
        auto* ga = grad_buf(n, 0);
        auto* gb = grad_buf(n, 1);
        for (int i = 0; i < N; ++i) {
          for (int j = 0; j < K; ++j) {
            const T g2 = T(2) * gy[static_cast<size_t>(i) * K + j];
            if (g2 == T(0)) continue;
            for (int d = 0; d < D; ++d) {
              const T diff = a.at(i, d) - b.at(j, d);
              if (ga) (*ga)[static_cast<size_t>(i) * D + d] += g2 * diff;
              if (gb) (*gb)[static_cast<size_t>(j) * D + d] -= g2 * diff;
            }
          }
        }
        break;
      }
      case Op::maxpool2: {
        if (auto* gx = grad_buf(n, 0)) {
          const auto& x = in_val(n, 0);
          const int H = x.dim(2), W = x.dim(3);
          const int OHW = (H / 2) * (W / 2);
          for (int p = 0; p < x.dim(0) * x.dim(1); ++p) {
            T* plane = gx->data() + static_cast<std::int64_t>(p) * H * W;
            const T* g = gy.data() + static_cast<std::int64_t>(p) * OHW;
            const int* am = n.idx.data() + static_cast<std::int64_t>(p) * OHW;
            for (int e = 0; e < OHW; ++e) plane[am[e]] += g[e];
          }
        }
        break;
      }
      case Op::conv2d: {
        const auto& x = in_val(n, 0);
        const auto& k = in_val(n, 1);
        const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
        const int F = k.dim(0), R = k.dim(2), P = R / 2;
        const int HW = H * W, CRR = C * R * R;
        const size_t col_sz = static_cast<size_t>(CRR) * HW;
        auto* gx = grad_buf(n, 0);
        auto* gk = grad_buf(n, 1);
        auto* gbias = grad_buf(n, 2);
        auto kmap = Eigen::Map<const MatrixRM<T>>(k.data.data(), F, CRR);
        std::vector<T> dcol(gx ? col_sz : 0);
        for (int img = 0; img < N; ++img) {
          auto gymap = Eigen::Map<const MatrixRM<T>>(gy.data() + static_cast<std::int64_t>(img) * F * HW,
                                                     F, HW);
          const T* col = n.cache.data() + col_sz * img;
          auto colmap = Eigen::Map<const MatrixRM<T>>(col, CRR, HW);
          if (gk) {
            Eigen::Map<MatrixRM<T>>(gk->data(), F, CRR).noalias() += gymap * colmap.transpose();
          }
          if (gbias) {
            for (int f = 0; f < F; ++f) (*gbias)[f] += gymap.row(f).sum();
          }
          if (gx) {
            Eigen::Map<MatrixRM<T>> dcolmap(dcol.data(), CRR, HW);
            dcolmap.noalias() = kmap.transpose() * gymap;
            col2im_add(dcol.data(), C, H, W, R, P, gx->data() + static_cast<std::int64_t>(img) * C * HW);
          }
        }
        break;
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Expression-style free functions over graph values.
// ---------------------------------------------------------------------------

template <class T>
Value<T> conv2d(Value<T> x, Value<T> kernel, Value<T> bias) {
  return x.graph->make(Op::conv2d, {x.id, kernel.id, bias.id});
}

template <class T>
Value<T> maxpool2(Value<T> x) {
  return x.graph->make(Op::maxpool2, {x.id});
}

template <class T>
Value<T> relu(Value<T> x) {
  return x.graph->make(Op::relu, {x.id});
}

template <class T>
Value<T> dense(Value<T> x, Value<T> w, Value<T> b) {
  return x.graph->make(Op::dense, {x.id, w.id, b.id});
}

template <class T>
Value<T> matmul(Value<T> a, Value<T> b) {
  return a.graph->make(Op::matmul, {a.id, b.id});
}

template <class T>
Value<T> global_avg_pool(Value<T> x) {
  return x.graph->make(Op::gap, {x.id});
}

template <class T>
Value<T> softmax_rows(Value<T> x) {
  return x.graph->make(Op::softmax_rows, {x.id});
}

template <class T>
Value<T> l2_normalize(Value<T> x, int axis = 1) {
  return x.graph->make(Op::l2norm, {x.id}, T(0), axis);
}

template <class T>
Value<T> pairwise_sqdist(Value<T> a, Value<T> b) {
  return a.graph->make(Op::pairwise_sqdist, {a.id, b.id});
}

template <class T>
Value<T> pick(Value<T> x, std::vector<int> cols) {
  return x.graph->make(Op::pick, {x.id}, T(0), 0, 0, std::move(cols));
}

template <class T>
Value<T> rows(Value<T> x, int begin, int count) {
  return x.graph->make(Op::rows, {x.id}, T(0), begin, count);
}

template <class T>
Value<T> add(Value<T> a, Value<T> b) {
  return a.graph->make(Op::add, {a.id, b.id});
}

template <class T>
Value<T> sub(Value<T> a, Value<T> b) {
  return a.graph->make(Op::sub, {a.id, b.id});
}

template <class T>
Value<T> mul(Value<T> a, Value<T> b) {
  return a.graph->make(Op::mul, {a.id, b.id});
}

template <class T>
Value<T> neg(Value<T> x) {
  return x.graph->make(Op::neg, {x.id});
}

template <class T>
Value<T> scale(Value<T> x, T factor) {
  return x.graph->make(Op::scale, {x.id}, factor);
}

// log(max(x, floor)); the floor keeps losses finite at zero probabilities.
template <class T>
Value<T> log_floored(Value<T> x, T floor = T(1e-12)) {
  return x.graph->make(Op::log_floored, {x.id}, floor);
}

template <class T>
Value<T> sum(Value<T> x) {
  return x.graph->make(Op::sum_all, {x.id});
}

template <class T>
Value<T> mean(Value<T> x) {
  return x.graph->make(Op::mean_all, {x.id});
}

template <class T>
T scalar_of(Value<T> v) {
  const Tensor<T>& t = v.graph->value(v);
  if (t.size() != 1) throw ConfigError("scalar_of: node is not scalar");
  return t.data[0];
}

}  // namespace osr
