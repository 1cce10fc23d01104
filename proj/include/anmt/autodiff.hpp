#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "anmt/tensor.hpp"

namespace anmt {

/// A named trainable tensor together with its gradient buffer and ADAM
/// moment estimates. All four tensors are shape-equal for the lifetime of
/// the parameter.
template <typename Real>
struct Parameter {
  std::string name;
  Tensor<Real> value;
  Tensor<Real> grad;
  Tensor<Real> adam_m;
  Tensor<Real> adam_v;

  Parameter(std::string n, Tensor<Real> v)
      : name(std::move(n)),
        value(std::move(v)),
        grad(value.shape()),
        adam_m(value.shape()),
        adam_v(value.shape()) {}

  void zero_grad() { grad.fill(Real(0)); }
};

/// Owns parameters in a stable registration order; that order is also the
/// checkpoint serialization order.
template <typename Real>
class ParameterSet {
 public:
  Parameter<Real>* add(std::string name, Tensor<Real> value) {
    for (const auto& p : params_)
      if (p->name == name) throw std::invalid_argument("duplicate parameter name: " + name);
    params_.push_back(std::make_unique<Parameter<Real>>(std::move(name), std::move(value)));
    return params_.back().get();
  }

  Parameter<Real>* find(const std::string& name) const {
    for (const auto& p : params_)
      if (p->name == name) return p.get();
    return nullptr;
  }

  size_t size() const { return params_.size(); }
  Parameter<Real>* operator[](size_t i) const { return params_[i].get(); }

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  long scalar_count() const {
    long n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
  }

  void zero_grads() {
    for (const auto& p : params_) p->zero_grad();
  }

 private:
  std::vector<std::unique_ptr<Parameter<Real>>> params_;
};

/// Handle into a Graph's tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode tape. Each op appends a node recording its inputs; backward
/// walks the tape in reverse accumulating gradients into node buffers and,
/// for leaves, into the bound Parameter's grad tensor.
template <typename Real>
class Graph {
  enum class Op {
    kLeaf,        // parameter leaf (param != nullptr) or constant input
    kLookupRow,   // row aux_int of matrix a
    kMatVec,      // a[m x n] * b[n]
    kAffine,      // a[m x n] * b[n] + c[m]
    kAdd,         // a + b elementwise
    kMul,         // a * b elementwise
    kTanh,
    kSigmoid,
    kConcat,       // [a; b]
    kDot,          // scalar a.b
    kScale,        // aux_real * a
    kPack,         // list of scalars -> vector
    kSoftmax,      // stable softmax of a
    kWeightedSum,  // sum_i a_list[i] * weights[a], states in list
    kDropout,      // inverted dropout, payload holds the scaled mask
    kAddN,         // sum of scalars in list
    kCrossEntropy  // -log softmax(a)[aux_int]; payload caches the probs
  };

  struct Node {
    Op op;
    int a = -1, b = -1, c = -1;
    std::vector<int> list;
    int aux_int = -1;
    Real aux_real = Real(0);
    Parameter<Real>* param = nullptr;
    Tensor<Real> value;
    Tensor<Real> payload;
    Tensor<Real> grad;
    bool grad_live = false;

    explicit Node(Op o, int a_in = -1, int b_in = -1, int c_in = -1)
        : op(o), a(a_in), b(b_in), c(c_in) {}
  };

 public:
  const Tensor<Real>& value(Var v) const { return nodes_[v.id].value; }
  const Tensor<Real>& grad(Var v) const { return nodes_[v.id].grad; }
  long size(Var v) const { return nodes_[v.id].value.size(); }
  size_t node_count() const { return nodes_.size(); }

  /// Leaf bound to a parameter. One node per parameter per graph; repeated
  /// requests return the cached handle, so the value is copied once and the
  /// gradient is accumulated once.
  Var leaf(Parameter<Real>* p) {
    auto it = leaf_cache_.find(p);
    if (it != leaf_cache_.end()) return Var{it->second};
    Node n{Op::kLeaf};
    n.param = p;
    n.value = p->value;
    const Var v = push(std::move(n));
    leaf_cache_.emplace(p, v.id);
    return v;
  }

  Var input(Tensor<Real> t) {
    Node n{Op::kLeaf};
    n.value = std::move(t);
    return push(std::move(n));
  }

  Var zeros(long size) { return input(Tensor<Real>(Shape{size})); }

  Var lookup_row(Var matrix, long row) {
    const Tensor<Real>& m = nodes_[matrix.id].value;
    if (m.shape().size() != 2 || row < 0 || row >= m.rows())
      throw std::invalid_argument("lookup_row: row " + std::to_string(row) + " out of range for " +
                                  shape_to_string(m.shape()));
    Node n{Op::kLookupRow, matrix.id};
    n.aux_int = static_cast<int>(row);
    n.value = Tensor<Real>(Shape{m.cols()});
    for (long j = 0; j < m.cols(); ++j) n.value[j] = m.at(row, j);
    return push(std::move(n));
  }

  Var matvec(Var w, Var x) {
    const Tensor<Real>& W = nodes_[w.id].value;
    const Tensor<Real>& X = nodes_[x.id].value;
    if (W.shape().size() != 2 || W.cols() != X.size())
      throw std::invalid_argument("matvec shape mismatch: " + shape_to_string(W.shape()) + " vs " +
                                  shape_to_string(X.shape()));
    Node n{Op::kMatVec, w.id, x.id};
    n.value = Tensor<Real>(Shape{W.rows()});
    for (long i = 0; i < W.rows(); ++i) {
      Real acc = 0;
      for (long j = 0; j < W.cols(); ++j) acc += W.at(i, j) * X[j];
      n.value[i] = acc;
    }
    return push(std::move(n));
  }

  /// y = W x + b
  Var affine(Var w, Var x, Var bias) {
    const Tensor<Real>& W = nodes_[w.id].value;
    const Tensor<Real>& X = nodes_[x.id].value;
    const Tensor<Real>& B = nodes_[bias.id].value;
    if (W.shape().size() != 2 || W.cols() != X.size() || W.rows() != B.size())
      throw std::invalid_argument("affine shape mismatch: W " + shape_to_string(W.shape()) + ", x " +
                                  shape_to_string(X.shape()) + ", b " + shape_to_string(B.shape()));
    Node n{Op::kAffine, w.id, x.id, bias.id};
    n.value = Tensor<Real>(Shape{W.rows()});
    for (long i = 0; i < W.rows(); ++i) {
      Real acc = B[i];
      for (long j = 0; j < W.cols(); ++j) acc += W.at(i, j) * X[j];
      n.value[i] = acc;
    }
    return push(std::move(n));
  }

  Var add(Var a, Var b) {
    check_same(a, b, "add");
    Node n{Op::kAdd, a.id, b.id};
    n.value = nodes_[a.id].value;
    const Tensor<Real>& B = nodes_[b.id].value;
    for (long i = 0; i < n.value.size(); ++i) n.value[i] += B[i];
    return push(std::move(n));
  }

  Var mul(Var a, Var b) {
    check_same(a, b, "mul");
    Node n{Op::kMul, a.id, b.id};
    n.value = nodes_[a.id].value;
    const Tensor<Real>& B = nodes_[b.id].value;
    for (long i = 0; i < n.value.size(); ++i) n.value[i] *= B[i];
    return push(std::move(n));
  }

  Var tanh(Var a) {
    Node n{Op::kTanh, a.id};
    n.value = nodes_[a.id].value;
    for (long i = 0; i < n.value.size(); ++i) n.value[i] = std::tanh(n.value[i]);
    return push(std::move(n));
  }

  Var sigmoid(Var a) {
    Node n{Op::kSigmoid, a.id};
    n.value = nodes_[a.id].value;
    for (long i = 0; i < n.value.size(); ++i)
      n.value[i] = Real(1) / (Real(1) + std::exp(-n.value[i]));
    return push(std::move(n));
  }

  Var concat(Var a, Var b) {
    const Tensor<Real>& A = nodes_[a.id].value;
    const Tensor<Real>& B = nodes_[b.id].value;
    Node n{Op::kConcat, a.id, b.id};
    n.value = Tensor<Real>(Shape{A.size() + B.size()});
    for (long i = 0; i < A.size(); ++i) n.value[i] = A[i];
    for (long i = 0; i < B.size(); ++i) n.value[A.size() + i] = B[i];
    return push(std::move(n));
  }

  Var dot(Var a, Var b) {
    check_same(a, b, "dot");
    Node n{Op::kDot, a.id, b.id};
    const Tensor<Real>& A = nodes_[a.id].value;
    const Tensor<Real>& B = nodes_[b.id].value;
    Real acc = 0;
    for (long i = 0; i < A.size(); ++i) acc += A[i] * B[i];
    n.value = Tensor<Real>(Shape{1});
    n.value[0] = acc;
    return push(std::move(n));
  }

  Var scale(Var a, Real s) {
    Node n{Op::kScale, a.id};
    n.aux_real = s;
    n.value = nodes_[a.id].value;
    for (long i = 0; i < n.value.size(); ++i) n.value[i] *= s;
    return push(std::move(n));
  }

  /// Packs k scalar nodes into one [k] vector node.
  Var pack(const std::vector<Var>& scalars) {
    Node n{Op::kPack};
    n.value = Tensor<Real>(Shape{static_cast<long>(scalars.size())});
    n.list.reserve(scalars.size());
    for (size_t i = 0; i < scalars.size(); ++i) {
      if (nodes_[scalars[i].id].value.size() != 1)
        throw std::invalid_argument("pack expects scalar inputs");
      n.value[static_cast<long>(i)] = nodes_[scalars[i].id].value[0];
      n.list.push_back(scalars[i].id);
    }
    return push(std::move(n));
  }

  Var softmax(Var a) {
    Node n{Op::kSoftmax, a.id};
    n.value = softmax_stable(nodes_[a.id].value);
    return push(std::move(n));
  }

  /// c = sum_i weights[i] * states[i]
  Var weighted_sum(const std::vector<Var>& states, Var weights) {
    const Tensor<Real>& W = nodes_[weights.id].value;
    if (static_cast<long>(states.size()) != W.size())
      throw std::invalid_argument("weighted_sum: " + std::to_string(states.size()) + " states vs " +
                                  std::to_string(W.size()) + " weights");
    if (states.empty()) throw std::invalid_argument("weighted_sum over empty set");
    Node n{Op::kWeightedSum, -1, weights.id};
    const long dim = nodes_[states[0].id].value.size();
    n.value = Tensor<Real>(Shape{dim});
    n.list.reserve(states.size());
    for (size_t i = 0; i < states.size(); ++i) {
      const Tensor<Real>& S = nodes_[states[i].id].value;
      if (S.size() != dim) throw std::invalid_argument("weighted_sum: state dimension mismatch");
      for (long j = 0; j < dim; ++j) n.value[j] += W[static_cast<long>(i)] * S[j];
      n.list.push_back(states[i].id);
    }
    return push(std::move(n));
  }

  Var dropout(Var a, Real rate, bool training, std::mt19937_64* rng) {
    if (rate < Real(0) || rate >= Real(1)) throw std::invalid_argument("dropout rate must be in [0,1)");
    if (!training || rate == Real(0)) return a;
    if (!rng) throw std::invalid_argument("dropout in training mode requires an rng");
    Node n{Op::kDropout, a.id};
    const Tensor<Real>& A = nodes_[a.id].value;
    n.payload = Tensor<Real>(A.shape());
    n.value = Tensor<Real>(A.shape());
    const Real keep_scale = Real(1) / (Real(1) - rate);
    for (long i = 0; i < A.size(); ++i) {
      n.payload[i] = unit_uniform(*rng) >= static_cast<double>(rate) ? keep_scale : Real(0);
      n.value[i] = A[i] * n.payload[i];
    }
    return push(std::move(n));
  }

  Var add_n(const std::vector<Var>& scalars) {
    if (scalars.empty()) throw std::invalid_argument("add_n of nothing");
    Node n{Op::kAddN};
    Real acc = 0;
    n.list.reserve(scalars.size());
    for (Var v : scalars) {
      if (nodes_[v.id].value.size() != 1) throw std::invalid_argument("add_n expects scalar inputs");
      acc += nodes_[v.id].value[0];
      n.list.push_back(v.id);
    }
    n.value = Tensor<Real>(Shape{1});
    n.value[0] = acc;
    return push(std::move(n));
  }

  /// -log softmax(logits)[target], computed via log-sum-exp.
  Var cross_entropy(Var logits, long target) {
    const Tensor<Real>& L = nodes_[logits.id].value;
    if (target < 0 || target >= L.size())
      throw std::invalid_argument("cross_entropy target out of range");
    Node n{Op::kCrossEntropy, logits.id};
    n.aux_int = static_cast<int>(target);
    Real mx = L[0];
    for (long i = 1; i < L.size(); ++i) mx = std::max(mx, L[i]);
    Real z = 0;
    for (long i = 0; i < L.size(); ++i) z += std::exp(L[i] - mx);
    n.payload = Tensor<Real>(L.shape());
    for (long i = 0; i < L.size(); ++i) n.payload[i] = std::exp(L[i] - mx) / z;
    n.value = Tensor<Real>(Shape{1});
    n.value[0] = -(L[target] - mx - std::log(z));
    return push(std::move(n));
  }

  /// Accumulates d(seed * node)/d(leaf) into every reachable parameter's
  /// grad tensor. May be called once per graph.
  void backward(Var loss, Real seed = Real(1)) {
    if (nodes_[loss.id].value.size() != 1)
      throw std::invalid_argument("backward requires a scalar loss node");
    ensure_grad(loss.id);
    nodes_[loss.id].grad[0] = seed;
    for (int id = loss.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.grad_live) continue;
      step_backward(n);
    }
  }

 private:
  std::vector<Node> nodes_;
  std::unordered_map<Parameter<Real>*, int> leaf_cache_;

  Var push(Node&& n) {
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size() - 1)};
  }

  void check_same(Var a, Var b, const char* what) const {
    if (!nodes_[a.id].value.same_shape(nodes_[b.id].value))
      throw std::invalid_argument(std::string(what) + " shape mismatch: " +
                                  shape_to_string(nodes_[a.id].value.shape()) + " vs " +
                                  shape_to_string(nodes_[b.id].value.shape()));
  }

  Tensor<Real>& ensure_grad(int id) {
    Node& n = nodes_[id];
    if (!n.grad_live) {
      n.grad = Tensor<Real>(n.value.shape());
      n.grad_live = true;
    }
    return n.grad;
  }

  void step_backward(Node& n) {
    const Tensor<Real>& g = n.grad;
    switch (n.op) {
      case Op::kLeaf: {
        if (n.param) {
          Tensor<Real>& pg = n.param->grad;
          for (long i = 0; i < g.size(); ++i) pg[i] += g[i];
        }
        break;
      }
      case Op::kLookupRow: {
        Tensor<Real>& ga = ensure_grad(n.a);
        const long cols = nodes_[n.a].value.cols();
        for (long j = 0; j < g.size(); ++j) ga[n.aux_int * cols + j] += g[j];
        break;
      }
      case Op::kMatVec:
      case Op::kAffine: {
        const Tensor<Real>& W = nodes_[n.a].value;
        const Tensor<Real>& X = nodes_[n.b].value;
        Tensor<Real>& gw = ensure_grad(n.a);
        Tensor<Real>& gx = ensure_grad(n.b);
        for (long i = 0; i < W.rows(); ++i) {
          const Real gi = g[i];
          if (gi == Real(0)) continue;
          for (long j = 0; j < W.cols(); ++j) {
            gw.at(i, j) += gi * X[j];
            gx[j] += gi * W.at(i, j);
          }
        }
        if (n.op == Op::kAffine) {
          Tensor<Real>& gb = ensure_grad(n.c);
          for (long i = 0; i < g.size(); ++i) gb[i] += g[i];
        }
        break;
      }
      case Op::kAdd: {
        Tensor<Real>& ga = ensure_grad(n.a);
        Tensor<Real>& gb = ensure_grad(n.b);
        for (long i = 0; i < g.size(); ++i) {
          ga[i] += g[i];
          gb[i] += g[i];
        }
        break;
      }
      case Op::kMul: {
        const Tensor<Real>& A = nodes_[n.a].value;
        const Tensor<Real>& B = nodes_[n.b].value;
        Tensor<Real>& ga = ensure_grad(n.a);
        Tensor<Real>& gb = ensure_grad(n.b);
        for (long i = 0; i < g.size(); ++i) {
          ga[i] += g[i] * B[i];
          gb[i] += g[i] * A[i];
        }
        break;
      }
      case Op::kTanh: {
        Tensor<Real>& ga = ensure_grad(n.a);
        for (long i = 0; i < g.size(); ++i) ga[i] += g[i] * (Real(1) - n.value[i] * n.value[i]);
        break;
      }
      case Op::kSigmoid: {
        Tensor<Real>& ga = ensure_grad(n.a);
        for (long i = 0; i < g.size(); ++i) ga[i] += g[i] * n.value[i] * (Real(1) - n.value[i]);
        break;
      }
      case Op::kConcat: {
        Tensor<Real>& ga = ensure_grad(n.a);
        Tensor<Real>& gb = ensure_grad(n.b);
        const long p = ga.size();
        for (long i = 0; i < p; ++i) ga[i] += g[i];
        for (long i = 0; i < gb.size(); ++i) gb[i] += g[p + i];
        break;
      }
      case Op::kDot: {
        const Tensor<Real>& A = nodes_[n.a].value;
        const Tensor<Real>& B = nodes_[n.b].value;
        Tensor<Real>& ga = ensure_grad(n.a);
        Tensor<Real>& gb = ensure_grad(n.b);
        const Real g0 = g[0];
        for (long i = 0; i < A.size(); ++i) {
          ga[i] += g0 * B[i];
          gb[i] += g0 * A[i];
        }
        break;
      }
      case Op::kScale: {
        Tensor<Real>& ga = ensure_grad(n.a);
        for (long i = 0; i < g.size(); ++i) ga[i] += g[i] * n.aux_real;
        break;
      }
      case Op::kPack: {
        for (size_t i = 0; i < n.list.size(); ++i)
          ensure_grad(n.list[i])[0] += g[static_cast<long>(i)];
        break;
      }
      case Op::kSoftmax: {
        Tensor<Real>& ga = ensure_grad(n.a);
        Real inner = 0;
        for (long i = 0; i < g.size(); ++i) inner += g[i] * n.value[i];
        for (long i = 0; i < g.size(); ++i) ga[i] += n.value[i] * (g[i] - inner);
        break;
      }
      case Op::kWeightedSum: {
        const Tensor<Real>& W = nodes_[n.b].value;
        Tensor<Real>& gw = ensure_grad(n.b);
        for (size_t i = 0; i < n.list.size(); ++i) {
          const Tensor<Real>& S = nodes_[n.list[i]].value;
          Tensor<Real>& gs = ensure_grad(n.list[i]);
          Real acc = 0;
          for (long j = 0; j < g.size(); ++j) {
            gs[j] += W[static_cast<long>(i)] * g[j];
            acc += S[j] * g[j];
          }
          gw[static_cast<long>(i)] += acc;
        }
        break;
      }
      case Op::kDropout: {
        Tensor<Real>& ga = ensure_grad(n.a);
        for (long i = 0; i < g.size(); ++i) ga[i] += g[i] * n.payload[i];
        break;
      }
      case Op::kAddN: {
        for (int id : n.list) ensure_grad(id)[0] += g[0];
        break;
      }
      case Op::kCrossEntropy: {
        Tensor<Real>& ga = ensure_grad(n.a);
        const Real g0 = g[0];
        for (long i = 0; i < ga.size(); ++i) {
          Real d = n.payload[i];
          if (i == n.aux_int) d -= Real(1);
          ga[i] += g0 * d;
        }
        break;
      }
    }
  }
};

/// Divides all gradients by the mini-batch size, then rescales the whole set
/// so its global L2 norm does not exceed `threshold`. Returns the rescale
/// factor (1 when no clipping fired).
template <typename Real>
Real clip_global_norm(ParameterSet<Real>& params, Real threshold, long batch_size) {
  if (threshold <= Real(0)) throw std::invalid_argument("clip threshold must be positive");
  if (batch_size <= 0) throw std::invalid_argument("batch size must be positive");
  const Real inv = Real(1) / static_cast<Real>(batch_size);
  double sq = 0;
  for (const auto& p : params) {
    for (long i = 0; i < p->grad.size(); ++i) {
      p->grad[i] *= inv;
      sq += static_cast<double>(p->grad[i]) * static_cast<double>(p->grad[i]);
    }
  }
  const double norm = std::sqrt(sq);
  if (norm <= static_cast<double>(threshold)) return Real(1);
  const Real scale = threshold / static_cast<Real>(norm);
  for (const auto& p : params)
    for (long i = 0; i < p->grad.size(); ++i) p->grad[i] *= scale;
  return scale;
}

/// Central-difference gradient check. `loss` must rebuild its computation
/// from scratch on every call; when `with_grad` is true it must also run
/// backward, accumulating into the given parameters' grad tensors.
/// Returns the max relative error |a - n| / max(|a|, |n|, floor); the floor
/// keeps FD cancellation noise on near-zero coordinates from dominating.
template <typename Real, typename LossFn>
Real finite_diff_check(LossFn&& loss, const std::vector<Parameter<Real>*>& params,
                       Real eps = Real(1e-5), Real floor = Real(1e-4)) {
  for (Parameter<Real>* p : params) p->zero_grad();
  loss(true);
  std::vector<Tensor<Real>> analytic;
  analytic.reserve(params.size());
  for (Parameter<Real>* p : params) analytic.push_back(p->grad);

  Real max_err = 0;
  for (size_t k = 0; k < params.size(); ++k) {
    Parameter<Real>* p = params[k];
    for (long i = 0; i < p->value.size(); ++i) {
      const Real saved = p->value[i];
      p->value[i] = saved + eps;
      const Real up = loss(false);
      p->value[i] = saved - eps;
      const Real down = loss(false);
      p->value[i] = saved;
      const Real numeric = (up - down) / (Real(2) * eps);
      const Real a = analytic[k][i];
      const Real denom = std::max({std::abs(a), std::abs(numeric), floor});
      max_err = std::max(max_err, std::abs(a - numeric) / denom);
    }
  }
  for (Parameter<Real>* p : params) p->zero_grad();
  return max_err;
}

}  // namespace anmt
