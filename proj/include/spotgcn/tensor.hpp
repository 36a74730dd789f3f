#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "spotgcn/common.hpp"

namespace spotgcn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

namespace detail {

// One tape entry. `backfn` reads this node's grad and accumulates into the
// parents' grads; it is only recorded while autograd is enabled.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backfn;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
  }
};

inline bool& autograd_enabled() {
  thread_local bool on = true;
  return on;
}

// Piecewise ops (relu, max pooling, probability clamps) fold their branch
// pattern into this signature while a probe is active. Finite-difference
// checks compare derivatives only when both probe points share one smooth
// region, so they need to see whether a perturbation flipped any branch.
inline bool& kink_tracking() {
  thread_local bool on = false;
  return on;
}

inline std::uint64_t& kink_signature() {
  thread_local std::uint64_t sig = 0;
  return sig;
}

inline void fold_kink(std::uint64_t v) { kink_signature() = kink_signature() * 1099511628211ull ^ v; }

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using CMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
MatMap<T> as_mat(std::vector<T>& v, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
  return MatMap<T>(v.data() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <typename T>
CMatMap<T> as_cmat(const std::vector<T>& v, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
  return CMatMap<T>(v.data() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

}  // namespace detail

// Records the branch pattern of every piecewise op run during its
// lifetime. Two forward passes whose signatures differ crossed a kink
// between them.
struct KinkProbe {
  KinkProbe() {
    detail::kink_signature() = 1469598103934665603ull;
    detail::kink_tracking() = true;
  }
  ~KinkProbe() { detail::kink_tracking() = false; }
  KinkProbe(const KinkProbe&) = delete;
  KinkProbe& operator=(const KinkProbe&) = delete;
  std::uint64_t signature() const { return detail::kink_signature(); }
};

// Disables tape recording for the lifetime of the guard (inference,
// finite-difference probes).
struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(detail::autograd_enabled()) { detail::autograd_enabled() = false; }
  ~NoGradGuard() { detail::autograd_enabled() = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Value + tape handle. Copies are shallow: they alias the same node.
template <typename T>
class Tensor {
 public:
  using NodeT = detail::Node<T>;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<NodeT> n) : node_(std::move(n)) {}

  static Tensor leaf(Shape shape, std::vector<T> value, bool requires_grad = false) {
    require(shape_numel(shape) == value.size(), Errc::invalid_argument, "tensor shape/value size mismatch");
    auto n = std::make_shared<NodeT>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<T> v(shape_numel(shape), T(0));
    return leaf(std::move(shape), std::move(v), requires_grad);
  }

  static Tensor full(Shape shape, T fill, bool requires_grad = false) {
    std::vector<T> v(shape_numel(shape), fill);
    return leaf(std::move(shape), std::move(v), requires_grad);
  }

  static Tensor scalar(T x) { return leaf({1}, {x}); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }

  std::vector<T>& values() { return node_->value; }
  const std::vector<T>& values() const { return node_->value; }
  const std::vector<T>& grad() const {
    node_->ensure_grad();
    return node_->grad;
  }
  void clear_grad() { node_->grad.clear(); }
  bool requires_grad() const { return node_->requires_grad; }

  T item() const {
    require(size() == 1, Errc::invalid_argument, "item() on non-scalar tensor");
    return node_->value[0];
  }

  // Reverse pass from a scalar output. Gradients accumulate, so callers
  // clear parameter grads between steps.
  void backward() const {
    require(size() == 1, Errc::invalid_argument, "backward() requires a scalar tensor");
    if (!node_->requires_grad && !node_->backfn) {
      node_->ensure_grad();
      node_->grad[0] += T(1);
      return;
    }
    std::vector<NodeT*> order;
    std::unordered_set<NodeT*> visited;
    std::vector<std::pair<NodeT*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
      auto& top = stack.back();
      NodeT* n = top.first;
      if (top.second < n->parents.size()) {
        NodeT* p = n->parents[top.second++].get();
        if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    node_->ensure_grad();
    node_->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      NodeT* n = *it;
      if (n->backfn && !n->grad.empty()) n->backfn(*n);
    }
  }

  std::shared_ptr<NodeT> node() const { return node_; }

  // Internal factory for ops: drops the tape linkage when autograd is off
  // or no parent needs gradients.
  static Tensor make(Shape shape, std::vector<T> value, std::vector<std::shared_ptr<NodeT>> parents,
                     std::function<void(NodeT&)> backfn) {
    auto n = std::make_shared<NodeT>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    if (detail::autograd_enabled()) {
      bool need = false;
      for (const auto& p : parents) need = need || p->requires_grad;
      if (need) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backfn = std::move(backfn);
      }
    }
    return Tensor(std::move(n));
  }

 private:
  std::shared_ptr<NodeT> node_;
};

namespace detail {

template <typename T>
void accumulate(std::vector<T>& dst, const std::vector<T>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace detail

// ---- elementwise and reduction ops ----

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(), Errc::invalid_argument, "add: shape mismatch");
  std::vector<T> out(a.size());
  const auto &av = a.values(), &bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return Tensor<T>::make(a.shape(), std::move(out), {a.node(), b.node()}, [](detail::Node<T>& self) {
    for (int k = 0; k < 2; ++k) {
      auto& p = *self.parents[k];
      if (!p.requires_grad) continue;
      p.ensure_grad();
      detail::accumulate(p.grad, self.grad);
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(), Errc::invalid_argument, "mul: shape mismatch");
  std::vector<T> out(a.size());
  const auto &av = a.values(), &bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return Tensor<T>::make(a.shape(), std::move(out), {a.node(), b.node()}, [](detail::Node<T>& self) {
    auto &pa = *self.parents[0], &pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] += self.grad[i] * pa.value[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  std::vector<T> out(a.size());
  const auto& av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
  return Tensor<T>::make(a.shape(), std::move(out), {a.node()}, [c](detail::Node<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] * c;
  });
}

template <typename T>
Tensor<T> add_const(const Tensor<T>& a, T c) {
  std::vector<T> out(a.size());
  const auto& av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + c;
  return Tensor<T>::make(a.shape(), std::move(out), {a.node()}, [](detail::Node<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    detail::accumulate(p.grad, self.grad);
  });
}

// c - x, handy for probability complements.
template <typename T>
Tensor<T> rsub_const(T c, const Tensor<T>& a) {
  std::vector<T> out(a.size());
  const auto& av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c - av[i];
  return Tensor<T>::make(a.shape(), std::move(out), {a.node()}, [](detail::Node<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] -= self.grad[i];
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T s = T(0);
  for (T x : a.values()) s += x;
  return Tensor<T>::make({1}, {s}, {a.node()}, [](detail::Node<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    const T g = self.grad[0];
    for (auto& x : p.grad) x += g;
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> out(a.size());
  const auto& av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] > T(0) ? av[i] : T(0);
  if (detail::kink_tracking()) {
    std::uint64_t sig = 0;
    for (std::size_t i = 0; i < av.size(); ++i) sig = sig * 131 + (av[i] > T(0) ? 1 : 0);
    detail::fold_kink(sig);
  }
  return Tensor<T>::make(a.shape(), std::move(out), {a.node()}, [](detail::Node<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (p.value[i] > T(0)) p.grad[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  std::vector<T> out(a.size());
  const auto& av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T x = av[i];
    out[i] = x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
  }
  return Tensor<T>::make(a.shape(), std::move(out), {a.node()}, [](detail::Node<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T s = self.value[i];
      p.grad[i] += self.grad[i] * s * (T(1) - s);
    }
  });
}

// ---- shape ops ----

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  require(shape_numel(shape) == a.size(), Errc::invalid_argument, "reshape: element count mismatch");
  std::vector<T> out = a.values();
  return Tensor<T>::make(std::move(shape), std::move(out), {a.node()}, [](detail::Node<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    detail::accumulate(p.grad, self.grad);
  });
}

// Swaps the two leading axes of an [A,B,rest...] tensor.
template <typename T>
Tensor<T> transpose01(const Tensor<T>& a) {
  require(a.shape().size() >= 2, Errc::invalid_argument, "transpose01: rank must be >= 2");
  const std::size_t A = a.dim(0), B = a.dim(1);
  const std::size_t inner = a.size() / (A * B);
  Shape out_shape = a.shape();
  std::swap(out_shape[0], out_shape[1]);
  std::vector<T> out(a.size());
  const auto& av = a.values();
  for (std::size_t i = 0; i < A; ++i)
    for (std::size_t j = 0; j < B; ++j)
      std::memcpy(out.data() + (j * A + i) * inner, av.data() + (i * B + j) * inner, inner * sizeof(T));
  return Tensor<T>::make(std::move(out_shape), std::move(out), {a.node()}, [A, B, inner](detail::Node<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t j = 0; j < B; ++j)
      for (std::size_t i = 0; i < A; ++i) {
        const T* g = self.grad.data() + (j * A + i) * inner;
        T* dst = p.grad.data() + (i * B + j) * inner;
        for (std::size_t k = 0; k < inner; ++k) dst[k] += g[k];
      }
  });
}

// Copies columns [c0, c0+w) of a 2-D tensor.
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t c0, std::size_t w) {
  require(a.shape().size() == 2, Errc::invalid_argument, "slice_cols: rank must be 2");
  const std::size_t R = a.dim(0), N = a.dim(1);
  require(c0 + w <= N, Errc::invalid_argument, "slice_cols: out of range");
  std::vector<T> out(R * w);
  const auto& av = a.values();
  for (std::size_t r = 0; r < R; ++r)
    std::memcpy(out.data() + r * w, av.data() + r * N + c0, w * sizeof(T));
  return Tensor<T>::make({R, w}, std::move(out), {a.node()}, [R, N, c0, w](detail::Node<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t r = 0; r < R; ++r) {
      const T* g = self.grad.data() + r * w;
      T* dst = p.grad.data() + r * N + c0;
      for (std::size_t k = 0; k < w; ++k) dst[k] += g[k];
    }
  });
}

// ---- linear algebra ----

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape().size() == 2 && b.shape().size() == 2, Errc::invalid_argument, "matmul: rank must be 2");
  const std::size_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
  require(b.dim(0) == K, Errc::invalid_argument, "matmul: inner dimension mismatch");
  std::vector<T> out(M * N);
  detail::as_mat(out, M, N).noalias() = detail::as_cmat(a.values(), M, K) * detail::as_cmat(b.values(), K, N);
  return Tensor<T>::make({M, N}, std::move(out), {a.node(), b.node()}, [M, K, N](detail::Node<T>& self) {
    auto &pa = *self.parents[0], &pb = *self.parents[1];
    auto g = detail::as_cmat(self.grad, M, N);
    if (pa.requires_grad) {
      pa.ensure_grad();
      detail::as_mat(pa.grad, M, K).noalias() += g * detail::as_cmat(pb.value, K, N).transpose();
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      detail::as_mat(pb.grad, K, N).noalias() += detail::as_cmat(pa.value, M, K).transpose() * g;
    }
  });
}

// Adds a length-C vector to every C-sized row of x.
template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& x, const Tensor<T>& v) {
  const std::size_t C = v.size();
  require(v.shape().size() == 1, Errc::invalid_argument, "add_rowvec: v must be rank 1");
  require(C > 0 && x.size() % C == 0, Errc::invalid_argument, "add_rowvec: width mismatch");
  const std::size_t R = x.size() / C;
  std::vector<T> out(x.size());
  const auto &xv = x.values(), &vv = v.values();
  for (std::size_t r = 0; r < R; ++r) {
    const T* src = xv.data() + r * C;
    T* dst = out.data() + r * C;
    for (std::size_t c = 0; c < C; ++c) dst[c] = src[c] + vv[c];
  }
  return Tensor<T>::make(x.shape(), std::move(out), {x.node(), v.node()}, [R, C](detail::Node<T>& self) {
    auto &px = *self.parents[0], &pv = *self.parents[1];
    if (px.requires_grad) {
      px.ensure_grad();
      detail::accumulate(px.grad, self.grad);
    }
    if (pv.requires_grad) {
      pv.ensure_grad();
      for (std::size_t r = 0; r < R; ++r) {
        const T* g = self.grad.data() + r * C;
        for (std::size_t c = 0; c < C; ++c) pv.grad[c] += g[c];
      }
    }
  });
}

// ---- fused network ops over the [T, S, B, C] batch layout ----

// Temporal convolution with kernel K along the leading axis. Weight rows
// are laid out tap-major: w[k*C + c][cout]. Implemented as K accumulated
// GEMMs over contiguous time slabs, so neither pass materializes an
// unfolded copy of x.
template <typename T>
Tensor<T> temporal_conv(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, std::size_t K) {
  require(x.shape().size() == 4, Errc::invalid_argument, "temporal_conv: x must be [T,S,B,C]");
  const std::size_t Tn = x.dim(0), S = x.dim(1), B = x.dim(2), C = x.dim(3);
  require(K >= 1 && Tn >= K, Errc::invalid_argument, "temporal_conv: kernel longer than sequence");
  require(w.shape().size() == 2 && w.dim(0) == K * C, Errc::invalid_argument, "temporal_conv: weight shape");
  const std::size_t Cout = w.dim(1);
  const bool has_bias = bias.defined();
  if (has_bias)
    require(bias.size() == Cout, Errc::invalid_argument, "temporal_conv: bias size");
  const std::size_t To = Tn - K + 1;
  const std::size_t rows = To * S * B;
  const std::size_t slab = S * B * C;

  std::vector<T> out(rows * Cout, T(0));
  auto y = detail::as_mat(out, rows, Cout);
  for (std::size_t k = 0; k < K; ++k) {
    auto xk = detail::CMatMap<T>(x.values().data() + k * slab, static_cast<Eigen::Index>(rows),
                                 static_cast<Eigen::Index>(C));
    auto wk = detail::as_cmat(w.values(), C, Cout, k * C * Cout);
    y.noalias() += xk * wk;
  }
  if (has_bias) {
    const auto& bv = bias.values();
    for (std::size_t r = 0; r < rows; ++r) {
      T* dst = out.data() + r * Cout;
      for (std::size_t c = 0; c < Cout; ++c) dst[c] += bv[c];
    }
  }

  std::vector<std::shared_ptr<detail::Node<T>>> parents{x.node(), w.node()};
  if (has_bias) parents.push_back(bias.node());
  return Tensor<T>::make(
      {To, S, B, Cout}, std::move(out), std::move(parents),
      [K, C, Cout, rows, slab, has_bias](detail::Node<T>& self) {
        auto &px = *self.parents[0], &pw = *self.parents[1];
        auto g = detail::as_cmat(self.grad, rows, Cout);
        if (pw.requires_grad) {
          pw.ensure_grad();
          for (std::size_t k = 0; k < K; ++k) {
            auto xk = detail::CMatMap<T>(px.value.data() + k * slab, static_cast<Eigen::Index>(rows),
                                         static_cast<Eigen::Index>(C));
            detail::as_mat(pw.grad, C, Cout, k * C * Cout).noalias() += xk.transpose() * g;
          }
        }
        if (px.requires_grad) {
          px.ensure_grad();
          for (std::size_t k = 0; k < K; ++k) {
            auto wk = detail::as_cmat(pw.value, C, Cout, k * C * Cout);
            detail::MatMap<T>(px.grad.data() + k * slab, static_cast<Eigen::Index>(rows),
                              static_cast<Eigen::Index>(C))
                .noalias() += g * wk.transpose();
          }
        }
        if (has_bias && self.parents[2]->requires_grad) {
          auto& pb = *self.parents[2];
          pb.ensure_grad();
          for (std::size_t r = 0; r < rows; ++r) {
            const T* gr = self.grad.data() + r * Cout;
            for (std::size_t c = 0; c < Cout; ++c) pb.grad[c] += gr[c];
          }
        }
      });
}

template <typename T>
Tensor<T> temporal_conv(const Tensor<T>& x, const Tensor<T>& w, std::size_t K) {
  return temporal_conv(x, w, Tensor<T>(), K);
}

// y[t] = A x[t] over the node axis; A is a constant [S,S] mixing matrix.
template <typename T>
Tensor<T> graph_mix(const Tensor<T>& x, const Tensor<T>& a) {
  require(x.shape().size() == 4, Errc::invalid_argument, "graph_mix: x must be [T,S,B,C]");
  const std::size_t Tn = x.dim(0), S = x.dim(1), B = x.dim(2), C = x.dim(3);
  require(a.shape().size() == 2 && a.dim(0) == S && a.dim(1) == S, Errc::invalid_argument,
          "graph_mix: adjacency must be [S,S]");
  const std::size_t BC = B * C;
  std::vector<T> out(x.size());
  auto am = detail::as_cmat(a.values(), S, S);
  for (std::size_t t = 0; t < Tn; ++t)
    detail::as_mat(out, S, BC, t * S * BC).noalias() = am * detail::as_cmat(x.values(), S, BC, t * S * BC);
  return Tensor<T>::make(x.shape(), std::move(out), {x.node(), a.node()}, [Tn, S, BC](detail::Node<T>& self) {
    auto &px = *self.parents[0], &pa = *self.parents[1];
    if (px.requires_grad) {
      px.ensure_grad();
      auto am = detail::as_cmat(pa.value, S, S);
      for (std::size_t t = 0; t < Tn; ++t)
        detail::as_mat(px.grad, S, BC, t * S * BC).noalias() +=
            am.transpose() * detail::as_cmat(self.grad, S, BC, t * S * BC);
    }
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t t = 0; t < Tn; ++t)
        detail::as_mat(pa.grad, S, S).noalias() += detail::as_cmat(self.grad, S, BC, t * S * BC) *
                                                   detail::as_cmat(px.value, S, BC, t * S * BC).transpose();
    }
  });
}

// Max-pools the node axis into groups; gradients route to the argmax only.
template <typename T>
Tensor<T> flgp_pool(const Tensor<T>& x, const std::vector<std::vector<std::size_t>>& groups) {
  require(x.shape().size() == 4, Errc::invalid_argument, "flgp_pool: x must be [T,S,B,C]");
  const std::size_t Tn = x.dim(0), S = x.dim(1), B = x.dim(2), C = x.dim(3);
  const std::size_t G = groups.size();
  require(G > 0, Errc::invalid_argument, "flgp_pool: no groups");
  for (const auto& g : groups) {
    require(!g.empty(), Errc::invalid_argument, "flgp_pool: empty group");
    for (auto s : g) require(s < S, Errc::invalid_argument, "flgp_pool: node index out of range");
  }
  const std::size_t BC = B * C;
  std::vector<T> out(Tn * G * BC);
  auto routes = std::make_shared<std::vector<std::uint8_t>>(Tn * G * BC);
  const auto& xv = x.values();
  for (std::size_t t = 0; t < Tn; ++t)
    for (std::size_t g = 0; g < G; ++g) {
      T* dst = out.data() + (t * G + g) * BC;
      std::uint8_t* rt = routes->data() + (t * G + g) * BC;
      const auto& members = groups[g];
      const T* first = xv.data() + (t * S + members[0]) * BC;
      std::memcpy(dst, first, BC * sizeof(T));
      std::memset(rt, static_cast<int>(members[0]), BC);
      for (std::size_t mi = 1; mi < members.size(); ++mi) {
        const T* src = xv.data() + (t * S + members[mi]) * BC;
        const std::uint8_t tag = static_cast<std::uint8_t>(members[mi]);
        for (std::size_t i = 0; i < BC; ++i)
          if (src[i] > dst[i]) {
            dst[i] = src[i];
            rt[i] = tag;
          }
      }
    }
  if (detail::kink_tracking()) {
    std::uint64_t sig = 0;
    for (std::uint8_t r : *routes) sig = sig * 131 + r;
    detail::fold_kink(sig);
  }
  return Tensor<T>::make({Tn, G, B, C}, std::move(out), {x.node()},
                         [Tn, S, G, BC, routes](detail::Node<T>& self) {
                           auto& p = *self.parents[0];
                           p.ensure_grad();
                           for (std::size_t t = 0; t < Tn; ++t)
                             for (std::size_t g = 0; g < G; ++g) {
                               const T* gr = self.grad.data() + (t * G + g) * BC;
                               const std::uint8_t* rt = routes->data() + (t * G + g) * BC;
                               T* base = p.grad.data() + t * S * BC;
                               for (std::size_t i = 0; i < BC; ++i) base[rt[i] * BC + i] += gr[i];
                             }
                         });
}

// ---- row-wise normalizations ----

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  require(x.shape().size() == 2, Errc::invalid_argument, "softmax_rows: rank must be 2");
  const std::size_t R = x.dim(0), C = x.dim(1);
  std::vector<T> out(x.size());
  const auto& xv = x.values();
  for (std::size_t r = 0; r < R; ++r) {
    const T* src = xv.data() + r * C;
    T* dst = out.data() + r * C;
    T m = src[0];
    for (std::size_t c = 1; c < C; ++c) m = std::max(m, src[c]);
    T z = T(0);
    for (std::size_t c = 0; c < C; ++c) {
      dst[c] = std::exp(src[c] - m);
      z += dst[c];
    }
    for (std::size_t c = 0; c < C; ++c) dst[c] /= z;
  }
  return Tensor<T>::make({R, C}, std::move(out), {x.node()}, [R, C](detail::Node<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t r = 0; r < R; ++r) {
      const T* pr = self.value.data() + r * C;
      const T* g = self.grad.data() + r * C;
      T dot = T(0);
      for (std::size_t c = 0; c < C; ++c) dot += g[c] * pr[c];
      T* dst = p.grad.data() + r * C;
      for (std::size_t c = 0; c < C; ++c) dst[c] += pr[c] * (g[c] - dot);
    }
  });
}

template <typename T>
Tensor<T> l2_normalize_rows(const Tensor<T>& x, T eps = T(1e-12)) {
  require(x.shape().size() == 2, Errc::invalid_argument, "l2_normalize_rows: rank must be 2");
  const std::size_t R = x.dim(0), C = x.dim(1);
  std::vector<T> out(x.size());
  auto norms = std::make_shared<std::vector<T>>(R);
  const auto& xv = x.values();
  for (std::size_t r = 0; r < R; ++r) {
    const T* src = xv.data() + r * C;
    T s = T(0);
    for (std::size_t c = 0; c < C; ++c) s += src[c] * src[c];
    T n = std::max(std::sqrt(s), eps);
    (*norms)[r] = n;
    T* dst = out.data() + r * C;
    for (std::size_t c = 0; c < C; ++c) dst[c] = src[c] / n;
  }
  return Tensor<T>::make({R, C}, std::move(out), {x.node()}, [R, C, norms](detail::Node<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t r = 0; r < R; ++r) {
      const T* z = self.value.data() + r * C;
      const T* g = self.grad.data() + r * C;
      T dot = T(0);
      for (std::size_t c = 0; c < C; ++c) dot += g[c] * z[c];
      const T inv = T(1) / (*norms)[r];
      T* dst = p.grad.data() + r * C;
      for (std::size_t c = 0; c < C; ++c) dst[c] += (g[c] - dot * z[c]) * inv;
    }
  });
}

}  // namespace spotgcn
