// Copyright 2026 SeLG Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Reverse-mode automatic differentiation over Tensor<T>. Define-by-run graph
// of shared Nodes; sequence/attention primitives are fused ops with
// hand-written backward passes so graphs stay small.

#ifndef SELG_AUTODIFF_H_
#define SELG_AUTODIFF_H_

#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "selg/kernels.h"
#include "selg/tensor.h"

namespace selg {
namespace ad {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated lazily, same shape as value
  bool has_grad = false;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T>*)> backward_fn;
  std::string name;

  Tensor<T>& ensure_grad() {
    if (!has_grad) {
      grad = Tensor<T>::zeros(value.shape());
      has_grad = true;
    }
    return grad;
  }
  void zero_grad() {
    if (has_grad) std::fill(grad.vec().begin(), grad.vec().end(), T(0));
  }
};

template <typename T>
using VarPtr = std::shared_ptr<Node<T>>;

template <typename T>
VarPtr<T> leaf(Tensor<T> value, bool requires_grad = false, std::string name = "") {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->name = std::move(name);
  return n;
}

template <typename T>
VarPtr<T> constant(Tensor<T> value) {
  return leaf(std::move(value), false);
}

// New value node wrapping the same tensor, cut off from the graph.
template <typename T>
VarPtr<T> detach(const VarPtr<T>& x) {
  return leaf(x->value, false);
}

// When set, newly built ops do not record the graph (inference mode).
inline thread_local bool g_no_grad = false;

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(g_no_grad) { g_no_grad = true; }
  ~NoGradGuard() { g_no_grad = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

namespace detail {

template <typename T>
VarPtr<T> make_op(Tensor<T> value, std::vector<VarPtr<T>> parents,
                  std::function<void(Node<T>*)> bwd) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  bool rg = false;
  if (!g_no_grad)
    for (const auto& p : parents) rg = rg || p->requires_grad;
  n->requires_grad = rg;
  if (rg) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(bwd);
  }
  return n;
}

}  // namespace detail

// Runs reverse-mode accumulation from a scalar root. Gradients add into any
// existing .grad buffers (callers zero parameter grads between steps).
template <typename T>
void backward(const VarPtr<T>& root) {
  if (root->value.numel() != 1)
    throw std::invalid_argument("backward: root must be a scalar");
  if (!root->requires_grad) return;

  // Iterative post-order topological sort over requires_grad subgraph.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, size_t>> stack;
  stack.push_back({root.get(), 0});
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node<T>* p = node->parents[idx].get();
      ++idx;
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad()[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn && n->has_grad) n->backward_fn(n);
  }
}

// ---------------------------------------------------------------------------
// Elementwise and shape ops
// ---------------------------------------------------------------------------

template <typename T>
VarPtr<T> add(const VarPtr<T>& a, const VarPtr<T>& b) {
  if (!a->value.same_shape(b->value))
    throw std::invalid_argument("add: shape mismatch " + a->value.shape_str() +
                                " vs " + b->value.shape_str());
  Tensor<T> y(a->value.shape());
  kernels::add(a->value.data(), b->value.data(), y.data(), y.numel());
  return detail::make_op<T>(std::move(y), {a, b}, [a, b](Node<T>* self) {
    if (a->requires_grad)
      kernels::axpy(T(1), self->grad.data(), a->ensure_grad().data(), self->grad.numel());
    if (b->requires_grad)
      kernels::axpy(T(1), self->grad.data(), b->ensure_grad().data(), self->grad.numel());
  });
}

template <typename T>
VarPtr<T> sub(const VarPtr<T>& a, const VarPtr<T>& b) {
  if (!a->value.same_shape(b->value))
    throw std::invalid_argument("sub: shape mismatch");
  Tensor<T> y(a->value.shape());
  kernels::sub(a->value.data(), b->value.data(), y.data(), y.numel());
  return detail::make_op<T>(std::move(y), {a, b}, [a, b](Node<T>* self) {
    if (a->requires_grad)
      kernels::axpy(T(1), self->grad.data(), a->ensure_grad().data(), self->grad.numel());
    if (b->requires_grad)
      kernels::axpy(T(-1), self->grad.data(), b->ensure_grad().data(), self->grad.numel());
  });
}

template <typename T>
VarPtr<T> mul(const VarPtr<T>& a, const VarPtr<T>& b) {
  if (!a->value.same_shape(b->value))
    throw std::invalid_argument("mul: shape mismatch");
  Tensor<T> y(a->value.shape());
  kernels::mul(a->value.data(), b->value.data(), y.data(), y.numel());
  return detail::make_op<T>(std::move(y), {a, b}, [a, b](Node<T>* self) {
    const int64_t n = self->grad.numel();
    if (a->requires_grad) {
      T* da = a->ensure_grad().data();
      const T* g = self->grad.data();
      const T* bv = b->value.data();
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < n; ++i) da[i] += g[i] * bv[i];
    }
    if (b->requires_grad) {
      T* db = b->ensure_grad().data();
      const T* g = self->grad.data();
      const T* av = a->value.data();
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < n; ++i) db[i] += g[i] * av[i];
    }
  });
}

template <typename T>
VarPtr<T> scale(const VarPtr<T>& a, double alpha) {
  Tensor<T> y(a->value.shape());
  kernels::scale(a->value.data(), static_cast<T>(alpha), y.data(), y.numel());
  return detail::make_op<T>(std::move(y), {a}, [a, alpha](Node<T>* self) {
    if (a->requires_grad)
      kernels::axpy(static_cast<T>(alpha), self->grad.data(),
                    a->ensure_grad().data(), self->grad.numel());
  });
}

template <typename T>
VarPtr<T> add_const(const VarPtr<T>& a, double c) {
  Tensor<T> y(a->value.shape());
  const T cc = static_cast<T>(c);
  for (int64_t i = 0; i < y.numel(); ++i) y[i] = a->value[i] + cc;
  return detail::make_op<T>(std::move(y), {a}, [a](Node<T>* self) {
    if (a->requires_grad)
      kernels::axpy(T(1), self->grad.data(), a->ensure_grad().data(), self->grad.numel());
  });
}

template <typename T>
VarPtr<T> relu(const VarPtr<T>& a) {
  Tensor<T> y(a->value.shape());
  kernels::relu(a->value.data(), y.data(), y.numel());
  return detail::make_op<T>(std::move(y), {a}, [a](Node<T>* self) {
    if (a->requires_grad)
      kernels::relu_backward(self->value.data(), self->grad.data(),
                             a->ensure_grad().data(), self->grad.numel());
  });
}

template <typename T>
VarPtr<T> sigmoid(const VarPtr<T>& a) {
  Tensor<T> y(a->value.shape());
  const int64_t n = y.numel();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) y[i] = T(1) / (T(1) + std::exp(-a->value[i]));
  return detail::make_op<T>(std::move(y), {a}, [a](Node<T>* self) {
    if (!a->requires_grad) return;
    T* da = a->ensure_grad().data();
    const T* yv = self->value.data();
    const T* g = self->grad.data();
    const int64_t n = self->grad.numel();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) da[i] += g[i] * yv[i] * (T(1) - yv[i]);
  });
}

template <typename T>
VarPtr<T> tanh_op(const VarPtr<T>& a) {
  Tensor<T> y(a->value.shape());
  const int64_t n = y.numel();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) y[i] = std::tanh(a->value[i]);
  return detail::make_op<T>(std::move(y), {a}, [a](Node<T>* self) {
    if (!a->requires_grad) return;
    T* da = a->ensure_grad().data();
    const T* yv = self->value.data();
    const T* g = self->grad.data();
    const int64_t n = self->grad.numel();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) da[i] += g[i] * (T(1) - yv[i] * yv[i]);
  });
}

// Elementwise natural log.
template <typename T>
VarPtr<T> log_op(const VarPtr<T>& a) {
  Tensor<T> y(a->value.shape());
  for (int64_t i = 0; i < y.numel(); ++i) y[i] = std::log(a->value[i]);
  return detail::make_op<T>(std::move(y), {a}, [a](Node<T>* self) {
    if (!a->requires_grad) return;
    T* da = a->ensure_grad().data();
    for (int64_t i = 0; i < self->grad.numel(); ++i)
      da[i] += self->grad[i] / a->value[i];
  });
}

template <typename T>
VarPtr<T> sqrt_op(const VarPtr<T>& a) {
  Tensor<T> y(a->value.shape());
  for (int64_t i = 0; i < y.numel(); ++i) y[i] = std::sqrt(a->value[i]);
  return detail::make_op<T>(std::move(y), {a}, [a](Node<T>* self) {
    if (!a->requires_grad) return;
    T* da = a->ensure_grad().data();
    for (int64_t i = 0; i < self->grad.numel(); ++i)
      da[i] += self->grad[i] / (T(2) * self->value[i]);
  });
}

// Elementwise division; used on scalar nodes in the losses.
template <typename T>
VarPtr<T> div(const VarPtr<T>& a, const VarPtr<T>& b) {
  if (!a->value.same_shape(b->value))
    throw std::invalid_argument("div: shape mismatch");
  Tensor<T> y(a->value.shape());
  for (int64_t i = 0; i < y.numel(); ++i) y[i] = a->value[i] / b->value[i];
  return detail::make_op<T>(std::move(y), {a, b}, [a, b](Node<T>* self) {
    for (int64_t i = 0; i < self->grad.numel(); ++i) {
      const T g = self->grad[i];
      const T bv = b->value[i];
      if (a->requires_grad) a->ensure_grad()[i] += g / bv;
      if (b->requires_grad)
        b->ensure_grad()[i] -= g * a->value[i] / (bv * bv);
    }
  });
}

// x * s where s is a scalar node, broadcast over x.
template <typename T>
VarPtr<T> mul_scalar(const VarPtr<T>& x, const VarPtr<T>& s) {
  if (s->value.numel() != 1) throw std::invalid_argument("mul_scalar: s not scalar");
  Tensor<T> y(x->value.shape());
  kernels::scale(x->value.data(), s->value[0], y.data(), y.numel());
  return detail::make_op<T>(std::move(y), {x, s}, [x, s](Node<T>* self) {
    if (x->requires_grad)
      kernels::axpy(s->value[0], self->grad.data(), x->ensure_grad().data(),
                    self->grad.numel());
    if (s->requires_grad) {
      double acc = 0.0;
      const T* g = self->grad.data();
      const T* xv = x->value.data();
      for (int64_t i = 0; i < self->grad.numel(); ++i)
        acc += static_cast<double>(g[i]) * static_cast<double>(xv[i]);
      s->ensure_grad()[0] += static_cast<T>(acc);
    }
  });
}

template <typename T>
VarPtr<T> sum_all(const VarPtr<T>& a) {
  Tensor<T> y({1});
  double acc = 0.0;
  for (int64_t i = 0; i < a->value.numel(); ++i)
    acc += static_cast<double>(a->value[i]);
  y[0] = static_cast<T>(acc);
  return detail::make_op<T>(std::move(y), {a}, [a](Node<T>* self) {
    if (!a->requires_grad) return;
    const T g = self->grad[0];
    T* da = a->ensure_grad().data();
    const int64_t n = a->value.numel();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) da[i] += g;
  });
}

template <typename T>
VarPtr<T> mean_all(const VarPtr<T>& a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(a->value.numel()));
}

// Inner product of two same-shape tensors as a scalar node.
template <typename T>
VarPtr<T> dot(const VarPtr<T>& a, const VarPtr<T>& b) {
  return sum_all(mul(a, b));
}

template <typename T>
VarPtr<T> reshape(const VarPtr<T>& a, std::vector<int64_t> shape) {
  Tensor<T> y = a->value.reshaped(std::move(shape));
  return detail::make_op<T>(std::move(y), {a}, [a](Node<T>* self) {
    if (a->requires_grad)
      kernels::axpy(T(1), self->grad.data(), a->ensure_grad().data(), self->grad.numel());
  });
}

// Concatenate along the last dimension (leading dims must match).
template <typename T>
VarPtr<T> concat_last(const VarPtr<T>& a, const VarPtr<T>& b) {
  const int64_t rows = a->value.rows();
  if (rows != b->value.rows())
    throw std::invalid_argument("concat_last: row mismatch");
  const int64_t ca = a->value.cols(), cb = b->value.cols();
  std::vector<int64_t> shape = a->value.shape();
  shape.back() = ca + cb;
  Tensor<T> y(shape);
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < rows; ++i) {
    std::memcpy(y.data() + i * (ca + cb), a->value.data() + i * ca, sizeof(T) * ca);
    std::memcpy(y.data() + i * (ca + cb) + ca, b->value.data() + i * cb, sizeof(T) * cb);
  }
  return detail::make_op<T>(std::move(y), {a, b}, [a, b, rows, ca, cb](Node<T>* self) {
    const T* g = self->grad.data();
    if (a->requires_grad) {
      T* da = a->ensure_grad().data();
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < rows; ++i)
        for (int64_t j = 0; j < ca; ++j) da[i * ca + j] += g[i * (ca + cb) + j];
    }
    if (b->requires_grad) {
      T* db = b->ensure_grad().data();
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < rows; ++i)
        for (int64_t j = 0; j < cb; ++j) db[i * cb + j] += g[i * (ca + cb) + ca + j];
    }
  });
}

// Slice of the last dimension: out[..., 0:len] = x[..., start:start+len].
template <typename T>
VarPtr<T> slice_last(const VarPtr<T>& a, int64_t start, int64_t len) {
  const int64_t rows = a->value.rows(), c = a->value.cols();
  if (start < 0 || start + len > c) throw std::invalid_argument("slice_last: range");
  std::vector<int64_t> shape = a->value.shape();
  shape.back() = len;
  Tensor<T> y(shape);
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < rows; ++i)
    std::memcpy(y.data() + i * len, a->value.data() + i * c + start, sizeof(T) * len);
  return detail::make_op<T>(std::move(y), {a}, [a, start, len, rows, c](Node<T>* self) {
    if (!a->requires_grad) return;
    T* da = a->ensure_grad().data();
    const T* g = self->grad.data();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < rows; ++i)
      for (int64_t j = 0; j < len; ++j) da[i * c + start + j] += g[i * len + j];
  });
}

// [A x B x D] -> [B x A x D]
template <typename T>
VarPtr<T> permute01(const VarPtr<T>& x) {
  if (x->value.ndim() != 3) throw std::invalid_argument("permute01: need 3D");
  const int64_t a = x->value.dim(0), b = x->value.dim(1), d = x->value.dim(2);
  Tensor<T> y({b, a, d});
  kernels::permute01(x->value.data(), y.data(), a, b, d);
  return detail::make_op<T>(std::move(y), {x}, [x, a, b, d](Node<T>* self) {
    if (!x->requires_grad) return;
    Tensor<T> tmp({a, b, d});
    kernels::permute01(self->grad.data(), tmp.data(), b, a, d);
    kernels::axpy(T(1), tmp.data(), x->ensure_grad().data(), tmp.numel());
  });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

// Plain 2D matmul: [m x k] * [k x n].
template <typename T>
VarPtr<T> matmul(const VarPtr<T>& a, const VarPtr<T>& b) {
  if (a->value.ndim() != 2 || b->value.ndim() != 2 ||
      a->value.dim(1) != b->value.dim(0))
    throw std::invalid_argument("matmul: bad shapes " + a->value.shape_str() +
                                " * " + b->value.shape_str());
  const int64_t m = a->value.dim(0), k = a->value.dim(1), n = b->value.dim(1);
  Tensor<T> y({m, n});
  kernels::gemm(a->value.data(), b->value.data(), y.data(), m, k, n, false);
  return detail::make_op<T>(std::move(y), {a, b}, [a, b, m, k, n](Node<T>* self) {
    if (a->requires_grad) {
      Tensor<T> bt({n, k});
      kernels::transpose(b->value.data(), bt.data(), k, n);
      kernels::gemm(self->grad.data(), bt.data(), a->ensure_grad().data(), m, n, k, true);
    }
    if (b->requires_grad) {
      Tensor<T> at({k, m});
      kernels::transpose(a->value.data(), at.data(), m, k);
      kernels::gemm(at.data(), self->grad.data(), b->ensure_grad().data(), k, m, n, true);
    }
  });
}

// a * b^T, with b stored row-major [n x k].
template <typename T>
VarPtr<T> matmul_nt(const VarPtr<T>& a, const VarPtr<T>& b) {
  if (a->value.dim(1) != b->value.dim(1))
    throw std::invalid_argument("matmul_nt: bad shapes");
  const int64_t m = a->value.dim(0), k = a->value.dim(1), n = b->value.dim(0);
  Tensor<T> bt({k, n});
  kernels::transpose(b->value.data(), bt.data(), n, k);
  Tensor<T> y({m, n});
  kernels::gemm(a->value.data(), bt.data(), y.data(), m, k, n, false);
  return detail::make_op<T>(std::move(y), {a, b}, [a, b, m, k, n](Node<T>* self) {
    // y = a * b^T; dy/da = g * b; dy/db = g^T * a
    if (a->requires_grad)
      kernels::gemm(self->grad.data(), b->value.data(), a->ensure_grad().data(), m, n, k, true);
    if (b->requires_grad) {
      Tensor<T> gt({n, m});
      kernels::transpose(self->grad.data(), gt.data(), m, n);
      kernels::gemm(gt.data(), a->value.data(), b->ensure_grad().data(), n, m, k, true);
    }
  });
}

// Fused affine map on the last dim: y = x * w (+ bias rows). x may be N-D;
// rows = numel / cols.
template <typename T>
VarPtr<T> linear(const VarPtr<T>& x, const VarPtr<T>& w, const VarPtr<T>& bias) {
  const int64_t in = w->value.dim(0), out = w->value.dim(1);
  if (x->value.cols() != in)
    throw std::invalid_argument("linear: in-dim mismatch " + x->value.shape_str() +
                                " vs w " + w->value.shape_str());
  const int64_t rows = x->value.rows();
  std::vector<int64_t> shape = x->value.shape();
  shape.back() = out;
  Tensor<T> y(shape);
  kernels::gemm(x->value.data(), w->value.data(), y.data(), rows, in, out, false);
  if (bias) kernels::add_rowvec(y.data(), bias->value.data(), rows, out);
  std::vector<VarPtr<T>> parents = {x, w};
  if (bias) parents.push_back(bias);
  return detail::make_op<T>(std::move(y), std::move(parents),
                            [x, w, bias, rows, in, out](Node<T>* self) {
    const T* g = self->grad.data();
    if (x->requires_grad) {
      Tensor<T> wt({out, in});
      kernels::transpose(w->value.data(), wt.data(), in, out);
      kernels::gemm(g, wt.data(), x->ensure_grad().data(), rows, out, in, true);
    }
    if (w->requires_grad) {
      Tensor<T> xt({in, rows});
      kernels::transpose(x->value.data(), xt.data(), rows, in);
      kernels::gemm(xt.data(), g, w->ensure_grad().data(), in, rows, out, true);
    }
    if (bias && bias->requires_grad)
      kernels::colsum_accum(g, bias->ensure_grad().data(), rows, out);
  });
}

template <typename T>
VarPtr<T> linear(const VarPtr<T>& x, const VarPtr<T>& w) {
  return linear(x, w, VarPtr<T>());
}

// ---------------------------------------------------------------------------
// Row-structured ops
// ---------------------------------------------------------------------------

template <typename T>
VarPtr<T> softmax_rows(const VarPtr<T>& x) {
  const int64_t rows = x->value.rows(), cols = x->value.cols();
  Tensor<T> y(x->value.shape());
  kernels::softmax_rows(x->value.data(), y.data(), rows, cols);
  return detail::make_op<T>(std::move(y), {x}, [x, rows, cols](Node<T>* self) {
    if (x->requires_grad)
      kernels::softmax_rows_backward(self->value.data(), self->grad.data(),
                                     x->ensure_grad().data(), rows, cols);
  });
}

// Row-wise log-sum-exp, stable; output shape [rows].
template <typename T>
VarPtr<T> logsumexp_rows(const VarPtr<T>& x) {
  const int64_t rows = x->value.rows(), cols = x->value.cols();
  Tensor<T> y({rows});
  Tensor<T> probs({rows, cols});
  kernels::softmax_rows(x->value.data(), probs.data(), rows, cols);
  for (int64_t i = 0; i < rows; ++i) {
    const T* xr = x->value.data() + i * cols;
    T mx = xr[0];
    for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
    T sum = T(0);
    for (int64_t j = 0; j < cols; ++j) sum += std::exp(xr[j] - mx);
    y[i] = mx + std::log(sum);
  }
  return detail::make_op<T>(
      std::move(y), {x}, [x, probs = std::move(probs), rows, cols](Node<T>* self) {
        if (!x->requires_grad) return;
        T* dx = x->ensure_grad().data();
        const T* g = self->grad.data();
        for (int64_t i = 0; i < rows; ++i)
          for (int64_t j = 0; j < cols; ++j)
            dx[i * cols + j] += g[i] * probs[i * cols + j];
      });
}

// Diagonal of a square matrix as a vector node.
template <typename T>
VarPtr<T> take_diag(const VarPtr<T>& x) {
  const int64_t n = x->value.dim(0);
  if (x->value.ndim() != 2 || x->value.dim(1) != n)
    throw std::invalid_argument("take_diag: need square matrix");
  Tensor<T> y({n});
  for (int64_t i = 0; i < n; ++i) y[i] = x->value[i * n + i];
  return detail::make_op<T>(std::move(y), {x}, [x, n](Node<T>* self) {
    if (!x->requires_grad) return;
    T* dx = x->ensure_grad().data();
    for (int64_t i = 0; i < n; ++i) dx[i * n + i] += self->grad[i];
  });
}

template <typename T>
VarPtr<T> layer_norm(const VarPtr<T>& x, const VarPtr<T>& gamma,
                     const VarPtr<T>& beta, double eps = 1e-5) {
  const int64_t rows = x->value.rows(), cols = x->value.cols();
  if (gamma->value.numel() != cols || beta->value.numel() != cols)
    throw std::invalid_argument("layer_norm: gamma/beta size");
  Tensor<T> y(x->value.shape());
  auto mean = std::make_shared<Tensor<T>>(std::vector<int64_t>{rows});
  auto rstd = std::make_shared<Tensor<T>>(std::vector<int64_t>{rows});
  kernels::layernorm_rows(x->value.data(), gamma->value.data(), beta->value.data(),
                          y.data(), mean->data(), rstd->data(), rows, cols,
                          static_cast<T>(eps));
  return detail::make_op<T>(std::move(y), {x, gamma, beta},
                            [x, gamma, beta, mean, rstd, rows, cols](Node<T>* self) {
    // The kernel writes all three grads; route to dummies when frozen.
    Tensor<T> dummy_dg, dummy_db;
    T* dgamma;
    T* dbeta;
    if (gamma->requires_grad) {
      dgamma = gamma->ensure_grad().data();
    } else {
      dummy_dg = Tensor<T>::zeros({cols});
      dgamma = dummy_dg.data();
    }
    if (beta->requires_grad) {
      dbeta = beta->ensure_grad().data();
    } else {
      dummy_db = Tensor<T>::zeros({cols});
      dbeta = dummy_db.data();
    }
    Tensor<T> dummy_dx;
    T* dx;
    if (x->requires_grad) {
      dx = x->ensure_grad().data();
    } else {
      dummy_dx = Tensor<T>::zeros(x->value.shape());
      dx = dummy_dx.data();
    }
    kernels::layernorm_rows_backward(x->value.data(), gamma->value.data(),
                                     mean->data(), rstd->data(), self->grad.data(),
                                     dx, dgamma, dbeta, rows, cols);
  });
}

// Inverted dropout. Identity when rate == 0. The mask is sampled serially
// from the given generator, so runs are reproducible.
template <typename T>
VarPtr<T> dropout(const VarPtr<T>& x, double rate, std::mt19937_64* rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw std::invalid_argument("dropout: rate must be < 1");
  const double keep = 1.0 - rate;
  auto mask = std::make_shared<Tensor<T>>(x->value.shape());
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  const T inv = static_cast<T>(1.0 / keep);
  for (int64_t i = 0; i < mask->numel(); ++i)
    (*mask)[i] = dist(*rng) < keep ? inv : T(0);
  Tensor<T> y(x->value.shape());
  kernels::mul(x->value.data(), mask->data(), y.data(), y.numel());
  return detail::make_op<T>(std::move(y), {x}, [x, mask](Node<T>* self) {
    if (!x->requires_grad) return;
    T* dx = x->ensure_grad().data();
    const T* g = self->grad.data();
    const T* m = mask->data();
    const int64_t n = self->grad.numel();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) dx[i] += g[i] * m[i];
  });
}

// ---------------------------------------------------------------------------
// Signal framing ops
// ---------------------------------------------------------------------------

// 1-D signal [len] -> frames [T x L] with hop between frame starts. The tail
// shorter than a full frame is dropped.
template <typename T>
VarPtr<T> frame_signal(const VarPtr<T>& x, int64_t frame_len, int64_t hop) {
  if (x->value.ndim() != 1) throw std::invalid_argument("frame_signal: need 1D");
  const int64_t len = x->value.numel();
  if (len < frame_len) throw std::invalid_argument("frame_signal: input shorter than frame");
  if (hop <= 0) throw std::invalid_argument("frame_signal: hop must be positive");
  const int64_t num = (len - frame_len) / hop + 1;
  Tensor<T> y({num, frame_len});
  kernels::frame_gather(x->value.data(), y.data(), num, frame_len, hop);
  return detail::make_op<T>(std::move(y), {x}, [x, num, frame_len, hop](Node<T>* self) {
    if (x->requires_grad)
      kernels::overlap_add(self->grad.data(), x->ensure_grad().data(), num,
                           frame_len, hop, x->value.numel(), true);
  });
}

// Overlap-add of frame signals [T x L] into a signal of out_len samples
// (tail beyond out_len is trimmed; shortfall is zero-padded).
template <typename T>
VarPtr<T> overlap_add(const VarPtr<T>& frames, int64_t hop, int64_t out_len) {
  if (frames->value.ndim() != 2) throw std::invalid_argument("overlap_add: need 2D");
  if (hop <= 0) throw std::invalid_argument("overlap_add: hop must be positive");
  const int64_t num = frames->value.dim(0), flen = frames->value.dim(1);
  if (hop > flen) throw std::invalid_argument("overlap_add: hop > frame length");
  Tensor<T> y({out_len});
  kernels::overlap_add(frames->value.data(), y.data(), num, flen, hop, out_len, false);
  return detail::make_op<T>(std::move(y), {frames}, [frames, num, flen, hop, out_len](Node<T>* self) {
    if (!frames->requires_grad) return;
    T* df = frames->ensure_grad().data();
    const T* g = self->grad.data();
#pragma omp parallel for schedule(static)
    for (int64_t t = 0; t < num; ++t) {
      const int64_t base = t * hop;
      for (int64_t j = 0; j < flen; ++j) {
        const int64_t idx = base + j;
        if (idx < out_len) df[t * flen + j] += g[idx];
      }
    }
  });
}

// Nearest-neighbour row upsample: [F x D] -> [target x D].
template <typename T>
VarPtr<T> upsample_rows(const VarPtr<T>& x, int64_t target) {
  const int64_t f = x->value.dim(0), d = x->value.dim(1);
  if (target < f) throw std::invalid_argument("upsample_rows: target < source rows");
  Tensor<T> y({target, d});
  kernels::upsample_repeat(x->value.data(), y.data(), f, target, d);
  return detail::make_op<T>(std::move(y), {x}, [x, f, target, d](Node<T>* self) {
    if (x->requires_grad)
      kernels::upsample_repeat_backward(self->grad.data(), x->ensure_grad().data(),
                                        f, target, d);
  });
}

// [T x D] -> [K x C x D] overlapping chunks (zero-padded past the end).
template <typename T>
VarPtr<T> chunk_rows(const VarPtr<T>& x, int64_t chunk_len, int64_t hop, int64_t chunks) {
  const int64_t rows = x->value.dim(0), d = x->value.dim(1);
  Tensor<T> y({chunks, chunk_len, d});
  kernels::chunk_gather(x->value.data(), y.data(), rows, chunks, chunk_len, hop, d);
  return detail::make_op<T>(std::move(y), {x}, [x, rows, chunks, chunk_len, hop, d](Node<T>* self) {
    if (x->requires_grad)
      kernels::chunk_scatter_add(self->grad.data(), x->ensure_grad().data(), rows,
                                 chunks, chunk_len, hop, d);
  });
}

// Adjoint of chunk_rows: merge overlapping chunks by summation into [T x D].
template <typename T>
VarPtr<T> merge_chunks(const VarPtr<T>& x, int64_t hop, int64_t total_rows) {
  const int64_t chunks = x->value.dim(0), chunk_len = x->value.dim(1), d = x->value.dim(2);
  Tensor<T> y = Tensor<T>::zeros({total_rows, d});
  kernels::chunk_scatter_add(x->value.data(), y.data(), total_rows, chunks, chunk_len, hop, d);
  return detail::make_op<T>(std::move(y), {x}, [x, chunks, chunk_len, hop, total_rows, d](Node<T>* self) {
    if (!x->requires_grad) return;
    Tensor<T> tmp({chunks, chunk_len, d});
    kernels::chunk_gather(self->grad.data(), tmp.data(), total_rows, chunks,
                          chunk_len, hop, d);
    kernels::axpy(T(1), tmp.data(), x->ensure_grad().data(), tmp.numel());
  });
}

// Mean over the middle axis of [A x M x C] -> [A x C].
template <typename T>
VarPtr<T> mean_middle(const VarPtr<T>& x) {
  if (x->value.ndim() != 3) throw std::invalid_argument("mean_middle: need 3D");
  const int64_t a = x->value.dim(0), m = x->value.dim(1), c = x->value.dim(2);
  Tensor<T> y = Tensor<T>::zeros({a, c});
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < a; ++i) {
    T* yr = y.data() + i * c;
    for (int64_t j = 0; j < m; ++j) {
      const T* xr = x->value.data() + (i * m + j) * c;
      for (int64_t k = 0; k < c; ++k) yr[k] += xr[k];
    }
    for (int64_t k = 0; k < c; ++k) yr[k] /= T(m);
  }
  return detail::make_op<T>(std::move(y), {x}, [x, a, m, c](Node<T>* self) {
    if (!x->requires_grad) return;
    T* dx = x->ensure_grad().data();
    const T* g = self->grad.data();
    const T inv = T(1) / T(m);
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < a; ++i)
      for (int64_t j = 0; j < m; ++j)
        for (int64_t k = 0; k < c; ++k) dx[(i * m + j) * c + k] += g[i * c + k] * inv;
  });
}

// im2col over channels-last video [F x H x W x C]; see kernels::im2col_cl.
template <typename T>
VarPtr<T> im2col(const VarPtr<T>& x, int64_t kt, int64_t kh, int64_t kw,
                 int64_t sh, int64_t sw, int64_t ph, int64_t pw) {
  if (x->value.ndim() != 4) throw std::invalid_argument("im2col: need 4D");
  const int64_t F = x->value.dim(0), H = x->value.dim(1), W = x->value.dim(2),
                C = x->value.dim(3);
  const int64_t OH = (H + 2 * ph - kh) / sh + 1;
  const int64_t OW = (W + 2 * pw - kw) / sw + 1;
  Tensor<T> y({F * OH * OW, kt * kh * kw * C});
  kernels::im2col_cl(x->value.data(), y.data(), F, H, W, C, kt, kh, kw, sh, sw,
                     ph, pw, OH, OW);
  return detail::make_op<T>(std::move(y), {x},
                            [x, F, H, W, C, kt, kh, kw, sh, sw, ph, pw, OH, OW](Node<T>* self) {
    if (x->requires_grad)
      kernels::col2im_cl(self->grad.data(), x->ensure_grad().data(), F, H, W, C,
                         kt, kh, kw, sh, sw, ph, pw, OH, OW);
  });
}

// ---------------------------------------------------------------------------
// Fused LSTM over a sequence
// ---------------------------------------------------------------------------

// Single-direction LSTM. x: [S x B x In]; w_ih: [In x 4H]; w_hh: [H x 4H];
// bias: [4H]. Gate order i, f, g, o. Initial states are zero. Returns
// [S x B x H]; when reverse is true the sequence is processed back-to-front
// (output stays in input time order).
template <typename T>
VarPtr<T> lstm_seq(const VarPtr<T>& x, const VarPtr<T>& w_ih, const VarPtr<T>& w_hh,
                   const VarPtr<T>& bias, bool reverse) {
  if (x->value.ndim() != 3) throw std::invalid_argument("lstm_seq: need 3D input");
  const int64_t S = x->value.dim(0), B = x->value.dim(1), in = x->value.dim(2);
  const int64_t H = w_hh->value.dim(0);
  if (w_ih->value.dim(0) != in || w_ih->value.dim(1) != 4 * H ||
      w_hh->value.dim(1) != 4 * H || bias->value.numel() != 4 * H)
    throw std::invalid_argument("lstm_seq: parameter shapes");

  // Pre-activation input contribution for all steps in one GEMM.
  auto gates = std::make_shared<Tensor<T>>(std::vector<int64_t>{S, B, 4 * H});
  kernels::gemm(x->value.data(), w_ih->value.data(), gates->data(), S * B, in,
                4 * H, false);
  kernels::add_rowvec(gates->data(), bias->value.data(), S * B, 4 * H);

  auto cells = std::make_shared<Tensor<T>>(std::vector<int64_t>{S, B, H});
  Tensor<T> out({S, B, H});
  Tensor<T> h_prev = Tensor<T>::zeros({B, H});
  Tensor<T> c_prev = Tensor<T>::zeros({B, H});
  Tensor<T> zbuf({B, 4 * H});

  for (int64_t step = 0; step < S; ++step) {
    const int64_t t = reverse ? S - 1 - step : step;
    T* z = gates->data() + t * B * 4 * H;
    // z += h_prev * w_hh
    if (step > 0)
      kernels::gemm(h_prev.data(), w_hh->value.data(), z, B, H, 4 * H, true);
    T* c = cells->data() + t * B * H;
    T* h = out.data() + t * B * H;
    const T* cp = c_prev.data();
#pragma omp parallel for schedule(static)
    for (int64_t r = 0; r < B * H; ++r) {
      const int64_t b = r / H, u = r % H;
      T* zr = z + b * 4 * H;
      const T zi = zr[u], zf = zr[H + u], zg = zr[2 * H + u], zo = zr[3 * H + u];
      const T gi = T(1) / (T(1) + std::exp(-zi));
      const T gf = T(1) / (T(1) + std::exp(-zf));
      const T gg = std::tanh(zg);
      const T go = T(1) / (T(1) + std::exp(-zo));
      const T cv = gf * cp[r] + gi * gg;
      c[r] = cv;
      h[r] = go * std::tanh(cv);
      // overwrite pre-activations with activated gates for the backward pass
      zr[u] = gi;
      zr[H + u] = gf;
      zr[2 * H + u] = gg;
      zr[3 * H + u] = go;
    }
    std::memcpy(h_prev.data(), h, sizeof(T) * B * H);
    std::memcpy(c_prev.data(), c, sizeof(T) * B * H);
  }

  return detail::make_op<T>(
      std::move(out), {x, w_ih, w_hh, bias},
      [x, w_ih, w_hh, bias, gates, cells, S, B, in, H, reverse](Node<T>* self) {
        const T* dy = self->grad.data();
        Tensor<T> dz_all = Tensor<T>::zeros({S, B, 4 * H});
        Tensor<T> dh = Tensor<T>::zeros({B, H});
        Tensor<T> dc = Tensor<T>::zeros({B, H});
        Tensor<T> wht({4 * H, H});
        kernels::transpose(w_hh->value.data(), wht.data(), H, 4 * H);
        const bool need_whh = w_hh->requires_grad;
        Tensor<T> dwhh;
        if (need_whh) dwhh = Tensor<T>::zeros({H, 4 * H});
        Tensor<T> hprev_t({H, B});

        for (int64_t step = S - 1; step >= 0; --step) {
          const int64_t t = reverse ? S - 1 - step : step;
          const T* g = gates->data() + t * B * 4 * H;  // activated gates
          const T* c = cells->data() + t * B * H;
          // previous step's cell/h in processing order
          const int64_t t_prev = reverse ? t + 1 : t - 1;
          const bool has_prev = step > 0;
          const T* c_prev = has_prev ? cells->data() + t_prev * B * H : nullptr;
          const T* h_prev = has_prev ? self->value.data() + t_prev * B * H : nullptr;
          T* dz = dz_all.data() + t * B * 4 * H;

#pragma omp parallel for schedule(static)
          for (int64_t r = 0; r < B * H; ++r) {
            const int64_t b = r / H, u = r % H;
            const T* gr = g + b * 4 * H;
            const T gi = gr[u], gf = gr[H + u], gg = gr[2 * H + u], go = gr[3 * H + u];
            const T tc = std::tanh(c[r]);
            T dhr = dh[r] + dy[t * B * H + r];
            T dcr = dc[r] + dhr * go * (T(1) - tc * tc);
            const T dgo = dhr * tc;
            const T dgi = dcr * gg;
            const T dgg = dcr * gi;
            const T dgf = has_prev ? dcr * c_prev[r] : T(0);
            T* dzr = dz + b * 4 * H;
            dzr[u] = dgi * gi * (T(1) - gi);
            dzr[H + u] = dgf * gf * (T(1) - gf);
            dzr[2 * H + u] = dgg * (T(1) - gg * gg);
            dzr[3 * H + u] = dgo * go * (T(1) - go);
            dc[r] = dcr * gf;  // flows to previous cell
          }
          // dh_prev = dz * w_hh^T
          if (has_prev) {
            kernels::gemm(dz, wht.data(), dh.data(), B, 4 * H, H, false);
            if (need_whh) {
              kernels::transpose(h_prev, hprev_t.data(), B, H);
              kernels::gemm(hprev_t.data(), dz, dwhh.data(), H, B, 4 * H, true);
            }
          } else {
            std::fill(dh.vec().begin(), dh.vec().end(), T(0));
          }
        }

        if (x->requires_grad) {
          Tensor<T> wit({4 * H, in});
          kernels::transpose(w_ih->value.data(), wit.data(), in, 4 * H);
          kernels::gemm(dz_all.data(), wit.data(), x->ensure_grad().data(), S * B,
                        4 * H, in, true);
        }
        if (w_ih->requires_grad) {
          Tensor<T> xt({in, S * B});
          kernels::transpose(x->value.data(), xt.data(), S * B, in);
          kernels::gemm(xt.data(), dz_all.data(), w_ih->ensure_grad().data(), in,
                        S * B, 4 * H, true);
        }
        if (need_whh)
          kernels::axpy(T(1), dwhh.data(), w_hh->ensure_grad().data(), dwhh.numel());
        if (bias->requires_grad)
          kernels::colsum_accum(dz_all.data(), bias->ensure_grad().data(), S * B, 4 * H);
      });
}

}  // namespace ad
}  // namespace selg

#endif  // SELG_AUTODIFF_H_
